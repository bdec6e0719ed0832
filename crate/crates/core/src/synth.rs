//! Synthetic scene stacks with known ground truth.

use std::collections::BTreeSet;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::atc::{atc_forward, AtcParams, Eatc};
use crate::error::{Error, Result};
use crate::raster::{Era5Series, FeatureRaster, SceneStack};
use crate::seed::stream_rng;

pub const CYCLE_DAYS: u16 = 16;
const CALENDAR_DAYS: u16 = 365;
const RFF_FEATURES: usize = 64;

/// How many scenes are acquired per 16-day repeat cycle.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Cadence {
    #[serde(rename = "4-per-16")]
    FourPer16,
    #[serde(rename = "2-per-16")]
    TwoPer16,
    #[serde(rename = "1-per-16")]
    OnePer16,
}

impl Cadence {
    /// Offsets within a cycle on which scenes are acquired. Each sparser
    /// schedule is a subset of the denser one.
    pub fn offsets(self) -> &'static [u16] {
        match self {
            Cadence::FourPer16 => &[0, 1, 8, 9],
            Cadence::TwoPer16 => &[1, 8],
            Cadence::OnePer16 => &[1],
        }
    }

    /// Acquisition days over one calendar year.
    pub fn days(self) -> Vec<u16> {
        let mut days = Vec::new();
        let mut start = 1;
        while start <= CALENDAR_DAYS {
            for &o in self.offsets() {
                let d = start + o;
                if d <= CALENDAR_DAYS {
                    days.push(d);
                }
            }
            start += CYCLE_DAYS;
        }
        days
    }

    pub fn label(self) -> &'static str {
        match self {
            Cadence::FourPer16 => "4-per-16",
            Cadence::TwoPer16 => "2-per-16",
            Cadence::OnePer16 => "1-per-16",
        }
    }
}

impl std::str::FromStr for Cadence {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "4-per-16" | "4" => Ok(Cadence::FourPer16),
            "2-per-16" | "2" => Ok(Cadence::TwoPer16),
            "1-per-16" | "1" => Ok(Cadence::OnePer16),
            other => Err(Error::Config(format!("unknown cadence '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub height: usize,
    pub width: usize,
    pub seed: u64,
    pub c_range: (f64, f64),
    pub a_range: (f64, f64),
    pub phi_range: (f64, f64),
    pub b_range: (f64, f64),
    pub era5_mean: f64,
    pub era5_amplitude: f64,
    pub era5_peak_day: f64,
    pub era5_ar1_rho: f64,
    pub era5_daily_sd: f64,
    /// Side of the square block of fine pixels sharing one coarse cell.
    pub era5_cell_size: usize,
    /// Kernel lengthscale of the residual surface in standardized feature units.
    pub residual_lengthscale: f64,
    pub residual_sd: f64,
    /// Unstructured per-cell residual noise, as a fraction of `residual_sd`.
    pub residual_iid_fraction: f64,
    pub obs_noise_sd: f64,
    pub cloud_fraction_target: f64,
    /// Cloud blob smoothing scale as a fraction of the shorter grid side.
    pub cloud_blob_scale: f64,
    /// Share of acquisition days left cloud-free.
    pub clear_day_fraction: f64,
    /// Share of acquisition days given `heavy_cloud_fraction` cover.
    pub heavy_cloud_day_fraction: f64,
    pub heavy_cloud_fraction: f64,
    /// Fail rather than emit a day without a single valid pixel.
    pub require_valid_pixel: bool,
    pub cadence: Cadence,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            height: 64,
            width: 64,
            seed: 0,
            c_range: (215.0, 235.0),
            a_range: (8.0, 16.0),
            phi_range: (190.0, 215.0),
            b_range: (0.1, 0.25),
            era5_mean: 285.0,
            era5_amplitude: 12.0,
            era5_peak_day: 200.0,
            era5_ar1_rho: 0.7,
            era5_daily_sd: 3.0,
            era5_cell_size: 32,
            residual_lengthscale: 1.5,
            residual_sd: 1.0,
            residual_iid_fraction: 0.1,
            obs_noise_sd: 0.5,
            cloud_fraction_target: 0.5,
            cloud_blob_scale: 0.1,
            clear_day_fraction: 0.0,
            heavy_cloud_day_fraction: 0.0,
            heavy_cloud_fraction: 0.9,
            require_valid_pixel: true,
            cadence: Cadence::FourPer16,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(format!("synth config: {m}")));
        if self.height == 0 || self.width == 0 {
            return bad("grid must be non-empty".into());
        }
        for (name, r) in [
            ("c_range", self.c_range),
            ("a_range", self.a_range),
            ("phi_range", self.phi_range),
            ("b_range", self.b_range),
        ] {
            if !(r.0.is_finite() && r.1.is_finite() && r.0 <= r.1) {
                return bad(format!("{name} must be a finite non-empty interval"));
            }
        }
        for (name, v) in [
            ("era5_daily_sd", self.era5_daily_sd),
            ("residual_sd", self.residual_sd),
            ("residual_iid_fraction", self.residual_iid_fraction),
            ("obs_noise_sd", self.obs_noise_sd),
            ("cloud_blob_scale", self.cloud_blob_scale),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return bad(format!("{name} must be a finite non-negative number"));
            }
        }
        if !(0.0..1.0).contains(&self.era5_ar1_rho) {
            return bad("era5_ar1_rho must lie in [0, 1)".into());
        }
        if !(self.residual_lengthscale > 0.0) {
            return bad("residual_lengthscale must be positive".into());
        }
        if self.era5_cell_size == 0 {
            return bad("era5_cell_size must be positive".into());
        }
        for (name, v) in [
            ("cloud_fraction_target", self.cloud_fraction_target),
            ("clear_day_fraction", self.clear_day_fraction),
            ("heavy_cloud_day_fraction", self.heavy_cloud_day_fraction),
            ("heavy_cloud_fraction", self.heavy_cloud_fraction),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return bad(format!("{name} must lie in [0, 1]"));
            }
        }
        if self.clear_day_fraction + self.heavy_cloud_day_fraction > 1.0 {
            return bad("clear and heavy-cloud day shares exceed 1".into());
        }
        if self.require_valid_pixel {
            let n = self.height * self.width;
            for f in [self.cloud_fraction_target, self.heavy_cloud_fraction] {
                if valid_count(n, f) == 0 {
                    return bad(format!("cloud fraction {f} leaves no valid pixel on a {n}-pixel grid"));
                }
            }
        }
        Ok(())
    }
}

fn valid_count(n: usize, cloud_fraction: f64) -> usize {
    (n as f64 * (1.0 - cloud_fraction)).round() as usize
}

/// The noise-free generating process behind a synthetic stack, over every
/// calendar day.
#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruth {
    pub params: AtcParams,
    pub days: Vec<u16>,
    /// Day-major residual grids.
    pub residuals: Vec<f64>,
    /// Day-major gap-free temperature grids.
    pub lst: Vec<f64>,
}

impl GroundTruth {
    fn n_pixels(&self) -> usize {
        self.params.pixels.len()
    }

    fn index(&self, day: u16) -> Result<usize> {
        self.days
            .binary_search(&day)
            .map_err(|_| Error::Domain(format!("ground truth does not cover day {day}")))
    }

    pub fn lst_day(&self, day: u16) -> Result<&[f64]> {
        let (i, n) = (self.index(day)?, self.n_pixels());
        Ok(&self.lst[i * n..(i + 1) * n])
    }

    pub fn residual_day(&self, day: u16) -> Result<&[f64]> {
        let (i, n) = (self.index(day)?, self.n_pixels());
        Ok(&self.residuals[i * n..(i + 1) * n])
    }
}

#[derive(Debug, Clone)]
pub struct SynthData {
    pub stack: SceneStack,
    pub era5: Era5Series,
    pub features: FeatureRaster,
    pub truth: GroundTruth,
}

fn uniform(rng: &mut impl Rng, (lo, hi): (f64, f64)) -> f64 {
    if lo == hi {
        lo
    } else {
        rng.random_range(lo..hi)
    }
}

fn normal(rng: &mut impl Rng) -> f64 {
    rng.sample(StandardNormal)
}

fn reflect(i: isize, n: usize) -> usize {
    let period = 2 * n as isize;
    let m = i.rem_euclid(period);
    if m < n as isize {
        m as usize
    } else {
        (period - 1 - m) as usize
    }
}

/// Separable Gaussian smoothing with mirrored edges.
pub fn gaussian_blur(field: &[f64], height: usize, width: usize, sigma: f64) -> Vec<f64> {
    if sigma <= 0.0 {
        return field.to_vec();
    }
    let radius = (4.0 * sigma).ceil() as isize;
    let mut kernel: Vec<f64> = (-radius..=radius)
        .map(|k| (-0.5 * (k as f64 / sigma).powi(2)).exp())
        .collect();
    let total: f64 = kernel.iter().sum();
    kernel.iter_mut().for_each(|k| *k /= total);
    let mut tmp = vec![0.0; field.len()];
    for r in 0..height {
        for c in 0..width {
            tmp[r * width + c] = kernel
                .iter()
                .enumerate()
                .map(|(k, w)| w * field[r * width + reflect(c as isize + k as isize - radius, width)])
                .sum();
        }
    }
    let mut out = vec![0.0; field.len()];
    for r in 0..height {
        for c in 0..width {
            out[r * width + c] = kernel
                .iter()
                .enumerate()
                .map(|(k, w)| w * tmp[reflect(r as isize + k as isize - radius, height) * width + c])
                .sum();
        }
    }
    out
}

fn standardize(v: &mut [f64]) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let sd = (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n).sqrt();
    let sd = if sd > 0.0 { sd } else { 1.0 };
    v.iter_mut().for_each(|x| *x = (*x - mean) / sd);
}

fn smooth_field(rng: &mut impl Rng, height: usize, width: usize, sigma: f64) -> Vec<f64> {
    let noise: Vec<f64> = (0..height * width).map(|_| normal(rng)).collect();
    let mut f = gaussian_blur(&noise, height, width, sigma);
    standardize(&mut f);
    f
}

/// Cloud-free cells of a day: the `valid` smallest values of a smoothed
/// noise field, so clouds form contiguous blobs and the cover is exact.
fn blob_mask(rng: &mut impl Rng, height: usize, width: usize, sigma: f64, cloud_fraction: f64) -> Vec<bool> {
    let n = height * width;
    let valid = valid_count(n, cloud_fraction);
    if valid == n {
        return vec![true; n];
    }
    let field = smooth_field(rng, height, width, sigma);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| field[a].total_cmp(&field[b]).then(a.cmp(&b)));
    let mut mask = vec![false; n];
    for &p in &order[..valid] {
        mask[p] = true;
    }
    mask
}

fn synth_features(cfg: &SynthConfig) -> FeatureRaster {
    let (h, w) = (cfg.height, cfg.width);
    let n = h * w;
    let mut rng = stream_rng(cfg.seed, "features", 0);
    let side = h.min(w) as f64;
    let logistic = |x: f64| 1.0 / (1.0 + (-2.0 * x).exp());
    let veg: Vec<f64> = smooth_field(&mut rng, h, w, 0.06 * side).into_iter().map(logistic).collect();
    let urb: Vec<f64> = smooth_field(&mut rng, h, w, 0.1 * side).into_iter().map(logistic).collect();
    let mut data = vec![0f32; 6 * n];
    for p in 0..n {
        let (v, u) = (veg[p], urb[p]);
        let bands = [
            0.1 - 0.05 * v + 0.08 * u,
            0.1 + 0.02 * v + 0.06 * u,
            0.08 + 0.05 * u,
            0.15 + 0.3 * v + 0.02 * u,
        ];
        for (f, b) in bands.iter().enumerate() {
            data[f * n + p] = (b + 0.01 * normal(&mut rng)).clamp(0.0, 1.0) as f32;
        }
        let (r, c) = (p / w, p % w);
        data[4 * n + p] = if w > 1 { c as f32 / (w - 1) as f32 } else { 0.0 };
        data[5 * n + p] = if h > 1 { r as f32 / (h - 1) as f32 } else { 0.0 };
    }
    FeatureRaster::new(6, h, w, data).expect("synthetic features are valid")
}

fn synth_era5(cfg: &SynthConfig) -> Result<Era5Series> {
    let (h, w) = (cfg.height, cfg.width);
    let cs = cfg.era5_cell_size;
    let (ch, cw) = (h.div_ceil(cs), w.div_ceil(cs));
    let n_cells = ch * cw;
    let days: Vec<u16> = (1..=CALENDAR_DAYS).collect();
    let omega = 2.0 * std::f64::consts::PI / 365.0;
    let innovation = cfg.era5_daily_sd * (1.0 - cfg.era5_ar1_rho.powi(2)).sqrt();
    let mut values = vec![0f32; days.len() * n_cells];
    for cell in 0..n_cells {
        let mut rng = stream_rng(cfg.seed, "era5", cell as u64);
        let offset = 0.5 * normal(&mut rng);
        let mut anomaly = cfg.era5_daily_sd * normal(&mut rng);
        for (i, &d) in days.iter().enumerate() {
            if i > 0 {
                anomaly = cfg.era5_ar1_rho * anomaly + innovation * normal(&mut rng);
            }
            let seasonal = cfg.era5_mean + cfg.era5_amplitude * (omega * (d as f64 - cfg.era5_peak_day)).cos();
            values[i * n_cells + cell] = (seasonal + offset + anomaly) as f32;
        }
    }
    let cell_map = (0..h * w)
        .map(|p| ((p / w / cs) * cw + (p % w) / cs) as u32)
        .collect();
    Era5Series::new(days, n_cells, values, h, w, cell_map)
}

fn synth_params(cfg: &SynthConfig) -> AtcParams {
    let mut rng = stream_rng(cfg.seed, "params", 0);
    let pixels = (0..cfg.height * cfg.width)
        .map(|_| Eatc {
            c: uniform(&mut rng, cfg.c_range),
            a: uniform(&mut rng, cfg.a_range),
            phi: uniform(&mut rng, cfg.phi_range),
            b: uniform(&mut rng, cfg.b_range),
        })
        .collect();
    AtcParams {
        height: cfg.height,
        width: cfg.width,
        pixels,
    }
}

/// Random Fourier features of the globally standardized feature vectors;
/// a residual surface is a day-specific linear combination of them, so the
/// surface is a smooth function of the features with RBF-like covariance.
fn residual_basis(cfg: &SynthConfig, features: &FeatureRaster) -> Vec<f64> {
    let n = features.n_pixels();
    let f = features.n_features();
    let mut cols: Vec<Vec<f64>> = (0..f)
        .map(|k| features.band(k).iter().map(|&x| x as f64).collect())
        .collect();
    cols.iter_mut().for_each(|c| standardize(c));
    let mut rng = stream_rng(cfg.seed, "residual-basis", 0);
    let omega: Vec<f64> = (0..RFF_FEATURES * f)
        .map(|_| normal(&mut rng) / cfg.residual_lengthscale)
        .collect();
    let phase: Vec<f64> = (0..RFF_FEATURES)
        .map(|_| rng.random_range(0.0..2.0 * std::f64::consts::PI))
        .collect();
    let scale = (2.0 / RFF_FEATURES as f64).sqrt();
    let mut basis = vec![0.0; n * RFF_FEATURES];
    for p in 0..n {
        for k in 0..RFF_FEATURES {
            let arg: f64 = (0..f).map(|j| omega[k * f + j] * cols[j][p]).sum::<f64>() + phase[k];
            basis[p * RFF_FEATURES + k] = scale * arg.cos();
        }
    }
    basis
}

#[derive(Clone, Copy)]
enum DayKind {
    Clear,
    Heavy,
    Regular,
}

fn day_kinds(cfg: &SynthConfig, n_days: usize) -> Vec<DayKind> {
    let n_clear = (cfg.clear_day_fraction * n_days as f64).round() as usize;
    let n_heavy = ((cfg.heavy_cloud_day_fraction * n_days as f64).round() as usize).min(n_days - n_clear);
    let mut rng = stream_rng(cfg.seed, "day-kind", 0);
    let mut order: Vec<usize> = (0..n_days).collect();
    for i in (1..n_days).rev() {
        order.swap(i, rng.random_range(0..=i));
    }
    let mut kinds = vec![DayKind::Regular; n_days];
    for &i in &order[..n_clear] {
        kinds[i] = DayKind::Clear;
    }
    for &i in &order[n_clear..n_clear + n_heavy] {
        kinds[i] = DayKind::Heavy;
    }
    kinds
}

/// Builds a stack, its forcing, features and the exact generating truth.
/// Output is a pure function of the configuration.
pub fn generate(cfg: &SynthConfig) -> Result<SynthData> {
    cfg.validate()?;
    let (h, w) = (cfg.height, cfg.width);
    let n = h * w;
    let features = synth_features(cfg);
    let era5 = synth_era5(cfg)?;
    let params = synth_params(cfg);
    let basis = residual_basis(cfg, &features);

    let truth_days: Vec<u16> = (1..=CALENDAR_DAYS).collect();
    let mut residuals = vec![0.0; truth_days.len() * n];
    let mut lst = vec![0.0; truth_days.len() * n];
    let iid_sd = cfg.residual_sd * cfg.residual_iid_fraction;
    for (i, &d) in truth_days.iter().enumerate() {
        let mut rng = stream_rng(cfg.seed, "residual-day", d as u64);
        let weights: Vec<f64> = (0..RFF_FEATURES).map(|_| normal(&mut rng)).collect();
        let forcing = era5.day_grid(d)?;
        for p in 0..n {
            let smooth: f64 = basis[p * RFF_FEATURES..(p + 1) * RFF_FEATURES]
                .iter()
                .zip(&weights)
                .map(|(b, w)| b * w)
                .sum();
            let r = cfg.residual_sd * smooth + iid_sd * normal(&mut rng);
            residuals[i * n + p] = r;
            lst[i * n + p] = atc_forward(&params.pixels[p], d as f64, forcing[p]) + r;
        }
    }
    let truth = GroundTruth {
        params,
        days: truth_days,
        residuals,
        lst,
    };

    let days = cfg.cadence.days();
    let kinds = day_kinds(cfg, days.len());
    let sigma = cfg.cloud_blob_scale * h.min(w) as f64;
    let mut temps = vec![f32::NAN; days.len() * n];
    for (i, &d) in days.iter().enumerate() {
        let cloud = match kinds[i] {
            DayKind::Clear => 0.0,
            DayKind::Heavy => cfg.heavy_cloud_fraction,
            DayKind::Regular => cfg.cloud_fraction_target,
        };
        let mask = blob_mask(&mut stream_rng(cfg.seed, "clouds", d as u64), h, w, sigma, cloud);
        let mut rng = stream_rng(cfg.seed, "obs-noise", d as u64);
        let row = truth.lst_day(d)?;
        for p in 0..n {
            let noise = cfg.obs_noise_sd * normal(&mut rng);
            if mask[p] {
                temps[i * n + p] = (row[p] + noise) as f32;
            }
        }
    }
    let stack = SceneStack::new(days, h, w, temps)?;
    Ok(SynthData {
        stack,
        era5,
        features,
        truth,
    })
}

/// Keeps only the acquisition days of a sparser schedule.
pub fn thin_cadence(stack: &SceneStack, cadence: Cadence) -> Result<SceneStack> {
    let source: BTreeSet<u16> = stack.days().iter().map(|d| (d - 1) % CYCLE_DAYS).collect();
    let target: BTreeSet<u16> = cadence.offsets().iter().copied().collect();
    if !target.is_subset(&source) {
        return Err(Error::Domain(format!(
            "cannot thin a stack with cycle offsets {source:?} to {}",
            cadence.label()
        )));
    }
    let keep: Vec<usize> = stack
        .days()
        .iter()
        .enumerate()
        .filter(|(_, d)| target.contains(&((**d - 1) % CYCLE_DAYS)))
        .map(|(i, _)| i)
        .collect();
    stack.select_days(&keep)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(seed: u64) -> SynthConfig {
        SynthConfig {
            height: 16,
            width: 12,
            seed,
            era5_cell_size: 8,
            ..SynthConfig::default()
        }
    }

    #[test]
    fn schedule_counts() {
        assert_eq!(Cadence::FourPer16.days().len(), 92);
        assert_eq!(Cadence::TwoPer16.days().len(), 46);
        assert_eq!(Cadence::OnePer16.days().len(), 23);
        assert_eq!(*Cadence::FourPer16.days().last().unwrap(), 362);
        for c in [Cadence::TwoPer16, Cadence::OnePer16] {
            let dense: BTreeSet<u16> = Cadence::FourPer16.days().into_iter().collect();
            assert!(c.days().iter().all(|d| dense.contains(d)));
        }
    }

    #[test]
    fn same_seed_same_data() {
        let a = generate(&small(3)).unwrap();
        let b = generate(&small(3)).unwrap();
        assert_eq!(a.stack, b.stack);
        assert_eq!(a.truth, b.truth);
        let c = generate(&small(4)).unwrap();
        assert_ne!(a.stack, c.stack);
    }

    #[test]
    fn truth_is_self_consistent() {
        let d = generate(&small(1)).unwrap();
        let n = d.stack.n_pixels();
        for (i, &day) in d.truth.days.iter().enumerate() {
            let forcing = d.era5.day_grid(day).unwrap();
            for p in 0..n {
                let expect = atc_forward(&d.truth.params.pixels[p], day as f64, forcing[p]) + d.truth.residuals[i * n + p];
                assert_eq!(d.truth.lst[i * n + p], expect);
            }
        }
    }

    #[test]
    fn noiseless_observations_follow_the_cycle() {
        let cfg = SynthConfig { obs_noise_sd: 0.0, residual_sd: 0.0, ..small(2) };
        let d = generate(&cfg).unwrap();
        let n = d.stack.n_pixels();
        for (i, &day) in d.stack.days().iter().enumerate() {
            for p in 0..n {
                let t = d.stack.value(i, p);
                if !t.is_nan() {
                    let f = d.era5.value(day, p).unwrap();
                    let expect = atc_forward(&d.truth.params.pixels[p], day as f64, f);
                    assert!((t as f64 - expect).abs() < 1e-4);
                }
            }
        }
    }

    #[test]
    fn cloud_cover_hits_target() {
        let cfg = SynthConfig { height: 64, width: 64, ..SynthConfig::default() };
        let d = generate(&cfg).unwrap();
        for i in 0..d.stack.shape().n_days {
            let f = d.stack.valid_fraction(i).unwrap();
            assert!((0.45..=0.55).contains(&f), "day {i}: {f}");
        }
    }

    #[test]
    fn full_cover_with_required_pixel_is_rejected() {
        let cfg = SynthConfig { cloud_fraction_target: 1.0, ..small(0) };
        assert!(matches!(generate(&cfg), Err(Error::Config(_))));
    }

    #[test]
    fn day_kinds_are_applied() {
        let cfg = SynthConfig { clear_day_fraction: 0.1, heavy_cloud_day_fraction: 0.1, ..small(5) };
        let d = generate(&cfg).unwrap();
        let fr: Vec<f64> = (0..92).map(|i| d.stack.valid_fraction(i).unwrap()).collect();
        assert_eq!(fr.iter().filter(|&&f| f == 1.0).count(), 9);
        assert_eq!(fr.iter().filter(|&&f| f < 0.2).count(), 9);
    }

    #[test]
    fn thinning() {
        let d = generate(&small(0)).unwrap();
        let two = thin_cadence(&d.stack, Cadence::TwoPer16).unwrap();
        assert_eq!(two.days().len(), 46);
        let one = thin_cadence(&d.stack, Cadence::OnePer16).unwrap();
        assert_eq!(one.days().len(), 23);
        assert_eq!(thin_cadence(&d.stack, Cadence::FourPer16).unwrap(), d.stack);
        assert!(thin_cadence(&one, Cadence::TwoPer16).is_err());
        let idx = d.stack.day_index(two.days()[3]).unwrap();
        let bits = |v: &[f32]| v.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(two.day_values(3)), bits(d.stack.day_values(idx)));
    }

    #[test]
    fn blur_preserves_constants() {
        let f = vec![2.5; 35];
        let g = gaussian_blur(&f, 5, 7, 3.0);
        assert!(g.iter().all(|v| (v - 2.5).abs() < 1e-12));
    }
}
