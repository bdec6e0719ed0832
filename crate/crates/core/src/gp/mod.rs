//! Daily Gaussian process on the residual surface left by the cycle model.

mod exact;
mod inducing;
mod kernel;

pub use exact::{lml_from_sq_dist, log_marginal_likelihood, sq_dist_matrix, ExactPosterior};
pub use inducing::{elbo, elbo_grad, SparsePosterior};
pub use kernel::{factor_with_jitter, kernel_matrix, rbf_kernel, KernelHyper};

use std::collections::BTreeMap;
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result, Violation};
use crate::linalg::Mat;
use crate::raster::FeatureRaster;
use crate::seed::stream_rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GpMode {
    Exact,
    Inducing,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModeChoice {
    #[default]
    Auto,
    Exact,
    Inducing,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Stage {
    pub learning_rate: f64,
    pub epochs: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GpConfig {
    pub min_train: usize,
    pub exact_threshold: usize,
    pub mode: ModeChoice,
    pub n_inducing: usize,
    pub minibatch: usize,
    pub schedule: Vec<Stage>,
    /// Exact mode fits hyperparameters on a random subset of this size.
    pub hyper_subsample: usize,
    /// Report predictive variance of a new observation rather than of the
    /// latent surface.
    pub include_noise: bool,
    /// Log-space step of the finite-difference gradient in inducing mode.
    pub fd_step: f64,
    /// Lower bound on the residual variance used to initialize.
    pub variance_floor: f64,
}

impl Default for GpConfig {
    fn default() -> Self {
        GpConfig {
            min_train: 30,
            exact_threshold: 4096,
            mode: ModeChoice::Auto,
            n_inducing: 512,
            minibatch: 1024,
            schedule: vec![
                Stage { learning_rate: 0.05, epochs: 50 },
                Stage { learning_rate: 0.005, epochs: 10 },
            ],
            hyper_subsample: 512,
            include_noise: true,
            fd_step: 1e-4,
            variance_floor: 1e-6,
        }
    }
}

impl GpConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(format!("gp config: {m}")));
        if self.min_train < 2 {
            return bad("min_train must be at least 2");
        }
        if self.n_inducing == 0 || self.minibatch == 0 || self.hyper_subsample < 2 {
            return bad("n_inducing, minibatch and hyper_subsample must be positive");
        }
        if self.schedule.iter().any(|s| !(s.learning_rate > 0.0)) {
            return bad("learning rates must be positive");
        }
        if !(self.fd_step > 0.0) || !(self.variance_floor > 0.0) {
            return bad("fd_step and variance_floor must be positive");
        }
        Ok(())
    }

    fn mode_for(&self, n: usize) -> GpMode {
        match self.mode {
            ModeChoice::Exact => GpMode::Exact,
            ModeChoice::Inducing => GpMode::Inducing,
            ModeChoice::Auto if n > self.exact_threshold => GpMode::Inducing,
            ModeChoice::Auto => GpMode::Exact,
        }
    }
}

#[derive(Debug, Clone)]
enum Posterior {
    Exact(ExactPosterior),
    Sparse(SparsePosterior),
}

/// A fitted residual model for one day.
#[derive(Debug, Clone)]
pub struct GpModel {
    pub day: u16,
    pub mode: GpMode,
    pub hyper: KernelHyper,
    pub feature_mean: Vec<f64>,
    pub feature_sd: Vec<f64>,
    pub residual_mean: f64,
    pub include_noise: bool,
    /// Objective value at each optimizer step.
    pub objective_trace: Vec<f64>,
    train_x: Mat,
    train_y: Vec<f64>,
    posterior: Posterior,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GpPrediction {
    pub mean: Vec<f64>,
    pub variance: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkippedDay {
    pub day: u16,
    pub n_valid: usize,
    pub reason: String,
}

#[derive(Debug, Clone)]
pub enum DayGp {
    Fitted(Box<GpModel>),
    Skipped(SkippedDay),
}

/// `observed - atc_mean` where observed is present, NaN elsewhere.
pub fn compute_residuals(observed: &[f32], atc_mean: &[f64]) -> Result<Vec<f64>> {
    if observed.len() != atc_mean.len() {
        return Err(Error::invalid("residuals", Violation::ShapeMismatch, None));
    }
    Ok(observed
        .iter()
        .zip(atc_mean)
        .map(|(&o, &m)| if o.is_nan() { f64::NAN } else { o as f64 - m })
        .collect())
}

fn standardization(x: &Mat) -> (Vec<f64>, Vec<f64>) {
    let (n, f) = (x.rows() as f64, x.cols());
    let mut mean = vec![0.0; f];
    for i in 0..x.rows() {
        for (m, v) in mean.iter_mut().zip(x.row(i)) {
            *m += v;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n);
    let mut sd = vec![0.0; f];
    for i in 0..x.rows() {
        for (k, v) in x.row(i).iter().enumerate() {
            sd[k] += (v - mean[k]).powi(2);
        }
    }
    let sd = sd
        .into_iter()
        .map(|s| {
            let s = (s / n).sqrt();
            if s > 0.0 {
                s
            } else {
                1.0
            }
        })
        .collect();
    (mean, sd)
}

fn apply_standardization(x: &Mat, mean: &[f64], sd: &[f64]) -> Mat {
    Mat::from_fn(x.rows(), x.cols(), |i, j| (x[(i, j)] - mean[j]) / sd[j])
}

/// `k` distinct indices out of `0..n`, in increasing order.
fn subsample(rng: &mut impl Rng, n: usize, k: usize) -> Vec<usize> {
    if k >= n {
        return (0..n).collect();
    }
    let mut idx: Vec<usize> = (0..n).collect();
    for i in 0..k {
        let j = rng.random_range(i..n);
        idx.swap(i, j);
    }
    let mut out = idx[..k].to_vec();
    out.sort_unstable();
    out
}

fn take_rows(x: &Mat, rows: &[usize]) -> Mat {
    Mat::from_fn(rows.len(), x.cols(), |i, j| x[(rows[i], j)])
}

struct Adam {
    m: [f64; 3],
    v: [f64; 3],
    t: i32,
}

impl Adam {
    fn new() -> Self {
        Adam { m: [0.0; 3], v: [0.0; 3], t: 0 }
    }

    /// Ascent step.
    fn step(&mut self, theta: &mut [f64; 3], g: &[f64; 3], lr: f64) {
        const B1: f64 = 0.9;
        const B2: f64 = 0.999;
        self.t += 1;
        for k in 0..3 {
            self.m[k] = B1 * self.m[k] + (1.0 - B1) * g[k];
            self.v[k] = B2 * self.v[k] + (1.0 - B2) * g[k] * g[k];
            let mh = self.m[k] / (1.0 - B1.powi(self.t));
            let vh = self.v[k] / (1.0 - B2.powi(self.t));
            theta[k] += lr * mh / (vh.sqrt() + 1e-8);
        }
    }
}

fn optimize_exact(x: &Mat, y: &[f64], init: [f64; 3], cfg: &GpConfig, rng: &mut impl Rng) -> Result<([f64; 3], Vec<f64>)> {
    let idx = subsample(rng, x.rows(), cfg.hyper_subsample);
    let xs = take_rows(x, &idx);
    let ys: Vec<f64> = idx.iter().map(|&i| y[i]).collect();
    let d2 = sq_dist_matrix(&xs);
    let mut theta = init;
    let mut adam = Adam::new();
    let mut trace = Vec::new();
    let mut best = (f64::NEG_INFINITY, theta);
    'outer: for stage in &cfg.schedule {
        for _ in 0..stage.epochs {
            let (f, g) = match lml_from_sq_dist(&d2, &ys, &theta) {
                Ok(v) => v,
                Err(e) if trace.is_empty() => return Err(e),
                Err(_) => break 'outer,
            };
            if !f.is_finite() {
                break 'outer;
            }
            trace.push(f);
            if f > best.0 {
                best = (f, theta);
            }
            adam.step(&mut theta, &g, stage.learning_rate);
        }
    }
    if let Ok((f, _)) = lml_from_sq_dist(&d2, &ys, &theta) {
        if f.is_finite() {
            trace.push(f);
            if f > best.0 {
                best = (f, theta);
            }
        }
    }
    Ok((best.1, trace))
}

fn optimize_inducing(
    x: &Mat,
    y: &[f64],
    z: &Mat,
    init: [f64; 3],
    cfg: &GpConfig,
    rng: &mut impl Rng,
) -> Result<([f64; 3], Vec<f64>)> {
    let n = x.rows();
    let mut theta = init;
    let mut adam = Adam::new();
    let mut trace = Vec::new();
    let mut order: Vec<usize> = (0..n).collect();
    for stage in &cfg.schedule {
        for _ in 0..stage.epochs {
            for i in (1..n).rev() {
                order.swap(i, rng.random_range(0..=i));
            }
            for batch in order.chunks(cfg.minibatch) {
                let mut rows = batch.to_vec();
                rows.sort_unstable();
                let xb = take_rows(x, &rows);
                let yb: Vec<f64> = rows.iter().map(|&i| y[i]).collect();
                let (f, g) = elbo_grad(&xb, &yb, z, &theta, cfg.fd_step)?;
                if !f.is_finite() || g.iter().any(|v| !v.is_finite()) {
                    return Err(Error::Numeric(format!("evidence bound became non-finite at {theta:?}")));
                }
                trace.push(f);
                adam.step(&mut theta, &g, stage.learning_rate);
            }
        }
    }
    Ok((theta, trace))
}

impl GpModel {
    /// Conditions a model with fixed hyperparameters on raw features and
    /// residuals.
    pub fn with_hyper(
        day: u16,
        x_raw: &Mat,
        residuals: &[f64],
        hyper: KernelHyper,
        mode: GpMode,
        inducing_rows: Option<&[usize]>,
        include_noise: bool,
    ) -> Result<GpModel> {
        hyper.validate()?;
        if x_raw.rows() != residuals.len() || x_raw.rows() == 0 {
            return Err(Error::invalid("gp training data", Violation::ShapeMismatch, None));
        }
        let (feature_mean, feature_sd) = standardization(x_raw);
        let x = apply_standardization(x_raw, &feature_mean, &feature_sd);
        let residual_mean = residuals.iter().sum::<f64>() / residuals.len() as f64;
        let y: Vec<f64> = residuals.iter().map(|r| r - residual_mean).collect();
        let z = match mode {
            GpMode::Exact => None,
            GpMode::Inducing => {
                let rows: Vec<usize> = inducing_rows.map(<[usize]>::to_vec).unwrap_or_else(|| (0..x.rows()).collect());
                Some(take_rows(&x, &rows))
            }
        };
        GpModel::assemble(day, hyper, feature_mean, feature_sd, residual_mean, include_noise, Vec::new(), x, y, z)
    }

    #[allow(clippy::too_many_arguments)]
    fn assemble(
        day: u16,
        hyper: KernelHyper,
        feature_mean: Vec<f64>,
        feature_sd: Vec<f64>,
        residual_mean: f64,
        include_noise: bool,
        objective_trace: Vec<f64>,
        x: Mat,
        y: Vec<f64>,
        z: Option<Mat>,
    ) -> Result<GpModel> {
        let (mode, posterior) = match z {
            None => (GpMode::Exact, Posterior::Exact(ExactPosterior::new(x.clone(), &y, hyper)?)),
            Some(z) => {
                if z.rows() > x.rows() {
                    return Err(Error::Domain("more inducing points than training points".into()));
                }
                (GpMode::Inducing, Posterior::Sparse(SparsePosterior::new(&x, &y, z, hyper)?))
            }
        };
        Ok(GpModel {
            day,
            mode,
            hyper,
            feature_mean,
            feature_sd,
            residual_mean,
            include_noise,
            objective_trace,
            train_x: x,
            train_y: y,
            posterior,
        })
    }

    pub fn n_features(&self) -> usize {
        self.feature_mean.len()
    }

    pub fn n_train(&self) -> usize {
        self.train_y.len()
    }

    pub fn jitter(&self) -> f64 {
        match &self.posterior {
            Posterior::Exact(p) => p.jitter,
            Posterior::Sparse(_) => 0.0,
        }
    }

    fn inducing(&self) -> Option<&Mat> {
        match &self.posterior {
            Posterior::Exact(_) => None,
            Posterior::Sparse(p) => Some(&p.z),
        }
    }
}

/// Fits the residual model of one day. Days with fewer than `min_train`
/// valid residuals are returned as skipped.
pub fn fit_gp_day(day: u16, residuals: &[f64], features: &FeatureRaster, cfg: &GpConfig, seed: u64) -> Result<DayGp> {
    cfg.validate()?;
    if residuals.len() != features.n_pixels() {
        return Err(Error::invalid("residual grid", Violation::ShapeMismatch, None));
    }
    let pixels: Vec<usize> = (0..residuals.len()).filter(|&p| residuals[p].is_finite()).collect();
    if pixels.len() < cfg.min_train {
        return Ok(DayGp::Skipped(SkippedDay {
            day,
            n_valid: pixels.len(),
            reason: format!("{} valid residuals, need {}", pixels.len(), cfg.min_train),
        }));
    }
    let x_raw = Mat::from_vec(pixels.len(), features.n_features(), features.rows(&pixels));
    let (feature_mean, feature_sd) = standardization(&x_raw);
    let x = apply_standardization(&x_raw, &feature_mean, &feature_sd);
    let n = pixels.len() as f64;
    let residual_mean = pixels.iter().map(|&p| residuals[p]).sum::<f64>() / n;
    let y: Vec<f64> = pixels.iter().map(|&p| residuals[p] - residual_mean).collect();
    let var = (y.iter().map(|v| v * v).sum::<f64>() / n).max(cfg.variance_floor);
    let init = [0.0, var.ln(), (0.1 * var).ln()];

    let mode = cfg.mode_for(pixels.len());
    let (theta, trace, z) = match mode {
        GpMode::Exact => {
            let mut rng = stream_rng(seed, "gp-subsample", day as u64);
            let (theta, trace) = optimize_exact(&x, &y, init, cfg, &mut rng)?;
            (theta, trace, None)
        }
        GpMode::Inducing => {
            let mut rng = stream_rng(seed, "gp-inducing", day as u64);
            let rows = subsample(&mut rng, x.rows(), cfg.n_inducing);
            let z = take_rows(&x, &rows);
            let mut rng = stream_rng(seed, "gp-minibatch", day as u64);
            let (theta, trace) = optimize_inducing(&x, &y, &z, init, cfg, &mut rng)?;
            (theta, trace, Some(z))
        }
    };
    let hyper = KernelHyper::from_log(&theta);
    let model = GpModel::assemble(
        day,
        hyper,
        feature_mean,
        feature_sd,
        residual_mean,
        cfg.include_noise,
        trace,
        x,
        y,
        z,
    )?;
    Ok(DayGp::Fitted(Box::new(model)))
}

/// Predictive mean and variance at raw (unstandardized) feature rows.
pub fn gp_predict(model: &GpModel, query: &Mat) -> Result<GpPrediction> {
    if query.cols() != model.n_features() {
        return Err(Error::invalid(
            "gp query",
            Violation::LengthMismatch {
                expected: model.n_features(),
                actual: query.cols(),
            },
            None,
        ));
    }
    let q = apply_standardization(query, &model.feature_mean, &model.feature_sd);
    let (mean, var) = match &model.posterior {
        Posterior::Exact(p) => p.predict(&q),
        Posterior::Sparse(p) => p.predict(&q),
    };
    let noise = if model.include_noise { model.hyper.noise_variance } else { 0.0 };
    Ok(GpPrediction {
        mean: mean.into_iter().map(|m| m + model.residual_mean).collect(),
        variance: var.into_iter().map(|v| v + noise).collect(),
    })
}

/// Posterior mean alone, which skips the triangular solves behind the variance.
pub fn gp_predict_mean(model: &GpModel, query: &Mat) -> Result<Vec<f64>> {
    if query.cols() != model.n_features() {
        return Err(Error::invalid(
            "gp query",
            Violation::LengthMismatch {
                expected: model.n_features(),
                actual: query.cols(),
            },
            None,
        ));
    }
    let q = apply_standardization(query, &model.feature_mean, &model.feature_sd);
    let mean = match &model.posterior {
        Posterior::Exact(p) => p.predict_mean(&q),
        Posterior::Sparse(p) => p.predict_mean(&q),
    };
    Ok(mean.into_iter().map(|m| m + model.residual_mean).collect())
}

/// Prediction at the listed pixels of a feature raster.
pub fn predict_pixels(model: &GpModel, features: &FeatureRaster, pixels: &[usize]) -> Result<GpPrediction> {
    let q = Mat::from_vec(pixels.len(), features.n_features(), features.rows(pixels));
    gp_predict(model, &q)
}

/// Fitted models keyed by day plus the days that were skipped.
#[derive(Debug, Clone, Default)]
pub struct GpSet {
    pub models: BTreeMap<u16, GpModel>,
    pub skipped: Vec<SkippedDay>,
}

impl GpSet {
    pub fn from_days(days: Vec<DayGp>) -> Self {
        let mut set = GpSet::default();
        for d in days {
            match d {
                DayGp::Fitted(m) => {
                    set.models.insert(m.day, *m);
                }
                DayGp::Skipped(s) => set.skipped.push(s),
            }
        }
        set.skipped.sort_by_key(|s| s.day);
        set
    }

    pub fn get(&self, day: u16) -> Option<&GpModel> {
        self.models.get(&day)
    }

    pub fn save(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir)?;
        for m in self.models.values() {
            save_model(m, dir)?;
        }
        std::fs::write(dir.join("skipped.json"), serde_json::to_string_pretty(&self.skipped)?)?;
        Ok(())
    }

    pub fn load(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref();
        let mut set = GpSet::default();
        let skipped = dir.join("skipped.json");
        if skipped.exists() {
            set.skipped = serde_json::from_slice(&std::fs::read(skipped)?)?;
        }
        let mut names: Vec<String> = std::fs::read_dir(dir)?
            .filter_map(|e| e.ok())
            .map(|e| e.file_name().to_string_lossy().into_owned())
            .filter(|n| n.starts_with("day_") && n.ends_with(".json"))
            .collect();
        names.sort();
        for name in names {
            let m = load_model(&dir.join(name))?;
            set.models.insert(m.day, m);
        }
        Ok(set)
    }
}

#[derive(Serialize, Deserialize)]
struct ModelHeader {
    day: u16,
    mode: GpMode,
    hyper: KernelHyper,
    feature_mean: Vec<f64>,
    feature_sd: Vec<f64>,
    residual_mean: f64,
    include_noise: bool,
    n_train: usize,
    n_inducing: usize,
    objective_trace: Vec<f64>,
    data: String,
}

fn push_f64(buf: &mut Vec<u8>, values: &[f64]) {
    for v in values {
        buf.extend_from_slice(&v.to_le_bytes());
    }
}

fn save_model(m: &GpModel, dir: &Path) -> Result<()> {
    let stem = format!("day_{:03}", m.day);
    let z = m.inducing();
    let header = ModelHeader {
        day: m.day,
        mode: m.mode,
        hyper: m.hyper,
        feature_mean: m.feature_mean.clone(),
        feature_sd: m.feature_sd.clone(),
        residual_mean: m.residual_mean,
        include_noise: m.include_noise,
        n_train: m.n_train(),
        n_inducing: z.map_or(0, Mat::rows),
        objective_trace: m.objective_trace.clone(),
        data: format!("{stem}.bin"),
    };
    let mut buf = Vec::new();
    push_f64(&mut buf, m.train_x.as_slice());
    push_f64(&mut buf, &m.train_y);
    if let Some(z) = z {
        push_f64(&mut buf, z.as_slice());
    }
    std::fs::write(dir.join(&header.data), buf)?;
    std::fs::write(dir.join(format!("{stem}.json")), serde_json::to_string_pretty(&header)?)?;
    Ok(())
}

fn load_model(path: &Path) -> Result<GpModel> {
    let h: ModelHeader = serde_json::from_slice(&std::fs::read(path)?)?;
    let dir = path.parent().unwrap_or(Path::new("."));
    let bytes = std::fs::read(dir.join(&h.data))?;
    let f = h.feature_mean.len();
    if h.feature_sd.len() != f || f == 0 {
        return Err(Error::Format(format!("{}: bad standardization constants", path.display())));
    }
    let expected = 8 * (h.n_train * f + h.n_train + h.n_inducing * f);
    if bytes.len() != expected {
        return Err(Error::Truncated {
            expected: expected as u64,
            actual: bytes.len() as u64,
        });
    }
    let vals: Vec<f64> = bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    let (xs, rest) = vals.split_at(h.n_train * f);
    let (ys, zs) = rest.split_at(h.n_train);
    let x = Mat::from_vec(h.n_train, f, xs.to_vec());
    let z = match h.mode {
        GpMode::Exact => None,
        GpMode::Inducing => Some(Mat::from_vec(h.n_inducing, f, zs.to_vec())),
    };
    GpModel::assemble(
        h.day,
        h.hyper,
        h.feature_mean,
        h.feature_sd,
        h.residual_mean,
        h.include_noise,
        h.objective_trace,
        x,
        ys.to_vec(),
        z,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn random_x(rng: &mut ChaCha8Rng, n: usize, f: usize) -> Mat {
        Mat::from_fn(n, f, |_, _| rng.sample::<f64, _>(StandardNormal))
    }

    #[test]
    fn residual_rule() {
        let r = compute_residuals(&[291.0, f32::NAN, 290.0], &[290.0, 290.0, 290.0]).unwrap();
        assert_eq!(r[0], 1.0);
        assert!(r[1].is_nan());
        assert_eq!(r[2], 0.0);
        assert!(compute_residuals(&[1.0], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn lml_gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let x = random_x(&mut rng, 40, 3);
        let y: Vec<f64> = (0..40).map(|i| (x[(i, 0)]).sin() + 0.1 * rng.sample::<f64, _>(StandardNormal)).collect();
        for t in [[0.0, 0.0, -2.0], [-0.5, 0.7, -1.0], [0.4, -0.3, -3.0]] {
            let (_, g) = log_marginal_likelihood(&x, &y, &t).unwrap();
            for k in 0..3 {
                let h = 1e-5;
                let mut up = t;
                let mut dn = t;
                up[k] += h;
                dn[k] -= h;
                let fd = (log_marginal_likelihood(&x, &y, &up).unwrap().0
                    - log_marginal_likelihood(&x, &y, &dn).unwrap().0)
                    / (2.0 * h);
                assert!((fd - g[k]).abs() <= 1e-3 * fd.abs().max(1e-3), "{k}: {fd} vs {}", g[k]);
            }
        }
    }

    #[test]
    fn far_query_reverts_to_prior() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x = random_x(&mut rng, 20, 2);
        let y: Vec<f64> = (0..20).map(|i| x[(i, 1)] + 3.0).collect();
        let hyper = KernelHyper { lengthscale: 0.5, signal_variance: 2.0, noise_variance: 0.1 };
        let m = GpModel::with_hyper(1, &x, &y, hyper, GpMode::Exact, None, false).unwrap();
        let q = Mat::from_vec(1, 2, vec![1e3, -1e3]);
        let p = gp_predict(&m, &q).unwrap();
        assert!((p.mean[0] - m.residual_mean).abs() < 1e-9);
        assert!((p.variance[0] - 2.0).abs() < 1e-9);
        let noisy = GpModel { include_noise: true, ..m };
        assert!((gp_predict(&noisy, &q).unwrap().variance[0] - 2.1).abs() < 1e-9);
        assert!(gp_predict(&noisy, &Mat::zeros(1, 3)).is_err());
    }

    #[test]
    fn interpolates_training_points_without_noise() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let x = random_x(&mut rng, 15, 2);
        let y: Vec<f64> = (0..15).map(|i| x[(i, 0)] * 2.0 - x[(i, 1)]).collect();
        let hyper = KernelHyper { lengthscale: 1.0, signal_variance: 1.0, noise_variance: 1e-10 };
        let m = GpModel::with_hyper(1, &x, &y, hyper, GpMode::Exact, None, false).unwrap();
        let p = gp_predict(&m, &take_rows(&x, &[3])).unwrap();
        assert!((p.mean[0] - y[3]).abs() < 1e-4);
        assert!(p.variance[0] < 1e-6);
    }

    #[test]
    fn inducing_on_training_inputs_matches_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x = random_x(&mut rng, 120, 3);
        let y: Vec<f64> = (0..120).map(|i| (x[(i, 0)] + x[(i, 2)]).cos()).collect();
        let hyper = KernelHyper { lengthscale: 1.2, signal_variance: 0.8, noise_variance: 0.05 };
        let e = GpModel::with_hyper(1, &x, &y, hyper, GpMode::Exact, None, false).unwrap();
        let s = GpModel::with_hyper(1, &x, &y, hyper, GpMode::Inducing, None, false).unwrap();
        let q = random_x(&mut rng, 30, 3);
        let (pe, ps) = (gp_predict(&e, &q).unwrap(), gp_predict(&s, &q).unwrap());
        let (me, ms) = (gp_predict_mean(&e, &q).unwrap(), gp_predict_mean(&s, &q).unwrap());
        for i in 0..30 {
            assert!((pe.mean[i] - me[i]).abs() < 1e-10);
            assert!((ps.mean[i] - ms[i]).abs() < 1e-10);
            assert!((pe.mean[i] - ps.mean[i]).abs() < 1e-3);
            assert!((pe.variance[i] - ps.variance[i]).abs() < 1e-3);
        }
    }

    #[test]
    fn few_residuals_are_skipped() {
        let features = FeatureRaster::new(1, 1, 40, (0..40).map(|v| v as f32).collect()).unwrap();
        let mut r = vec![f64::NAN; 40];
        r[..10].iter_mut().for_each(|v| *v = 1.0);
        match fit_gp_day(5, &r, &features, &GpConfig::default(), 0).unwrap() {
            DayGp::Skipped(s) => assert_eq!((s.day, s.n_valid), (5, 10)),
            DayGp::Fitted(_) => panic!("expected a skip"),
        }
    }

    #[test]
    fn constant_residuals_predict_the_constant() {
        let features = FeatureRaster::new(2, 8, 8, (0..128).map(|v| (v % 13) as f32 / 13.0).collect()).unwrap();
        let r = vec![1.7; 64];
        let DayGp::Fitted(m) = fit_gp_day(5, &r, &features, &GpConfig::default(), 0).unwrap() else {
            panic!("expected a model")
        };
        assert!(m.hyper.signal_variance < 1e-6);
        let p = predict_pixels(&m, &features, &[0, 10, 63]).unwrap();
        assert!(p.mean.iter().all(|v| (v - 1.7).abs() < 1e-9));
    }

    #[test]
    fn save_load_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let data: Vec<f32> = (0..3 * 100).map(|_| rng.random::<f32>()).collect();
        let features = FeatureRaster::new(3, 10, 10, data).unwrap();
        let r: Vec<f64> = (0..100).map(|p| if p % 3 == 0 { f64::NAN } else { (p as f64 * 0.1).sin() }).collect();
        let fitted = fit_gp_day(9, &r, &features, &GpConfig::default(), 7).unwrap();
        let r2 = vec![f64::NAN; 100];
        let skipped = fit_gp_day(10, &r2, &features, &GpConfig::default(), 7).unwrap();
        let set = GpSet::from_days(vec![fitted, skipped]);
        let dir = tempfile::tempdir().unwrap();
        set.save(dir.path()).unwrap();
        let back = GpSet::load(dir.path()).unwrap();
        assert_eq!(back.skipped, set.skipped);
        let pix: Vec<usize> = (0..100).collect();
        let a = predict_pixels(set.get(9).unwrap(), &features, &pix).unwrap();
        let b = predict_pixels(back.get(9).unwrap(), &features, &pix).unwrap();
        assert_eq!(a, b);
    }
}
