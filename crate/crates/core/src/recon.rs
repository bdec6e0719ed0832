//! Gap-free daily grids: cycle ensemble plus residual GP, with the two
//! uncertainty sources kept apart.

use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::atc::{atc_forward, fit_atc, AtcEnsemble, AtcFit, FitConfig};
use crate::container::Container;
use crate::error::{Error, Result, Violation};
use crate::gp::{compute_residuals, fit_gp_day, gp_predict_mean, predict_pixels, GpConfig, GpModel, GpSet};
use crate::linalg::Mat;
use crate::raster::{Era5Series, FeatureRaster, SceneStack};

pub const RECON_KIND: &str = "reconstruction";

/// Two-sided standard normal quantile for a central `level` interval.
pub fn normal_quantile(level: f64) -> f64 {
    Normal::standard().inverse_cdf(0.5 + 0.5 * level)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ReconConfig {
    pub level: f64,
    /// Average all snapshots; otherwise only the final snapshot is used.
    pub use_ensemble: bool,
    /// Add the residual GP; otherwise the cycle model alone.
    pub use_gp: bool,
    /// Compute the residual variance at observed pixels too. When off those
    /// pixels report zero residual variance, since the observation replaces
    /// the model value in the exported product.
    pub full_variance: bool,
}

impl Default for ReconConfig {
    fn default() -> Self {
        ReconConfig {
            level: 0.95,
            use_ensemble: true,
            use_gp: true,
            full_variance: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Source {
    Observed,
    ReconstructedWithGp,
    ReconstructedAtcOnly,
}

impl Source {
    pub fn code(self) -> f32 {
        match self {
            Source::Observed => 0.0,
            Source::ReconstructedWithGp => 1.0,
            Source::ReconstructedAtcOnly => 2.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReconstructionResult {
    pub day: u16,
    pub mean: Vec<f64>,
    pub lower95: Vec<f64>,
    pub upper95: Vec<f64>,
    pub var_atc: Vec<f64>,
    pub var_gp: Vec<f64>,
    pub source: Vec<Source>,
    /// Observed value where present, NaN elsewhere.
    pub observed: Vec<f64>,
}

impl ReconstructionResult {
    /// The exported product: observations where present, model mean elsewhere.
    pub fn seamless(&self) -> Vec<f64> {
        self.observed
            .iter()
            .zip(&self.mean)
            .map(|(&o, &m)| if o.is_nan() { m } else { o })
            .collect()
    }

    pub fn total_variance(&self) -> Result<Vec<f64>> {
        combine_uncertainty(&self.var_atc, &self.var_gp)
    }
}

/// Elementwise sum of the two variance sources.
pub fn combine_uncertainty(var_atc: &[f64], var_gp: &[f64]) -> Result<Vec<f64>> {
    if var_atc.len() != var_gp.len() {
        return Err(Error::invalid("variance grids", Violation::ShapeMismatch, None));
    }
    if let Some(i) = var_atc.iter().chain(var_gp).position(|v| !(*v >= 0.0)) {
        return Err(Error::invalid("variance grids", Violation::NegativeValue, Some(i % var_atc.len().max(1))));
    }
    Ok(var_atc.iter().zip(var_gp).map(|(a, g)| a + g).collect())
}

/// Interval sum of the two stages' bounds.
pub fn total_interval(
    atc_lower: &[f64],
    atc_upper: &[f64],
    gp_lower: &[f64],
    gp_upper: &[f64],
) -> Result<(Vec<f64>, Vec<f64>)> {
    let n = atc_lower.len();
    if [atc_upper.len(), gp_lower.len(), gp_upper.len()].iter().any(|&l| l != n) {
        return Err(Error::invalid("interval grids", Violation::ShapeMismatch, None));
    }
    for i in 0..n {
        if atc_lower[i] > atc_upper[i] || gp_lower[i] > gp_upper[i] {
            return Err(Error::invalid("interval grids", Violation::CrossedInterval, Some(i)));
        }
    }
    Ok((
        atc_lower.iter().zip(gp_lower).map(|(a, g)| a + g).collect(),
        atc_upper.iter().zip(gp_upper).map(|(a, g)| a + g).collect(),
    ))
}

/// Cycle-model statistics for one day under the chosen variant.
pub struct AtcDay {
    pub mean: Vec<f64>,
    pub var: Vec<f64>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

pub fn atc_day(ens: &AtcEnsemble, day: u16, era5: &Era5Series, cfg: &ReconConfig) -> Result<AtcDay> {
    if cfg.use_ensemble {
        let d = ens.predict_day(day, era5, cfg.level)?;
        Ok(AtcDay {
            var: d.sd.iter().map(|s| s * s).collect(),
            mean: d.mean,
            lower: d.lower,
            upper: d.upper,
        })
    } else {
        let forcing = era5.day_grid(day)?;
        let mean: Vec<f64> = ens
            .last_snapshot()
            .iter()
            .zip(&forcing)
            .map(|(p, &e)| atc_forward(p, day as f64, e))
            .collect();
        Ok(AtcDay {
            var: vec![0.0; mean.len()],
            lower: mean.clone(),
            upper: mean.clone(),
            mean,
        })
    }
}

/// Reconstructs one calendar day. Days absent from the stack, days with no
/// valid pixel and days without a residual model use the cycle model alone.
pub fn reconstruct_day(
    ens: &AtcEnsemble,
    gp: Option<&GpModel>,
    era5: &Era5Series,
    features: &FeatureRaster,
    stack: &SceneStack,
    day: u16,
    cfg: &ReconConfig,
) -> Result<ReconstructionResult> {
    let n = stack.n_pixels();
    if ens.n_pixels() != n || features.n_pixels() != n {
        return Err(Error::invalid("reconstruction inputs", Violation::ShapeMismatch, None));
    }
    let atc = atc_day(ens, day, era5, cfg)?;
    let observed: Vec<f64> = match stack.day_index(day) {
        Some(i) => stack.day_values(i).iter().map(|&v| v as f64).collect(),
        None => vec![f64::NAN; n],
    };
    let n_valid = observed.iter().filter(|v| !v.is_nan()).count();
    let gp = if cfg.use_gp && n_valid > 0 {
        if gp.is_none() {
            tracing::warn!(day, n_valid, "no residual model for an observed day; using the cycle model alone");
        }
        gp
    } else {
        None
    };
    let z = normal_quantile(cfg.level);
    let (gp_mean, var_gp) = match gp {
        Some(model) => {
            if cfg.full_variance {
                let pixels: Vec<usize> = (0..n).collect();
                let p = predict_pixels(model, features, &pixels)?;
                (p.mean, p.variance)
            } else {
                let all: Vec<usize> = (0..n).collect();
                let q = Mat::from_vec(n, features.n_features(), features.rows(&all));
                let mean = gp_predict_mean(model, &q)?;
                let gaps: Vec<usize> = (0..n).filter(|&p| observed[p].is_nan()).collect();
                let mut var = vec![0.0; n];
                if !gaps.is_empty() {
                    let p = predict_pixels(model, features, &gaps)?;
                    for (&i, v) in gaps.iter().zip(p.variance) {
                        var[i] = v;
                    }
                }
                (mean, var)
            }
        }
        None => (vec![0.0; n], vec![0.0; n]),
    };
    let gp_lower: Vec<f64> = gp_mean.iter().zip(&var_gp).map(|(m, v)| m - z * v.sqrt()).collect();
    let gp_upper: Vec<f64> = gp_mean.iter().zip(&var_gp).map(|(m, v)| m + z * v.sqrt()).collect();
    let (lower95, upper95) = total_interval(&atc.lower, &atc.upper, &gp_lower, &gp_upper)?;
    let mean: Vec<f64> = atc.mean.iter().zip(&gp_mean).map(|(a, g)| a + g).collect();
    let unobserved = if gp.is_some() {
        Source::ReconstructedWithGp
    } else {
        Source::ReconstructedAtcOnly
    };
    let source = observed
        .iter()
        .map(|o| if o.is_nan() { unobserved } else { Source::Observed })
        .collect();
    Ok(ReconstructionResult {
        day,
        mean,
        lower95,
        upper95,
        var_atc: atc.var,
        var_gp,
        source,
        observed,
    })
}

/// Cycle-model mean used to form residuals under the chosen variant.
pub fn atc_mean_for_residuals(ens: &AtcEnsemble, day: u16, era5: &Era5Series, cfg: &ReconConfig) -> Result<Vec<f64>> {
    if cfg.use_ensemble {
        Ok(crate::atc::ensemble_predict(ens, day, era5)?.0)
    } else {
        atc_day(ens, day, era5, cfg).map(|d| d.mean)
    }
}

/// Fits one residual model per stack day, in parallel across days.
pub fn fit_gp_all(
    stack: &SceneStack,
    ens: &AtcEnsemble,
    era5: &Era5Series,
    features: &FeatureRaster,
    gp_cfg: &GpConfig,
    cfg: &ReconConfig,
    seed: u64,
) -> Result<GpSet> {
    let days: Vec<(usize, u16)> = stack.days().iter().copied().enumerate().collect();
    let fitted = days
        .par_iter()
        .map(|&(i, day)| {
            let mean = atc_mean_for_residuals(ens, day, era5, cfg)?;
            let residuals = compute_residuals(stack.day_values(i), &mean)?;
            fit_gp_day(day, &residuals, features, gp_cfg, seed)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(GpSet::from_days(fitted))
}

pub fn reconstruct_days(
    ens: &AtcEnsemble,
    gps: &GpSet,
    era5: &Era5Series,
    features: &FeatureRaster,
    stack: &SceneStack,
    days: &[u16],
    cfg: &ReconConfig,
) -> Result<Vec<ReconstructionResult>> {
    days.par_iter()
        .map(|&d| reconstruct_day(ens, gps.get(d), era5, features, stack, d, cfg))
        .collect()
}

/// Settings of every trained stage.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    pub fit: FitConfig,
    pub gp: GpConfig,
    pub recon: ReconConfig,
}

/// Both trained stages.
#[derive(Debug, Clone)]
pub struct Trained {
    pub atc: AtcFit,
    pub gps: GpSet,
}

pub fn train(
    stack: &SceneStack,
    era5: &Era5Series,
    features: &FeatureRaster,
    fit_cfg: &FitConfig,
    gp_cfg: &GpConfig,
    cfg: &ReconConfig,
    seed: u64,
) -> Result<Trained> {
    let atc = fit_atc(stack, era5, fit_cfg, seed)?;
    let gps = if cfg.use_gp {
        fit_gp_all(stack, &atc.ensemble, era5, features, gp_cfg, cfg, seed)?
    } else {
        GpSet::default()
    };
    Ok(Trained { atc, gps })
}

pub const LAYERS: [&str; 6] = ["mean", "lower", "upper", "var_atc", "var_gp", "source"];

pub fn layer_path(out: &Path, layer: &str) -> PathBuf {
    let stem = out
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "recon".into());
    out.with_file_name(format!("{stem}.{layer}.lstc"))
}

/// Writes the seamless cube to `out` and each companion layer next to it.
/// Returns every path written.
pub fn export_cube(results: &[ReconstructionResult], height: usize, width: usize, out: &Path) -> Result<Vec<PathBuf>> {
    if results.is_empty() {
        return Err(Error::Domain("nothing to export".into()));
    }
    let days: Vec<u32> = results.iter().map(|r| r.day as u32).collect();
    let dims = [results.len(), height, width];
    let cube = |f: &dyn Fn(&ReconstructionResult) -> Vec<f32>| -> Vec<f32> { results.iter().flat_map(f).collect() };
    let to32 = |v: &[f64]| v.iter().map(|&x| x as f32).collect::<Vec<f32>>();
    let mut written = Vec::new();
    let mut main = Container::new(dims, days.clone(), cube(&|r| to32(&r.seamless()))).with_kind(RECON_KIND);
    main.set_meta("layer", "seamless".into());
    main.save(out)?;
    written.push(out.to_path_buf());
    for layer in LAYERS {
        let data = match layer {
            "mean" => cube(&|r| to32(&r.mean)),
            "lower" => cube(&|r| to32(&r.lower95)),
            "upper" => cube(&|r| to32(&r.upper95)),
            "var_atc" => cube(&|r| to32(&r.var_atc)),
            "var_gp" => cube(&|r| to32(&r.var_gp)),
            _ => cube(&|r| r.source.iter().map(|s| s.code()).collect()),
        };
        let mut c = Container::new(dims, days.clone(), data).with_kind(RECON_KIND);
        c.set_meta("layer", layer.into());
        let path = layer_path(out, layer);
        c.save(&path)?;
        written.push(path);
    }
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::atc::Eatc;

    #[test]
    fn quantile_is_accurate() {
        assert!((normal_quantile(0.95) - 1.959_963_984_540_054).abs() < 1e-9);
        assert!((normal_quantile(0.6826894921370859) - 1.0).abs() < 1e-8);
    }

    #[test]
    fn combination_rules() {
        assert_eq!(combine_uncertainty(&[1.0], &[2.0]).unwrap(), vec![3.0]);
        assert_eq!(combine_uncertainty(&[1.5, 0.2], &[0.0, 0.0]).unwrap(), vec![1.5, 0.2]);
        assert!(combine_uncertainty(&[-1.0], &[2.0]).is_err());
        let (lo, hi) = total_interval(&[289.0], &[291.0], &[-0.5], &[0.5]).unwrap();
        assert_eq!((lo[0], hi[0]), (288.5, 291.5));
        let (lo, hi) = total_interval(&[289.0], &[291.0], &[0.0], &[0.0]).unwrap();
        assert_eq!((lo[0], hi[0]), (289.0, 291.0));
        assert!(total_interval(&[292.0], &[291.0], &[0.0], &[0.0]).is_err());
    }

    #[test]
    fn empty_day_falls_back_to_the_cycle() {
        let p = Eatc { c: 220.0, a: 10.0, phi: 200.0, b: 0.2 };
        let pix: Vec<Eatc> = (0..4).map(|i| Eatc { c: p.c + i as f64, ..p }).collect();
        let params: Vec<Eatc> = (0..40).flat_map(|j| pix.iter().map(move |e| Eatc { c: e.c + 0.01 * j as f64, ..*e })).collect();
        let ens = AtcEnsemble::new(2, 2, (1..=40).collect(), params).unwrap();
        let era5 = Era5Series::new((1..=365).collect(), 1, vec![290.0; 365], 2, 2, vec![0; 4]).unwrap();
        let features = FeatureRaster::new(1, 2, 2, vec![0.0, 0.1, 0.2, 0.3]).unwrap();
        let stack = SceneStack::new(vec![10], 2, 2, vec![f32::NAN; 4]).unwrap();
        let r = reconstruct_day(&ens, None, &era5, &features, &stack, 10, &ReconConfig::default()).unwrap();
        let (mean, _) = crate::atc::ensemble_predict(&ens, 10, &era5).unwrap();
        assert_eq!(r.mean, mean);
        assert!(r.var_gp.iter().all(|&v| v == 0.0));
        assert!(r.source.iter().all(|&s| s == Source::ReconstructedAtcOnly));
        for i in 0..4 {
            assert!(r.lower95[i] <= r.mean[i] && r.mean[i] <= r.upper95[i]);
        }
        // A day the stack never observed takes the same path.
        let r2 = reconstruct_day(&ens, None, &era5, &features, &stack, 11, &ReconConfig::default()).unwrap();
        assert!(r2.source.iter().all(|&s| s == Source::ReconstructedAtcOnly));
    }
}
