use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{init_params, AtcEnsemble, DeficiencyReport, Eatc, OMEGA};
use crate::error::{Error, Result};
use crate::raster::{Era5Series, SceneStack};

/// Optimizer schedule for the per-pixel L1 fit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FitConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub snapshot_stride: usize,
    pub snapshot_window: usize,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
    pub min_valid_obs: usize,
    /// Laplace scale. Divides the reported loss; the minimizer does not
    /// depend on it.
    pub laplace_scale_beta: f64,
}

impl Default for FitConfig {
    fn default() -> Self {
        FitConfig {
            learning_rate: 0.1,
            epochs: 1200,
            snapshot_stride: 4,
            snapshot_window: 800,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_eps: 1e-8,
            min_valid_obs: 8,
            laplace_scale_beta: 1.0,
        }
    }
}

impl FitConfig {
    pub fn n_snapshots(&self) -> usize {
        self.snapshot_window / self.snapshot_stride.max(1)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(format!("fit config: {m}")));
        if !(self.learning_rate > 0.0) {
            return bad("learning_rate must be positive");
        }
        if self.snapshot_stride == 0 || self.snapshot_window % self.snapshot_stride != 0 {
            return bad("snapshot_window must be a positive multiple of snapshot_stride");
        }
        if self.n_snapshots() < 2 {
            return bad("at least two snapshots are required");
        }
        if self.epochs < self.snapshot_window {
            return bad("epochs must cover the snapshot window");
        }
        if !(0.0..1.0).contains(&self.adam_beta1) || !(0.0..1.0).contains(&self.adam_beta2) {
            return bad("adam betas must lie in [0, 1)");
        }
        if !(self.adam_eps > 0.0) || !(self.laplace_scale_beta > 0.0) {
            return bad("adam_eps and laplace_scale_beta must be positive");
        }
        Ok(())
    }

    /// 1-based epochs after which a snapshot is taken.
    pub fn snapshot_epochs(&self) -> Vec<u32> {
        let start = self.epochs - self.snapshot_window;
        (1..=self.n_snapshots())
            .map(|k| (start + k * self.snapshot_stride) as u32)
            .collect()
    }
}

#[derive(Debug, Clone)]
pub struct AtcFit {
    pub ensemble: AtcEnsemble,
    pub deficiency: DeficiencyReport,
    /// Mean per-pixel loss at the start of each epoch, over fitted pixels.
    pub loss_trace: Vec<f64>,
    /// Mean per-pixel loss after the last update.
    pub final_loss: f64,
    pub seed: u64,
}

impl AtcFit {
    pub fn initial_loss(&self) -> f64 {
        self.loss_trace.first().copied().unwrap_or(0.0)
    }
}

/// One pixel's observations in optimizer coordinates. The reanalysis term
/// is centred and scaled per pixel so that the optimizer sees
/// `C' + A cos(w (d - phi)) + b' z` with `z = (era5 - mu) / sd`; this is an
/// exact reparameterization of the raw-kelvin model.
struct PixelProblem {
    cos_d: Vec<f64>,
    sin_d: Vec<f64>,
    z: Vec<f64>,
    temp: Vec<f64>,
    mu: f64,
    sd: f64,
}

impl PixelProblem {
    fn new(series: &[(u16, f64)], era5: &[f64]) -> Self {
        let n = series.len() as f64;
        let mu = era5.iter().sum::<f64>() / n;
        let var = era5.iter().map(|e| (e - mu) * (e - mu)).sum::<f64>() / n;
        let sd = if var > 0.0 { var.sqrt() } else { 1.0 };
        PixelProblem {
            cos_d: series.iter().map(|s| (OMEGA * s.0 as f64).cos()).collect(),
            sin_d: series.iter().map(|s| (OMEGA * s.0 as f64).sin()).collect(),
            z: era5.iter().map(|e| (e - mu) / sd).collect(),
            temp: series.iter().map(|s| s.1).collect(),
            mu,
            sd,
        }
    }

    fn to_internal(&self, p: &Eatc) -> [f64; 4] {
        [p.c + p.b * self.mu, p.a, p.phi, p.b * self.sd]
    }

    fn to_params(&self, t: &[f64; 4]) -> Eatc {
        let b = t[3] / self.sd;
        Eatc {
            c: t[0] - b * self.mu,
            a: t[1],
            phi: t[2],
            b,
        }
        .canonical()
    }

    fn loss_grad(&self, t: &[f64; 4]) -> (f64, [f64; 4]) {
        let (sin_p, cos_p) = (OMEGA * t[2]).sin_cos();
        let mut loss = 0.0;
        let mut g = [0.0; 4];
        for i in 0..self.temp.len() {
            let cos = self.cos_d[i] * cos_p + self.sin_d[i] * sin_p;
            let sin = self.sin_d[i] * cos_p - self.cos_d[i] * sin_p;
            let r = t[0] + t[1] * cos + t[3] * self.z[i] - self.temp[i];
            loss += r.abs();
            let s = if r > 0.0 {
                1.0
            } else if r < 0.0 {
                -1.0
            } else {
                continue;
            };
            g[0] += s;
            g[1] += s * cos;
            g[2] += s * t[1] * OMEGA * sin;
            g[3] += s * self.z[i];
        }
        let n = self.temp.len() as f64;
        (loss / n, g.map(|x| x / n))
    }
}

struct PixelFit {
    snapshots: Vec<Eatc>,
    losses: Vec<f64>,
    final_loss: f64,
}

fn fit_pixel(problem: &PixelProblem, init: &Eatc, cfg: &FitConfig, pixel: usize) -> Result<PixelFit> {
    let mut theta = problem.to_internal(init);
    let mut m = [0.0; 4];
    let mut v = [0.0; 4];
    let window_start = cfg.epochs - cfg.snapshot_window;
    let mut snapshots = Vec::with_capacity(cfg.n_snapshots());
    let mut losses = Vec::with_capacity(cfg.epochs);
    let (b1, b2) = (cfg.adam_beta1, cfg.adam_beta2);
    let (mut b1t, mut b2t) = (1.0, 1.0);
    for epoch in 1..=cfg.epochs {
        let (loss, g) = problem.loss_grad(&theta);
        if !loss.is_finite() {
            return Err(Error::Diverged { epoch, pixel });
        }
        losses.push(loss / cfg.laplace_scale_beta);
        b1t *= b1;
        b2t *= b2;
        for k in 0..4 {
            m[k] = b1 * m[k] + (1.0 - b1) * g[k];
            v[k] = b2 * v[k] + (1.0 - b2) * g[k] * g[k];
            let m_hat = m[k] / (1.0 - b1t);
            let v_hat = v[k] / (1.0 - b2t);
            theta[k] -= cfg.learning_rate * m_hat / (v_hat.sqrt() + cfg.adam_eps);
        }
        if epoch > window_start && (epoch - window_start) % cfg.snapshot_stride == 0 {
            snapshots.push(problem.to_params(&theta));
        }
    }
    let (final_loss, _) = problem.loss_grad(&theta);
    if !final_loss.is_finite() {
        return Err(Error::Diverged {
            epoch: cfg.epochs,
            pixel,
        });
    }
    Ok(PixelFit {
        snapshots,
        losses,
        final_loss: final_loss / cfg.laplace_scale_beta,
    })
}

const CHUNK: usize = 64;

/// Fits every pixel's cycle by full-batch Adam on the mean absolute error
/// and collects the snapshot ensemble from the tail of the trajectory.
///
/// Each pixel is an independent problem, so results are identical for any
/// worker count. Full-batch updates are deterministic; `seed` is recorded
/// on the ensemble for provenance.
pub fn fit_atc(stack: &SceneStack, era5: &Era5Series, config: &FitConfig, seed: u64) -> Result<AtcFit> {
    config.validate()?;
    let (init, deficiency) = init_params(stack, era5, config.min_valid_obs)?;
    let n = stack.n_pixels();
    let j = config.n_snapshots();
    let mut is_deficient = vec![false; n];
    for &p in &deficiency.pixels {
        is_deficient[p] = true;
    }

    let pixels: Vec<usize> = (0..n).collect();
    let chunks: Vec<Result<(Vec<Vec<Eatc>>, Vec<f64>, f64)>> = pixels
        .par_chunks(CHUNK)
        .map(|chunk| {
            let mut snaps = Vec::with_capacity(chunk.len());
            let mut loss_sum = vec![0.0; config.epochs];
            let mut final_sum = 0.0;
            for &p in chunk {
                if is_deficient[p] {
                    snaps.push(vec![init.pixels[p]; j]);
                    continue;
                }
                let series = stack.pixel_series(p);
                let forcing: Vec<f64> = series
                    .iter()
                    .map(|&(d, _)| era5.value(d, p).expect("era5 coverage checked"))
                    .collect();
                let problem = PixelProblem::new(&series, &forcing);
                let fit = fit_pixel(&problem, &init.pixels[p], config, p)?;
                for (acc, l) in loss_sum.iter_mut().zip(&fit.losses) {
                    *acc += l;
                }
                final_sum += fit.final_loss;
                snaps.push(fit.snapshots);
            }
            Ok((snaps, loss_sum, final_sum))
        })
        .collect();

    let fitted = (n - deficiency.pixels.len()).max(1) as f64;
    let mut per_pixel: Vec<Vec<Eatc>> = Vec::with_capacity(n);
    let mut loss_trace = vec![0.0; config.epochs];
    let mut final_loss = 0.0;
    for chunk in chunks {
        let (snaps, losses, fin) = chunk?;
        per_pixel.extend(snaps);
        for (acc, l) in loss_trace.iter_mut().zip(losses) {
            *acc += l;
        }
        final_loss += fin;
    }
    for l in &mut loss_trace {
        *l /= fitted;
    }
    final_loss /= fitted;

    let mut params = Vec::with_capacity(j * n);
    for s in 0..j {
        params.extend(per_pixel.iter().map(|snaps| snaps[s]));
    }
    let shape = stack.shape();
    let ensemble = AtcEnsemble::new(shape.height, shape.width, config.snapshot_epochs(), params)?;
    Ok(AtcFit {
        ensemble,
        deficiency,
        loss_trace,
        final_loss,
        seed,
    })
}
