//! Enhanced annual temperature cycle: a per-pixel cosine seasonal model
//! plus a linear coupling to the daily reanalysis skin temperature.

mod ensemble;
mod fit;

pub use ensemble::{
    atc_interval, ensemble_predict, percentile_linear, AtcEnsemble, EnsembleDay, ENSEMBLE_KIND,
};
pub use fit::{fit_atc, AtcFit, FitConfig};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::raster::{Era5Series, SceneStack};

pub const PERIOD_DAYS: f64 = 365.0;
pub const OMEGA: f64 = 2.0 * std::f64::consts::PI / PERIOD_DAYS;

/// Parameters of one pixel's cycle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Eatc {
    /// Annual mean (K).
    pub c: f64,
    /// Amplitude (K).
    pub a: f64,
    /// Phase shift: day of the seasonal peak.
    pub phi: f64,
    /// Coupling to the reanalysis temperature.
    pub b: f64,
}

impl Eatc {
    pub fn predict(&self, day: f64, era5: f64) -> f64 {
        atc_forward(self, day, era5)
    }

    /// Same model with a non-negative amplitude and the phase reduced into
    /// `[0, 365)`.
    pub fn canonical(mut self) -> Eatc {
        if self.a < 0.0 {
            self.a = -self.a;
            self.phi += PERIOD_DAYS / 2.0;
        }
        self.phi = self.phi.rem_euclid(PERIOD_DAYS);
        self
    }

    pub fn is_finite(&self) -> bool {
        self.c.is_finite() && self.a.is_finite() && self.phi.is_finite() && self.b.is_finite()
    }
}

/// `C + A cos(2 pi / 365 (d - phi)) + b * era5`.
pub fn atc_forward(p: &Eatc, day: f64, era5: f64) -> f64 {
    p.c + p.a * (OMEGA * (day - p.phi)).cos() + p.b * era5
}

/// One valid observation seen by a pixel.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Obs {
    pub day: f64,
    pub temp: f64,
    pub era5: f64,
}

/// Mean absolute error of the cycle over `obs` and its gradient with
/// respect to `(C, A, phi, b)`. The subgradient of `|r|` at `r = 0` is 0.
pub fn l1_loss_grad(p: &Eatc, obs: &[Obs]) -> (f64, [f64; 4]) {
    if obs.is_empty() {
        return (0.0, [0.0; 4]);
    }
    let mut loss = 0.0;
    let mut g = [0.0; 4];
    for o in obs {
        let arg = OMEGA * (o.day - p.phi);
        let (sin, cos) = arg.sin_cos();
        let r = p.c + p.a * cos + p.b * o.era5 - o.temp;
        loss += r.abs();
        let s = if r > 0.0 {
            1.0
        } else if r < 0.0 {
            -1.0
        } else {
            0.0
        };
        g[0] += s;
        g[1] += s * cos;
        g[2] += s * p.a * OMEGA * sin;
        g[3] += s * o.era5;
    }
    let n = obs.len() as f64;
    (loss / n, g.map(|x| x / n))
}

/// A grid of per-pixel cycle parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct AtcParams {
    pub height: usize,
    pub width: usize,
    pub pixels: Vec<Eatc>,
}

/// Pixels that had too few valid observations to be fitted; they carry the
/// area-wide median parameters instead.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DeficiencyReport {
    pub min_valid_obs: usize,
    pub pixels: Vec<usize>,
    pub fallback: Option<Eatc>,
}

fn median(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

/// Data-driven starting point for one pixel: mean, half range, day of the
/// warmest observation, and no reanalysis coupling.
pub fn init_pixel(series: &[(u16, f64)]) -> Option<Eatc> {
    let first = series.first()?;
    let n = series.len() as f64;
    let mean = series.iter().map(|s| s.1).sum::<f64>() / n;
    let (mut lo, mut hi) = (first.1, first.1);
    let mut warmest = *first;
    for &(d, t) in series {
        lo = lo.min(t);
        if t > hi {
            hi = t;
            warmest = (d, t);
        }
    }
    Some(Eatc {
        c: mean,
        a: 0.5 * (hi - lo),
        phi: warmest.0 as f64,
        b: 0.0,
    })
}

/// Initial parameters for every pixel plus the list of pixels that fell
/// back to the area medians.
pub fn init_params(
    stack: &SceneStack,
    era5: &Era5Series,
    min_valid_obs: usize,
) -> Result<(AtcParams, DeficiencyReport)> {
    era5.check_covers(stack)?;
    let shape = stack.shape();
    let n = shape.n_pixels();
    let mut pixels: Vec<Option<Eatc>> = Vec::with_capacity(n);
    let mut deficient = Vec::new();
    for p in 0..n {
        let series = stack.pixel_series(p);
        if series.len() < min_valid_obs.max(1) {
            deficient.push(p);
            pixels.push(None);
        } else {
            pixels.push(init_pixel(&series));
        }
    }
    let good: Vec<Eatc> = pixels.iter().flatten().copied().collect();
    if good.is_empty() {
        return Err(Error::InsufficientData(format!(
            "no pixel has at least {min_valid_obs} valid observations"
        )));
    }
    let fallback = {
        let col = |f: fn(&Eatc) -> f64| median(&mut good.iter().map(f).collect::<Vec<_>>());
        Eatc {
            c: col(|e| e.c),
            a: col(|e| e.a),
            phi: col(|e| e.phi),
            b: col(|e| e.b),
        }
    };
    let report = DeficiencyReport {
        min_valid_obs,
        fallback: (!deficient.is_empty()).then_some(fallback),
        pixels: deficient,
    };
    Ok((
        AtcParams {
            height: shape.height,
            width: shape.width,
            pixels: pixels.into_iter().map(|p| p.unwrap_or(fallback)).collect(),
        },
        report,
    ))
}
