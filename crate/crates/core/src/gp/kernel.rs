use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{cholesky_in_place, Mat};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelHyper {
    pub lengthscale: f64,
    pub signal_variance: f64,
    pub noise_variance: f64,
}

impl KernelHyper {
    pub fn validate(&self) -> Result<()> {
        let ok = |v: f64| v > 0.0 && v.is_finite();
        if ok(self.lengthscale) && ok(self.signal_variance) && ok(self.noise_variance) {
            Ok(())
        } else {
            Err(Error::Domain(format!("kernel hyperparameters must be positive: {self:?}")))
        }
    }

    pub fn to_log(&self) -> [f64; 3] {
        [self.lengthscale.ln(), self.signal_variance.ln(), self.noise_variance.ln()]
    }

    pub fn from_log(t: &[f64; 3]) -> Self {
        KernelHyper {
            lengthscale: t[0].exp(),
            signal_variance: t[1].exp(),
            noise_variance: t[2].exp(),
        }
    }
}

pub fn sq_dist(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum()
}

/// `s * exp(-|x - x'|^2 / (2 l^2))`.
pub fn rbf_kernel(x: &[f64], y: &[f64], hyper: &KernelHyper) -> f64 {
    assert_eq!(x.len(), y.len(), "feature dimensions differ");
    hyper.signal_variance * (-0.5 * sq_dist(x, y) / (hyper.lengthscale * hyper.lengthscale)).exp()
}

/// Noise-free kernel matrix between the rows of `a` and `b`.
pub fn kernel_matrix(a: &Mat, b: &Mat, hyper: &KernelHyper) -> Mat {
    assert_eq!(a.cols(), b.cols(), "feature dimensions differ");
    let inv = -0.5 / (hyper.lengthscale * hyper.lengthscale);
    Mat::from_fn(a.rows(), b.rows(), |i, j| {
        hyper.signal_variance * (inv * sq_dist(a.row(i), b.row(j))).exp()
    })
}

/// Cholesky factor of `k + jitter I`. The first attempt adds nothing; on
/// failure the jitter starts at `1e-6 * scale` and grows tenfold up to
/// `1e-2 * scale`.
pub fn factor_with_jitter(k: &Mat, scale: f64, always: bool) -> Result<(Mat, f64)> {
    let mut jitters = Vec::new();
    if !always {
        jitters.push(0.0);
    }
    let mut j = 1e-6;
    while j <= 1e-2 * (1.0 + 1e-9) {
        jitters.push(j * scale);
        j *= 10.0;
    }
    let mut first_fail = None;
    for &jit in &jitters {
        let mut l = k.clone();
        l.add_diag(jit);
        match cholesky_in_place(&mut l) {
            Ok(()) => return Ok((l, jit)),
            Err(pivot) => {
                first_fail.get_or_insert(pivot);
            }
        }
    }
    let diag_max = k.diag().fold(f64::NEG_INFINITY, f64::max);
    let diag_min = k.diag().fold(f64::INFINITY, f64::min);
    Err(Error::Numeric(format!(
        "cholesky failed at pivot {} of {} after jitter up to {:.3e} (diagonal range [{diag_min:.3e}, {diag_max:.3e}])",
        first_fail.unwrap_or(0),
        k.rows(),
        1e-2 * scale
    )))
}
