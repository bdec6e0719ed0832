use super::kernel::{factor_with_jitter, kernel_matrix, sq_dist, KernelHyper};
use crate::error::Result;
use crate::linalg::{cholesky_solve_vec, dot, inverse_from_cholesky, solve_lower_in_place, Mat};

const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// Posterior of a zero-mean GP given all training data.
#[derive(Debug, Clone)]
pub struct ExactPosterior {
    pub x: Mat,
    pub l: Mat,
    pub alpha: Vec<f64>,
    pub jitter: f64,
    pub hyper: KernelHyper,
}

impl ExactPosterior {
    pub fn new(x: Mat, y: &[f64], hyper: KernelHyper) -> Result<Self> {
        let mut k = kernel_matrix(&x, &x, &hyper);
        k.add_diag(hyper.noise_variance);
        let (l, jitter) = factor_with_jitter(&k, hyper.signal_variance, false)?;
        let alpha = cholesky_solve_vec(&l, y);
        Ok(ExactPosterior {
            x,
            l,
            alpha,
            jitter,
            hyper,
        })
    }

    pub fn predict_mean(&self, q: &Mat) -> Vec<f64> {
        let kq = kernel_matrix(q, &self.x, &self.hyper);
        (0..q.rows()).map(|i| dot(kq.row(i), &self.alpha)).collect()
    }

    /// Posterior mean and latent variance at the rows of `q`.
    pub fn predict(&self, q: &Mat) -> (Vec<f64>, Vec<f64>) {
        let kq = kernel_matrix(&self.x, q, &self.hyper); // n x m
        let mut mean = vec![0.0; q.rows()];
        for i in 0..self.x.rows() {
            let a = self.alpha[i];
            for (m, k) in mean.iter_mut().zip(kq.row(i)) {
                *m += a * k;
            }
        }
        let mut v = kq;
        solve_lower_in_place(&self.l, &mut v);
        let var = v
            .column_sq_norms()
            .into_iter()
            .map(|s| (self.hyper.signal_variance - s).max(0.0))
            .collect();
        (mean, var)
    }
}

/// Pairwise squared distances between the rows of `x`.
pub fn sq_dist_matrix(x: &Mat) -> Mat {
    Mat::from_fn(x.rows(), x.rows(), |i, j| sq_dist(x.row(i), x.row(j)))
}

/// Log marginal likelihood of `y` and its gradient with respect to
/// `(log l, log s, log sigma^2)`.
pub fn log_marginal_likelihood(x: &Mat, y: &[f64], t: &[f64; 3]) -> Result<(f64, [f64; 3])> {
    lml_from_sq_dist(&sq_dist_matrix(x), y, t)
}

/// Same as [`log_marginal_likelihood`] from precomputed squared distances.
pub fn lml_from_sq_dist(d2: &Mat, y: &[f64], t: &[f64; 3]) -> Result<(f64, [f64; 3])> {
    let hyper = KernelHyper::from_log(t);
    let n = d2.rows();
    let inv_l2 = 1.0 / (hyper.lengthscale * hyper.lengthscale);
    let kf = Mat::from_fn(n, n, |i, j| hyper.signal_variance * (-0.5 * inv_l2 * d2[(i, j)]).exp());
    let mut k = kf.clone();
    k.add_diag(hyper.noise_variance);
    let (l, _) = factor_with_jitter(&k, hyper.signal_variance, false)?;
    let alpha = cholesky_solve_vec(&l, y);
    let half_logdet: f64 = l.diag().map(f64::ln).sum();
    let lml = -0.5 * dot(y, &alpha) - half_logdet - 0.5 * n as f64 * LN_2PI;

    // W = alpha alpha^T - K^{-1}; d lml = 0.5 tr(W dK).
    let kinv = inverse_from_cholesky(&l);
    let (mut gs, mut gl, mut tr_w) = (0.0, 0.0, 0.0);
    for i in 0..n {
        let (kr, dr, ir) = (kf.row(i), d2.row(i), kinv.row(i));
        for j in 0..n {
            let wk = (alpha[i] * alpha[j] - ir[j]) * kr[j];
            gs += wk;
            gl += wk * dr[j];
        }
        tr_w += alpha[i] * alpha[i] - ir[i];
    }
    Ok((lml, [0.5 * gl * inv_l2, 0.5 * gs, 0.5 * hyper.noise_variance * tr_w]))
}
