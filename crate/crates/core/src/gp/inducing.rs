use super::kernel::{factor_with_jitter, kernel_matrix, KernelHyper};
use crate::error::Result;
use crate::linalg::{gemm, solve_lower_in_place, solve_lower_transpose_vec, solve_lower_vec, Mat};

const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// Collapsed variational posterior over `M` fixed inducing inputs.
#[derive(Debug, Clone)]
pub struct SparsePosterior {
    pub z: Mat,
    pub l_uu: Mat,
    pub l_b: Mat,
    pub c: Vec<f64>,
    pub hyper: KernelHyper,
}

struct Terms {
    l_uu: Mat,
    l_b: Mat,
    c: Vec<f64>,
    trace_aat: f64,
}

fn terms(x: &Mat, y: &[f64], z: &Mat, hyper: &KernelHyper) -> Result<Terms> {
    let kuu = kernel_matrix(z, z, hyper);
    let (l_uu, _) = factor_with_jitter(&kuu, hyper.signal_variance, true)?;
    let sigma = hyper.noise_variance.sqrt();
    let mut a = kernel_matrix(z, x, hyper); // M x n
    solve_lower_in_place(&l_uu, &mut a);
    let inv_sigma = 1.0 / sigma;
    let mut trace_aat = 0.0;
    let a = Mat::from_vec(
        a.rows(),
        a.cols(),
        a.into_vec()
            .into_iter()
            .map(|v| {
                let s = v * inv_sigma;
                trace_aat += s * s;
                s
            })
            .collect(),
    );
    let m = z.rows();
    let mut b = Mat::identity(m);
    gemm(1.0, &a, false, &a, true, 1.0, &mut b);
    let (l_b, _) = factor_with_jitter(&b, 1.0, false)?;
    let ay: Vec<f64> = (0..m)
        .map(|i| a.row(i).iter().zip(y).map(|(p, q)| p * q).sum::<f64>() * inv_sigma)
        .collect();
    let c = solve_lower_vec(&l_b, &ay);
    Ok(Terms {
        l_uu,
        l_b,
        c,
        trace_aat,
    })
}

/// Titsias evidence lower bound of `y` given inducing inputs `z`.
pub fn elbo(x: &Mat, y: &[f64], z: &Mat, hyper: &KernelHyper) -> Result<f64> {
    let t = terms(x, y, z, hyper)?;
    let n = x.rows() as f64;
    let s2 = hyper.noise_variance;
    let yy: f64 = y.iter().map(|v| v * v).sum();
    let cc: f64 = t.c.iter().map(|v| v * v).sum();
    let logdet_b: f64 = t.l_b.diag().map(f64::ln).sum();
    Ok(-0.5 * n * LN_2PI - logdet_b - 0.5 * n * s2.ln() - 0.5 * yy / s2 + 0.5 * cc
        - 0.5 * n * hyper.signal_variance / s2
        + 0.5 * t.trace_aat)
}

/// Central finite-difference gradient of the bound in log space.
pub fn elbo_grad(x: &Mat, y: &[f64], z: &Mat, t: &[f64; 3], step: f64) -> Result<(f64, [f64; 3])> {
    let f0 = elbo(x, y, z, &KernelHyper::from_log(t))?;
    let mut g = [0.0; 3];
    for k in 0..3 {
        let mut up = *t;
        let mut down = *t;
        up[k] += step;
        down[k] -= step;
        let fu = elbo(x, y, z, &KernelHyper::from_log(&up))?;
        let fd = elbo(x, y, z, &KernelHyper::from_log(&down))?;
        g[k] = (fu - fd) / (2.0 * step);
    }
    Ok((f0, g))
}

impl SparsePosterior {
    pub fn new(x: &Mat, y: &[f64], z: Mat, hyper: KernelHyper) -> Result<Self> {
        let t = terms(x, y, &z, &hyper)?;
        Ok(SparsePosterior {
            z,
            l_uu: t.l_uu,
            l_b: t.l_b,
            c: t.c,
            hyper,
        })
    }

    pub fn predict_mean(&self, q: &Mat) -> Vec<f64> {
        // mean = k_qu L_uu^{-T} L_b^{-T} c
        let w = solve_lower_transpose_vec(&self.l_uu, &solve_lower_transpose_vec(&self.l_b, &self.c));
        let kq = kernel_matrix(q, &self.z, &self.hyper);
        (0..q.rows()).map(|i| kq.row(i).iter().zip(&w).map(|(a, b)| a * b).sum()).collect()
    }

    pub fn predict(&self, q: &Mat) -> (Vec<f64>, Vec<f64>) {
        let mut t1 = kernel_matrix(&self.z, q, &self.hyper); // M x m
        solve_lower_in_place(&self.l_uu, &mut t1);
        let n1 = t1.column_sq_norms();
        let mut t2 = t1;
        solve_lower_in_place(&self.l_b, &mut t2);
        let n2 = t2.column_sq_norms();
        let mut mean = vec![0.0; q.rows()];
        for i in 0..t2.rows() {
            let ci = self.c[i];
            for (m, v) in mean.iter_mut().zip(t2.row(i)) {
                *m += ci * v;
            }
        }
        let var = n1
            .iter()
            .zip(&n2)
            .map(|(a, b)| (self.hyper.signal_variance - a + b).max(0.0))
            .collect();
        (mean, var)
    }
}
