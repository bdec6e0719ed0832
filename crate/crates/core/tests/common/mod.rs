#![allow(dead_code)]

use std::io::Write;

use nalgebra::{DMatrix, DVector};

/// Writes straight to stdout so the line shows even when the harness
/// captures test output.
pub fn report(id: &str, name: &str, pass: bool, detail: &str) {
    let mut out = std::io::stdout().lock();
    let _ = writeln!(out, "criterion {id} [{}] {name}: {detail}", if pass { "PASS" } else { "FAIL" });
    let _ = out.flush();
}

/// Shortest distance between two days on the 365-day circle.
pub fn circular_day_diff(a: f64, b: f64) -> f64 {
    let d = (a - b).rem_euclid(365.0);
    d.min(365.0 - d)
}

pub fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

pub struct DenseGp {
    pub mean: Vec<f64>,
    pub var: Vec<f64>,
}

/// Direct dense GP solve: features standardized with the population sd,
/// targets centered, `(K + s2 I)` solved by LU.
pub fn dense_gp(
    x: &[Vec<f64>],
    y: &[f64],
    q: &[Vec<f64>],
    lengthscale: f64,
    signal: f64,
    noise: f64,
    include_noise: bool,
) -> DenseGp {
    let (n, f) = (x.len(), x[0].len());
    let mut mu = vec![0.0; f];
    let mut sd = vec![0.0; f];
    for k in 0..f {
        mu[k] = x.iter().map(|r| r[k]).sum::<f64>() / n as f64;
        let v = x.iter().map(|r| (r[k] - mu[k]).powi(2)).sum::<f64>() / n as f64;
        sd[k] = if v > 0.0 { v.sqrt() } else { 1.0 };
    }
    let z = |r: &Vec<f64>| -> Vec<f64> { (0..f).map(|k| (r[k] - mu[k]) / sd[k]).collect() };
    let xs: Vec<Vec<f64>> = x.iter().map(z).collect();
    let qs: Vec<Vec<f64>> = q.iter().map(z).collect();
    let k = |a: &[f64], b: &[f64]| {
        let d2: f64 = a.iter().zip(b).map(|(u, v)| (u - v).powi(2)).sum();
        signal * (-d2 / (2.0 * lengthscale * lengthscale)).exp()
    };
    let ybar = y.iter().sum::<f64>() / n as f64;
    let yc = DVector::from_iterator(n, y.iter().map(|v| v - ybar));
    let kxx = DMatrix::from_fn(n, n, |i, j| k(&xs[i], &xs[j]) + if i == j { noise } else { 0.0 });
    let lu = kxx.lu();
    let alpha = lu.solve(&yc).expect("oracle solve");
    let mut mean = Vec::new();
    let mut var = Vec::new();
    for qq in &qs {
        let ks = DVector::from_iterator(n, xs.iter().map(|r| k(r, qq)));
        mean.push(ks.dot(&alpha) + ybar);
        let v = lu.solve(&ks).expect("oracle solve");
        var.push(signal - ks.dot(&v) + if include_noise { noise } else { 0.0 });
    }
    DenseGp { mean, var }
}
