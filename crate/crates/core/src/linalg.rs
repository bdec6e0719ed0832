//! Dense row-major matrices with the handful of factorizations the GP
//! stage needs. Level-3 work goes through `matrixmultiply`'s dgemm; the
//! Cholesky factor and triangular solves are blocked around it.

use std::ops::{Index, IndexMut};

const BLOCK: usize = 96;

#[derive(Debug, Clone, PartialEq)]
pub struct Mat {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Mat {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Mat {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Mat::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = 1.0;
        }
        m
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), rows * cols, "matrix data length");
        Mat { rows, cols, data }
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Mat { rows, cols, data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn diag(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.rows.min(self.cols)).map(move |i| self.data[i * self.cols + i])
    }

    pub fn add_diag(&mut self, v: f64) {
        for i in 0..self.rows.min(self.cols) {
            self.data[i * self.cols + i] += v;
        }
    }

    pub fn transpose(&self) -> Mat {
        Mat::from_fn(self.cols, self.rows, |i, j| self[(j, i)])
    }

    /// `self * other`.
    pub fn matmul(&self, other: &Mat) -> Mat {
        assert_eq!(self.cols, other.rows, "matmul shapes");
        let mut out = Mat::zeros(self.rows, other.cols);
        gemm(1.0, self, false, other, false, 0.0, &mut out);
        out
    }

    /// Sum of squares of each column.
    pub fn column_sq_norms(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.cols];
        for i in 0..self.rows {
            for (o, v) in out.iter_mut().zip(self.row(i)) {
                *o += v * v;
            }
        }
        out
    }
}

impl Index<(usize, usize)> for Mat {
    type Output = f64;
    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        &self.data[i * self.cols + j]
    }
}

impl IndexMut<(usize, usize)> for Mat {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        &mut self.data[i * self.cols + j]
    }
}

/// Raw strided view used to hand sub-blocks to dgemm.
#[derive(Clone, Copy)]
struct View {
    ptr: *const f64,
    rs: isize,
    cs: isize,
}

/// `c = alpha * a * b + beta * c` on raw strided blocks.
///
/// # Safety
/// Every view must address at least `m x k`, `k x n` and `m x n` valid
/// elements; `c` must not alias `a` or `b`.
unsafe fn gemm_raw(m: usize, k: usize, n: usize, alpha: f64, a: View, b: View, beta: f64, c: *mut f64, rsc: isize, csc: isize) {
    if m == 0 || n == 0 {
        return;
    }
    matrixmultiply::dgemm(m, k, n, alpha, a.ptr, a.rs, a.cs, b.ptr, b.rs, b.cs, beta, c, rsc, csc);
}

/// `c = alpha * op(a) * op(b) + beta * c`.
pub fn gemm(alpha: f64, a: &Mat, trans_a: bool, b: &Mat, trans_b: bool, beta: f64, c: &mut Mat) {
    let (m, k) = if trans_a { (a.cols, a.rows) } else { (a.rows, a.cols) };
    let (kb, n) = if trans_b { (b.cols, b.rows) } else { (b.rows, b.cols) };
    assert_eq!(k, kb, "gemm inner dimension");
    assert_eq!((c.rows, c.cols), (m, n), "gemm output shape");
    let view = |x: &Mat, t: bool| View {
        ptr: x.data.as_ptr(),
        rs: if t { 1 } else { x.cols as isize },
        cs: if t { x.cols as isize } else { 1 },
    };
    // SAFETY: shapes checked above; `c` is a distinct &mut borrow.
    unsafe {
        gemm_raw(m, k, n, alpha, view(a, trans_a), view(b, trans_b), beta, c.data.as_mut_ptr(), c.cols as isize, 1);
    }
}

/// Lower Cholesky factor computed in place. Only the lower triangle of the
/// input is read; the strict upper triangle is zeroed on success. On
/// failure returns the index of the first non-positive pivot.
pub fn cholesky_in_place(a: &mut Mat) -> Result<(), usize> {
    assert_eq!(a.rows, a.cols, "cholesky needs a square matrix");
    let n = a.rows;
    let ld = n;
    let mut k0 = 0;
    while k0 < n {
        let kb = BLOCK.min(n - k0);
        // Diagonal block, unblocked.
        for j in k0..k0 + kb {
            let rj = &a.data[j * ld + k0..j * ld + j];
            let s = a.data[j * ld + j] - dot(rj, rj);
            if !(s > 0.0) || !s.is_finite() {
                return Err(j);
            }
            let d = s.sqrt();
            a.data[j * ld + j] = d;
            for i in j + 1..k0 + kb {
                let t = a.data[i * ld + j] - dot(&a.data[i * ld + k0..i * ld + j], &a.data[j * ld + k0..j * ld + j]);
                a.data[i * ld + j] = t / d;
            }
        }
        // Panel below the diagonal block: X * L_kk^T = A.
        for i in k0 + kb..n {
            for j in k0..k0 + kb {
                let t = a.data[i * ld + j] - dot(&a.data[i * ld + k0..i * ld + j], &a.data[j * ld + k0..j * ld + j]);
                a.data[i * ld + j] = t / a.data[j * ld + j];
            }
        }
        // Trailing update of the lower triangle, one block column at a time.
        let t0 = k0 + kb;
        let mut j0 = t0;
        while j0 < n {
            let jb = BLOCK.min(n - j0);
            let rows = n - j0;
            let base = a.data.as_mut_ptr();
            // SAFETY: the panel (columns k0..t0) and the updated block
            // (columns j0..j0+jb, j0 >= t0) are disjoint regions of `a`.
            unsafe {
                let panel_rows = View {
                    ptr: base.add(j0 * ld + k0),
                    rs: ld as isize,
                    cs: 1,
                };
                let panel_t = View {
                    ptr: base.add(j0 * ld + k0),
                    rs: 1,
                    cs: ld as isize,
                };
                gemm_raw(rows, kb, jb, -1.0, panel_rows, panel_t, 1.0, base.add(j0 * ld + j0), ld as isize, 1);
            }
            j0 += jb;
        }
        k0 += kb;
    }
    for i in 0..n {
        for j in i + 1..n {
            a.data[i * ld + j] = 0.0;
        }
    }
    Ok(())
}

/// Solves `L X = B` in place for lower-triangular `L`.
pub fn solve_lower_in_place(l: &Mat, b: &mut Mat) {
    let n = l.rows;
    assert_eq!(b.rows, n, "triangular solve shapes");
    let m = b.cols;
    let mut i0 = 0;
    while i0 < n {
        let ib = BLOCK.min(n - i0);
        if i0 > 0 {
            let bp = b.data.as_mut_ptr();
            // SAFETY: reads rows 0..i0 of B and writes rows i0..i0+ib.
            unsafe {
                gemm_raw(
                    ib,
                    i0,
                    m,
                    -1.0,
                    View { ptr: l.data.as_ptr().add(i0 * n), rs: n as isize, cs: 1 },
                    View { ptr: bp, rs: m as isize, cs: 1 },
                    1.0,
                    bp.add(i0 * m),
                    m as isize,
                    1,
                );
            }
        }
        for r in i0..i0 + ib {
            for p in i0..r {
                let f = l.data[r * n + p];
                if f != 0.0 {
                    let (head, tail) = b.data.split_at_mut(r * m);
                    let src = &head[p * m..(p + 1) * m];
                    for (t, s) in tail[..m].iter_mut().zip(src) {
                        *t -= f * s;
                    }
                }
            }
            let d = l.data[r * n + r];
            for t in &mut b.data[r * m..(r + 1) * m] {
                *t /= d;
            }
        }
        i0 += ib;
    }
}

/// Solves `L^T X = B` in place for lower-triangular `L`.
pub fn solve_lower_transpose_in_place(l: &Mat, b: &mut Mat) {
    let n = l.rows;
    assert_eq!(b.rows, n, "triangular solve shapes");
    let m = b.cols;
    let mut end = n;
    while end > 0 {
        let ib = BLOCK.min(end);
        let i0 = end - ib;
        if end < n {
            let bp = b.data.as_mut_ptr();
            // (L^T)[r, c] = L[c, r] for r in i0..end, c in end..n.
            // SAFETY: reads rows end..n of B and writes rows i0..end.
            unsafe {
                gemm_raw(
                    ib,
                    n - end,
                    m,
                    -1.0,
                    View { ptr: l.data.as_ptr().add(end * n + i0), rs: 1, cs: n as isize },
                    View { ptr: bp.add(end * m), rs: m as isize, cs: 1 },
                    1.0,
                    bp.add(i0 * m),
                    m as isize,
                    1,
                );
            }
        }
        for r in (i0..end).rev() {
            for p in r + 1..end {
                let f = l.data[p * n + r];
                if f != 0.0 {
                    let (head, tail) = b.data.split_at_mut(p * m);
                    let dst = &mut head[r * m..(r + 1) * m];
                    for (t, s) in dst.iter_mut().zip(&tail[..m]) {
                        *t -= f * s;
                    }
                }
            }
            let d = l.data[r * n + r];
            for t in &mut b.data[r * m..(r + 1) * m] {
                *t /= d;
            }
        }
        end = i0;
    }
}

pub fn solve_lower_vec(l: &Mat, b: &[f64]) -> Vec<f64> {
    let mut m = Mat::from_vec(b.len(), 1, b.to_vec());
    solve_lower_in_place(l, &mut m);
    m.data
}

/// Solves `L^T x = b`.
pub fn solve_lower_transpose_vec(l: &Mat, b: &[f64]) -> Vec<f64> {
    let mut m = Mat::from_vec(b.len(), 1, b.to_vec());
    solve_lower_transpose_in_place(l, &mut m);
    m.data
}

/// Solves `(L L^T) x = b`.
pub fn cholesky_solve_vec(l: &Mat, b: &[f64]) -> Vec<f64> {
    let mut m = Mat::from_vec(b.len(), 1, b.to_vec());
    solve_lower_in_place(l, &mut m);
    solve_lower_transpose_in_place(l, &mut m);
    m.data
}

/// `(L L^T)^{-1}` from the factor.
pub fn inverse_from_cholesky(l: &Mat) -> Mat {
    let n = l.rows;
    let linv = lower_inverse(l);
    let mut out = Mat::zeros(n, n);
    gemm(1.0, &linv, true, &linv, false, 0.0, &mut out);
    out
}

/// `log |L L^T|`.
pub fn log_det_from_cholesky(l: &Mat) -> f64 {
    2.0 * l.diag().map(f64::ln).sum::<f64>()
}

/// Dot product with four independent accumulators.
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len().min(b.len());
    let (a, b) = (&a[..n], &b[..n]);
    let mut acc = [0.0; 4];
    let (ca, cb) = (a.chunks_exact(4), b.chunks_exact(4));
    let (ra, rb) = (ca.remainder(), cb.remainder());
    for (x, y) in ca.zip(cb) {
        for k in 0..4 {
            acc[k] += x[k] * y[k];
        }
    }
    let tail: f64 = ra.iter().zip(rb).map(|(x, y)| x * y).sum();
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

/// Inverse of a lower-triangular matrix.
pub fn lower_inverse(l: &Mat) -> Mat {
    let n = l.rows;
    let mut out = Mat::zeros(n, n);
    let mut c0 = 0;
    while c0 < n {
        let cb = BLOCK.min(n - c0);
        // Columns c0..c0+cb of the inverse vanish above row c0, so only the
        // trailing sub-system is solved.
        let m = n - c0;
        let sub = Mat::from_fn(m, m, |i, j| l.data[(c0 + i) * n + c0 + j]);
        let mut rhs = Mat::zeros(m, cb);
        for k in 0..cb {
            rhs.data[k * cb + k] = 1.0;
        }
        solve_lower_in_place(&sub, &mut rhs);
        for i in 0..m {
            out.data[(c0 + i) * n + c0..(c0 + i) * n + c0 + cb].copy_from_slice(rhs.row(i));
        }
        c0 += cb;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn spd(n: usize, seed: u64) -> Mat {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let g = Mat::from_fn(n, n + 3, |_, _| rng.random_range(-1.0..1.0));
        let mut a = Mat::zeros(n, n);
        gemm(1.0, &g, false, &g, true, 0.0, &mut a);
        a.add_diag(0.5);
        a
    }

    fn naive_cholesky(a: &Mat) -> Mat {
        let n = a.rows();
        let mut l = Mat::zeros(n, n);
        for j in 0..n {
            let s: f64 = (0..j).map(|k| l[(j, k)] * l[(j, k)]).sum();
            l[(j, j)] = (a[(j, j)] - s).sqrt();
            for i in j + 1..n {
                let s: f64 = (0..j).map(|k| l[(i, k)] * l[(j, k)]).sum();
                l[(i, j)] = (a[(i, j)] - s) / l[(j, j)];
            }
        }
        l
    }

    fn max_abs_diff(a: &Mat, b: &Mat) -> f64 {
        a.as_slice()
            .iter()
            .zip(b.as_slice())
            .map(|(x, y)| (x - y).abs())
            .fold(0.0, f64::max)
    }

    #[test]
    fn blocked_cholesky_matches_naive_across_block_boundaries() {
        for &n in &[1, 5, 95, 96, 97, 250] {
            let a = spd(n, n as u64);
            let mut l = a.clone();
            cholesky_in_place(&mut l).unwrap();
            let reference = naive_cholesky(&a);
            assert!(max_abs_diff(&l, &reference) < 1e-9, "n = {n}");
        }
    }

    #[test]
    fn cholesky_reports_failing_pivot() {
        let mut a = Mat::from_vec(2, 2, vec![1.0, 2.0, 2.0, 1.0]);
        assert_eq!(cholesky_in_place(&mut a), Err(1));
    }

    #[test]
    fn triangular_solves_invert_the_factor() {
        let n = 210;
        let a = spd(n, 3);
        let mut l = a.clone();
        cholesky_in_place(&mut l).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let b = Mat::from_fn(n, 7, |_, _| rng.random_range(-1.0..1.0));

        let mut x = b.clone();
        solve_lower_in_place(&l, &mut x);
        assert!(max_abs_diff(&l.matmul(&x), &b) < 1e-9);

        let mut y = b.clone();
        solve_lower_transpose_in_place(&l, &mut y);
        assert!(max_abs_diff(&l.transpose().matmul(&y), &b) < 1e-9);

        let inv = inverse_from_cholesky(&l);
        assert!(max_abs_diff(&a.matmul(&inv), &Mat::identity(n)) < 1e-8);
    }

    #[test]
    fn log_det_of_diagonal() {
        let mut a = Mat::identity(3);
        a[(0, 0)] = 4.0;
        a[(2, 2)] = 9.0;
        cholesky_in_place(&mut a).unwrap();
        assert!((log_det_from_cholesky(&a) - 36f64.ln()).abs() < 1e-12);
    }
}
