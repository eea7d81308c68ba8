//! Economy-size SVD of dense real matrices.
//!
//! Tall inputs are first reduced with a Householder QR; the square factor is
//! then diagonalized with one-sided (Hestenes) Jacobi rotations, which yields
//! singular values with high relative accuracy and left vectors that are
//! orthogonal to working precision.
//!
//! Sign convention: in every column of `U` the entry of largest magnitude
//! (the first one on exact ties) is nonnegative; `V` is flipped along with it.

use crate::error::{Error, Result};
use crate::tensor::DenseTensor;

const MAX_SWEEPS: usize = 80;

/// `A = U diag(s) V^T` with `U: m x p`, `V: n x p`, `p = min(m, n)`.
#[derive(Debug, Clone, PartialEq)]
pub struct SvdResult {
    pub u: DenseTensor,
    pub s: Vec<f64>,
    pub v: DenseTensor,
}

impl SvdResult {
    #[inline]
    pub fn rank_bound(&self) -> usize {
        self.s.len()
    }

    /// Column `j` of `U`.
    pub fn u_col(&self, j: usize) -> &[f64] {
        let m = self.u.dims()[0];
        &self.u.data()[j * m..(j + 1) * m]
    }

    /// Column `j` of `V`.
    pub fn v_col(&self, j: usize) -> &[f64] {
        let n = self.v.dims()[0];
        &self.v.data()[j * n..(j + 1) * n]
    }

    /// `U diag(s) V^T`.
    pub fn reconstruct(&self) -> DenseTensor {
        let (m, n) = (self.u.dims()[0], self.v.dims()[0]);
        let mut out = vec![0.0; m * n];
        for (j, &sigma) in self.s.iter().enumerate() {
            let u = self.u_col(j);
            for (c, &vc) in self.v_col(j).iter().enumerate() {
                let w = sigma * vc;
                for (o, &ur) in out[c * m..(c + 1) * m].iter_mut().zip(u) {
                    *o += w * ur;
                }
            }
        }
        DenseTensor::new(&[m, n], out).expect("dimensions come from a valid result")
    }
}

/// One singular triple `(sigma, u, v)`.
pub type Triple = (f64, Vec<f64>, Vec<f64>);

/// Economy SVD of an order-2 tensor.
pub fn economy_svd(a: &DenseTensor) -> Result<SvdResult> {
    if a.order() != 2 {
        return Err(Error::ShapeMismatch(format!(
            "SVD needs a matrix, got order {}",
            a.order()
        )));
    }
    let (m, n) = (a.dims()[0], a.dims()[1]);
    svd_col_major(m, n, a.data())
}

/// Economy SVD of an `m x n` column-major buffer.
pub fn svd_col_major(m: usize, n: usize, data: &[f64]) -> Result<SvdResult> {
    if data.len() != m * n {
        return Err(Error::ShapeMismatch(format!(
            "{m}x{n} matrix needs {} values, got {}",
            m * n,
            data.len()
        )));
    }
    if data.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFiniteInput);
    }
    if m >= n {
        let (u, s, v) = svd_tall(m, n, data);
        finish(m, n, u, s, v)
    } else {
        let t = transpose(m, n, data);
        let (v, s, u) = svd_tall(n, m, &t);
        finish(m, n, u, s, v)
    }
}

/// Triples with `sigma > tol * s[0]`, in order.
pub fn truncated_triples(res: &SvdResult, tol: f64) -> Vec<Triple> {
    let Some(&top) = res.s.first() else {
        return Vec::new();
    };
    let cut = tol * top;
    res.s
        .iter()
        .enumerate()
        .take_while(|(_, &s)| s > cut)
        .map(|(j, &s)| (s, res.u_col(j).to_vec(), res.v_col(j).to_vec()))
        .collect()
}

fn finish(
    m: usize,
    n: usize,
    mut u: Vec<f64>,
    s: Vec<f64>,
    mut v: Vec<f64>,
) -> Result<SvdResult> {
    let p = s.len();
    for j in 0..p {
        let col = &u[j * m..(j + 1) * m];
        let mut best = 0;
        for (i, x) in col.iter().enumerate() {
            if x.abs() > col[best].abs() {
                best = i;
            }
        }
        if col[best] < 0.0 {
            u[j * m..(j + 1) * m].iter_mut().for_each(|x| *x = -*x);
            v[j * n..(j + 1) * n].iter_mut().for_each(|x| *x = -*x);
        }
    }
    Ok(SvdResult {
        u: DenseTensor::new(&[m, p], u)?,
        s,
        v: DenseTensor::new(&[n, p], v)?,
    })
}

fn transpose(m: usize, n: usize, data: &[f64]) -> Vec<f64> {
    let mut t = vec![0.0; m * n];
    for c in 0..n {
        for r in 0..m {
            t[c + n * r] = data[r + m * c];
        }
    }
    t
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    crate::tensor::pairwise_dot(a, b)
}

/// SVD for `m >= n`; returns column-major `U (m x n)`, `s`, `V (n x n)`.
fn svd_tall(m: usize, n: usize, data: &[f64]) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    if n == 0 {
        return (Vec::new(), Vec::new(), Vec::new());
    }
    let (q, mut w) = if m > n {
        let (q, r) = householder_qr(m, n, data);
        (Some(q), r)
    } else {
        (None, data.to_vec())
    };
    let mut v = vec![0.0; n * n];
    for i in 0..n {
        v[i + n * i] = 1.0;
    }
    // columns below this norm are round-off; rotating them only burns sweeps
    let floor = f64::EPSILON * dot(&w, &w).sqrt();
    jacobi_sweeps(n, n, &mut w, &mut v, floor * floor);

    let norms: Vec<f64> = (0..n)
        .map(|j| dot(&w[j * n..(j + 1) * n], &w[j * n..(j + 1) * n]).sqrt())
        .collect();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| norms[b].total_cmp(&norms[a]));

    let mut ur = vec![0.0; n * n];
    let mut vs = vec![0.0; n * n];
    let mut s = Vec::with_capacity(n);
    for (dst, &src) in order.iter().enumerate() {
        let sigma = norms[src];
        s.push(sigma);
        let col = &w[src * n..(src + 1) * n];
        if sigma > 0.0 {
            for (o, x) in ur[dst * n..(dst + 1) * n].iter_mut().zip(col) {
                *o = x / sigma;
            }
        }
        vs[dst * n..(dst + 1) * n].copy_from_slice(&v[src * n..(src + 1) * n]);
    }

    let first_tiny = s.iter().position(|&x| x <= floor || x == 0.0).unwrap_or(n);
    complete_orthonormal(n, n, &mut ur, first_tiny);

    let u = match q {
        Some(q) => matmul(m, n, n, &q, &ur),
        None => ur,
    };
    (u, s, vs)
}

/// Rotates column pairs of `w` (rows x cols) until they are mutually
/// orthogonal, accumulating the rotations into `v` (cols x cols).
/// Pairs with a column whose squared norm is at most `negligible` are left alone.
fn jacobi_sweeps(rows: usize, cols: usize, w: &mut [f64], v: &mut [f64], negligible: f64) {
    let eps = f64::EPSILON;
    for _ in 0..MAX_SWEEPS {
        let mut rotated = false;
        for i in 0..cols {
            for j in i + 1..cols {
                let (alpha, beta, gamma) = {
                    let wi = &w[i * rows..(i + 1) * rows];
                    let wj = &w[j * rows..(j + 1) * rows];
                    (dot(wi, wi), dot(wj, wj), dot(wi, wj))
                };
                if gamma == 0.0 || alpha <= negligible || beta <= negligible {
                    continue;
                }
                if gamma.abs() <= eps * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                rotate_columns(w, rows, i, j, c, s);
                rotate_columns(v, cols, i, j, c, s);
            }
        }
        if !rotated {
            break;
        }
    }
}

#[inline]
fn rotate_columns(a: &mut [f64], rows: usize, i: usize, j: usize, c: f64, s: f64) {
    let (lo, hi) = a.split_at_mut(j * rows);
    let ci = &mut lo[i * rows..(i + 1) * rows];
    let cj = &mut hi[..rows];
    for (x, y) in ci.iter_mut().zip(cj.iter_mut()) {
        let (xi, yj) = (*x, *y);
        *x = c * xi - s * yj;
        *y = s * xi + c * yj;
    }
}

/// Replaces columns `from..cols` of `q` (rows x cols, column-major) so that
/// all columns are orthonormal. Columns before `from` are assumed orthonormal.
pub(crate) fn complete_orthonormal(rows: usize, cols: usize, q: &mut [f64], from: usize) {
    let mut candidate = 0usize;
    for j in from..cols {
        // try the existing direction first, then unit vectors
        let mut ok = orthonormalize_against(rows, q, j);
        while !ok && candidate < rows {
            let col = &mut q[j * rows..(j + 1) * rows];
            col.iter_mut().for_each(|x| *x = 0.0);
            col[candidate] = 1.0;
            candidate += 1;
            ok = orthonormalize_against(rows, q, j);
        }
    }
}

fn orthonormalize_against(rows: usize, q: &mut [f64], j: usize) -> bool {
    let (prev, rest) = q.split_at_mut(j * rows);
    let col = &mut rest[..rows];
    let start = dot(col, col).sqrt();
    if start == 0.0 {
        return false;
    }
    for _ in 0..2 {
        for k in 0..j {
            let pk = &prev[k * rows..(k + 1) * rows];
            let proj = dot(pk, col);
            for (c, p) in col.iter_mut().zip(pk) {
                *c -= proj * p;
            }
        }
    }
    let norm = dot(col, col).sqrt();
    if norm <= 0.5 * start || norm == 0.0 {
        return false;
    }
    col.iter_mut().for_each(|x| *x /= norm);
    true
}

/// Thin Householder QR of an `m x n` (m > n) matrix: returns `Q (m x n)` and
/// `R (n x n)`, both column-major.
fn householder_qr(m: usize, n: usize, data: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let mut a = data.to_vec();
    let mut vs: Vec<Vec<f64>> = Vec::with_capacity(n);
    let mut betas = Vec::with_capacity(n);
    for k in 0..n {
        let x = &a[k * m + k..(k + 1) * m];
        let norm = dot(x, x).sqrt();
        let mut v = x.to_vec();
        let beta = if norm == 0.0 {
            0.0
        } else {
            let alpha = if x[0] >= 0.0 { -norm } else { norm };
            v[0] -= alpha;
            let vv = dot(&v, &v);
            if vv == 0.0 {
                0.0
            } else {
                2.0 / vv
            }
        };
        if beta != 0.0 {
            for c in k..n {
                let col = &mut a[c * m + k..(c + 1) * m];
                let proj = beta * dot(&v, col);
                for (y, vi) in col.iter_mut().zip(&v) {
                    *y -= proj * vi;
                }
            }
        }
        vs.push(v);
        betas.push(beta);
    }
    let mut r = vec![0.0; n * n];
    for c in 0..n {
        for row in 0..=c {
            r[row + n * c] = a[row + m * c];
        }
    }
    let mut q = vec![0.0; m * n];
    for c in 0..n {
        q[c + m * c] = 1.0;
    }
    for k in (0..n).rev() {
        let (v, beta) = (&vs[k], betas[k]);
        if beta == 0.0 {
            continue;
        }
        for c in 0..n {
            let col = &mut q[c * m + k..(c + 1) * m];
            let proj = beta * dot(v, col);
            for (y, vi) in col.iter_mut().zip(v) {
                *y -= proj * vi;
            }
        }
    }
    (q, r)
}

/// `(m x k) * (k x n)`, column-major.
fn matmul(m: usize, k: usize, n: usize, a: &[f64], b: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; m * n];
    for c in 0..n {
        let dst = &mut out[c * m..(c + 1) * m];
        for l in 0..k {
            let w = b[l + k * c];
            if w == 0.0 {
                continue;
            }
            for (d, x) in dst.iter_mut().zip(&a[l * m..(l + 1) * m]) {
                *d += w * x;
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn gram_defect(q: &DenseTensor) -> f64 {
        let (rows, cols) = (q.dims()[0], q.dims()[1]);
        let d = q.data();
        let mut worst = 0.0f64;
        for i in 0..cols {
            for j in 0..cols {
                let g = dot(&d[i * rows..(i + 1) * rows], &d[j * rows..(j + 1) * rows]);
                let target = if i == j { 1.0 } else { 0.0 };
                worst = worst.max((g - target).abs());
            }
        }
        worst
    }

    fn check_invariants(a: &DenseTensor, res: &SvdResult) {
        assert!(gram_defect(&res.u) <= 1e-12, "U not orthonormal: {}", gram_defect(&res.u));
        assert!(gram_defect(&res.v) <= 1e-12, "V not orthonormal: {}", gram_defect(&res.v));
        let err = res.reconstruct().sub(a).unwrap().frobenius_norm();
        assert!(err <= 1e-12 * a.frobenius_norm().max(f64::MIN_POSITIVE), "residual {err}");
        assert!(res.s.windows(2).all(|w| w[0] >= w[1]));
        assert!(res.s.iter().all(|&x| x >= 0.0));
        for j in 0..res.s.len() {
            let col = res.u_col(j);
            let mut best = 0;
            for (i, x) in col.iter().enumerate() {
                if x.abs() > col[best].abs() {
                    best = i;
                }
            }
            assert!(col[best] >= 0.0);
        }
    }

    #[test]
    fn diagonal_matrix() {
        let a = DenseTensor::from_rows(&[&[3.0, 0.0], &[0.0, 4.0]]).unwrap();
        let res = economy_svd(&a).unwrap();
        assert_eq!(res.s, vec![4.0, 3.0]);
        check_invariants(&a, &res);
    }

    #[test]
    fn rank_one_matrix() {
        let u = [0.6, 0.8];
        let v = [1.0 / 2f64.sqrt(), -1.0 / 2f64.sqrt()];
        let a = DenseTensor::from_fn(&[2, 2], |ix| u[ix[0]] * v[ix[1]]).unwrap();
        let res = economy_svd(&a).unwrap();
        assert!((res.s[0] - 1.0).abs() < 1e-15);
        assert!(res.s[1].abs() < 1e-15);
        check_invariants(&a, &res);
    }

    /// Eigenvalues of a symmetric 3x3 matrix from its characteristic
    /// polynomial (trigonometric form of the cubic roots).
    fn sym3_eigenvalues(g: [[f64; 3]; 3]) -> [f64; 3] {
        let p1 = g[0][1].powi(2) + g[0][2].powi(2) + g[1][2].powi(2);
        let q = (g[0][0] + g[1][1] + g[2][2]) / 3.0;
        let p2 = (g[0][0] - q).powi(2) + (g[1][1] - q).powi(2) + (g[2][2] - q).powi(2) + 2.0 * p1;
        let p = (p2 / 6.0).sqrt();
        let mut b = [[0.0; 3]; 3];
        for i in 0..3 {
            for j in 0..3 {
                b[i][j] = (g[i][j] - if i == j { q } else { 0.0 }) / p;
            }
        }
        let det = b[0][0] * (b[1][1] * b[2][2] - b[1][2] * b[2][1])
            - b[0][1] * (b[1][0] * b[2][2] - b[1][2] * b[2][0])
            + b[0][2] * (b[1][0] * b[2][1] - b[1][1] * b[2][0]);
        let phi = (det / 2.0).clamp(-1.0, 1.0).acos() / 3.0;
        let e1 = q + 2.0 * p * phi.cos();
        let e3 = q + 2.0 * p * (phi + 2.0 * std::f64::consts::PI / 3.0).cos();
        [e1, 3.0 * q - e1 - e3, e3]
    }

    #[test]
    fn random_5x3_matches_eigenvalue_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let a = DenseTensor::random_normal(&[5, 3], &mut rng).unwrap();
        let res = economy_svd(&a).unwrap();
        check_invariants(&a, &res);
        let mut g = [[0.0; 3]; 3];
        for i in 0..3 {
            for j in 0..3 {
                g[i][j] = (1..=5)
                    .map(|r| a.entry(&[r, i + 1]).unwrap() * a.entry(&[r, j + 1]).unwrap())
                    .sum();
            }
        }
        let eig = sym3_eigenvalues(g);
        for (s, e) in res.s.iter().zip(eig) {
            assert!((s * s - e).abs() <= 1e-12 * eig[0], "{s} vs sqrt({e})");
        }
    }

    #[test]
    fn wide_and_rank_deficient() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let b = DenseTensor::random_normal(&[7, 2], &mut rng).unwrap();
        let c = DenseTensor::random_normal(&[2, 9], &mut rng).unwrap();
        // rank-2 product, 7 x 9
        let a = DenseTensor::from_fn(&[7, 9], |ix| {
            (0..2)
                .map(|l| b.data()[ix[0] + 7 * l] * c.data()[l + 2 * ix[1]])
                .sum()
        })
        .unwrap();
        let res = economy_svd(&a).unwrap();
        assert_eq!(res.s.len(), 7);
        check_invariants(&a, &res);
        assert!(res.s[2] <= 1e-14 * res.s[0]);
        let zero = DenseTensor::zeros(&[3, 4]).unwrap();
        let rz = economy_svd(&zero).unwrap();
        assert!(rz.s.iter().all(|&x| x == 0.0));
        assert!(gram_defect(&rz.u) <= 1e-15);
    }

    #[test]
    fn non_finite_is_rejected() {
        let a = DenseTensor::from_rows(&[&[1.0, f64::NAN]]).unwrap();
        assert!(matches!(economy_svd(&a), Err(Error::NonFiniteInput)));
    }

    #[test]
    fn truncation() {
        let a = DenseTensor::from_rows(&[&[3.0, 0.0], &[0.0, 4.0]]).unwrap();
        let res = economy_svd(&a).unwrap();
        assert_eq!(truncated_triples(&res, 0.9).len(), 1);
        assert_eq!(truncated_triples(&res, 0.0).len(), 2);
        assert_eq!(truncated_triples(&res, 1.0).len(), 0);
        let r1 = DenseTensor::from_fn(&[3, 3], |ix| ((ix[0] + 1) * (ix[1] + 2)) as f64).unwrap();
        let t = truncated_triples(&economy_svd(&r1).unwrap(), 0.0);
        assert!(t.len() >= 1);
        assert_eq!(truncated_triples(&economy_svd(&r1).unwrap(), 1e-12).len(), 1);
    }

    #[test]
    fn deterministic_bytes() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let a = DenseTensor::random_normal(&[40, 17], &mut rng).unwrap();
        let x = economy_svd(&a).unwrap();
        let y = economy_svd(&a).unwrap();
        let bits = |r: &SvdResult| -> Vec<u64> {
            r.u.data().iter().chain(&r.s).chain(r.v.data()).map(|f| f.to_bits()).collect()
        };
        assert_eq!(bits(&x), bits(&y));
    }

    #[test]
    fn large_tall_skinny() {
        let mut rng = ChaCha8Rng::seed_from_u64(14);
        let a = DenseTensor::random_normal(&[64, 4096], &mut rng).unwrap();
        check_invariants(&a, &economy_svd(&a).unwrap());
    }

    #[test]
    fn low_rank_square_stops_early() {
        // rank 3, 200 columns of round-off after the first sweeps
        let mut rng = ChaCha8Rng::seed_from_u64(15);
        let left = DenseTensor::random_normal(&[200, 3], &mut rng).unwrap();
        let right = DenseTensor::random_normal(&[3, 200], &mut rng).unwrap();
        let a = right.mode_product(1, &left).unwrap();
        let started = std::time::Instant::now();
        let res = economy_svd(&a).unwrap();
        assert!(started.elapsed().as_secs() < 5);
        check_invariants(&a, &res);
        assert!(res.s[3] <= 1e-12 * res.s[0]);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]
        #[test]
        fn invariants_hold(m in 1usize..48, n in 1usize..48, seed in any::<u64>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let a = DenseTensor::random_normal(&[m, n], &mut rng).unwrap();
            check_invariants(&a, &economy_svd(&a).unwrap());
        }
    }
}
