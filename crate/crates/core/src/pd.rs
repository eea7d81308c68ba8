//! Polyadic decompositions with mutually orthogonal rank-1 terms.
//!
//! Two backends are provided:
//!
//! * [`ttr1svd`]: a tree of reshapes and SVDs. The tensor is unfolded as
//!   `n1 x (n2 ... nd)`, every kept right singular vector is unfolded again as
//!   `n2 x (n3 ... nd)`, and so on; the leaf weight is the product of the
//!   singular values along its path. Weights are nonnegative and the number
//!   of terms never exceeds `prod_r min(n_{r+1}, n_{r+2} ... n_d)`.
//! * [`hosvd`] + [`hosvd_terms`]: a Tucker decomposition with a full core,
//!   expanded into one rank-1 term per core entry.

use std::fmt;

use crate::error::{Error, Result};
use crate::svd::{economy_svd, svd_col_major};
use crate::tensor::{outer_rank1, DenseTensor, Shape};

/// Which orthogonal rank-1 decomposition computes the expansion.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Backend {
    Ttr1,
    Hosvd,
}

impl Backend {
    pub fn tag(self) -> u8 {
        match self {
            Backend::Ttr1 => 0,
            Backend::Hosvd => 1,
        }
    }

    pub fn from_tag(tag: u8) -> Result<Self> {
        match tag {
            0 => Ok(Backend::Ttr1),
            1 => Ok(Backend::Hosvd),
            other => Err(Error::Format(format!("unknown backend tag {other}"))),
        }
    }
}

impl fmt::Display for Backend {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Backend::Ttr1 => "ttr1",
            Backend::Hosvd => "hosvd",
        })
    }
}

impl std::str::FromStr for Backend {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "ttr1" | "ttr1svd" => Ok(Backend::Ttr1),
            "hosvd" => Ok(Backend::Hosvd),
            other => Err(Error::Format(format!("unknown backend '{other}'"))),
        }
    }
}

/// `sigma * a1 ∘ a2 ∘ ... ∘ ad` with unit-norm vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct Rank1Term {
    pub sigma: f64,
    pub vectors: Vec<Vec<f64>>,
}

impl Rank1Term {
    /// The weighted rank-1 tensor.
    pub fn expand(&self) -> Result<DenseTensor> {
        Ok(outer_rank1(&self.vectors)?.scale(self.sigma))
    }

    /// Inner product of the two unit rank-1 tensors (weights excluded).
    pub fn unit_inner(&self, other: &Rank1Term) -> f64 {
        self.vectors
            .iter()
            .zip(&other.vectors)
            .map(|(a, b)| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>())
            .product()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PolyadicDecomposition {
    pub shape: Shape,
    pub terms: Vec<Rank1Term>,
    pub backend: Backend,
}

impl PolyadicDecomposition {
    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn sigmas(&self) -> Vec<f64> {
        self.terms.iter().map(|t| t.sigma).collect()
    }

    /// Sum of the first `r` terms.
    pub fn reconstruct(&self, r: usize) -> Result<DenseTensor> {
        if r > self.terms.len() {
            return Err(Error::IndexOutOfRange {
                index: vec![r],
                shape: vec![self.terms.len()],
            });
        }
        let mut acc = DenseTensor::zeros(self.shape.dims())?;
        for term in &self.terms[..r] {
            acc.axpy(1.0, &term.expand()?)?;
        }
        Ok(acc)
    }

    /// Largest `|<term_p, term_q>|` over `p != q` for the unit terms.
    pub fn max_cross_inner(&self) -> f64 {
        let mut worst = 0.0f64;
        for (p, a) in self.terms.iter().enumerate() {
            for b in &self.terms[p + 1..] {
                worst = worst.max(a.unit_inner(b).abs());
            }
        }
        worst
    }
}

/// Upper bound on the TTr1 term count for the given mode order.
pub fn ttr1_term_bound(dims: &[usize]) -> usize {
    if dims.len() < 2 {
        return 1;
    }
    (0..dims.len() - 1)
        .map(|r| dims[r].min(dims[r + 1..].iter().product()))
        .product()
}

/// Path weight along the TTr1 tree; log-space beyond eight levels.
#[derive(Clone, Copy)]
enum Weight {
    Linear(f64),
    Log(f64),
}

impl Weight {
    fn times(self, sigma: f64) -> Weight {
        match self {
            Weight::Linear(w) => Weight::Linear(w * sigma),
            Weight::Log(l) => Weight::Log(l + sigma.ln()),
        }
    }

    fn exceeds(self, cut: f64) -> bool {
        match self {
            Weight::Linear(w) => w > cut,
            Weight::Log(l) => {
                if cut <= 0.0 {
                    l > f64::NEG_INFINITY
                } else {
                    l > cut.ln()
                }
            }
        }
    }

    fn value(self) -> f64 {
        match self {
            Weight::Linear(w) => w,
            Weight::Log(l) => l.exp(),
        }
    }
}

struct Ttr1Walk<'a> {
    dims: &'a [usize],
    cut: f64,
    terms: Vec<Rank1Term>,
}

impl Ttr1Walk<'_> {
    fn descend(&mut self, level: usize, data: &[f64], weight: Weight, prefix: &mut Vec<Vec<f64>>) -> Result<()> {
        let rows = self.dims[level];
        let cols = data.len() / rows;
        let res = svd_col_major(rows, cols, data)?;
        let last = level + 2 == self.dims.len();
        for j in 0..res.s.len() {
            let w = weight.times(res.s[j]);
            // singular values are sorted, so the rest of this node is pruned too
            if !w.exceeds(self.cut) {
                break;
            }
            prefix.push(res.u_col(j).to_vec());
            if last {
                let mut vectors = prefix.clone();
                vectors.push(res.v_col(j).to_vec());
                self.terms.push(Rank1Term {
                    sigma: w.value(),
                    vectors,
                });
            } else {
                self.descend(level + 1, res.v_col(j), w, prefix)?;
            }
            prefix.pop();
        }
        Ok(())
    }
}

/// TTr1 decomposition. Terms whose path weight does not exceed
/// `tol * sigma_1` (top-level largest singular value) are dropped; the result
/// is sorted by weight, ties kept in tree order.
pub fn ttr1svd(t: &DenseTensor, tol: f64) -> Result<PolyadicDecomposition> {
    if t.order() < 2 {
        return Err(Error::OrderTooLow(t.order()));
    }
    if tol.is_nan() || tol < 0.0 {
        return Err(Error::Format(format!("tolerance must be nonnegative, got {tol}")));
    }
    let dims = t.dims();
    let top = {
        let root = svd_col_major(dims[0], t.numel() / dims[0], t.data())?;
        root.s[0]
    };
    let weight = if dims.len() > 8 {
        Weight::Log(0.0)
    } else {
        Weight::Linear(1.0)
    };
    let mut walk = Ttr1Walk {
        dims,
        cut: tol * top,
        terms: Vec::new(),
    };
    walk.descend(0, t.data(), weight, &mut Vec::new())?;
    let mut terms = walk.terms;
    terms.sort_by(|a, b| b.sigma.total_cmp(&a.sigma));
    Ok(PolyadicDecomposition {
        shape: t.shape().clone(),
        terms,
        backend: Backend::Ttr1,
    })
}

/// `A = S x1 U1 x2 U2 ... xk Uk` with square orthogonal `Ui`.
#[derive(Debug, Clone, PartialEq)]
pub struct HosvdCore {
    pub core: DenseTensor,
    pub factors: Vec<DenseTensor>,
}

impl HosvdCore {
    pub fn reconstruct(&self) -> Result<DenseTensor> {
        let mut acc = self.core.clone();
        for (i, u) in self.factors.iter().enumerate() {
            acc = acc.mode_product(i + 1, u)?;
        }
        Ok(acc)
    }
}

fn transpose(m: &DenseTensor) -> Result<DenseTensor> {
    m.permute_modes(&[2, 1])
}

/// Mode-`r` unfolding (1-based) as an `n_r x (rest)` matrix.
pub fn unfold(t: &DenseTensor, r: usize) -> Result<DenseTensor> {
    let k = t.order();
    let mut perm = vec![r];
    perm.extend((1..=k).filter(|&m| m != r));
    let moved = t.permute_modes(&perm)?;
    let n = t.dims()[r - 1];
    moved.into_reshaped(&[n, t.numel() / n])
}

/// Higher-order SVD with a full core of the input's dimensions.
pub fn hosvd(t: &DenseTensor) -> Result<HosvdCore> {
    if t.order() < 2 {
        return Err(Error::OrderTooLow(t.order()));
    }
    let mut factors = Vec::with_capacity(t.order());
    for r in 1..=t.order() {
        let n = t.dims()[r - 1];
        let res = economy_svd(&unfold(t, r)?)?;
        let p = res.s.len();
        let mut u = res.u.into_data();
        if p < n {
            u.resize(n * n, 0.0);
            crate::svd::complete_orthonormal(n, n, &mut u, p);
        }
        factors.push(DenseTensor::new(&[n, n], u)?);
    }
    let mut core = t.clone();
    for (i, u) in factors.iter().enumerate() {
        core = core.mode_product(i + 1, &transpose(u)?)?;
    }
    Ok(HosvdCore { core, factors })
}

/// One term per core entry with `|s| > tol * max|s|`; the sign of the entry
/// is folded into the mode-1 vector so every weight is nonnegative.
pub fn hosvd_terms(h: &HosvdCore, tol: f64) -> PolyadicDecomposition {
    let core = &h.core;
    let dims = core.dims();
    let max = core.data().iter().fold(0.0f64, |m, x| m.max(x.abs()));
    let cut = tol * max;
    let column = |mode: usize, c: usize| -> &[f64] {
        let n = dims[mode];
        &h.factors[mode].data()[c * n..(c + 1) * n]
    };
    let mut terms = Vec::new();
    let mut idx = vec![0usize; dims.len()];
    for &s in core.data() {
        if s.abs() > cut {
            let mut vectors: Vec<Vec<f64>> =
                idx.iter().enumerate().map(|(m, &c)| column(m, c).to_vec()).collect();
            if s < 0.0 {
                vectors[0].iter_mut().for_each(|x| *x = -*x);
            }
            terms.push(Rank1Term {
                sigma: s.abs(),
                vectors,
            });
        }
        crate::tensor::advance(&mut idx, dims);
    }
    terms.sort_by(|a, b| b.sigma.total_cmp(&a.sigma));
    PolyadicDecomposition {
        shape: core.shape().clone(),
        terms,
        backend: Backend::Hosvd,
    }
}

/// Runs the selected backend.
pub fn decompose(t: &DenseTensor, backend: Backend, tol: f64) -> Result<PolyadicDecomposition> {
    match backend {
        Backend::Ttr1 => ttr1svd(t, tol),
        Backend::Hosvd => Ok(hosvd_terms(&hosvd(t)?, tol)),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn unit(n: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
        let v = DenseTensor::random_normal(&[n], rng).unwrap();
        let s = v.frobenius_norm();
        v.scale(1.0 / s).into_data()
    }

    fn rel_err(a: &DenseTensor, b: &DenseTensor) -> f64 {
        a.sub(b).unwrap().frobenius_norm() / a.frobenius_norm()
    }

    fn check_parseval(pd: &PolyadicDecomposition, a: &DenseTensor) {
        let s2: f64 = pd.terms.iter().map(|t| t.sigma * t.sigma).sum();
        let n2 = a.frobenius_norm().powi(2);
        assert!((s2 - n2).abs() <= 1e-10 * n2, "parseval {s2} vs {n2}");
        for t in &pd.terms {
            for v in &t.vectors {
                let n: f64 = v.iter().map(|x| x * x).sum::<f64>().sqrt();
                assert!((n - 1.0).abs() <= 1e-12);
            }
            assert!(t.sigma >= 0.0);
        }
    }

    #[test]
    fn ttr1_rank_one() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let (u, v, w) = (unit(3, &mut rng), unit(4, &mut rng), unit(5, &mut rng));
        let t = outer_rank1(&[u, v, w]).unwrap().scale(7.0);
        let pd = ttr1svd(&t, 1e-12).unwrap();
        assert_eq!(pd.len(), 1);
        assert!((pd.terms[0].sigma - 7.0).abs() < 1e-13);
    }

    #[test]
    fn ttr1_bound_small() {
        assert_eq!(ttr1_term_bound(&[2, 2, 2]), 4);
        assert_eq!(ttr1_term_bound(&[8, 27, 64]), 216);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let t = DenseTensor::random_normal(&[2, 2, 2], &mut rng).unwrap();
        let pd = ttr1svd(&t, 1e-12).unwrap();
        assert!(pd.len() <= 4);
        check_parseval(&pd, &t);
    }

    #[test]
    fn ttr1_full_reconstruction_and_orthogonality() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let t = DenseTensor::random_normal(&[4, 4, 4], &mut rng).unwrap();
        let pd = ttr1svd(&t, 1e-12).unwrap();
        assert_eq!(pd.len(), 16);
        assert!(rel_err(&t, &pd.reconstruct(pd.len()).unwrap()) <= 1e-12);
        assert!(pd.max_cross_inner() <= 1e-10);
        check_parseval(&pd, &t);
        assert!(pd.terms.windows(2).all(|w| w[0].sigma >= w[1].sigma));
    }

    #[test]
    fn truncation_error_matches_sigma_tail() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let t = DenseTensor::random_normal(&[3, 4, 5], &mut rng).unwrap();
        let pd = ttr1svd(&t, 0.0).unwrap();
        let total: f64 = pd.terms.iter().map(|x| x.sigma * x.sigma).sum::<f64>();
        for r in 0..=pd.len() {
            let tail: f64 = pd.terms[r..].iter().map(|x| x.sigma * x.sigma).sum();
            let direct = rel_err(&t, &pd.reconstruct(r).unwrap());
            assert!((direct - (tail / total).sqrt()).abs() <= 1e-10);
        }
        assert!(pd.reconstruct(pd.len() + 1).is_err());
        assert_eq!(pd.reconstruct(0).unwrap().frobenius_norm(), 0.0);
    }

    #[test]
    fn order_one_is_rejected() {
        let t = DenseTensor::zeros(&[4]).unwrap();
        assert!(matches!(ttr1svd(&t, 0.0), Err(Error::OrderTooLow(1))));
        assert!(matches!(hosvd(&t), Err(Error::OrderTooLow(1))));
    }

    #[test]
    fn deep_tree_uses_log_weights() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let t = DenseTensor::random_normal(&[2; 9], &mut rng).unwrap();
        let pd = ttr1svd(&t, 1e-12).unwrap();
        assert!(pd.len() <= ttr1_term_bound(&[2; 9]));
        check_parseval(&pd, &t);
        assert!(rel_err(&t, &pd.reconstruct(pd.len()).unwrap()) <= 1e-12);
    }

    #[test]
    fn hosvd_reconstructs() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let t = DenseTensor::random_normal(&[3, 5, 4], &mut rng).unwrap();
        let h = hosvd(&t).unwrap();
        assert_eq!(h.core.dims(), t.dims());
        assert!(rel_err(&t, &h.reconstruct().unwrap()) <= 1e-12);
        let pd = hosvd_terms(&h, 1e-12);
        assert!(pd.len() <= 60);
        assert!(rel_err(&t, &pd.reconstruct(pd.len()).unwrap()) <= 1e-12);
        assert!(pd.max_cross_inner() <= 1e-10);
        check_parseval(&pd, &t);
    }

    #[test]
    fn hosvd_of_matrix_is_svd() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let t = DenseTensor::random_normal(&[2, 2], &mut rng).unwrap();
        let pd = hosvd_terms(&hosvd(&t).unwrap(), 1e-12);
        let svd = economy_svd(&t).unwrap();
        assert_eq!(pd.len(), 2);
        for (a, b) in pd.sigmas().iter().zip(&svd.s) {
            assert!((a - b).abs() <= 1e-14 * svd.s[0]);
        }
    }

    #[test]
    fn hosvd_of_diagonal_core() {
        let t = DenseTensor::from_fn(&[3, 3, 3], |ix| {
            if ix[0] == ix[1] && ix[1] == ix[2] {
                [5.0, -3.0, 1.0][ix[0]]
            } else {
                0.0
            }
        })
        .unwrap();
        let pd = hosvd_terms(&hosvd(&t).unwrap(), 1e-12);
        assert_eq!(pd.len(), 3);
        let s = pd.sigmas();
        for (a, b) in s.iter().zip([5.0, 3.0, 1.0]) {
            assert!((a - b).abs() < 1e-14);
        }
        assert!((outer_rank1(&pd.terms[1].vectors).unwrap().scale(pd.terms[1].sigma).entry(&[2, 2, 2]).unwrap() + 3.0).abs() < 1e-14);
    }

    #[test]
    fn tall_mode_gets_completed_basis() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let t = DenseTensor::random_normal(&[7, 2, 2], &mut rng).unwrap();
        let h = hosvd(&t).unwrap();
        assert_eq!(h.factors[0].dims(), &[7, 7]);
        assert!(rel_err(&t, &h.reconstruct().unwrap()) <= 1e-12);
    }
}
