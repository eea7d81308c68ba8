//! Decomposition of a k-way tensor into a weighted sum of tensor Kronecker
//! products
//!
//! ```text
//! A = sum_j sigma_j  A(d)_j ⊗ ... ⊗ A(2)_j ⊗ A(1)_j
//! ```
//!
//! Factor `i = 1` is the **rightmost** Kronecker factor (its indices vary
//! fastest inside every mode of `A`); factor `d` is the leftmost and
//! coarsest. All grid listings in this crate run `i = 1..d`.
//!
//! The tensor is rearranged so that the entries of each factor become one
//! mode of a d-way tensor, whose orthogonal rank-1 decomposition then yields
//! the terms directly.

use crate::error::{Error, Result};
use crate::pd::{decompose, Backend, PolyadicDecomposition};
use crate::perm::PermutationMap;
use crate::tensor::{checked_product, gather_strided, kron_chain, DenseTensor, Shape};

/// Relative gap below which two weights count as one multiplet.
pub const MULTIPLET_GAP: f64 = 1e-8;

/// Default relative truncation tolerance.
pub const DEFAULT_TOL: f64 = 1e-12;

/// `dims[i][r]` is the mode-`r` dimension of factor `i` (both 0-based here).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FactorGrid {
    dims: Vec<Vec<usize>>,
}

impl FactorGrid {
    pub fn new(dims: Vec<Vec<usize>>) -> Result<Self> {
        let Some(first) = dims.first() else {
            return Err(Error::EmptyInput("factor grid has no factors".into()));
        };
        let k = first.len();
        if k == 0 {
            return Err(Error::EmptyInput("factor grid has order 0".into()));
        }
        for (i, f) in dims.iter().enumerate() {
            if f.len() != k {
                return Err(Error::ShapeMismatch(format!(
                    "factor {} has {} modes, factor 1 has {k}",
                    i + 1,
                    f.len()
                )));
            }
            Shape::new(f)?;
        }
        let grid = FactorGrid { dims };
        checked_product(&grid.target_dims())?;
        for i in 0..grid.degree() {
            checked_product(&grid.dims[i])?;
        }
        Ok(grid)
    }

    /// Every factor cubical: factor `i` is `sides[i] x ... x sides[i]` (k modes).
    pub fn cubical(order: usize, sides: &[usize]) -> Result<Self> {
        FactorGrid::new(sides.iter().map(|&n| vec![n; order]).collect())
    }

    /// Parses `n1xn2x...,m1xm2x...` with factors listed `i = 1..d`.
    pub fn parse(spec: &str) -> Result<Self> {
        let dims = spec
            .split(',')
            .map(|f| {
                f.trim()
                    .split(['x', 'X'])
                    .map(|n| {
                        n.trim()
                            .parse::<usize>()
                            .map_err(|_| Error::Format(format!("bad dimension '{n}' in grid '{spec}'")))
                    })
                    .collect::<Result<Vec<_>>>()
            })
            .collect::<Result<Vec<_>>>()?;
        FactorGrid::new(dims)
    }

    pub fn degree(&self) -> usize {
        self.dims.len()
    }

    pub fn order(&self) -> usize {
        self.dims[0].len()
    }

    /// Dimensions of the factor at 0-based position `i` in [`Self::rows`],
    /// so `i = 0` is the rightmost factor.
    pub fn factor_dims(&self, i: usize) -> &[usize] {
        &self.dims[i]
    }

    pub fn factor_numel(&self, i: usize) -> usize {
        self.dims[i].iter().product()
    }

    pub fn rows(&self) -> &[Vec<usize>] {
        &self.dims
    }

    /// Dimensions of the tensor the grid factors.
    pub fn target_dims(&self) -> Vec<usize> {
        (0..self.order())
            .map(|r| self.dims.iter().map(|f| f[r]).product())
            .collect()
    }

    /// Mode sizes of the rearranged d-way tensor.
    pub fn rearranged_dims(&self) -> Vec<usize> {
        (0..self.degree()).map(|i| self.factor_numel(i)).collect()
    }

    pub fn check_target(&self, dims: &[usize]) -> Result<()> {
        let want = self.target_dims();
        if want != dims {
            return Err(Error::ShapeMismatch(format!(
                "grid {self} factors a {} tensor, input is {}",
                Shape::new(&want)?,
                Shape::new(dims)?
            )));
        }
        Ok(())
    }

    /// Per-digit (factor-major, mode-minor) dimensions and source strides.
    fn digit_layout(&self) -> (Vec<usize>, Vec<usize>) {
        let mut mode_strides = Vec::with_capacity(self.order());
        let mut acc = 1usize;
        for n in self.target_dims() {
            mode_strides.push(acc);
            acc *= n;
        }
        let (d, k) = (self.degree(), self.order());
        let mut out_dims = Vec::with_capacity(d * k);
        let mut strides = Vec::with_capacity(d * k);
        let mut inner = vec![1usize; k];
        for f in &self.dims {
            for r in 0..k {
                out_dims.push(f[r]);
                strides.push(inner[r] * mode_strides[r]);
                inner[r] *= f[r];
            }
        }
        (out_dims, strides)
    }
}

impl std::fmt::Display for FactorGrid {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        for (i, dims) in self.dims.iter().enumerate() {
            if i > 0 {
                f.write_str(",")?;
            }
            let parts: Vec<String> = dims.iter().map(|n| n.to_string()).collect();
            f.write_str(&parts.join("x"))?;
        }
        Ok(())
    }
}

/// `Q` with `vec(Ã) = Q vec(A)`.
pub fn build_q_permutation(grid: &FactorGrid) -> PermutationMap {
    let (out_dims, strides) = grid.digit_layout();
    let n: usize = out_dims.iter().product();
    let positions: Vec<usize> = (0..n).collect();
    PermutationMap::from_trusted(gather_strided(&positions, &out_dims, &strides))
}

/// The d-way tensor whose mode `i` enumerates the entries of factor `i`.
pub fn rearrange(a: &DenseTensor, grid: &FactorGrid) -> Result<DenseTensor> {
    grid.check_target(a.dims())?;
    let (out_dims, strides) = grid.digit_layout();
    DenseTensor::new(&grid.rearranged_dims(), gather_strided(a.data(), &out_dims, &strides))
}

/// Same as [`rearrange`] but spelled out as reshape, mode permutation and
/// reshape. Slower; kept as a cross-check.
pub fn rearrange_by_permutation(a: &DenseTensor, grid: &FactorGrid) -> Result<DenseTensor> {
    grid.check_target(a.dims())?;
    let (d, k) = (grid.degree(), grid.order());
    let split: Vec<usize> = (0..k).flat_map(|r| grid.rows().iter().map(move |f| f[r])).collect();
    let perm: Vec<usize> = (0..d).flat_map(|i| (0..k).map(move |r| r * d + i + 1)).collect();
    a.reshape(&split)?
        .permute_modes(&perm)?
        .into_reshaped(&grid.rearranged_dims())
}

#[derive(Debug, Clone, PartialEq)]
pub struct TkpsvdResult {
    pub grid: FactorGrid,
    pub backend: Backend,
    pub sigmas: Vec<f64>,
    /// `factors[j][i]` is factor `i` (rightmost first) of term `j`.
    pub factors: Vec<Vec<DenseTensor>>,
    pub source_norm: f64,
    /// Index groups of near-equal weights (gap at most `MULTIPLET_GAP * sigma_1`).
    pub multiplets: Vec<Vec<usize>>,
}

impl TkpsvdResult {
    pub(crate) fn from_parts(
        grid: FactorGrid,
        backend: Backend,
        sigmas: Vec<f64>,
        factors: Vec<Vec<DenseTensor>>,
        source_norm: f64,
    ) -> Self {
        let multiplets = sigma_multiplets(&sigmas, MULTIPLET_GAP);
        TkpsvdResult {
            grid,
            backend,
            sigmas,
            factors,
            source_norm,
            multiplets,
        }
    }

    pub fn term_count(&self) -> usize {
        self.sigmas.len()
    }

    pub fn in_multiplet(&self, j: usize) -> bool {
        self.multiplets.iter().any(|g| g.contains(&j))
    }

    /// `A(d)_j ⊗ ... ⊗ A(1)_j`.
    pub fn term(&self, j: usize) -> Result<DenseTensor> {
        let chain: Vec<&DenseTensor> = self.factors[j].iter().rev().collect();
        kron_chain(&chain)
    }

    /// Sum of the first `r` weighted terms.
    pub fn reconstruct(&self, r: usize) -> Result<DenseTensor> {
        if r > self.term_count() {
            return Err(Error::IndexOutOfRange {
                index: vec![r],
                shape: vec![self.term_count()],
            });
        }
        let mut acc = DenseTensor::zeros(&self.grid.target_dims())?;
        for j in 0..r {
            acc.axpy(self.sigmas[j], &self.term(j)?)?;
        }
        Ok(acc)
    }

    /// Relative error of the `r`-term truncation, from the weights alone.
    pub fn relative_error(&self, r: usize) -> Result<f64> {
        relative_error(&self.sigmas, r)
    }

    /// Reconstruction at reduced resolution: only the `levels` leftmost
    /// factors are kept and every dropped chain is replaced by its mean, so
    /// the result is the block average of the `r`-term approximation.
    pub fn reconstruct_coarse(&self, levels: usize, r: usize) -> Result<DenseTensor> {
        let d = self.grid.degree();
        if levels == 0 || levels > d {
            return Err(Error::InvalidDimension(format!("levels must lie in 1..={d}, got {levels}")));
        }
        if r > self.term_count() {
            return Err(Error::IndexOutOfRange {
                index: vec![r],
                shape: vec![self.term_count()],
            });
        }
        let first_kept = d - levels;
        let dims = coarse_dims(&self.grid, levels);
        let mut acc = DenseTensor::zeros(&dims)?;
        for j in 0..r {
            let factors = &self.factors[j];
            let mean: f64 = factors[..first_kept]
                .iter()
                .map(|f| f.data().iter().sum::<f64>() / f.numel() as f64)
                .product();
            let chain: Vec<&DenseTensor> = factors[first_kept..].iter().rev().collect();
            acc.axpy(self.sigmas[j] * mean, &kron_chain(&chain)?)?;
        }
        Ok(acc)
    }
}

/// Dimensions obtained by keeping the `levels` leftmost factors.
pub fn coarse_dims(grid: &FactorGrid, levels: usize) -> Vec<usize> {
    let d = grid.degree();
    (0..grid.order())
        .map(|r| grid.rows()[d - levels..].iter().map(|f| f[r]).product())
        .collect()
}

/// Block average of `a` down to the resolution of the `levels` leftmost factors.
pub fn block_average(a: &DenseTensor, grid: &FactorGrid, levels: usize) -> Result<DenseTensor> {
    let d = grid.degree();
    if levels == 0 || levels > d {
        return Err(Error::InvalidDimension(format!("levels must lie in 1..={d}, got {levels}")));
    }
    let t = rearrange(a, grid)?;
    let fine: usize = (0..d - levels).map(|i| grid.factor_numel(i)).product();
    let coarse = t.numel() / fine;
    let mut flat = vec![0.0; coarse];
    for (c, out) in flat.iter_mut().enumerate() {
        *out = t.data()[c * fine..(c + 1) * fine].iter().sum::<f64>() / fine as f64;
    }
    // flat is in rearranged order of the kept factors; map back
    let kept = FactorGrid {
        dims: grid.rows()[d - levels..].to_vec(),
    };
    let q = build_q_permutation(&kept);
    let mut data = vec![0.0; coarse];
    for (p, &src) in q.as_slice().iter().enumerate() {
        data[src] = flat[p];
    }
    DenseTensor::new(&kept.target_dims(), data)
}

/// `sqrt(sum_{j>r} s_j^2) / sqrt(sum_j s_j^2)` without reconstructing.
pub fn relative_error(sigmas: &[f64], r: usize) -> Result<f64> {
    if sigmas.is_empty() {
        return Err(Error::EmptyInput("no weights".into()));
    }
    if r > sigmas.len() {
        return Err(Error::IndexOutOfRange {
            index: vec![r],
            shape: vec![sigmas.len()],
        });
    }
    // accumulate from the small end
    let tail: f64 = sigmas[r..].iter().rev().map(|s| s * s).sum();
    let head: f64 = sigmas[..r].iter().rev().map(|s| s * s).sum();
    let total = head + tail;
    if total == 0.0 {
        return Ok(0.0);
    }
    Ok((tail / total).sqrt())
}

/// Groups of consecutive (sorted) weights whose neighbouring gaps are at
/// most `rel_gap * sigmas[0]`. Singletons are not reported.
pub fn sigma_multiplets(sigmas: &[f64], rel_gap: f64) -> Vec<Vec<usize>> {
    let Some(&top) = sigmas.first() else {
        return Vec::new();
    };
    let cut = rel_gap * top;
    let mut groups = Vec::new();
    let mut current = vec![0usize];
    for j in 1..sigmas.len() {
        if (sigmas[j - 1] - sigmas[j]).abs() <= cut {
            current.push(j);
        } else {
            if current.len() > 1 {
                groups.push(std::mem::take(&mut current));
            }
            current = vec![j];
        }
    }
    if current.len() > 1 {
        groups.push(current);
    }
    groups
}

fn split_terms(pd: PolyadicDecomposition, grid: &FactorGrid) -> Result<(Vec<f64>, Vec<Vec<DenseTensor>>)> {
    let mut sigmas = Vec::with_capacity(pd.len());
    let mut factors = Vec::with_capacity(pd.len());
    for term in pd.terms {
        sigmas.push(term.sigma);
        let per = term
            .vectors
            .into_iter()
            .enumerate()
            .map(|(i, v)| DenseTensor::new(grid.factor_dims(i), v))
            .collect::<Result<Vec<_>>>()?;
        factors.push(per);
    }
    Ok((sigmas, factors))
}

/// Kronecker product decomposition of `a` over `grid`.
pub fn tkpsvd(a: &DenseTensor, grid: &FactorGrid, backend: Backend, tol: f64) -> Result<TkpsvdResult> {
    grid.check_target(a.dims())?;
    if a.data().iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFiniteInput);
    }
    let t = rearrange(a, grid)?;
    let source_norm = a.frobenius_norm();
    if grid.degree() == 1 {
        let (sigmas, factors) = if source_norm > 0.0 {
            let unit = a.scale(1.0 / source_norm);
            (vec![source_norm], vec![vec![unit]])
        } else {
            (Vec::new(), Vec::new())
        };
        return Ok(TkpsvdResult::from_parts(grid.clone(), backend, sigmas, factors, source_norm));
    }
    let pd = decompose(&t, backend, tol)?;
    let (sigmas, factors) = split_terms(pd, grid)?;
    Ok(TkpsvdResult::from_parts(grid.clone(), backend, sigmas, factors, source_norm))
}

/// Decomposition of the diagonal tensor `D = D(d) ⊗ ... ⊗ D(1)` of the given
/// order whose main diagonal is `diag`; only the diagonal is ever stored.
/// Factor `i` is an `n_i x ... x n_i` diagonal tensor.
pub fn tkpsvd_diagonal(
    diag: &[f64],
    sides: &[usize],
    order: usize,
    backend: Backend,
    tol: f64,
) -> Result<TkpsvdResult> {
    if order == 0 {
        return Err(Error::InvalidDimension("diagonal tensors need order >= 1".into()));
    }
    let shape = Shape::new(sides)?;
    if shape.numel() != diag.len() {
        return Err(Error::ShapeMismatch(format!(
            "diagonal of length {} does not reshape to {shape}",
            diag.len()
        )));
    }
    if diag.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFiniteInput);
    }
    let grid = FactorGrid::cubical(order, sides)?;
    let t = DenseTensor::from_shape(shape, diag.to_vec())?;
    let source_norm = t.frobenius_norm();
    let (sigmas, vectors): (Vec<f64>, Vec<Vec<Vec<f64>>>) = if sides.len() == 1 {
        if source_norm > 0.0 {
            (vec![source_norm], vec![vec![t.scale(1.0 / source_norm).into_data()]])
        } else {
            (Vec::new(), Vec::new())
        }
    } else {
        let pd = decompose(&t, backend, tol)?;
        pd.terms.into_iter().map(|term| (term.sigma, term.vectors)).unzip()
    };
    let factors = vectors
        .into_iter()
        .map(|per| {
            per.into_iter()
                .map(|v| diagonal_tensor(&v, order))
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(TkpsvdResult::from_parts(grid, backend, sigmas, factors, source_norm))
}

/// Order-`order` tensor with `values` on its main diagonal.
pub fn diagonal_tensor(values: &[f64], order: usize) -> Result<DenseTensor> {
    let n = values.len();
    let mut t = DenseTensor::zeros(&vec![n; order])?;
    let step: usize = (0..order).map(|r| n.pow(r as u32)).sum();
    for (i, &v) in values.iter().enumerate() {
        t.data_mut()[i * step] = v;
    }
    Ok(t)
}
