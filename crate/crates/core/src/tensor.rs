//! Dense k-way tensors stored first-index-fastest.
//!
//! The linear position of the (1-based) entry `(i1, ..., ik)` is
//! `i1 + n1*(i2-1) + n1*n2*(i3-1) + ...`, which is exactly the grouped-index
//! linearization: grouping any run of adjacent indices is a reshape that
//! leaves the data untouched, and grouping all of them is `vec`.
//!
//! Indices and mode numbers are 1-based at this API boundary.

use std::fmt;

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

/// Dimensions `(n1, ..., nk)` of a tensor. Every dimension is at least one
/// and the element count fits in `usize`.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct Shape {
    dims: Vec<usize>,
    numel: usize,
}

impl Shape {
    pub fn new(dims: &[usize]) -> Result<Self> {
        if dims.is_empty() {
            return Err(Error::EmptyInput("shape has no modes".into()));
        }
        if let Some(pos) = dims.iter().position(|&d| d == 0) {
            return Err(Error::InvalidDimension(format!(
                "mode {} has dimension 0 in {dims:?}",
                pos + 1
            )));
        }
        let numel = checked_product(dims)?;
        Ok(Shape {
            dims: dims.to_vec(),
            numel,
        })
    }

    #[inline]
    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    #[inline]
    pub fn order(&self) -> usize {
        self.dims.len()
    }

    #[inline]
    pub fn numel(&self) -> usize {
        self.numel
    }

    /// Column-major strides: `strides[r] = n1 * ... * n_{r-1}`.
    pub fn strides(&self) -> Vec<usize> {
        let mut strides = Vec::with_capacity(self.dims.len());
        let mut acc = 1;
        for &d in &self.dims {
            strides.push(acc);
            acc *= d;
        }
        strides
    }

    pub fn is_cubical(&self) -> bool {
        self.dims.windows(2).all(|w| w[0] == w[1])
    }
}

impl fmt::Debug for Shape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(&self.dims, f)
    }
}

impl fmt::Display for Shape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.dims.iter().map(|d| d.to_string()).collect();
        f.write_str(&parts.join("x"))
    }
}

/// Product of `dims` with overflow reported as an error instead of wrapping.
pub fn checked_product(dims: &[usize]) -> Result<usize> {
    dims.iter().try_fold(1usize, |acc, &d| {
        acc.checked_mul(d)
            .ok_or_else(|| Error::SizeOverflow(format!("element count of {dims:?}")))
    })
}

/// Sum of `a[i] * b[i]` by recursive pairwise halving.
pub(crate) fn pairwise_dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    const BLOCK: usize = 32;
    if a.len() <= BLOCK {
        let mut s = 0.0;
        for (x, y) in a.iter().zip(b) {
            s += x * y;
        }
        return s;
    }
    let mid = a.len() / 2;
    pairwise_dot(&a[..mid], &b[..mid]) + pairwise_dot(&a[mid..], &b[mid..])
}

/// A dense real k-way tensor.
#[derive(Clone, PartialEq)]
pub struct DenseTensor {
    shape: Shape,
    data: Vec<f64>,
}

impl fmt::Debug for DenseTensor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("DenseTensor")
            .field("shape", &self.shape)
            .field("data", &self.data)
            .finish()
    }
}

impl DenseTensor {
    /// Wraps `data` (already in vec order) with the given dimensions.
    pub fn new(dims: &[usize], data: Vec<f64>) -> Result<Self> {
        let shape = Shape::new(dims)?;
        if data.len() != shape.numel() {
            return Err(Error::ShapeMismatch(format!(
                "shape {shape} needs {} values, got {}",
                shape.numel(),
                data.len()
            )));
        }
        Ok(DenseTensor { shape, data })
    }

    pub fn from_shape(shape: Shape, data: Vec<f64>) -> Result<Self> {
        if data.len() != shape.numel() {
            return Err(Error::ShapeMismatch(format!(
                "shape {shape} needs {} values, got {}",
                shape.numel(),
                data.len()
            )));
        }
        Ok(DenseTensor { shape, data })
    }

    pub fn zeros(dims: &[usize]) -> Result<Self> {
        let shape = Shape::new(dims)?;
        let data = vec![0.0; shape.numel()];
        Ok(DenseTensor { shape, data })
    }

    /// Builds a tensor from a function of the 0-based multi-index.
    pub fn from_fn(dims: &[usize], mut f: impl FnMut(&[usize]) -> f64) -> Result<Self> {
        let shape = Shape::new(dims)?;
        let mut data = Vec::with_capacity(shape.numel());
        let mut idx = vec![0usize; dims.len()];
        for _ in 0..shape.numel() {
            data.push(f(&idx));
            advance(&mut idx, dims);
        }
        Ok(DenseTensor { shape, data })
    }

    /// Entries drawn independently from the standard normal distribution.
    pub fn random_normal<R: Rng + ?Sized>(dims: &[usize], rng: &mut R) -> Result<Self> {
        let shape = Shape::new(dims)?;
        let data = (0..shape.numel())
            .map(|_| rng.sample::<f64, _>(StandardNormal))
            .collect();
        Ok(DenseTensor { shape, data })
    }

    /// An `rows x cols` matrix from row slices, for literals.
    pub fn from_rows(rows: &[&[f64]]) -> Result<Self> {
        let m = rows.len();
        let n = rows.first().map_or(0, |r| r.len());
        if rows.iter().any(|r| r.len() != n) {
            return Err(Error::ShapeMismatch("ragged rows".into()));
        }
        DenseTensor::from_fn(&[m, n], |ix| rows[ix[0]][ix[1]])
    }

    pub fn identity(n: usize) -> Result<Self> {
        DenseTensor::from_fn(&[n, n], |ix| if ix[0] == ix[1] { 1.0 } else { 0.0 })
    }

    /// A length-n vector as an order-1 tensor.
    pub fn vector(values: &[f64]) -> Result<Self> {
        DenseTensor::new(&[values.len()], values.to_vec())
    }

    #[inline]
    pub fn shape(&self) -> &Shape {
        &self.shape
    }

    #[inline]
    pub fn dims(&self) -> &[usize] {
        self.shape.dims()
    }

    #[inline]
    pub fn order(&self) -> usize {
        self.shape.order()
    }

    #[inline]
    pub fn numel(&self) -> usize {
        self.data.len()
    }

    /// `vec(A)`: the storage itself.
    #[inline]
    pub fn data(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    /// Linear (0-based) storage position of a 1-based multi-index.
    pub fn linear_index(&self, idx: &[usize]) -> Result<usize> {
        let dims = self.dims();
        if idx.len() != dims.len() {
            return Err(Error::ArityMismatch {
                expected: dims.len(),
                got: idx.len(),
            });
        }
        let mut pos = 0;
        let mut stride = 1;
        for (&i, &n) in idx.iter().zip(dims) {
            if i == 0 || i > n {
                return Err(Error::IndexOutOfRange {
                    index: idx.to_vec(),
                    shape: dims.to_vec(),
                });
            }
            pos += (i - 1) * stride;
            stride *= n;
        }
        Ok(pos)
    }

    /// Entry at a 1-based multi-index.
    pub fn entry(&self, idx: &[usize]) -> Result<f64> {
        Ok(self.data[self.linear_index(idx)?])
    }

    /// Regroups indices. The data is not touched.
    pub fn reshape(&self, dims: &[usize]) -> Result<DenseTensor> {
        self.clone().into_reshaped(dims)
    }

    pub fn into_reshaped(self, dims: &[usize]) -> Result<DenseTensor> {
        let shape = Shape::new(dims)?;
        if shape.numel() != self.numel() {
            return Err(Error::ShapeMismatch(format!(
                "cannot reshape {} ({} entries) into {shape} ({} entries)",
                self.shape,
                self.numel(),
                shape.numel()
            )));
        }
        Ok(DenseTensor {
            shape,
            data: self.data,
        })
    }

    /// Reorders modes: output mode `j` is input mode `perm[j]` (1-based), so
    /// `out(i_perm(1), ..., i_perm(k)) = in(i1, ..., ik)`. The output is
    /// materialized in first-index-fastest order.
    pub fn permute_modes(&self, perm: &[usize]) -> Result<DenseTensor> {
        let k = self.order();
        validate_mode_perm(perm, k)?;
        let in_strides = self.shape.strides();
        let out_dims: Vec<usize> = perm.iter().map(|&p| self.dims()[p - 1]).collect();
        let src_strides: Vec<usize> = perm.iter().map(|&p| in_strides[p - 1]).collect();
        let data = gather_strided(&self.data, &out_dims, &src_strides);
        DenseTensor::new(&out_dims, data)
    }

    /// r-mode product with a `p x n_r` matrix `u` (r is 1-based).
    pub fn mode_product(&self, r: usize, u: &DenseTensor) -> Result<DenseTensor> {
        let k = self.order();
        if r == 0 || r > k {
            return Err(Error::ShapeMismatch(format!(
                "mode {r} does not exist in an order-{k} tensor"
            )));
        }
        if u.order() != 2 {
            return Err(Error::ShapeMismatch(format!(
                "mode product needs a matrix, got order {}",
                u.order()
            )));
        }
        let n = self.dims()[r - 1];
        let (p, cols) = (u.dims()[0], u.dims()[1]);
        if cols != n {
            return Err(Error::ShapeMismatch(format!(
                "matrix has {cols} columns but mode {r} has dimension {n}"
            )));
        }
        let left: usize = self.dims()[..r - 1].iter().product();
        let right: usize = self.dims()[r..].iter().product();
        let mut out_dims = self.dims().to_vec();
        out_dims[r - 1] = p;
        let mut out = vec![0.0; left * p * right];
        let ud = u.data();
        for rt in 0..right {
            let src = &self.data[rt * left * n..(rt + 1) * left * n];
            let dst = &mut out[rt * left * p..(rt + 1) * left * p];
            for i in 0..n {
                let col = &src[i * left..(i + 1) * left];
                for j in 0..p {
                    let w = ud[j + p * i];
                    if w == 0.0 {
                        continue;
                    }
                    let row = &mut dst[j * left..(j + 1) * left];
                    for (d, s) in row.iter_mut().zip(col) {
                        *d += w * s;
                    }
                }
            }
        }
        DenseTensor::new(&out_dims, out)
    }

    pub fn frobenius_norm(&self) -> f64 {
        pairwise_dot(&self.data, &self.data).sqrt()
    }

    pub fn scale(&self, alpha: f64) -> DenseTensor {
        DenseTensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|x| alpha * x).collect(),
        }
    }

    pub fn add(&self, other: &DenseTensor) -> Result<DenseTensor> {
        self.zip_with(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &DenseTensor) -> Result<DenseTensor> {
        self.zip_with(other, |a, b| a - b)
    }

    /// `self += alpha * other`.
    pub fn axpy(&mut self, alpha: f64, other: &DenseTensor) -> Result<()> {
        self.require_same_shape(other)?;
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += alpha * b;
        }
        Ok(())
    }

    /// Largest absolute entrywise difference.
    pub fn max_abs_diff(&self, other: &DenseTensor) -> Result<f64> {
        self.require_same_shape(other)?;
        Ok(self
            .data
            .iter()
            .zip(&other.data)
            .fold(0.0, |m, (a, b)| f64::max(m, (a - b).abs())))
    }

    fn zip_with(&self, other: &DenseTensor, f: impl Fn(f64, f64) -> f64) -> Result<DenseTensor> {
        self.require_same_shape(other)?;
        Ok(DenseTensor {
            shape: self.shape.clone(),
            data: self.data.iter().zip(&other.data).map(|(&a, &b)| f(a, b)).collect(),
        })
    }

    fn require_same_shape(&self, other: &DenseTensor) -> Result<()> {
        if self.shape != other.shape {
            return Err(Error::ShapeMismatch(format!(
                "{} vs {}",
                self.shape, other.shape
            )));
        }
        Ok(())
    }

    /// Appends singleton modes until the order is `k`.
    pub fn pad_to_order(&self, k: usize) -> Result<DenseTensor> {
        if k < self.order() {
            return Err(Error::ShapeMismatch(format!(
                "cannot pad order {} down to {k}",
                self.order()
            )));
        }
        let mut dims = self.dims().to_vec();
        dims.resize(k, 1);
        self.reshape(&dims)
    }
}

/// Inner product `vec(a)^T vec(b)`.
pub fn inner(a: &DenseTensor, b: &DenseTensor) -> Result<f64> {
    a.require_same_shape(b)?;
    Ok(pairwise_dot(a.data(), b.data()))
}

/// Rank-1 tensor `v1 ∘ v2 ∘ ... ∘ vd`.
pub fn outer_rank1<V: AsRef<[f64]>>(vectors: &[V]) -> Result<DenseTensor> {
    if vectors.is_empty() {
        return Err(Error::EmptyInput("no vectors for outer product".into()));
    }
    if vectors.iter().any(|v| v.as_ref().is_empty()) {
        return Err(Error::EmptyInput("empty vector in outer product".into()));
    }
    let dims: Vec<usize> = vectors.iter().map(|v| v.as_ref().len()).collect();
    let shape = Shape::new(&dims)?;
    let mut data = Vec::with_capacity(shape.numel());
    data.extend_from_slice(vectors[0].as_ref());
    for v in &vectors[1..] {
        let prev = std::mem::take(&mut data);
        data.reserve(prev.len() * v.as_ref().len());
        for &x in v.as_ref() {
            data.extend(prev.iter().map(|&p| p * x));
        }
    }
    DenseTensor::from_shape(shape, data)
}

/// Plain Kronecker product of two vectors: the right operand's index runs
/// fastest.
pub(crate) fn vec_kron(left: &[f64], right: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(left.len() * right.len());
    for &b in left {
        out.extend(right.iter().map(|&c| b * c));
    }
    out
}

/// Tensor Kronecker product `B ⊗ C` of two equal-order tensors.
///
/// The result has dimensions `(n1*m1, ..., nk*mk)` and
/// `A[[i1 i_{k+1}], ..., [ik i_{2k}]] = B[i_{k+1}, ..., i_{2k}] * C[i1, ..., ik]`:
/// the right operand's index is the fast digit of every grouped index.
/// Computed as `vec(B) ⊗ vec(C)` followed by a reshape and a mode permutation.
pub fn kron(b: &DenseTensor, c: &DenseTensor) -> Result<DenseTensor> {
    let k = b.order();
    if c.order() != k {
        return Err(Error::OrderMismatch {
            left: k,
            right: c.order(),
        });
    }
    let flat = vec_kron(b.data(), c.data());
    let mut split = c.dims().to_vec();
    split.extend_from_slice(b.dims());
    let stacked = DenseTensor::new(&split, flat)?;
    let perm: Vec<usize> = (1..=k).flat_map(|r| [r, r + k]).collect();
    let interleaved = stacked.permute_modes(&perm)?;
    let dims: Vec<usize> = (0..k).map(|r| b.dims()[r] * c.dims()[r]).collect();
    interleaved.into_reshaped(&dims)
}

/// Left fold `((F1 ⊗ F2) ⊗ F3) ⊗ ...` over `factors` in the given order.
pub fn kron_chain(factors: &[&DenseTensor]) -> Result<DenseTensor> {
    let (first, rest) = factors
        .split_first()
        .ok_or_else(|| Error::EmptyInput("no factors for Kronecker chain".into()))?;
    let mut acc = (*first).clone();
    for f in rest {
        acc = kron(&acc, f)?;
    }
    Ok(acc)
}

pub(crate) fn validate_mode_perm(perm: &[usize], k: usize) -> Result<()> {
    if perm.len() != k {
        return Err(Error::BadPermutation(format!(
            "{perm:?} has {} entries for an order-{k} tensor",
            perm.len()
        )));
    }
    let mut seen = vec![false; k];
    for &p in perm {
        if p == 0 || p > k || seen[p - 1] {
            return Err(Error::BadPermutation(format!(
                "{perm:?} is not a permutation of 1..={k}"
            )));
        }
        seen[p - 1] = true;
    }
    Ok(())
}

/// Odometer increment of a 0-based multi-index, first index fastest.
#[inline]
pub(crate) fn advance(idx: &mut [usize], dims: &[usize]) {
    for (i, &n) in idx.iter_mut().zip(dims) {
        *i += 1;
        if *i < n {
            return;
        }
        *i = 0;
    }
}

/// Walks `out_dims` in first-index-fastest order, reading `src` with the
/// given per-output-mode strides.
pub(crate) fn gather_strided<T: Copy>(src: &[T], out_dims: &[usize], src_strides: &[usize]) -> Vec<T> {
    let total: usize = out_dims.iter().product();
    let mut out = Vec::with_capacity(total);
    if total == 0 {
        return out;
    }
    let k = out_dims.len();
    let mut idx = vec![0usize; k];
    let mut pos = 0usize;
    let inner_n = out_dims[0];
    let inner_s = src_strides[0];
    loop {
        for t in 0..inner_n {
            out.push(src[pos + t * inner_s]);
        }
        // carry into modes 2..k
        let mut r = 1;
        loop {
            if r == k {
                return out;
            }
            idx[r] += 1;
            pos += src_strides[r];
            if idx[r] < out_dims[r] {
                break;
            }
            pos -= idx[r] * src_strides[r];
            idx[r] = 0;
            r += 1;
        }
    }
}
