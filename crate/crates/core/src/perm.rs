//! Permutations of vector positions stored as index maps.
//!
//! A [`PermutationMap`] `P` acts on a vector by gathering:
//! `(P x)[p] = x[map[p]]`. This is the row structure of a permutation matrix
//! (row `p` has its single one in column `map[p]`) and Matlab's `x(map)`.
//! Positions are 0-based in memory and 1-based when serialized.

use std::fmt;

use crate::error::{Error, Result};

#[derive(Clone, PartialEq, Eq, Hash)]
pub struct PermutationMap {
    map: Vec<usize>,
}

impl fmt::Debug for PermutationMap {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_list().entries(self.map.iter().map(|p| p + 1)).finish()
    }
}

impl PermutationMap {
    pub fn identity(n: usize) -> Self {
        PermutationMap {
            map: (0..n).collect(),
        }
    }

    /// From a 0-based source list, validating bijectivity.
    pub fn from_zero_based(map: Vec<usize>) -> Result<Self> {
        let n = map.len();
        let mut seen = vec![false; n];
        for &p in &map {
            if p >= n || seen[p] {
                return Err(Error::BadPermutation(format!(
                    "position {} is repeated or out of range for size {n}",
                    p + 1
                )));
            }
            seen[p] = true;
        }
        Ok(PermutationMap { map })
    }

    /// From a 1-based source list as it appears in files and literals.
    pub fn from_one_based(map: &[usize]) -> Result<Self> {
        if map.contains(&0) {
            return Err(Error::BadPermutation("1-based map contains 0".into()));
        }
        PermutationMap::from_zero_based(map.iter().map(|p| p - 1).collect())
    }

    /// Internal constructor for maps that are bijective by construction.
    pub(crate) fn from_trusted(map: Vec<usize>) -> Self {
        debug_assert!(PermutationMap::from_zero_based(map.clone()).is_ok());
        PermutationMap { map }
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.map.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }

    /// 0-based source position feeding target position `p`.
    #[inline]
    pub fn source(&self, p: usize) -> usize {
        self.map[p]
    }

    #[inline]
    pub fn as_slice(&self) -> &[usize] {
        &self.map
    }

    pub fn to_one_based(&self) -> Vec<usize> {
        self.map.iter().map(|p| p + 1).collect()
    }

    pub fn is_identity(&self) -> bool {
        self.map.iter().enumerate().all(|(i, &p)| i == p)
    }

    pub fn inverse(&self) -> PermutationMap {
        let mut inv = vec![0; self.map.len()];
        for (p, &s) in self.map.iter().enumerate() {
            inv[s] = p;
        }
        PermutationMap { map: inv }
    }

    /// Matrix product `self * rhs`: applying the result equals applying `rhs`
    /// first and then `self`.
    pub fn compose(&self, rhs: &PermutationMap) -> Result<PermutationMap> {
        if self.len() != rhs.len() {
            return Err(Error::ShapeMismatch(format!(
                "permutation sizes {} and {} differ",
                self.len(),
                rhs.len()
            )));
        }
        Ok(PermutationMap {
            map: self.map.iter().map(|&p| rhs.map[p]).collect(),
        })
    }

    /// Kronecker product `self ⊗ rhs` of the permutation matrices; the
    /// right operand acts on the fast digit.
    pub fn kron(&self, rhs: &PermutationMap) -> PermutationMap {
        let n = rhs.len();
        let mut map = Vec::with_capacity(self.len() * n);
        for &hi in &self.map {
            map.extend(rhs.map.iter().map(|&lo| lo + n * hi));
        }
        PermutationMap { map }
    }

    /// Gathers `x` through the map.
    pub fn apply<T: Copy>(&self, x: &[T]) -> Result<Vec<T>> {
        if x.len() != self.len() {
            return Err(Error::ShapeMismatch(format!(
                "permutation of size {} applied to a vector of length {}",
                self.len(),
                x.len()
            )));
        }
        Ok(self.map.iter().map(|&p| x[p]).collect())
    }

    /// Nonzero pattern of the permutation matrix as 1-based `(row, col)` pairs.
    pub fn sparse_pattern(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.map.iter().enumerate().map(|(r, &c)| (r + 1, c + 1))
    }

    /// Dense 0/1 matrix (row-major), only for small maps.
    pub fn to_dense(&self) -> Result<Vec<Vec<u8>>> {
        const MAX_DENSE: usize = 4096;
        if self.len() > MAX_DENSE {
            return Err(Error::SizeOverflow(format!(
                "dense permutation matrices are limited to size {MAX_DENSE}, got {}",
                self.len()
            )));
        }
        Ok(self
            .map
            .iter()
            .map(|&c| {
                let mut row = vec![0u8; self.len()];
                row[c] = 1;
                row
            })
            .collect())
    }
}
