//! Tensor Kronecker product singular value decomposition.
//!
//! A real k-way tensor is written as a sum of weighted Kronecker products
//! of `d` smaller k-way tensors with unit Frobenius norm:
//!
//! ```text
//! A = sum_j sigma_j  A(d)_j ⊗ ... ⊗ A(1)_j
//! ```
//!
//! See [`tkpsvd::tkpsvd`] for the entry point and [`structure`] for the
//! symmetry maps used to check which structure the factors inherit.

pub mod error;
pub mod io;
pub mod metrics;
pub mod pd;
pub mod perm;
pub mod structure;
pub mod svd;
pub mod tensor;
pub mod tkpsvd;

pub use error::{Error, Result};
pub use pd::Backend;
pub use perm::PermutationMap;
pub use tensor::{inner, kron, kron_chain, outer_rank1, DenseTensor, Shape};
pub use tkpsvd::{FactorGrid, TkpsvdResult};
