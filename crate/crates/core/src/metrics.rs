//! Image quality and storage metrics.

use crate::error::{Error, Result};
use crate::tensor::DenseTensor;
use crate::tkpsvd::FactorGrid;

/// Largest 8-bit pixel value.
pub const MAX_PIXEL: f64 = 255.0;

/// Peak signal-to-noise ratio in dB for a given mean squared error;
/// `+inf` when the error is zero.
pub fn psnr_from_mse(mse: f64) -> f64 {
    if mse == 0.0 {
        return f64::INFINITY;
    }
    20.0 * MAX_PIXEL.log10() - 10.0 * mse.log10()
}

pub fn psnr(original: &DenseTensor, approx: &DenseTensor) -> Result<f64> {
    let diff = original.sub(approx)?;
    let norm = diff.frobenius_norm();
    Ok(psnr_from_mse(norm * norm / original.numel() as f64))
}

/// PSNR of the `r`-term truncation, from the discarded weights alone.
pub fn psnr_from_sigmas(sigmas: &[f64], r: usize, numel: usize) -> Result<f64> {
    if r > sigmas.len() {
        return Err(Error::IndexOutOfRange {
            index: vec![r],
            shape: vec![sigmas.len()],
        });
    }
    let tail: f64 = sigmas[r..].iter().rev().map(|s| s * s).sum();
    Ok(psnr_from_mse(tail / numel as f64))
}

/// Storage ratio when keeping the `levels` leftmost factors and `r` terms:
/// the kept resolution's entry count over `r` times the entries stored per
/// term.
pub fn compression_rate(grid: &FactorGrid, levels: usize, r: usize) -> Result<f64> {
    let d = grid.degree();
    if r == 0 {
        return Err(Error::EmptyInput("compression rate needs at least one term".into()));
    }
    if levels == 0 || levels > d {
        return Err(Error::InvalidDimension(format!("levels must lie in 1..={d}, got {levels}")));
    }
    let kept: Vec<f64> = (d - levels..d).map(|i| grid.factor_numel(i) as f64).collect();
    let full: f64 = kept.iter().product();
    let stored: f64 = kept.iter().sum();
    Ok(full / (r as f64 * stored))
}
