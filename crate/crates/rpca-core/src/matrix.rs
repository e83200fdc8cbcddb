//! Dense matrix conventions shared by every solver.
//!
//! Matrices are row-major `ndarray` arrays of `f64`. Vectorization, where a
//! solver reasons about `vec[Z]`, is always column-stacking: the flat index of
//! entry `(i, j)` of an `n x m` matrix is `i + j * n`. Constructors reject
//! non-finite entries; everything downstream assumes finite data.

use ndarray::Array2;

use crate::error::{Error, Result};

pub type Matrix = Array2<f64>;

/// Builds an `rows x cols` matrix from row-major data, validating shape and
/// finiteness.
pub fn matrix_from_rows(rows: usize, cols: usize, data: Vec<f64>) -> Result<Matrix> {
    if rows == 0 || cols == 0 {
        return Err(Error::dim(format!(
            "matrix dimensions must be positive, got {rows}x{cols}"
        )));
    }
    if data.len() != rows * cols {
        return Err(Error::dim(format!(
            "expected {} entries for a {rows}x{cols} matrix, got {}",
            rows * cols,
            data.len()
        )));
    }
    let m = Array2::from_shape_vec((rows, cols), data)
        .map_err(|e| Error::dim(format!("shape error: {e}")))?;
    validate_finite(&m)?;
    Ok(m)
}

/// Rejects NaN or infinite entries.
pub fn validate_finite(m: &Matrix) -> Result<()> {
    for (idx, v) in m.indexed_iter() {
        if !v.is_finite() {
            return Err(Error::numerical(format!(
                "non-finite entry {v} at ({}, {})",
                idx.0, idx.1
            )));
        }
    }
    Ok(())
}

pub fn fro_norm(m: &Matrix) -> f64 {
    m.iter().map(|v| v * v).sum::<f64>().sqrt()
}

pub fn fro_dist(a: &Matrix, b: &Matrix) -> f64 {
    debug_assert_eq!(a.dim(), b.dim());
    a.iter()
        .zip(b.iter())
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

/// Frobenius inner product `<a, b>`.
pub fn fro_dot(a: &Matrix, b: &Matrix) -> f64 {
    debug_assert_eq!(a.dim(), b.dim());
    a.iter().zip(b.iter()).map(|(x, y)| x * y).sum()
}

/// Relative Frobenius change `|new - old| / |old|`.
///
/// A zero reference maps to 0 when the new iterate is also zero and infinity
/// otherwise, so convergence checks behave sensibly from a zero start.
pub fn rel_change(new: &Matrix, old: &Matrix) -> f64 {
    let denom = fro_norm(old);
    let num = fro_dist(new, old);
    if denom == 0.0 {
        if num == 0.0 {
            0.0
        } else {
            f64::INFINITY
        }
    } else {
        num / denom
    }
}
