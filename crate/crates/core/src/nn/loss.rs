//! Loss functions and their gradients.
//!
//! Normalization conventions:
//! - [`mse`] sums squared errors over features and averages over samples (rows), so a single
//!   sample with error `[1, 1]` costs `2.0`.
//! - [`cross_entropy`] is `−Σ_c p·ln q` per row, averaged over rows.

use super::Matrix;
use crate::error::{Error, Result};

/// Lower clamp applied to `q` before taking logarithms.
pub const LOG_EPSILON: f64 = 1e-12;

/// Tolerance on row sums for a row to count as a distribution.
pub const DISTRIBUTION_TOLERANCE: f64 = 1e-6;

/// Mean over rows of the per-row sum of squared errors.
pub fn mse(pred: &Matrix, target: &Matrix) -> Result<f64> {
    pred.check_same_shape(target, "mse")?;
    if pred.rows() == 0 {
        return Ok(0.0);
    }
    let sum: f64 = pred
        .as_slice()
        .iter()
        .zip(target.as_slice())
        .map(|(p, t)| (p - t) * (p - t))
        .sum();
    Ok(sum / pred.rows() as f64)
}

/// d[`mse`]/d pred.
pub fn mse_grad(pred: &Matrix, target: &Matrix) -> Result<Matrix> {
    pred.check_same_shape(target, "mse_grad")?;
    let scale = 2.0 / pred.rows().max(1) as f64;
    let mut g = pred.sub(target)?;
    g.scale_in_place(scale);
    Ok(g)
}

pub fn check_distributions(m: &Matrix, what: &str) -> Result<()> {
    for (r, row) in m.iter_rows().enumerate() {
        let sum: f64 = row.iter().sum();
        if (sum - 1.0).abs() > DISTRIBUTION_TOLERANCE || row.iter().any(|&v| !(v >= 0.0)) {
            return Err(Error::Domain(format!(
                "{what} row {r} is not a probability distribution (sum = {sum})"
            )));
        }
    }
    Ok(())
}

/// Mean over rows of `H(p_row, q_row) = −Σ_c p·ln max(q, ε)`.
pub fn cross_entropy(p: &Matrix, q: &Matrix) -> Result<f64> {
    p.check_same_shape(q, "cross_entropy")?;
    check_distributions(p, "cross_entropy target")?;
    check_distributions(q, "cross_entropy prediction")?;
    if p.rows() == 0 {
        return Ok(0.0);
    }
    let total: f64 = p
        .as_slice()
        .iter()
        .zip(q.as_slice())
        .filter(|(&pv, _)| pv > 0.0)
        .map(|(&pv, &qv)| -pv * qv.max(LOG_EPSILON).ln())
        .sum();
    Ok(total / p.rows() as f64)
}

/// d[`cross_entropy`]/d q. Entries where the clamp is active get zero gradient.
pub fn cross_entropy_grad(p: &Matrix, q: &Matrix) -> Result<Matrix> {
    p.check_same_shape(q, "cross_entropy_grad")?;
    let n = p.rows().max(1) as f64;
    let data = p
        .as_slice()
        .iter()
        .zip(q.as_slice())
        .map(|(&pv, &qv)| if qv > LOG_EPSILON { -pv / (qv * n) } else { 0.0 })
        .collect();
    Matrix::from_vec(p.rows(), p.cols(), data)
}
