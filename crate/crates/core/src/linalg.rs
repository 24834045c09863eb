//! Small dense linear-algebra helpers shared by the regression solvers.

use nalgebra::{DMatrix, DVector};

use crate::{Error, Result};

/// Systems with a condition number at or above this are regularized.
pub const MAX_CONDITION: f64 = 1e10;

/// Eigenvalues of the symmetric part of `a`, ascending.
pub fn symmetric_eigenvalues(a: &DMatrix<f64>) -> Vec<f64> {
    let sym = (a + a.transpose()) * 0.5;
    let mut ev: Vec<f64> = sym.symmetric_eigenvalues().iter().copied().collect();
    ev.sort_by(f64::total_cmp);
    ev
}

/// `max |lambda| / min |lambda|` over the eigenvalues shifted by `shift`.
fn condition_from_eigenvalues(eigenvalues: &[f64], shift: f64) -> f64 {
    let (lo, hi) = eigenvalues
        .iter()
        .map(|e| (e + shift).abs())
        .fold((f64::INFINITY, 0.0f64), |(lo, hi), v| (lo.min(v), hi.max(v)));
    if hi == 0.0 {
        f64::INFINITY
    } else {
        hi / lo
    }
}

pub fn condition_number(a: &DMatrix<f64>) -> f64 {
    if a.nrows() == 0 {
        return 1.0;
    }
    condition_from_eigenvalues(&symmetric_eigenvalues(a), 0.0)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RidgeSolve {
    /// Condition number of the unregularized matrix.
    pub condition: f64,
    /// Ridge `lambda` added to the diagonal (0 when none was needed).
    pub ridge: f64,
}

/// Solve `(a + lambda I) x = b` for a symmetric `a`.
///
/// `lambda` is 0 when `cond(a) < MAX_CONDITION`, otherwise the smallest
/// `ridge_floor * 2^k` that brings the shifted matrix below that threshold.
pub fn solve_with_ridge(
    a: &DMatrix<f64>,
    b: &DVector<f64>,
    ridge_floor: f64,
) -> Result<(DVector<f64>, RidgeSolve)> {
    let p = a.nrows();
    if a.ncols() != p || b.len() != p {
        return Err(Error::DimensionMismatch(format!(
            "system matrix is {}x{}, right-hand side has length {}",
            a.nrows(),
            a.ncols(),
            b.len()
        )));
    }
    if a.iter().chain(b.iter()).any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("sufficient statistics".into()));
    }
    if !(ridge_floor >= 0.0) || !ridge_floor.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "ridge floor must be nonnegative, got {ridge_floor}"
        )));
    }
    if p == 0 {
        return Ok((
            DVector::zeros(0),
            RidgeSolve {
                condition: 1.0,
                ridge: 0.0,
            },
        ));
    }

    let eigenvalues = symmetric_eigenvalues(a);
    let condition = condition_from_eigenvalues(&eigenvalues, 0.0);
    let mut ridge = 0.0;
    if !(condition < MAX_CONDITION) {
        if ridge_floor == 0.0 {
            return Err(Error::InvalidParameter(format!(
                "system has condition number {condition:e} and the ridge floor is 0"
            )));
        }
        ridge = ridge_floor;
        // doubling from any positive floor reaches cond ~ 1 long before overflow
        while !(condition_from_eigenvalues(&eigenvalues, ridge) < MAX_CONDITION) {
            ridge *= 2.0;
            if !ridge.is_finite() {
                return Err(Error::NonFinite("ridge escalation overflowed".into()));
            }
        }
    }

    let mut shifted = a.clone();
    for i in 0..p {
        shifted[(i, i)] += ridge;
    }
    let x = shifted
        .lu()
        .solve(b)
        .ok_or_else(|| Error::NonFinite("singular system after regularization".into()))?;
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("solution".into()));
    }
    Ok((x, RidgeSolve { condition, ridge }))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_system() {
        let a = DMatrix::<f64>::identity(3, 3);
        let b = DVector::from_vec(vec![1.0, 0.0, 0.0]);
        let (x, info) = solve_with_ridge(&a, &b, 1e-8).unwrap();
        assert_eq!(x, b);
        assert_eq!(info.ridge, 0.0);
        assert!((info.condition - 1.0).abs() < 1e-12);
    }

    #[test]
    fn singular_system_gets_ridge() {
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]);
        let b = DVector::from_vec(vec![2.0, 2.0]);
        let (x, info) = solve_with_ridge(&a, &b, 1e-8).unwrap();
        assert!(info.ridge > 0.0);
        assert!(x.iter().all(|v| v.is_finite()));
        // the minimum-norm solution is (1, 1); a tiny ridge lands next to it
        assert!((x[0] - 1.0).abs() < 1e-3 && (x[1] - 1.0).abs() < 1e-3);
    }

    #[test]
    fn indefinite_system_is_shifted_past_zero() {
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -1e-12]);
        let b = DVector::from_vec(vec![1.0, 1.0]);
        let (x, info) = solve_with_ridge(&a, &b, 1e-8).unwrap();
        assert!(info.ridge >= 1e-8);
        assert!(x.iter().all(|v| v.is_finite()));
    }

    #[test]
    fn rejects_non_finite() {
        let a = DMatrix::from_row_slice(1, 1, &[f64::NAN]);
        let b = DVector::from_vec(vec![1.0]);
        assert!(matches!(
            solve_with_ridge(&a, &b, 1e-8),
            Err(Error::NonFinite(_))
        ));
    }
}
