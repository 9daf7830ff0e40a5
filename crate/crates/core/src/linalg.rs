//! Dense solves for the small systems that show up in policy evaluation.

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Relative residual above which a solve is rejected.
pub const SOLVE_RESIDUAL_TOL: f64 = 1e-8;

/// Solves `A X = B` by LU with partial pivoting. The solution is rejected
/// with [`Error::SingularSystem`] when `‖AX - B‖∞ > 1e-8 (1 + ‖B‖∞)`.
pub fn solve(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    debug_assert_eq!(a.nrows(), a.ncols());
    debug_assert_eq!(a.nrows(), b.nrows());
    if a.nrows() == 0 {
        return Ok(b.clone());
    }
    let lu = a.clone().lu();
    let x = lu.solve(b).ok_or(Error::SingularSystem {
        residual: f64::INFINITY,
    })?;
    let residual = (a * &x - b).amax();
    if !residual.is_finite() || residual > SOLVE_RESIDUAL_TOL * (1.0 + b.amax()) {
        return Err(Error::SingularSystem { residual });
    }
    Ok(x)
}
