use nalgebra::DMatrix;

use crate::analysis::singular_values;
use crate::error::{Error, Result};

/// Smallest accepted `sigma_min / sigma_max` of the Gram matrix `F F^T`.
pub const GRAM_RATIO_FLOOR: f64 = 1e-12;

const REFINEMENT_STEPS: usize = 3;

/// Minimum-norm solution `F^T (F F^T)^{-1} Y` of `F W = Y` for full-row-rank `F`.
///
/// The Gram system is solved by Cholesky (LU as fallback), followed by a few steps of
/// iterative refinement whose residuals are taken against `F` itself.
pub fn min_norm_solve(f: &DMatrix<f64>, y: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if f.nrows() != y.nrows() {
        return Err(Error::structure(format!(
            "F has {} rows, right-hand side has {}",
            f.nrows(),
            y.nrows()
        )));
    }
    let ft = f.transpose();
    let gram = f * &ft;
    let s = singular_values(&gram)?;
    let smax = s.first().copied().unwrap_or(0.0);
    let smin = s.last().copied().unwrap_or(0.0);
    let ratio = if smax > 0.0 { smin / smax } else { 0.0 };
    if !(ratio >= GRAM_RATIO_FLOOR) {
        return Err(Error::IllConditioned { ratio });
    }
    let solve: Box<dyn Fn(&DMatrix<f64>) -> Option<DMatrix<f64>>> = match gram.clone().cholesky() {
        Some(ch) => Box::new(move |r| Some(ch.solve(r))),
        None => {
            let lu = gram.lu();
            Box::new(move |r| lu.solve(r))
        }
    };
    let singular = || Error::Numeric("Gram matrix is singular".into());
    let mut z = solve(y).ok_or_else(singular)?;
    let mut w = &ft * &z;
    for _ in 0..REFINEMENT_STEPS {
        let r = y - f * &w;
        let dz = solve(&r).ok_or_else(singular)?;
        z += dz;
        w = &ft * &z;
    }
    if w.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numeric("non-finite minimum-norm solution".into()));
    }
    Ok(w)
}
