use nalgebra::{DMatrix, SVD};

use crate::error::{Error, Result};

/// Numerical rank of a matrix from its full singular value spectrum.
#[derive(Debug, Clone, PartialEq)]
pub struct RankReport {
    pub rows: usize,
    pub cols: usize,
    pub estimated_rank: usize,
    /// Smallest of the `min(rows, cols)` singular values.
    pub sigma_min: f64,
    pub sigma_max: f64,
    /// `0.5 * sqrt(rows + cols + 1) * sigma_max * machine_eps`.
    pub threshold: f64,
    pub machine_eps: f64,
}

impl RankReport {
    pub fn is_full_rank(&self) -> bool {
        self.estimated_rank == self.rows.min(self.cols)
    }

    pub const CSV_HEADER: [&'static str; 7] = [
        "rows",
        "cols",
        "estimated_rank",
        "sigma_min",
        "sigma_max",
        "threshold",
        "machine_eps",
    ];

    pub fn csv_record(&self) -> Vec<String> {
        vec![
            self.rows.to_string(),
            self.cols.to_string(),
            self.estimated_rank.to_string(),
            format!("{:e}", self.sigma_min),
            format!("{:e}", self.sigma_max),
            format!("{:e}", self.threshold),
            format!("{:e}", self.machine_eps),
        ]
    }
}

/// All `min(m, n)` singular values, descending.
pub fn singular_values(a: &DMatrix<f64>) -> Result<Vec<f64>> {
    if a.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numeric("matrix has non-finite entries".into()));
    }
    if a.is_empty() {
        return Ok(Vec::new());
    }
    // Work on the tall orientation; the spectrum is the same.
    let tall = if a.nrows() >= a.ncols() {
        a.clone()
    } else {
        a.transpose()
    };
    let max_iter = 200 * tall.ncols().max(10);
    let svd = SVD::try_new(tall, false, false, f64::EPSILON, max_iter)
        .ok_or_else(|| Error::Numeric(format!("SVD of {}x{} matrix did not converge", a.nrows(), a.ncols())))?;
    let mut s: Vec<f64> = svd.singular_values.iter().copied().collect();
    s.sort_by(|x, y| y.total_cmp(x));
    Ok(s)
}

/// Count singular values above `0.5 * sqrt(m + n + 1) * sigma_max * eps`.
pub fn estimate_rank(a: &DMatrix<f64>) -> Result<RankReport> {
    let s = singular_values(a)?;
    let (rows, cols) = a.shape();
    let eps = f64::EPSILON;
    let sigma_max = s.first().copied().unwrap_or(0.0);
    let sigma_min = s.last().copied().unwrap_or(0.0);
    let threshold = 0.5 * ((rows + cols + 1) as f64).sqrt() * sigma_max * eps;
    let estimated_rank = s.iter().filter(|&&v| v > threshold).count();
    Ok(RankReport {
        rows,
        cols,
        estimated_rank,
        sigma_min,
        sigma_max,
        threshold,
        machine_eps: eps,
    })
}
