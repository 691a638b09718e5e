//! Weight synthesis: distinct-feature transport, rank-`N` features at a wide layer,
//! exact interpolation and exact zero-loss parameters.

mod expressivity;
mod gram;
mod independence;
mod transport;
mod zero_loss;

pub use expressivity::{expressivity_fit, with_output_layer};
pub use gram::{min_norm_solve, GRAM_RATIO_FLOOR};
pub use independence::{independence_construction, independence_construction_detailed, IndependentFeatures};
pub use transport::{transport_construction, ENTRY_GAP};
pub use zero_loss::{zero_loss_construction, ZeroLossCase};

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::activation::ActivationKind;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct ConstructionParams {
    /// Scales tried in order for the wide layer; strictly increasing and positive.
    pub alpha_schedule: Vec<f64>,
    /// Offset at the wide layer; `None` picks the activation's default.
    pub beta: Option<f64>,
    /// Smallest accepted singular value of the selected `N x N` submatrix.
    pub sigma_min_floor: f64,
    pub seed: u64,
    /// Filter matrices drawn per layer before giving up.
    pub resample_budget: usize,
    /// After the first admissible `alpha`, keep stepping along the schedule while
    /// `sigma_min / sigma_max` of `F_k` grows by more than this factor per step.
    /// `f64::INFINITY` stops at the first admissible scale.
    pub condition_gain: f64,
}

impl Default for ConstructionParams {
    fn default() -> Self {
        ConstructionParams {
            alpha_schedule: (0..=20).map(|e| 2f64.powi(e)).collect(),
            beta: None,
            sigma_min_floor: 1e-10,
            seed: 0,
            resample_budget: 16,
            condition_gain: 2.0,
        }
    }
}

impl ConstructionParams {
    pub fn with_seed(seed: u64) -> Self {
        ConstructionParams {
            seed,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.alpha_schedule.is_empty() {
            return Err(Error::structure("alpha schedule is empty"));
        }
        if self.alpha_schedule.iter().any(|a| !(*a > 0.0) || !a.is_finite()) {
            return Err(Error::structure("alpha schedule must be positive and finite"));
        }
        if self.alpha_schedule.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::structure("alpha schedule must be strictly increasing"));
        }
        if !(self.sigma_min_floor > 0.0) {
            return Err(Error::structure("sigma_min_floor must be positive"));
        }
        if self.resample_budget == 0 {
            return Err(Error::structure("resample budget must be at least 1"));
        }
        if !(self.condition_gain >= 1.0) {
            return Err(Error::structure("condition_gain must be at least 1"));
        }
        if let Some(b) = self.beta {
            if !b.is_finite() {
                return Err(Error::structure("beta must be finite"));
            }
        }
        Ok(())
    }

    /// Offset for activation `act`; rejected when `act(beta) = 0`.
    pub fn beta_for(&self, act: ActivationKind) -> Result<f64> {
        let beta = self.beta.unwrap_or_else(|| act.default_beta());
        if act.eval(beta) == 0.0 {
            return Err(Error::Assumption(format!("{act}({beta}) = 0; pick another beta")));
        }
        Ok(beta)
    }
}

pub(crate) fn gaussian<R: Rng>(rows: usize, cols: usize, rng: &mut R) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| rng.sample(StandardNormal))
}

/// Entries of different rows that come closer than `tol`, as `(row_a, row_b, gap)`.
///
/// Sorting makes this exact: if two entries of different rows are within `tol`, some
/// adjacent pair in sorted order with different rows is too.
pub(crate) fn closest_cross_row_gap(values: &[(f64, usize)]) -> Option<(usize, usize, f64)> {
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut best: Option<(usize, usize, f64)> = None;
    for w in sorted.windows(2) {
        if w[0].1 != w[1].1 {
            let gap = w[1].0 - w[0].0;
            if best.is_none_or(|b| gap < b.2) {
                best = Some((w[0].1, w[1].1, gap));
            }
        }
    }
    best
}

/// Tag every entry of `m` with its row.
pub(crate) fn tagged_entries(m: &DMatrix<f64>) -> Vec<(f64, usize)> {
    let mut out = Vec::with_capacity(m.len());
    for j in 0..m.ncols() {
        for i in 0..m.nrows() {
            out.push((m[(i, j)], i));
        }
    }
    out
}
