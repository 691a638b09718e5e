use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{
    gaussian, independence_construction_detailed, min_norm_solve, with_output_layer,
    ConstructionParams,
};
use crate::activation::ActivationKind;
use crate::analysis::estimate_rank;
use crate::assumptions::check_architecture;
use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::network::{LayerParams, NetworkSpec, Params};

/// Which of the three constructions applies, by distance of the wide layer to the output.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ZeroLossCase {
    /// `k = L - 1`.
    LastHidden,
    /// `k = L - 2`.
    SecondToLast,
    /// `k <= L - 3`.
    Deep,
}

impl ZeroLossCase {
    pub fn of(depth: usize, k: usize) -> Self {
        match depth - k {
            1 => ZeroLossCase::LastHidden,
            2 => ZeroLossCase::SecondToLast,
            _ => ZeroLossCase::Deep,
        }
    }
}

const MAX_RANK_DRAWS: usize = 16;

/// Parameters for all layers with `F_L = Y` exactly (up to rounding), built through a
/// rank-`N` wide layer `k`.
pub fn zero_loss_construction(
    spec: &NetworkSpec,
    data: &Dataset,
    k: usize,
    cfg: &ConstructionParams,
) -> Result<Params> {
    cfg.validate()?;
    let (labels, z) = match (&data.labels, &data.embedding) {
        (Some(l), Some(z)) => (l, z),
        _ => {
            return Err(Error::structure(
                "zero-loss construction needs class labels and an embedding",
            ))
        }
    };
    let n = data.len();
    let depth = spec.depth();
    check_architecture(spec, k, n)?;
    if !spec.layer(k + 1)?.is_dense() {
        return Err(Error::UnsupportedLayer {
            layer: k + 1,
            reason: "the layer above the wide layer must be fully connected".into(),
        });
    }
    let m = z.nrows();
    if spec.output_width() != m {
        return Err(Error::structure(format!(
            "output width {} differs from {m} classes",
            spec.output_width()
        )));
    }
    // U_k never enters the error chain above the wide layer, so only conditioning counts
    let wide_cfg = ConstructionParams {
        condition_gain: 1.0,
        ..cfg.clone()
    };
    let wide = independence_construction_detailed(spec, &data.x, k, &wide_cfg)?;
    let mut params = wide.params;
    let fk = wide.features;
    // separate stream so the draws below do not depend on how many filters were resampled
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x005e_ed0f_7a11);

    match ZeroLossCase::of(depth, k) {
        ZeroLossCase::LastHidden => {
            let w = min_norm_solve(&fk, &data.y)?;
            Ok(with_output_layer(params, w))
        }
        ZeroLossCase::SecondToLast => {
            let act = activation(spec, depth - 1)?;
            let a = full_rank_targets(m, spec.width(depth - 1), act, &mut rng)?;
            params.layers.push(Some(collapse_layer(&fk, &a, labels, act)?));
            Ok(with_output_layer(params, min_norm_solve(&a, z)?))
        }
        ZeroLossCase::Deep => {
            let act = activation(spec, k + 1)?;
            let e = distinct_targets(m, spec.width(k + 1), act, &mut rng)?;
            params.layers.push(Some(collapse_layer(&fk, &e, labels, act)?));
            // layers k+2 .. L-1 make the m class rows of E independent
            let tail = spec.tail(k + 2)?;
            let tail_cfg = ConstructionParams {
                seed: rng.gen(),
                ..cfg.clone()
            };
            let sub = independence_construction_detailed(&tail, &e, tail.depth() - 1, &tail_cfg)?;
            params.layers.extend(sub.params.layers);
            Ok(with_output_layer(params, min_norm_solve(&sub.features, z)?))
        }
    }
}

fn activation(spec: &NetworkSpec, l: usize) -> Result<ActivationKind> {
    let act = spec.layer(l)?.activation().expect("no pooling");
    act.inverse(act.eval(0.5))?;
    Ok(act)
}

/// Dense layer with zero bias sending `F_k` row `i` to row `labels[i]` of `targets`.
fn collapse_layer(
    fk: &DMatrix<f64>,
    targets: &DMatrix<f64>,
    labels: &[usize],
    act: ActivationKind,
) -> Result<LayerParams> {
    let mut pre = DMatrix::zeros(fk.nrows(), targets.ncols());
    for (i, &c) in labels.iter().enumerate() {
        for j in 0..targets.ncols() {
            pre[(i, j)] = act.inverse(targets[(c, j)])?;
        }
    }
    let w = min_norm_solve(fk, &pre)?;
    Ok(LayerParams::new(w, DVector::zeros(targets.ncols())))
}

fn interval(act: ActivationKind) -> Result<(f64, f64)> {
    act.target_interval()
        .ok_or_else(|| Error::Range(format!("{act} has no invertible target interval")))
}

/// `m x width` matrix of rank `m` with entries inside the target interval.
fn full_rank_targets(
    m: usize,
    width: usize,
    act: ActivationKind,
    rng: &mut ChaCha8Rng,
) -> Result<DMatrix<f64>> {
    let (lo, hi) = interval(act)?;
    for _ in 0..MAX_RANK_DRAWS {
        let a = gaussian(m, width, rng).map(|t| lo + (hi - lo) * ActivationKind::Sigmoid.eval(t));
        if estimate_rank(&a)?.estimated_rank == m {
            return Ok(a);
        }
    }
    Err(Error::ConstructionFailed(format!("no rank-{m} target matrix found")))
}

/// `m x width` matrix with pairwise distinct entries inside the target interval: a
/// jittered arithmetic progression in random order.
fn distinct_targets(
    m: usize,
    width: usize,
    act: ActivationKind,
    rng: &mut ChaCha8Rng,
) -> Result<DMatrix<f64>> {
    let (lo, hi) = interval(act)?;
    let count = m * width;
    let step = (hi - lo) / count as f64;
    let mut values: Vec<f64> = (0..count)
        .map(|s| lo + step * (s as f64 + 0.5 + rng.gen_range(-0.25..0.25)))
        .collect();
    values.shuffle(rng);
    let e = DMatrix::from_vec(m, width, values);
    let mut sorted: Vec<f64> = e.iter().copied().collect();
    sorted.sort_by(f64::total_cmp);
    if sorted.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::ConstructionFailed("target entries are not distinct".into()));
    }
    Ok(e)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn case_by_depth() {
        assert_eq!(ZeroLossCase::of(4, 3), ZeroLossCase::LastHidden);
        assert_eq!(ZeroLossCase::of(4, 2), ZeroLossCase::SecondToLast);
        assert_eq!(ZeroLossCase::of(5, 1), ZeroLossCase::Deep);
    }

    #[test]
    fn targets_inside_interval() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let e = distinct_targets(3, 7, ActivationKind::Sigmoid, &mut rng).unwrap();
        assert!(e.iter().all(|&v| v > 0.2 && v < 0.8));
        let a = full_rank_targets(3, 5, ActivationKind::softplus(10.0), &mut rng).unwrap();
        assert!(a.iter().all(|&v| v > 0.5 && v < 1.5));
        assert!(distinct_targets(2, 2, ActivationKind::Relu, &mut rng).is_err());
    }
}
