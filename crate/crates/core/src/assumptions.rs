//! Checks of the structural, data and architecture conditions the constructions and landscape results rely on.

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};

use crate::analysis::estimate_rank;
use crate::error::{Error, Result};
use crate::forward::lift_weights;
use crate::layout::PatchLayout;
use crate::network::{LayerSpec, NetworkSpec};

#[derive(Debug, Clone, PartialEq)]
pub struct ConvStructureReport {
    /// At least one sampled filter matrix lifted to a full-rank `U_k`.
    pub holds: bool,
    pub full_rank_fraction: f64,
}

/// Sample Gaussian filter matrices for layer `k` and count how many lift to full rank.
pub fn check_conv_structure(
    spec: &NetworkSpec,
    k: usize,
    trials: usize,
    seed: u64,
) -> Result<ConvStructureReport> {
    if trials == 0 {
        return Err(Error::structure("trials must be at least 1"));
    }
    let layer = spec.layer(k)?;
    let (r, c) = layer
        .filter_shape(spec.width(k - 1))
        .ok_or_else(|| Error::UnsupportedLayer {
            layer: k,
            reason: "max-pooling layers have no weight matrix".into(),
        })?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut full = 0usize;
    for _ in 0..trials {
        let w = DMatrix::from_fn(r, c, |_, _| StandardNormal.sample(&mut rng));
        let u = lift_weights(spec, k, &w)?;
        if estimate_rank(&u)?.is_full_rank() {
            full += 1;
        }
    }
    Ok(ConvStructureReport {
        holds: full > 0,
        full_rank_fraction: full as f64 / trials as f64,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct DistinctPatchReport {
    pub holds: bool,
    /// `(i, j, p, q)` with `i < j`: patch `p` of sample `i` is within `tolerance`
    /// (max-norm) of patch `q` of sample `j`. The lexicographically first such quadruple.
    pub witness: Option<(usize, usize, usize, usize)>,
}

/// Do patches of different samples stay more than `tolerance` apart in max-norm?
///
/// Exact: every pair that could violate the condition is compared. Patches are sorted by
/// their first coordinate so that only pairs whose first coordinates are within
/// `tolerance` of each other need a full comparison.
pub fn check_distinct_patches(
    x: &DMatrix<f64>,
    layout: &PatchLayout,
    tolerance: f64,
) -> Result<DistinctPatchReport> {
    if !(tolerance >= 0.0) {
        return Err(Error::structure("tolerance must be non-negative"));
    }
    if x.ncols() != layout.in_width() {
        return Err(Error::structure(format!(
            "X has {} columns, layout spans {}",
            x.ncols(),
            layout.in_width()
        )));
    }
    let n = x.nrows();
    let num_p = layout.num_patches();
    let first = |i: usize, p: usize| x[(i, layout.patch(p)[0])];
    // (first coordinate, sample, patch), sorted by coordinate
    let mut keys: Vec<(f64, usize, usize)> = (0..n)
        .flat_map(|i| (0..num_p).map(move |p| (i, p)))
        .map(|(i, p)| (first(i, p), i, p))
        .collect();
    keys.sort_by(|a, b| a.0.total_cmp(&b.0));
    // position of every (sample, patch) in the sorted order
    let mut pos = vec![0usize; n * num_p];
    for (s, &(_, i, p)) in keys.iter().enumerate() {
        pos[i * num_p + p] = s;
    }
    let close = |i: usize, p: usize, j: usize, q: usize| {
        layout
            .patch(p)
            .iter()
            .zip(layout.patch(q))
            .all(|(&a, &b)| (x[(i, a)] - x[(j, b)]).abs() <= tolerance)
    };
    for i in 0..n {
        let mut best: Option<(usize, usize, usize)> = None;
        for p in 0..num_p {
            let s = pos[i * num_p + p];
            let v = keys[s].0;
            let mut scan = |range: &mut dyn Iterator<Item = usize>| {
                for t in range {
                    let (w, j, q) = keys[t];
                    if (w - v).abs() > tolerance {
                        break;
                    }
                    if j > i && close(i, p, j, q) {
                        let cand = (j, p, q);
                        if best.is_none_or(|b| cand < b) {
                            best = Some(cand);
                        }
                    }
                }
            };
            scan(&mut (s + 1..keys.len()));
            scan(&mut (0..s).rev());
        }
        if let Some((j, p, q)) = best {
            return Ok(DistinctPatchReport {
                holds: false,
                witness: Some((i, j, p, q)),
            });
        }
    }
    Ok(DistinctPatchReport {
        holds: true,
        witness: None,
    })
}

/// `X + E` with `E` i.i.d. Gaussian of mean 0 and **variance** `variance`.
pub fn perturb_dataset(x: &DMatrix<f64>, variance: f64, seed: u64) -> Result<DMatrix<f64>> {
    if !(variance >= 0.0) || !variance.is_finite() {
        return Err(Error::structure(format!("variance must be non-negative, got {variance}")));
    }
    if variance == 0.0 {
        return Ok(x.clone());
    }
    let normal = Normal::new(0.0, variance.sqrt()).map_err(|e| Error::structure(e.to_string()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    // row-major draw order so the noise of sample i does not depend on N
    let mut out = x.clone();
    for i in 0..x.nrows() {
        for j in 0..x.ncols() {
            out[(i, j)] += normal.sample(&mut rng);
        }
    }
    Ok(out)
}

/// The conditions under which features at a wide layer `k` can be made independent:
/// layers 1 and `k` convolutional or dense, `n_k >= samples`, and hidden activations up
/// to `k` admissible.
pub fn check_wide_layer(spec: &NetworkSpec, k: usize, samples: usize) -> Result<()> {
    if k == 0 || k >= spec.depth() {
        return Err(Error::Assumption(format!(
            "wide layer must be hidden (1..={}), got {k}",
            spec.depth() - 1
        )));
    }
    for l in [1, k] {
        if spec.layer(l)?.is_pool() {
            return Err(Error::Assumption(format!(
                "layer {l} must be convolutional or fully connected"
            )));
        }
    }
    let width = spec.width(k);
    if width < samples {
        return Err(Error::Width {
            layer: k,
            width,
            samples,
        });
    }
    spec.check_hidden_activations(k)
}

/// Architecture conditions for the landscape results at wide layer `k`: no pooling,
/// `n_k >= samples`, admissible hidden activations, strictly monotone differentiable
/// activations above `k`, and widths non-increasing from `k + 1` to the output.
pub fn check_architecture(spec: &NetworkSpec, k: usize, samples: usize) -> Result<()> {
    if let Some(idx) = spec.layers().iter().position(LayerSpec::is_pool) {
        return Err(Error::Assumption(format!(
            "layer {} is max-pooling; only convolutional and fully connected layers are allowed",
            idx + 1
        )));
    }
    check_wide_layer(spec, k, samples)?;
    spec.check_hidden_activations(spec.depth() - 1)?;
    for l in k + 1..spec.depth() {
        let act = spec.layer(l)?.activation().expect("no pooling");
        if !act.is_smooth_monotone() {
            return Err(Error::Assumption(format!(
                "layer {l}: activation {act} must be strictly monotone and differentiable"
            )));
        }
    }
    let widths = spec.widths();
    if let Some(l) = (k + 1..spec.depth()).find(|&l| widths[l] < widths[l + 1]) {
        return Err(Error::Assumption(format!(
            "widths are not pyramidal above layer {k}: n_{l} = {} < n_{} = {}",
            widths[l],
            l + 1,
            widths[l + 1]
        )));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::activation::ActivationKind;
    use nalgebra::dmatrix;

    #[test]
    fn duplicate_rows_are_caught() {
        let layout = PatchLayout::conv1d(3, 2, 1).unwrap();
        let x = dmatrix![1.0, 2.0, 3.0; 1.0, 2.0, 3.0; 0.0, 5.0, 7.0];
        let r = check_distinct_patches(&x, &layout, 0.0).unwrap();
        assert!(!r.holds);
        assert_eq!(r.witness, Some((0, 1, 0, 0)));
    }

    #[test]
    fn shifted_patch_is_caught() {
        // sample 1's second patch equals sample 0's first patch
        let layout = PatchLayout::conv1d(3, 2, 1).unwrap();
        let x = dmatrix![1.0, 2.0, 9.0; 0.0, 1.0, 2.0];
        let r = check_distinct_patches(&x, &layout, 0.0).unwrap();
        assert_eq!(r.witness, Some((0, 1, 0, 1)));
        // within one sample repeated patches are allowed
        let x = dmatrix![1.0, 1.0, 1.0; 2.0, 3.0, 4.0];
        assert!(check_distinct_patches(&x, &layout, 0.0).unwrap().holds);
    }

    #[test]
    fn tolerance_widens_the_check() {
        let layout = PatchLayout::whole(2).unwrap();
        let x = dmatrix![0.0, 0.0; 0.05, -0.05];
        assert!(check_distinct_patches(&x, &layout, 0.01).unwrap().holds);
        assert!(!check_distinct_patches(&x, &layout, 0.1).unwrap().holds);
    }

    #[test]
    fn single_sample_is_vacuous() {
        let layout = PatchLayout::whole(3).unwrap();
        let r = check_distinct_patches(&dmatrix![1.0, 1.0, 1.0], &layout, 0.0).unwrap();
        assert!(r.holds && r.witness.is_none());
    }

    #[test]
    fn perturb_zero_and_deterministic() {
        let x = dmatrix![1.0, 2.0; 3.0, 4.0];
        assert_eq!(perturb_dataset(&x, 0.0, 3).unwrap(), x);
        let a = perturb_dataset(&x, 1e-5, 3).unwrap();
        let b = perturb_dataset(&x, 1e-5, 3).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, x);
        assert!(perturb_dataset(&x, -1.0, 3).is_err());
    }

    #[test]
    fn architecture_checks() {
        let spec = NetworkSpec::new(
            3,
            vec![
                LayerSpec::dense(6, ActivationKind::Relu),
                LayerSpec::dense(2, ActivationKind::Sigmoid),
                LayerSpec::dense(3, ActivationKind::Sigmoid),
                LayerSpec::output(1),
            ],
        )
        .unwrap();
        assert!(check_architecture(&spec, 1, 5).is_err()); // 2 < 3 above k
        assert!(check_architecture(&spec, 2, 2).is_ok());
        assert!(matches!(
            check_architecture(&spec, 1, 7),
            Err(Error::Width { layer: 1, width: 6, samples: 7 })
        ));
        let relu_above = NetworkSpec::new(
            3,
            vec![
                LayerSpec::dense(6, ActivationKind::Sigmoid),
                LayerSpec::dense(2, ActivationKind::Relu),
                LayerSpec::output(1),
            ],
        )
        .unwrap();
        assert!(check_architecture(&relu_above, 1, 4).is_err());
    }
}
