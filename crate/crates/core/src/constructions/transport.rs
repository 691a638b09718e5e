use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{closest_cross_row_gap, gaussian, tagged_entries, ConstructionParams};
use crate::analysis::estimate_rank;
use crate::assumptions::check_distinct_patches;
use crate::error::{Error, Result};
use crate::forward::{apply_layer, lift_weights};
use crate::network::{LayerParams, NetworkSpec, Params};

/// Required gap between feature entries of different samples after transport.
pub const ENTRY_GAP: f64 = 1e-12;

/// Relative size below which two inner products count as colliding.
pub(crate) const COLLISION_TOL: f64 = 1e-12;

/// Parameters for layers `1..=k` under which every entry of `f_k(x_i)` differs from every
/// entry of `f_k(x_j)` for `i != j`, with all lifted weight matrices of full rank.
pub fn transport_construction(
    spec: &NetworkSpec,
    x: &DMatrix<f64>,
    k: usize,
    cfg: &ConstructionParams,
) -> Result<Params> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    transport_layers(spec, x, k, cfg, &mut rng).map(|(p, _)| p)
}

/// Fails with the witness if patches of two samples coincide at the input layer.
pub(crate) fn require_distinct_inputs(spec: &NetworkSpec, x: &DMatrix<f64>) -> Result<()> {
    if x.ncols() != spec.input_width() {
        return Err(Error::structure(format!(
            "input has {} columns, network expects {}",
            x.ncols(),
            spec.input_width()
        )));
    }
    let layout = spec.input_layout()?;
    let report = check_distinct_patches(x, &layout, 0.0)?;
    if let Some((i, j, p, q)) = report.witness {
        return Err(Error::IdenticalPatches { i, j, p, q });
    }
    Ok(())
}

/// Transport through layers `1..=k`; returns the parameters and `F_k`.
pub(crate) fn transport_layers(
    spec: &NetworkSpec,
    x: &DMatrix<f64>,
    k: usize,
    cfg: &ConstructionParams,
    rng: &mut ChaCha8Rng,
) -> Result<(Params, DMatrix<f64>)> {
    if k >= spec.depth() {
        return Err(Error::structure(format!(
            "transport reaches at most layer {}, asked for {k}",
            spec.depth() - 1
        )));
    }
    if spec.layer(1)?.is_pool() {
        return Err(Error::Assumption("layer 1 must be convolutional or fully connected".into()));
    }
    spec.check_hidden_activations(k)?;
    require_distinct_inputs(spec, x)?;
    let mut layers = Vec::with_capacity(k);
    let mut features = x.clone();
    for l in 1..=k {
        let layer = spec.layer(l)?;
        if layer.is_pool() {
            let (_, f) = apply_layer(spec, l, None, &features)?;
            check_entry_gap(&f, l)?;
            layers.push(None);
            features = f;
            continue;
        }
        let (p, f) = transport_layer(spec, l, &features, cfg, rng)?;
        layers.push(Some(p));
        features = f;
    }
    Ok((Params { layers }, features))
}

fn check_entry_gap(f: &DMatrix<f64>, layer: usize) -> Result<()> {
    match closest_cross_row_gap(&tagged_entries(f)) {
        Some((i, j, gap)) if gap <= ENTRY_GAP => Err(Error::ConstructionFailed(format!(
            "layer {layer}: features of samples {i} and {j} share an entry (gap {gap:e})"
        ))),
        _ => Ok(()),
    }
}

fn transport_layer(
    spec: &NetworkSpec,
    l: usize,
    input: &DMatrix<f64>,
    cfg: &ConstructionParams,
    rng: &mut ChaCha8Rng,
) -> Result<(LayerParams, DMatrix<f64>)> {
    let layer = spec.layer(l)?;
    let act = layer.activation().expect("weighted layer");
    let (rows, cols) = layer.filter_shape(spec.width(l - 1)).expect("weighted layer");
    let width = layer.out_width();
    let (mu1, mu2) = act.bijective_interval();
    let beta = 0.5 * (mu1 + mu2);
    let half = 0.5 * (mu2 - mu1);
    let mut last_reason = String::new();
    for _ in 0..cfg.resample_budget {
        let q = gaussian(rows, cols, rng);
        if !estimate_rank(&lift_weights(spec, l, &q)?)?.is_full_rank() {
            last_reason = "lifted filter matrix rank deficient".into();
            continue;
        }
        let probe = LayerParams::new(q.clone(), DVector::zeros(width));
        let (v, _) = apply_layer(spec, l, Some(&probe), input)?;
        let v = v.expect("weighted layer");
        let (lo, hi) = v.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &t| {
            (a.min(t), b.max(t))
        });
        let scale = lo.abs().max(hi.abs()).max(f64::MIN_POSITIVE);
        if let Some((_, _, gap)) = closest_cross_row_gap(&tagged_entries(&v)) {
            if gap < COLLISION_TOL * scale {
                last_reason = format!("inner products of different samples collide (gap {gap:e})");
                continue;
            }
        }
        // pre-activations alpha * v + beta - alpha * c fill half of (mu1, mu2)
        let c = 0.5 * (lo + hi);
        let spread = 0.5 * (hi - lo);
        let alpha = if spread > 0.0 { 0.5 * half / spread } else { 1.0 };
        let params = LayerParams::new(q * alpha, DVector::from_element(width, beta - alpha * c));
        let (g, f) = apply_layer(spec, l, Some(&params), input)?;
        let g = g.expect("weighted layer");
        if g.iter().any(|&t| !(t > mu1 && t < mu2)) {
            last_reason = "pre-activations left the bijectivity interval".into();
            continue;
        }
        match check_entry_gap(&f, l) {
            Ok(()) => return Ok((params, f)),
            Err(e) => last_reason = e.to_string(),
        }
    }
    Err(Error::ConstructionFailed(format!(
        "layer {l}: no admissible filter matrix in {} draws ({last_reason})",
        cfg.resample_budget
    )))
}
