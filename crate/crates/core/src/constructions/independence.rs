use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::transport::{transport_layers, COLLISION_TOL};
use super::{gaussian, ConstructionParams};
use crate::analysis::{estimate_rank, singular_values};
use crate::assumptions::check_wide_layer;
use crate::error::{Error, Result};
use crate::forward::{apply_layer, lift_weights};
use crate::network::{LayerParams, NetworkSpec, Params};

/// Outcome of the rank construction at a wide layer.
#[derive(Debug, Clone, PartialEq)]
pub struct IndependentFeatures {
    /// Layers `1..=k`.
    pub params: Params,
    /// `F_k`, of rank `N`.
    pub features: DMatrix<f64>,
    pub alpha: f64,
    pub beta: f64,
    /// `gamma[j]` is the sample matched to unit `j < N`.
    pub gamma: Vec<usize>,
    /// Smallest singular value of the `N x N` block with rows `gamma` and columns `0..N`.
    pub submatrix_sigma_min: f64,
}

/// Parameters for layers `1..=k` under which `F_k` has rank `N`.
pub fn independence_construction(
    spec: &NetworkSpec,
    x: &DMatrix<f64>,
    k: usize,
    cfg: &ConstructionParams,
) -> Result<Params> {
    independence_construction_detailed(spec, x, k, cfg).map(|r| r.params)
}

pub fn independence_construction_detailed(
    spec: &NetworkSpec,
    x: &DMatrix<f64>,
    k: usize,
    cfg: &ConstructionParams,
) -> Result<IndependentFeatures> {
    cfg.validate()?;
    let n = x.nrows();
    if n == 0 {
        return Err(Error::structure("no samples"));
    }
    check_wide_layer(spec, k, n)?;
    let layer = spec.layer(k)?;
    let act = layer.activation().expect("checked: not pooling");
    let beta = cfg.beta_for(act)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let (mut params, below) = transport_layers(spec, x, k - 1, cfg, &mut rng)?;

    let (rows, cols) = layer.filter_shape(spec.width(k - 1)).expect("weighted layer");
    let width = layer.out_width();
    let mut last_reason = String::new();
    for _ in 0..cfg.resample_budget {
        let q = gaussian(rows, cols, &mut rng);
        if !estimate_rank(&lift_weights(spec, k, &q)?)?.is_full_rank() {
            last_reason = "lifted filter matrix rank deficient".into();
            continue;
        }
        let probe = LayerParams::new(q.clone(), DVector::zeros(width));
        let v = apply_layer(spec, k, Some(&probe), &below)?.0.expect("weighted layer");
        if let Some(j) = first_colliding_unit(&v) {
            last_reason = format!("unit {j}: inner products of two samples collide");
            continue;
        }
        let gamma = select_gamma(&v);
        debug_assert!(is_permutation(&gamma));
        // units past N keep every sample at or below beta
        let col_min: Vec<f64> = (0..width)
            .map(|j| v.column(j).iter().copied().fold(f64::INFINITY, f64::min))
            .collect();
        // first admissible alpha, then onwards while the conditioning of F_k keeps improving
        let mut best: Option<(f64, LayerParams, DMatrix<f64>, f64, f64)> = None;
        for &alpha in &cfg.alpha_schedule {
            let bias = DVector::from_fn(width, |j, _| {
                let anchor = if j < n { v[(gamma[j], j)] } else { col_min[j] };
                alpha * anchor + beta
            });
            let p = LayerParams::new(q.scale(-alpha), bias);
            let (_, f) = match apply_layer(spec, k, Some(&p), &below) {
                Ok(r) => r,
                Err(Error::NumericOverflow { .. }) => break,
                Err(e) => return Err(e),
            };
            let sub = DMatrix::from_fn(n, n, |r, c| f[(gamma[r], c)]);
            let smin = singular_values(&sub)?.last().copied().unwrap_or(0.0);
            let rank = estimate_rank(&f)?;
            let admissible = smin >= cfg.sigma_min_floor && rank.estimated_rank == n;
            let ratio = rank.sigma_min / rank.sigma_max;
            match &best {
                None if admissible => best = Some((ratio, p, f, alpha, smin)),
                None => {}
                Some((r, ..)) if admissible && ratio > cfg.condition_gain * *r => best = Some((ratio, p, f, alpha, smin)),
                Some(_) => break,
            }
        }
        if let Some((_, p, f, alpha, smin)) = best {
            params.layers.push(Some(p));
            return Ok(IndependentFeatures {
                params,
                features: f,
                alpha,
                beta,
                gamma,
                submatrix_sigma_min: smin,
            });
        }
        last_reason = "alpha schedule exhausted".into();
    }
    Err(Error::ConstructionFailed(format!(
        "layer {k}: no admissible filter matrix in {} draws ({last_reason})",
        cfg.resample_budget
    )))
}

/// A unit whose inner products coincide for two samples, if any.
fn first_colliding_unit(v: &DMatrix<f64>) -> Option<usize> {
    let scale = v.amax().max(f64::MIN_POSITIVE);
    (0..v.ncols()).find(|&j| {
        let mut col: Vec<f64> = v.column(j).iter().copied().collect();
        col.sort_by(f64::total_cmp);
        col.windows(2).any(|w| w[1] - w[0] < COLLISION_TOL * scale)
    })
}

/// `gamma[j]` = the unused sample with the smallest inner product at unit `j`.
fn select_gamma(v: &DMatrix<f64>) -> Vec<usize> {
    let n = v.nrows();
    let mut used = vec![false; n];
    (0..n)
        .map(|j| {
            let i = (0..n)
                .filter(|&i| !used[i])
                .min_by(|&a, &b| v[(a, j)].total_cmp(&v[(b, j)]))
                .expect("fewer units than samples consumed");
            used[i] = true;
            i
        })
        .collect()
}

fn is_permutation(gamma: &[usize]) -> bool {
    let mut seen = vec![false; gamma.len()];
    gamma
        .iter()
        .all(|&g| g < seen.len() && !std::mem::replace(&mut seen[g], true))
}
