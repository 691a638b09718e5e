mod common;

use common::*;
use convland_core::analysis::{estimate_rank, s_k_membership, singular_values};
use convland_core::backprop::{backward_with, loss, BackwardOptions};
use convland_core::constructions::*;
use convland_core::forward::forward_prefix;
use convland_core::{
    forward, lift_weights, ActivationKind, Dataset, Error, LayerSpec, NetworkSpec, PatchLayout,
};
use nalgebra::{dmatrix, DMatrix, DVector};

fn sigmoid_conv(d: usize, kernel: usize, filters: usize) -> NetworkSpec {
    NetworkSpec::new(
        d,
        vec![
            LayerSpec::conv(PatchLayout::conv1d(d, kernel, 1).unwrap(), filters, ActivationKind::Sigmoid),
            LayerSpec::output(1),
        ],
    )
    .unwrap()
}

fn lifted_full_rank(spec: &NetworkSpec, params: &convland_core::Params, upto: usize) -> bool {
    (1..=upto).all(|l| match params.layer(l) {
        Some(p) => estimate_rank(&lift_weights(spec, l, &p.weights).unwrap())
            .unwrap()
            .is_full_rank(),
        None => true,
    })
}

#[test]
fn transport_separates_two_samples() {
    let spec = sigmoid_conv(4, 2, 2);
    let x = dmatrix![0.1, -0.4, 1.2, 0.7; -0.3, 0.9, 0.2, -1.1];
    let params = transport_construction(&spec, &x, 1, &ConstructionParams::with_seed(1)).unwrap();
    let f = forward_prefix(&spec, &params, &x, 1).unwrap();
    assert!(min_cross_sample_gap(f.features(1)) > 1e-9);
    assert!(lifted_full_rank(&spec, &params, 1));
}

#[test]
fn transport_rejects_duplicate_rows() {
    let spec = sigmoid_conv(4, 2, 2);
    let x = dmatrix![0.1, -0.4, 1.2, 0.7; 0.1, -0.4, 1.2, 0.7];
    assert!(matches!(
        transport_construction(&spec, &x, 1, &Default::default()),
        Err(Error::IdenticalPatches { .. })
    ));
}

#[test]
fn transport_survives_max_pooling() {
    // conv over 8 inputs: 6 positions x 2 channels; pool pairs of positions per channel
    let pool: Vec<Vec<usize>> = (0..3)
        .flat_map(|w| (0..2).map(move |t| vec![(2 * w) * 2 + t, (2 * w + 1) * 2 + t]))
        .collect();
    let act = ActivationKind::Sigmoid;
    let spec = NetworkSpec::new(
        8,
        vec![
            LayerSpec::conv(PatchLayout::conv1d(8, 3, 1).unwrap(), 2, act),
            LayerSpec::max_pool(PatchLayout::new(pool, 12).unwrap()),
            LayerSpec::dense(5, act),
            LayerSpec::output(1),
        ],
    )
    .unwrap();
    let x = gaussian(5, 8, &mut rng(3));
    let params = transport_construction(&spec, &x, 3, &ConstructionParams::with_seed(3)).unwrap();
    let tr = forward_prefix(&spec, &params, &x, 3).unwrap();
    for l in 1..=3 {
        assert!(min_cross_sample_gap(tr.features(l)) > 1e-12, "layer {l}");
    }
    assert!(lifted_full_rank(&spec, &params, 3));
}

#[test]
fn independence_single_sigmoid_conv() {
    // 4 patches x 2 filters = 8 units
    let spec = sigmoid_conv(6, 3, 2);
    let x = gaussian(8, 6, &mut rng(11));
    let cfg = ConstructionParams::with_seed(5);
    let built = independence_construction_detailed(&spec, &x, 1, &cfg).unwrap();
    assert_eq!(elimination_rank(&built.features), 8);
    assert_eq!(estimate_rank(&built.features).unwrap().estimated_rank, 8);
    assert!(built.submatrix_sigma_min >= cfg.sigma_min_floor);
    let mut g = built.gamma.clone();
    g.sort_unstable();
    assert_eq!(g, (0..8).collect::<Vec<_>>());
    assert!(lifted_full_rank(&spec, &built.params, 1));
}

#[test]
fn independence_single_sample() {
    let spec = sigmoid_conv(6, 3, 2);
    let x = gaussian(1, 6, &mut rng(2));
    let built = independence_construction_detailed(&spec, &x, 1, &Default::default()).unwrap();
    assert_eq!(built.alpha, 1.0);
    assert!(built.features.amax() > 0.0);
    assert_eq!(estimate_rank(&built.features).unwrap().estimated_rank, 1);
}

#[test]
fn independence_softplus_second_layer() {
    let spec = dense_net(6, &[10, 20], 1, ActivationKind::softplus(10.0));
    let x = gaussian(16, 6, &mut rng(21));
    let built = independence_construction_detailed(&spec, &x, 2, &ConstructionParams::with_seed(2)).unwrap();
    assert_eq!(elimination_rank(&built.features), 16);
    assert!(*singular_values(&built.features).unwrap().last().unwrap() > 0.0);
    assert!(lifted_full_rank(&spec, &built.params, 2));
}

#[test]
fn independence_rejects_narrow_layer() {
    let spec = sigmoid_conv(6, 3, 2);
    let x = gaussian(9, 6, &mut rng(2));
    assert!(matches!(
        independence_construction(&spec, &x, 1, &Default::default()),
        Err(Error::Width { layer: 1, width: 8, samples: 9 })
    ));
}

#[test]
fn constructed_weights_are_scaled_filters() {
    let spec = sigmoid_conv(6, 3, 2);
    let x = gaussian(8, 6, &mut rng(11));
    let built = independence_construction_detailed(&spec, &x, 1, &ConstructionParams::with_seed(5)).unwrap();
    let w = &built.params.layer(1).unwrap().weights;
    let q = w / -built.alpha;
    let lhs = lift_weights(&spec, 1, w).unwrap();
    let rhs = lift_weights(&spec, 1, &q).unwrap() * -built.alpha;
    assert!((lhs - rhs).amax() <= 1e-15 * w.amax());
}

#[test]
fn expressivity_zero_target() {
    let spec = sigmoid_conv(6, 3, 2);
    let x = gaussian(8, 6, &mut rng(11));
    let (_, lambda) = expressivity_fit(&spec, &x, &DVector::zeros(8), &Default::default()).unwrap();
    assert_eq!(lambda, DVector::zeros(8));
}

fn max_fit_error(spec: &NetworkSpec, x: &DMatrix<f64>, y: &DVector<f64>, seed: u64) -> f64 {
    let (params, lambda) = expressivity_fit(spec, x, y, &ConstructionParams::with_seed(seed)).unwrap();
    let full = with_output_layer(params, DMatrix::from_column_slice(lambda.len(), 1, lambda.as_slice()));
    let out = forward(spec, &full, x).unwrap();
    (0..y.len())
        .map(|i| (out.output()[(i, 0)] - y[i]).abs() / (1.0 + y[i].abs()))
        .fold(0.0, f64::max)
}

#[test]
fn expressivity_random_targets() {
    let spec = sigmoid_conv(6, 3, 2);
    let x = gaussian(8, 6, &mut rng(11));
    let y = DVector::from_iterator(8, gaussian(8, 1, &mut rng(12)).iter().copied());
    assert!(max_fit_error(&spec, &x, &y, 1) <= 1e-8);
}

#[test]
fn expressivity_random_labels() {
    let spec = conv_dense_net(ActivationKind::Sigmoid, 40);
    let x = gaussian(32, 12, &mut rng(31));
    let y = DVector::from_iterator(32, gaussian(32, 1, &mut rng(32)).iter().map(|v| v.signum()));
    assert!(max_fit_error(&spec, &x, &y, 7) <= 1e-8);
}

fn class_data(n: usize, d: usize, m: usize, seed: u64) -> Dataset {
    Dataset::one_hot(gaussian(n, d, &mut rng(seed)), balanced_labels(n, m), m).unwrap()
}

fn check_zero_loss(spec: &NetworkSpec, data: &Dataset, k: usize, seed: u64, bound: f64) -> convland_core::Params {
    let params = zero_loss_construction(spec, data, k, &ConstructionParams::with_seed(seed)).unwrap();
    let tr = forward(spec, &params, &data.x).unwrap();
    let phi = loss(&tr, &data.y).unwrap();
    assert!(phi <= bound, "loss {phi:e} > {bound:e}");
    assert!(s_k_membership(spec, &params, &tr, k).unwrap().in_s_k);
    let opts = BackwardOptions {
        from_layer: k + 1,
        lifted: true,
        keep_deltas: false,
    };
    let g = backward_with(spec, &params, &tr, &data.y, opts).unwrap();
    let gn = g.layer(k + 1).unwrap().grad_u.as_ref().unwrap().norm();
    assert!(gn <= 1e-10);
    params
}

#[test]
fn zero_loss_last_hidden() {
    let spec = dense_net(5, &[8, 6], 2, ActivationKind::Sigmoid);
    let data = class_data(6, 5, 2, 40);
    check_zero_loss(&spec, &data, 2, 1, 1e-16);
}

#[test]
fn zero_loss_second_to_last_hits_embedding() {
    let spec = dense_net(5, &[8, 4], 2, ActivationKind::Sigmoid);
    let data = class_data(6, 5, 2, 41);
    let params = check_zero_loss(&spec, &data, 1, 2, 1e-16);
    let out = forward(&spec, &params, &data.x).unwrap();
    let z = DMatrix::<f64>::identity(2, 2);
    for (i, &c) in data.labels.as_ref().unwrap().iter().enumerate() {
        assert!((out.output().row(i) - z.row(c)).amax() <= 1e-10);
    }
}

#[test]
fn zero_loss_deep_case() {
    let spec = dense_net(5, &[10, 12, 6, 4], 2, ActivationKind::Sigmoid);
    let data = class_data(8, 5, 2, 42);
    let params = check_zero_loss(&spec, &data, 2, 3, 1e-14);
    for l in 4..=5 {
        let u = lift_weights(&spec, l, &params.layer(l).unwrap().weights).unwrap();
        assert!(estimate_rank(&u).unwrap().is_full_rank());
    }
}

#[test]
fn zero_loss_has_many_minima() {
    let spec = dense_net(5, &[10, 4], 3, ActivationKind::softplus(10.0));
    let data = class_data(9, 5, 3, 43);
    let a = check_zero_loss(&spec, &data, 1, 1, 1e-14 * (1.0 + data.y.norm_squared()));
    let b = check_zero_loss(&spec, &data, 1, 2, 1e-14 * (1.0 + data.y.norm_squared()));
    assert!(a.distance(&b) > 1e-3);
}

#[test]
fn zero_loss_rejects_conv_above_wide_layer() {
    let act = ActivationKind::Sigmoid;
    let spec = NetworkSpec::new(
        6,
        vec![
            LayerSpec::dense(8, act),
            LayerSpec::conv(PatchLayout::conv1d(8, 2, 2).unwrap(), 1, act),
            LayerSpec::output(2),
        ],
    )
    .unwrap();
    let data = class_data(6, 6, 2, 44);
    assert!(matches!(
        zero_loss_construction(&spec, &data, 1, &Default::default()),
        Err(Error::UnsupportedLayer { layer: 2, .. })
    ));
}

#[test]
fn zero_loss_rejects_widening_tail() {
    let spec = dense_net(5, &[8, 3, 4], 2, ActivationKind::Sigmoid);
    let data = class_data(6, 5, 2, 45);
    assert!(matches!(
        zero_loss_construction(&spec, &data, 1, &Default::default()),
        Err(Error::Assumption(_))
    ));
}
