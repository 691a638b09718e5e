mod common;

use common::*;
use convland_core::analysis::singular_values;
use convland_core::backprop::*;
use convland_core::{
    forward, ActivationKind, Error, LayerSpec, NetworkSpec, Params, PatchLayout,
};
use nalgebra::{dmatrix, DMatrix, DVector};
use proptest::prelude::*;
use rand::Rng;

fn fd_error(spec: &NetworkSpec, params: &Params, x: &DMatrix<f64>, y: &DMatrix<f64>, step: f64) -> f64 {
    let tr = forward(spec, params, x).unwrap();
    let g = backward(spec, params, &tr, y).unwrap();
    let fd = finite_difference_gradient(spec, params, x, y, step).unwrap();
    relative_gradient_error(&g, &fd)
}

#[test]
fn loss_of_a_single_entry() {
    let spec = NetworkSpec::new(1, vec![LayerSpec::output(1)]).unwrap();
    let mut params = Params::zeros(&spec);
    params.layer_mut(1).unwrap().bias[0] = 2.0;
    let tr = forward(&spec, &params, &dmatrix![0.0]).unwrap();
    // 0.5 * 2^2
    assert_eq!(loss(&tr, &dmatrix![0.0]).unwrap(), 2.0);
}

#[test]
fn loss_matches_entry_sum() {
    let spec = NetworkSpec::new(4, vec![LayerSpec::dense(3, ActivationKind::Sigmoid), LayerSpec::output(2)]).unwrap();
    let params = Params::gaussian(&spec, 1.0, &mut rng(1));
    let x = gaussian(3, 4, &mut rng(2));
    let y = gaussian(3, 2, &mut rng(3));
    let tr = forward(&spec, &params, &x).unwrap();
    let mut oracle = 0.0;
    for i in 0..3 {
        for j in 0..2 {
            oracle += 0.5 * (tr.output()[(i, j)] - y[(i, j)]).powi(2);
        }
    }
    assert!((loss(&tr, &y).unwrap() - oracle).abs() <= 1e-14 * oracle);
}

#[test]
fn tiny_conv_net_matches_finite_differences() {
    let act = ActivationKind::Sigmoid;
    let spec = NetworkSpec::new(
        3,
        vec![LayerSpec::conv(PatchLayout::conv1d(3, 2, 1).unwrap(), 2, act), LayerSpec::output(1)],
    )
    .unwrap();
    let params = Params::gaussian(&spec, 1.0, &mut rng(4));
    let x = gaussian(4, 3, &mut rng(5));
    let y = gaussian(4, 1, &mut rng(6));
    assert!(fd_error(&spec, &params, &x, &y, 1e-6) <= 1e-5);
}

#[test]
fn deep_linear_closed_form() {
    let id = ActivationKind::Identity;
    let spec = NetworkSpec::new(4, vec![LayerSpec::dense(3, id), LayerSpec::output(2)]).unwrap();
    let params = Params::gaussian(&spec, 1.0, &mut rng(7));
    let x = gaussian(5, 4, &mut rng(8));
    let y = gaussian(5, 2, &mut rng(9));
    let tr = forward(&spec, &params, &x).unwrap();
    let g = backward(&spec, &params, &tr, &y).unwrap();
    let w1 = &params.layer(1).unwrap().weights;
    let w2 = &params.layer(2).unwrap().weights;
    let r = &x * w1 * w2 - &y;
    let g1 = x.transpose() * &r * w2.transpose();
    let g2 = (&x * w1).transpose() * &r;
    let scale = g1.amax().max(g2.amax());
    assert!((&g.layer(1).unwrap().grad_w - g1).amax() <= 1e-12 * scale);
    assert!((&g.layer(2).unwrap().grad_w - g2).amax() <= 1e-12 * scale);
}

#[test]
fn output_layer_quadratic_and_step_sweep() {
    // loss is quadratic in the output weights, so central differences there are exact
    let act = ActivationKind::softplus(2.0);
    let spec = NetworkSpec::new(4, vec![LayerSpec::dense(5, act), LayerSpec::output(2)]).unwrap();
    let params = Params::gaussian(&spec, 0.7, &mut rng(10));
    let x = gaussian(6, 4, &mut rng(11));
    let y = gaussian(6, 2, &mut rng(12));
    let tr = forward(&spec, &params, &x).unwrap();
    let g = backward(&spec, &params, &tr, &y).unwrap();
    let fd = finite_difference_gradient(&spec, &params, &x, &y, 1e-2).unwrap();
    let a = &g.layer(2).unwrap().grad_w;
    assert!((a - &fd.layer(2).unwrap().grad_w).amax() <= 1e-9 * a.amax());

    let errs: Vec<f64> = [1e-2, 1e-3, 1e-4, 1e-5, 1e-6]
        .iter()
        .map(|&h| fd_error(&spec, &params, &x, &y, h))
        .collect();
    // second-order decay while truncation dominates
    assert!(errs[1] <= errs[0] / 20.0, "{errs:?}");
    assert!(errs[2] <= errs[1] / 20.0, "{errs:?}");
    assert!(errs.iter().all(|&e| e <= 1e-3));
}

#[test]
fn random_networks_match_finite_differences() {
    let mut r = rng(13);
    let mut worst = 0.0f64;
    for trial in 0..50 {
        let act = if trial % 2 == 0 {
            ActivationKind::Sigmoid
        } else {
            ActivationKind::softplus(r.gen_range(0.5..5.0))
        };
        let d = r.gen_range(3..9);
        let hidden = r.gen_range(1..4);
        let mut layers = Vec::new();
        let mut width = d;
        if r.gen_bool(0.5) {
            let kernel = r.gen_range(1..=d);
            let filters = r.gen_range(1..4);
            let layout = PatchLayout::conv1d(d, kernel, 1).unwrap();
            width = layout.num_patches() * filters;
            layers.push(LayerSpec::conv(layout, filters, act));
        }
        while layers.len() < hidden {
            let w = r.gen_range(1..=32.min(width + 6));
            layers.push(LayerSpec::dense(w, act));
            width = w;
        }
        let out = r.gen_range(1..4);
        layers.push(LayerSpec::output(out));
        let spec = NetworkSpec::new(d, layers).unwrap();
        let params = Params::scaled_gaussian(&spec, &mut r);
        let n = r.gen_range(1..6);
        let x = gaussian(n, d, &mut r);
        let y = gaussian(n, out, &mut r);
        let e = fd_error(&spec, &params, &x, &y, 1e-6);
        worst = worst.max(e);
        assert!(e <= 1e-5, "trial {trial}: {e:e}");
    }
    assert!(worst > 0.0);
}

#[test]
fn lifted_gradient_is_features_times_delta() {
    let spec = conv_dense_net(ActivationKind::Sigmoid, 7);
    let params = Params::gaussian(&spec, 0.5, &mut rng(14));
    let x = gaussian(4, 12, &mut rng(15));
    let y = gaussian(4, 1, &mut rng(16));
    let tr = forward(&spec, &params, &x).unwrap();
    let opts = BackwardOptions {
        keep_deltas: true,
        ..Default::default()
    };
    let g = backward_with(&spec, &params, &tr, &y, opts).unwrap();
    for l in 1..=3 {
        let lg = g.layer(l).unwrap();
        let delta = lg.delta.as_ref().unwrap();
        let gu = tr.features(l - 1).transpose() * delta;
        assert!((lg.grad_u.as_ref().unwrap() - &gu).amax() <= 1e-13 * (1.0 + gu.amax()));
        let col_sums = DVector::from_iterator(delta.ncols(), delta.column_iter().map(|c| c.sum()));
        assert!((&lg.grad_b - col_sums).amax() <= 1e-13);
    }
    assert_eq!(g.layer(3).unwrap().delta.as_ref().unwrap(), &(tr.output() - &y));
}

#[test]
fn partial_backward_skips_lower_layers() {
    let spec = conv_dense_net(ActivationKind::Sigmoid, 7);
    let params = Params::gaussian(&spec, 0.5, &mut rng(17));
    let x = gaussian(4, 12, &mut rng(18));
    let y = gaussian(4, 1, &mut rng(19));
    let tr = forward(&spec, &params, &x).unwrap();
    let opts = BackwardOptions {
        from_layer: 2,
        ..Default::default()
    };
    let part = backward_with(&spec, &params, &tr, &y, opts).unwrap();
    let full = backward(&spec, &params, &tr, &y).unwrap();
    assert!(part.layer(1).is_none());
    assert_eq!(part.layer(2), full.layer(2));
}

#[test]
fn pooling_in_the_chain_is_rejected() {
    let act = ActivationKind::Sigmoid;
    let spec = NetworkSpec::new(
        4,
        vec![
            LayerSpec::dense(4, act),
            LayerSpec::max_pool(PatchLayout::new(vec![vec![0, 1], vec![2, 3]], 4).unwrap()),
            LayerSpec::output(1),
        ],
    )
    .unwrap();
    let params = Params::gaussian(&spec, 1.0, &mut rng(20));
    let x = gaussian(2, 4, &mut rng(21));
    let y = gaussian(2, 1, &mut rng(22));
    let tr = forward(&spec, &params, &x).unwrap();
    assert!(matches!(
        backward(&spec, &params, &tr, &y),
        Err(Error::UnsupportedLayer { layer: 2, .. })
    ));
    let opts = BackwardOptions {
        from_layer: 3,
        ..Default::default()
    };
    assert!(backward_with(&spec, &params, &tr, &y, opts).is_ok());
}

fn smin_smax(a: &DMatrix<f64>) -> (f64, f64) {
    let s = singular_values(a).unwrap();
    (*s.last().unwrap(), s[0])
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn product_norm_inequalities(m in 1usize..7, extra in 0usize..4, p in 1usize..6, seed in any::<u64>()) {
        let mut r = rng(seed);
        // tall a: ||a b|| between smin(a) ||b|| and smax(a) ||b||
        let n = m;
        let a = gaussian(n + extra, n, &mut r);
        let b = gaussian(n, p, &mut r);
        let (lo, hi) = smin_smax(&a);
        let ab = (&a * &b).norm();
        prop_assert!(lo * b.norm() <= ab * (1.0 + 1e-10));
        prop_assert!(ab <= hi * b.norm() * (1.0 + 1e-10));
        // wide c: ||b^T c|| between smin(c) ||b|| and smax(c) ||b||
        let c = gaussian(n, n + extra, &mut r);
        let (lo, hi) = smin_smax(&c);
        let bc = (b.transpose() * &c).norm();
        prop_assert!(lo * b.norm() <= bc * (1.0 + 1e-10));
        prop_assert!(bc <= hi * b.norm() * (1.0 + 1e-10));
    }

    #[test]
    fn hadamard_inequalities(rows in 1usize..6, cols in 1usize..6, seed in any::<u64>()) {
        let mut r = rng(seed);
        let m = gaussian(rows, cols, &mut r);
        let d = gaussian(rows, cols, &mut r);
        let had = m.component_mul(&d).norm();
        let lo = d.iter().fold(f64::INFINITY, |a, v| a.min(v.abs()));
        prop_assert!(lo * m.norm() <= had * (1.0 + 1e-10));
        prop_assert!(had <= d.amax() * m.norm() * (1.0 + 1e-10));
    }
}
