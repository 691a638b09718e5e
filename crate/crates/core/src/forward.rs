//! Lifting map, forward pass and feature traces.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::layout::PatchLayout;
use crate::network::{LayerParams, LayerSpec, NetworkSpec, Params};

/// Full weight matrix `U_k` (`n_{k-1} x n_k`) of a convolutional or dense layer.
///
/// Column `h = p * T_k + t` of `U_k` holds filter `t` at the positions of patch `p`,
/// so that `G_k = F_{k-1} U_k + 1 b_k^T`. Dense layers return `W_k` unchanged.
pub fn lift_weights(spec: &NetworkSpec, k: usize, weights: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let layer = spec.layer(k)?;
    let in_width = spec.width(k - 1);
    let shape = layer.filter_shape(in_width).ok_or_else(|| Error::UnsupportedLayer {
        layer: k,
        reason: "max-pooling layers have no weight matrix".into(),
    })?;
    if weights.shape() != shape {
        return Err(Error::structure(format!(
            "layer {k}: W is {}x{}, expected {}x{}",
            weights.nrows(),
            weights.ncols(),
            shape.0,
            shape.1
        )));
    }
    match layer {
        LayerSpec::Convolutional { layout, .. } => layout.lift(weights),
        _ => Ok(weights.clone()),
    }
}

/// Adjoint of [`lift_weights`]: maps an `n_{k-1} x n_k` matrix back to filter shape.
pub fn adjoint_lift(spec: &NetworkSpec, k: usize, v: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let layer = spec.layer(k)?;
    let in_width = spec.width(k - 1);
    match layer {
        LayerSpec::Convolutional {
            layout, filters, ..
        } => layout.adjoint(v, *filters),
        LayerSpec::MaxPool { .. } => Err(Error::UnsupportedLayer {
            layer: k,
            reason: "max-pooling layers have no weight matrix".into(),
        }),
        _ => {
            if v.shape() != (in_width, layer.out_width()) {
                return Err(Error::structure(format!(
                    "layer {k}: expected {}x{} matrix",
                    in_width,
                    layer.out_width()
                )));
            }
            Ok(v.clone())
        }
    }
}

/// Pre-activations `G_k` and features `F_k` of every layer for a batch of `N` samples.
#[derive(Debug, Clone, PartialEq)]
pub struct ForwardTrace {
    /// `pre[k]` is `G_k`; `None` for the input and for max-pooling layers.
    pub pre: Vec<Option<DMatrix<f64>>>,
    /// `post[k]` is `F_k`, with `post[0] = X` and `post[L] = G_L`.
    pub post: Vec<DMatrix<f64>>,
}

impl ForwardTrace {
    pub fn features(&self, k: usize) -> &DMatrix<f64> {
        &self.post[k]
    }

    pub fn pre_activation(&self, k: usize) -> Option<&DMatrix<f64>> {
        self.pre.get(k).and_then(Option::as_ref)
    }

    pub fn output(&self) -> &DMatrix<f64> {
        self.post.last().expect("trace always holds the input")
    }

    pub fn samples(&self) -> usize {
        self.post[0].nrows()
    }

    /// Highest layer index present.
    pub fn depth(&self) -> usize {
        self.post.len() - 1
    }
}

/// Evaluate layers `1..=L`.
pub fn forward(spec: &NetworkSpec, params: &Params, x: &DMatrix<f64>) -> Result<ForwardTrace> {
    params.validate(spec)?;
    forward_prefix(spec, params, x, spec.depth())
}

/// Evaluate layers `1..=upto`; `params` must cover at least that prefix.
pub fn forward_prefix(
    spec: &NetworkSpec,
    params: &Params,
    x: &DMatrix<f64>,
    upto: usize,
) -> Result<ForwardTrace> {
    params.validate_prefix(spec, upto)?;
    if x.ncols() != spec.input_width() {
        return Err(Error::structure(format!(
            "input has {} columns, network expects {}",
            x.ncols(),
            spec.input_width()
        )));
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::NumericOverflow { layer: 0 });
    }
    let mut pre = Vec::with_capacity(upto + 1);
    let mut post = Vec::with_capacity(upto + 1);
    pre.push(None);
    post.push(x.clone());
    for k in 1..=upto {
        let (g, f) = apply_layer(spec, k, params.layer(k), &post[k - 1])?;
        pre.push(g);
        post.push(f);
    }
    Ok(ForwardTrace { pre, post })
}

/// Evaluate a single layer `k` on the features of layer `k - 1`.
pub fn apply_layer(
    spec: &NetworkSpec,
    k: usize,
    params: Option<&LayerParams>,
    input: &DMatrix<f64>,
) -> Result<(Option<DMatrix<f64>>, DMatrix<f64>)> {
    let layer = spec.layer(k)?;
    if input.ncols() != spec.width(k - 1) {
        return Err(Error::structure(format!(
            "layer {k}: input has {} columns, expected {}",
            input.ncols(),
            spec.width(k - 1)
        )));
    }
    let result = match layer {
        LayerSpec::MaxPool { layout } => (None, max_pool(layout, input)),
        _ => {
            let p = params.ok_or_else(|| Error::structure(format!("layer {k}: missing parameters")))?;
            let g = match layer {
                LayerSpec::Convolutional { layout, .. } => {
                    conv_preactivation(layout, &p.weights, &p.bias, input)
                }
                _ => dense_preactivation(&p.weights, &p.bias, input),
            };
            let act = layer.activation().expect("weighted layers carry an activation");
            let f = g.map(|v| act.eval(v));
            (Some(g), f)
        }
    };
    if result.1.iter().any(|v| !v.is_finite()) {
        return Err(Error::NumericOverflow { layer: k });
    }
    Ok(result)
}

fn dense_preactivation(w: &DMatrix<f64>, b: &DVector<f64>, input: &DMatrix<f64>) -> DMatrix<f64> {
    let mut g = input * w;
    for (mut col, &bias) in g.column_iter_mut().zip(b.iter()) {
        col.add_scalar_mut(bias);
    }
    g
}

/// `G = F_prev * lift(W) + 1 b^T`, evaluated patch by patch without forming `lift(W)`.
fn conv_preactivation(
    layout: &PatchLayout,
    w: &DMatrix<f64>,
    b: &DVector<f64>,
    input: &DMatrix<f64>,
) -> DMatrix<f64> {
    let n = input.nrows();
    let filters = w.ncols();
    let width = layout.num_patches() * filters;
    let src = input.as_slice();
    let mut g = DMatrix::zeros(n, width);
    let out = g.as_mut_slice();
    for (p, patch) in layout.patches().iter().enumerate() {
        for t in 0..filters {
            let col = p * filters + t;
            let dst = &mut out[col * n..(col + 1) * n];
            dst.fill(b[col]);
            for (r, &idx) in patch.iter().enumerate() {
                let weight = w[(r, t)];
                if weight == 0.0 {
                    continue;
                }
                for (d, s) in dst.iter_mut().zip(&src[idx * n..(idx + 1) * n]) {
                    *d += weight * s;
                }
            }
        }
    }
    g
}

fn max_pool(layout: &PatchLayout, input: &DMatrix<f64>) -> DMatrix<f64> {
    let n = input.nrows();
    let mut f = DMatrix::from_element(n, layout.num_patches(), f64::NEG_INFINITY);
    for (p, patch) in layout.patches().iter().enumerate() {
        let mut col = f.column_mut(p);
        for &idx in patch {
            for (dst, &v) in col.iter_mut().zip(input.column(idx).iter()) {
                if v > *dst {
                    *dst = v;
                }
            }
        }
    }
    f
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::activation::ActivationKind;
    use nalgebra::dmatrix;

    #[test]
    fn sigmoid_zero_weights_give_half() {
        let spec = NetworkSpec::new(
            3,
            vec![LayerSpec::dense(4, ActivationKind::Sigmoid), LayerSpec::output(1)],
        )
        .unwrap();
        let params = Params::zeros(&spec);
        let x = dmatrix![1.0, -2.0, 3.0; 0.5, 0.0, 9.0];
        let trace = forward(&spec, &params, &x).unwrap();
        assert!(trace.features(1).iter().all(|&v| v == 0.5));
    }

    #[test]
    fn max_pool_rows() {
        let layout = PatchLayout::new(vec![vec![0, 1], vec![1, 2]], 3).unwrap();
        let f = max_pool(&layout, &dmatrix![3.0, -1.0, 7.0]);
        assert_eq!(f, dmatrix![3.0, 7.0]);
    }

    #[test]
    fn lift_rejects_pool_and_bad_shape() {
        let spec = NetworkSpec::new(
            4,
            vec![
                LayerSpec::max_pool(PatchLayout::conv1d(4, 2, 2).unwrap()),
                LayerSpec::output(1),
            ],
        )
        .unwrap();
        assert!(matches!(
            lift_weights(&spec, 1, &DMatrix::zeros(2, 1)),
            Err(Error::UnsupportedLayer { layer: 1, .. })
        ));
        assert!(matches!(
            lift_weights(&spec, 2, &DMatrix::zeros(3, 1)),
            Err(Error::Structure(_))
        ));
    }

    #[test]
    fn overflow_names_layer() {
        let spec = NetworkSpec::new(
            1,
            vec![LayerSpec::dense(1, ActivationKind::Relu), LayerSpec::output(1)],
        )
        .unwrap();
        let mut params = Params::zeros(&spec);
        params.layer_mut(1).unwrap().weights[(0, 0)] = f64::MAX;
        params.layer_mut(2).unwrap().weights[(0, 0)] = f64::MAX;
        let err = forward(&spec, &params, &dmatrix![4.0]).unwrap_err();
        assert_eq!(err, Error::NumericOverflow { layer: 1 });
    }
}
