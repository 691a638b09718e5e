//! Squared loss and its exact gradients.
//!
//! With `Delta_L = F_L - Y` and `Delta_l = (Delta_{l+1} U_{l+1}^T) o sigma_l'(G_l)`, the
//! lifted gradient is `grad_U_l = F_{l-1}^T Delta_l`, the bias gradient is the column sum
//! of `Delta_l`, and the filter gradient is the adjoint of the lifting map applied to
//! `grad_U_l`. Filter gradients and the products with `U^T` are evaluated patch by patch,
//! so `U_l` is never formed unless lifted gradients are requested.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::forward::{forward, ForwardTrace};
use crate::layout::PatchLayout;
use crate::network::{LayerSpec, NetworkSpec, Params};

/// `0.5 * ||F_L - Y||_F^2`.
pub fn loss(trace: &ForwardTrace, y: &DMatrix<f64>) -> Result<f64> {
    residual(trace, y).map(|r| 0.5 * r.norm_squared())
}

/// `F_L - Y`.
pub fn residual(trace: &ForwardTrace, y: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let out = trace.output();
    if out.shape() != y.shape() {
        return Err(Error::structure(format!(
            "network output is {}x{}, targets are {}x{}",
            out.nrows(),
            out.ncols(),
            y.nrows(),
            y.ncols()
        )));
    }
    Ok(out - y)
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerGradient {
    pub grad_w: DMatrix<f64>,
    pub grad_b: DVector<f64>,
    /// Gradient with respect to the lifted matrix `U_l`, if requested.
    pub grad_u: Option<DMatrix<f64>>,
    /// `Delta_l`, if requested.
    pub delta: Option<DMatrix<f64>>,
}

/// Per-layer gradients; `layers[l - 1]` is `None` for pooling layers and for layers
/// below the differentiated segment.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct GradientSet {
    pub layers: Vec<Option<LayerGradient>>,
}

impl GradientSet {
    pub fn layer(&self, l: usize) -> Option<&LayerGradient> {
        self.layers.get(l.wrapping_sub(1)).and_then(Option::as_ref)
    }

    /// Gradients of all parameters in [`Params::flatten`] order.
    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for g in self.layers.iter().flatten() {
            out.extend_from_slice(g.grad_w.as_slice());
            out.extend_from_slice(g.grad_b.as_slice());
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BackwardOptions {
    /// Lowest layer whose gradients are computed.
    pub from_layer: usize,
    /// Also form `grad_U_l = F_{l-1}^T Delta_l`.
    pub lifted: bool,
    pub keep_deltas: bool,
}

impl Default for BackwardOptions {
    fn default() -> Self {
        BackwardOptions {
            from_layer: 1,
            lifted: true,
            keep_deltas: false,
        }
    }
}

impl BackwardOptions {
    /// Filter and bias gradients of every layer; what a trainer needs.
    pub fn params_only() -> Self {
        BackwardOptions {
            from_layer: 1,
            lifted: false,
            keep_deltas: false,
        }
    }
}

/// All gradients, lifted ones included.
pub fn backward(
    spec: &NetworkSpec,
    params: &Params,
    trace: &ForwardTrace,
    y: &DMatrix<f64>,
) -> Result<GradientSet> {
    backward_with(spec, params, trace, y, BackwardOptions::default())
}

pub fn backward_with(
    spec: &NetworkSpec,
    params: &Params,
    trace: &ForwardTrace,
    y: &DMatrix<f64>,
    opts: BackwardOptions,
) -> Result<GradientSet> {
    params.validate(spec)?;
    let depth = spec.depth();
    if opts.from_layer == 0 || opts.from_layer > depth {
        return Err(Error::structure(format!(
            "gradient start layer {} out of range 1..={depth}",
            opts.from_layer
        )));
    }
    if trace.depth() != depth {
        return Err(Error::structure("trace does not cover the whole network"));
    }
    for l in opts.from_layer..=depth {
        if spec.layers()[l - 1].is_pool() {
            return Err(Error::UnsupportedLayer {
                layer: l,
                reason: "backpropagation through max-pooling is not supported".into(),
            });
        }
    }
    let mut delta = residual(trace, y)?;
    let mut layers: Vec<Option<LayerGradient>> = vec![None; depth];
    for l in (opts.from_layer..=depth).rev() {
        let layer = &spec.layers()[l - 1];
        let p = params.layer(l).expect("validated");
        let input = trace.features(l - 1);
        let grad_b = DVector::from_iterator(delta.ncols(), delta.column_iter().map(|c| c.sum()));
        let (grad_w, grad_u) = match layer {
            LayerSpec::Convolutional { layout, .. } => {
                let gw = conv_filter_grad(layout, input, &delta, p.weights.ncols());
                let gu = opts.lifted.then(|| input.transpose() * &delta);
                (gw, gu)
            }
            _ => {
                let gw = input.transpose() * &delta;
                let gu = opts.lifted.then(|| gw.clone());
                (gw, gu)
            }
        };
        let next_delta = if l > opts.from_layer {
            // Delta_{l-1} = (Delta_l U_l^T) o sigma'(G_{l-1})
            let mut back = match layer {
                LayerSpec::Convolutional { layout, .. } => {
                    conv_backproject(layout, &p.weights, &delta)
                }
                _ => &delta * p.weights.transpose(),
            };
            let act = spec.layers()[l - 2].activation().expect("checked: no pooling");
            let g = trace
                .pre_activation(l - 1)
                .ok_or_else(|| Error::structure(format!("trace lacks G_{}", l - 1)))?;
            back.zip_apply(g, |d, gv| *d *= act.derivative(gv));
            Some(back)
        } else {
            None
        };
        let kept = if opts.keep_deltas {
            Some(std::mem::replace(&mut delta, DMatrix::zeros(0, 0)))
        } else {
            None
        };
        layers[l - 1] = Some(LayerGradient {
            grad_w,
            grad_b,
            grad_u,
            delta: kept,
        });
        if let Some(d) = next_delta {
            delta = d;
        }
    }
    Ok(GradientSet { layers })
}

/// `grad_W[r, t] = sum_p <F[:, patch_p[r]], Delta[:, p*T + t]>`.
fn conv_filter_grad(
    layout: &PatchLayout,
    input: &DMatrix<f64>,
    delta: &DMatrix<f64>,
    filters: usize,
) -> DMatrix<f64> {
    let n = input.nrows();
    let src = input.as_slice();
    let d = delta.as_slice();
    let mut gw = DMatrix::zeros(layout.patch_len(), filters);
    for (p, patch) in layout.patches().iter().enumerate() {
        for t in 0..filters {
            let col = p * filters + t;
            let dcol = &d[col * n..(col + 1) * n];
            for (r, &idx) in patch.iter().enumerate() {
                let s = &src[idx * n..(idx + 1) * n];
                gw[(r, t)] += s.iter().zip(dcol).map(|(a, b)| a * b).sum::<f64>();
            }
        }
    }
    gw
}

/// `Delta * lift(W)^T`, scattering each patch's contribution back to its neurons.
fn conv_backproject(layout: &PatchLayout, w: &DMatrix<f64>, delta: &DMatrix<f64>) -> DMatrix<f64> {
    let n = delta.nrows();
    let filters = w.ncols();
    let d = delta.as_slice();
    let mut out = DMatrix::zeros(n, layout.in_width());
    let o = out.as_mut_slice();
    for (p, patch) in layout.patches().iter().enumerate() {
        for t in 0..filters {
            let col = p * filters + t;
            let dcol = &d[col * n..(col + 1) * n];
            for (r, &idx) in patch.iter().enumerate() {
                let weight = w[(r, t)];
                for (dst, s) in o[idx * n..(idx + 1) * n].iter_mut().zip(dcol) {
                    *dst += weight * s;
                }
            }
        }
    }
    out
}

/// Central differences `(Phi(w + h) - Phi(w - h)) / 2h` on every filter and bias entry.
pub fn finite_difference_gradient(
    spec: &NetworkSpec,
    params: &Params,
    x: &DMatrix<f64>,
    y: &DMatrix<f64>,
    step: f64,
) -> Result<GradientSet> {
    if !(step > 0.0) {
        return Err(Error::structure("finite-difference step must be positive"));
    }
    params.validate(spec)?;
    let phi = |p: &Params| -> Result<f64> { loss(&forward(spec, p, x)?, y) };
    let mut work = params.clone();
    let mut layers = Vec::with_capacity(spec.depth());
    for l in 1..=spec.depth() {
        let Some(p) = params.layer(l) else {
            layers.push(None);
            continue;
        };
        let mut grad_w = DMatrix::zeros(p.weights.nrows(), p.weights.ncols());
        for idx in 0..p.weights.len() {
            let orig = p.weights.as_slice()[idx];
            let mut eval = |v: f64| -> Result<f64> {
                work.layer_mut(l).unwrap().weights.as_mut_slice()[idx] = v;
                phi(&work)
            };
            let plus = eval(orig + step)?;
            let minus = eval(orig - step)?;
            eval(orig)?;
            grad_w.as_mut_slice()[idx] = (plus - minus) / (2.0 * step);
        }
        let mut grad_b = DVector::zeros(p.bias.len());
        for idx in 0..p.bias.len() {
            let orig = p.bias[idx];
            work.layer_mut(l).unwrap().bias[idx] = orig + step;
            let plus = phi(&work)?;
            work.layer_mut(l).unwrap().bias[idx] = orig - step;
            let minus = phi(&work)?;
            work.layer_mut(l).unwrap().bias[idx] = orig;
            grad_b[idx] = (plus - minus) / (2.0 * step);
        }
        layers.push(Some(LayerGradient {
            grad_w,
            grad_b,
            grad_u: None,
            delta: None,
        }));
    }
    Ok(GradientSet { layers })
}

/// `max_i |a_i - b_i| / max(max_i |b_i|, floor)` over all filter and bias gradients.
pub fn relative_gradient_error(analytic: &GradientSet, reference: &GradientSet) -> f64 {
    let a = analytic.flatten();
    let b = reference.flatten();
    assert_eq!(a.len(), b.len(), "gradient sets of different shape");
    let scale = b.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1e-12);
    a.iter()
        .zip(&b)
        .fold(0.0f64, |m, (u, v)| m.max((u - v).abs()))
        / scale
}
