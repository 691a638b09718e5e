//! Network architecture and parameters.
//!
//! Layers are numbered `1..=L` as in the feature-matrix notation `F_0 .. F_L`;
//! the input is layer 0. Internally `layers[k - 1]` holds layer `k`.

use std::borrow::Cow;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::activation::ActivationKind;
use crate::error::{Error, Result};
use crate::layout::PatchLayout;

#[derive(Debug, Clone, PartialEq)]
pub enum LayerSpec {
    /// `n_k = filters * layout.num_patches()`, unit `h = p * filters + t`.
    Convolutional {
        layout: PatchLayout,
        filters: usize,
        activation: ActivationKind,
    },
    FullyConnected {
        out_width: usize,
        activation: ActivationKind,
    },
    /// `n_k = layout.num_patches()`.
    MaxPool { layout: PatchLayout },
    /// Fully connected, no nonlinearity.
    Output { out_width: usize },
}

impl LayerSpec {
    pub fn conv(layout: PatchLayout, filters: usize, activation: ActivationKind) -> Self {
        LayerSpec::Convolutional {
            layout,
            filters,
            activation,
        }
    }

    pub fn dense(out_width: usize, activation: ActivationKind) -> Self {
        LayerSpec::FullyConnected {
            out_width,
            activation,
        }
    }

    pub fn max_pool(layout: PatchLayout) -> Self {
        LayerSpec::MaxPool { layout }
    }

    pub fn output(out_width: usize) -> Self {
        LayerSpec::Output { out_width }
    }

    pub fn out_width(&self) -> usize {
        match self {
            LayerSpec::Convolutional {
                layout, filters, ..
            } => layout.num_patches() * filters,
            LayerSpec::FullyConnected { out_width, .. } | LayerSpec::Output { out_width } => {
                *out_width
            }
            LayerSpec::MaxPool { layout } => layout.num_patches(),
        }
    }

    pub fn activation(&self) -> Option<ActivationKind> {
        match self {
            LayerSpec::Convolutional { activation, .. }
            | LayerSpec::FullyConnected { activation, .. } => Some(*activation),
            LayerSpec::Output { .. } => Some(ActivationKind::Identity),
            LayerSpec::MaxPool { .. } => None,
        }
    }

    pub fn is_pool(&self) -> bool {
        matches!(self, LayerSpec::MaxPool { .. })
    }

    /// Fully connected in the sense of a single whole-layer patch.
    pub fn is_dense(&self) -> bool {
        matches!(
            self,
            LayerSpec::FullyConnected { .. } | LayerSpec::Output { .. }
        )
    }

    /// Filter count `T_k`; for dense layers `T_k = n_k`.
    pub fn filters(&self) -> Option<usize> {
        match self {
            LayerSpec::Convolutional { filters, .. } => Some(*filters),
            LayerSpec::FullyConnected { out_width, .. } | LayerSpec::Output { out_width } => {
                Some(*out_width)
            }
            LayerSpec::MaxPool { .. } => None,
        }
    }

    /// Patch layout over the previous layer; dense layers use one whole-layer patch.
    pub fn layout(&self, in_width: usize) -> Result<Cow<'_, PatchLayout>> {
        match self {
            LayerSpec::Convolutional { layout, .. } | LayerSpec::MaxPool { layout } => {
                Ok(Cow::Borrowed(layout))
            }
            _ => Ok(Cow::Owned(PatchLayout::whole(in_width)?)),
        }
    }

    /// `(rows, cols)` of the filter matrix `W_k`.
    pub fn filter_shape(&self, in_width: usize) -> Option<(usize, usize)> {
        match self {
            LayerSpec::Convolutional {
                layout, filters, ..
            } => Some((layout.patch_len(), *filters)),
            LayerSpec::FullyConnected { out_width, .. } | LayerSpec::Output { out_width } => {
                Some((in_width, *out_width))
            }
            LayerSpec::MaxPool { .. } => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NetworkSpec {
    input_width: usize,
    layers: Vec<LayerSpec>,
}

impl NetworkSpec {
    pub fn new(input_width: usize, layers: Vec<LayerSpec>) -> Result<Self> {
        if input_width == 0 {
            return Err(Error::structure("input width must be positive"));
        }
        if layers.is_empty() {
            return Err(Error::structure("network needs at least the output layer"));
        }
        let last = layers.len() - 1;
        let mut width = input_width;
        for (idx, layer) in layers.iter().enumerate() {
            let k = idx + 1;
            match layer {
                LayerSpec::Output { .. } if idx != last => {
                    return Err(Error::structure(format!(
                        "layer {k}: output layer must be the last layer"
                    )))
                }
                _ if idx == last && !matches!(layer, LayerSpec::Output { .. }) => {
                    return Err(Error::structure("last layer must be a fully connected output layer"))
                }
                LayerSpec::Convolutional {
                    layout, filters, ..
                } => {
                    if *filters == 0 {
                        return Err(Error::structure(format!("layer {k}: zero filters")));
                    }
                    if layout.in_width() != width {
                        return Err(Error::structure(format!(
                            "layer {k}: layout spans {} neurons but previous width is {width}",
                            layout.in_width()
                        )));
                    }
                }
                LayerSpec::MaxPool { layout } => {
                    if layout.in_width() != width {
                        return Err(Error::structure(format!(
                            "layer {k}: layout spans {} neurons but previous width is {width}",
                            layout.in_width()
                        )));
                    }
                }
                LayerSpec::FullyConnected { out_width, .. } | LayerSpec::Output { out_width } => {
                    if *out_width == 0 {
                        return Err(Error::structure(format!("layer {k}: zero width")));
                    }
                }
            }
            width = layer.out_width();
        }
        Ok(NetworkSpec {
            input_width,
            layers,
        })
    }

    pub fn input_width(&self) -> usize {
        self.input_width
    }

    /// Number of layers `L` (excluding the input).
    pub fn depth(&self) -> usize {
        self.layers.len()
    }

    pub fn layers(&self) -> &[LayerSpec] {
        &self.layers
    }

    /// Layer `k` in `1..=L`.
    pub fn layer(&self, k: usize) -> Result<&LayerSpec> {
        if k == 0 || k > self.layers.len() {
            return Err(Error::structure(format!(
                "layer {k} out of range 1..={}",
                self.layers.len()
            )));
        }
        Ok(&self.layers[k - 1])
    }

    /// Widths `n_0 ..= n_L`.
    pub fn widths(&self) -> Vec<usize> {
        std::iter::once(self.input_width)
            .chain(self.layers.iter().map(LayerSpec::out_width))
            .collect()
    }

    pub fn width(&self, k: usize) -> usize {
        if k == 0 {
            self.input_width
        } else {
            self.layers[k - 1].out_width()
        }
    }

    pub fn output_width(&self) -> usize {
        self.width(self.depth())
    }

    /// Layout of the input patches (`P_0` patches of size `l_0`).
    pub fn input_layout(&self) -> Result<Cow<'_, PatchLayout>> {
        self.layers[0].layout(self.input_width)
    }

    /// The network made of layers `from..=L`, reading the `n_{from-1}` features of layer
    /// `from - 1` as its input.
    pub fn tail(&self, from: usize) -> Result<NetworkSpec> {
        if from == 0 || from > self.depth() {
            return Err(Error::structure(format!("tail start {from} out of range")));
        }
        NetworkSpec::new(self.width(from - 1), self.layers[from - 1..].to_vec())
    }

    /// Hidden activations must satisfy the limit or growth alternative.
    pub fn check_hidden_activations(&self, upto: usize) -> Result<()> {
        for (idx, layer) in self.layers[..upto.min(self.depth() - 1)].iter().enumerate() {
            if let Some(act) = layer.activation() {
                if !act.profile().admissible_hidden() {
                    return Err(Error::Assumption(format!(
                        "layer {}: activation {act} violates the limit/growth condition",
                        idx + 1
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Filter matrix `W_k` (`l_{k-1} x T_k`) and bias `b_k` (length `n_k`).
#[derive(Debug, Clone, PartialEq)]
pub struct LayerParams {
    pub weights: DMatrix<f64>,
    pub bias: DVector<f64>,
}

impl LayerParams {
    pub fn new(weights: DMatrix<f64>, bias: DVector<f64>) -> Self {
        LayerParams { weights, bias }
    }

    pub fn len(&self) -> usize {
        self.weights.len() + self.bias.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Parameters of layers `1..=len`; `None` for max-pooling layers.
///
/// A parameter set may cover only a prefix of the network (constructions build the
/// bottom layers first).
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Params {
    pub layers: Vec<Option<LayerParams>>,
}

impl Params {
    pub fn zeros(spec: &NetworkSpec) -> Self {
        Self::from_fn(spec, DMatrix::zeros)
    }

    /// Entries i.i.d. `N(0, std^2)` for weights; zero biases.
    pub fn gaussian<R: Rng>(spec: &NetworkSpec, std: f64, rng: &mut R) -> Self {
        Self::from_fn(spec, |r, c| {
            DMatrix::from_fn(r, c, |_, _| std * rng.sample::<f64, _>(StandardNormal))
        })
    }

    /// Weights scaled by `1/sqrt(fan_in)`, biases zero.
    pub fn scaled_gaussian<R: Rng>(spec: &NetworkSpec, rng: &mut R) -> Self {
        Self::from_fn(spec, |r, c| {
            let s = 1.0 / (r as f64).sqrt();
            DMatrix::from_fn(r, c, |_, _| s * rng.sample::<f64, _>(StandardNormal))
        })
    }

    fn from_fn(spec: &NetworkSpec, mut f: impl FnMut(usize, usize) -> DMatrix<f64>) -> Self {
        let widths = spec.widths();
        let layers = spec
            .layers()
            .iter()
            .enumerate()
            .map(|(idx, layer)| {
                layer.filter_shape(widths[idx]).map(|(r, c)| LayerParams {
                    weights: f(r, c),
                    bias: DVector::zeros(layer.out_width()),
                })
            })
            .collect();
        Params { layers }
    }

    pub fn len(&self) -> usize {
        self.layers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.layers.is_empty()
    }

    /// Parameters of layer `k` in `1..=L`.
    pub fn layer(&self, k: usize) -> Option<&LayerParams> {
        self.layers.get(k.wrapping_sub(1)).and_then(Option::as_ref)
    }

    pub fn layer_mut(&mut self, k: usize) -> Option<&mut LayerParams> {
        self.layers.get_mut(k.wrapping_sub(1)).and_then(Option::as_mut)
    }

    /// Check shapes and finiteness of the first `upto` layers against `spec`.
    pub fn validate_prefix(&self, spec: &NetworkSpec, upto: usize) -> Result<()> {
        if self.layers.len() < upto || upto > spec.depth() {
            return Err(Error::structure(format!(
                "parameters cover {} layers, {upto} required",
                self.layers.len()
            )));
        }
        let widths = spec.widths();
        for k in 1..=upto {
            let layer = &spec.layers()[k - 1];
            match (layer.filter_shape(widths[k - 1]), &self.layers[k - 1]) {
                (None, None) => {}
                (Some((r, c)), Some(p)) => {
                    if p.weights.shape() != (r, c) || p.bias.len() != widths[k] {
                        return Err(Error::structure(format!(
                            "layer {k}: expected W {r}x{c} and b of length {}, got W {}x{} and b of length {}",
                            widths[k],
                            p.weights.nrows(),
                            p.weights.ncols(),
                            p.bias.len()
                        )));
                    }
                    if p.weights.iter().chain(p.bias.iter()).any(|v| !v.is_finite()) {
                        return Err(Error::structure(format!("layer {k}: non-finite parameter")));
                    }
                }
                (None, Some(_)) => {
                    return Err(Error::structure(format!(
                        "layer {k} is max-pooling and takes no parameters"
                    )))
                }
                (Some(_), None) => {
                    return Err(Error::structure(format!("layer {k}: missing parameters")))
                }
            }
        }
        Ok(())
    }

    pub fn validate(&self, spec: &NetworkSpec) -> Result<()> {
        if self.layers.len() != spec.depth() {
            return Err(Error::structure(format!(
                "parameters cover {} layers, network has {}",
                self.layers.len(),
                spec.depth()
            )));
        }
        self.validate_prefix(spec, spec.depth())
    }

    pub fn num_scalars(&self) -> usize {
        self.layers.iter().flatten().map(LayerParams::len).sum()
    }

    /// All parameters as one vector, layer by layer, weights (column-major) then bias.
    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.num_scalars());
        for p in self.layers.iter().flatten() {
            out.extend_from_slice(p.weights.as_slice());
            out.extend_from_slice(p.bias.as_slice());
        }
        out
    }

    pub fn for_each_mut(&mut self, mut f: impl FnMut(usize, &mut f64)) {
        let mut i = 0;
        for p in self.layers.iter_mut().flatten() {
            for v in p.weights.iter_mut().chain(p.bias.iter_mut()) {
                f(i, v);
                i += 1;
            }
        }
    }

    /// Euclidean distance between two parameter sets of the same shape.
    pub fn distance(&self, other: &Params) -> f64 {
        self.flatten()
            .iter()
            .zip(other.flatten())
            .map(|(a, b)| (a - b).powi(2))
            .sum::<f64>()
            .sqrt()
    }
}
