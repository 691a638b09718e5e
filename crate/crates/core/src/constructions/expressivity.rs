use nalgebra::{DMatrix, DVector};

use super::{independence_construction_detailed, min_norm_solve, ConstructionParams};
use crate::error::{Error, Result};
use crate::network::{LayerParams, NetworkSpec, Params};

/// Hidden parameters (layers `1..L-1`) and output weights `lambda` with
/// `f_L(x_i) = y_i` for every sample.
pub fn expressivity_fit(
    spec: &NetworkSpec,
    x: &DMatrix<f64>,
    y: &DVector<f64>,
    cfg: &ConstructionParams,
) -> Result<(Params, DVector<f64>)> {
    if spec.output_width() != 1 {
        return Err(Error::structure(format!(
            "exact interpolation needs a scalar output, network has {}",
            spec.output_width()
        )));
    }
    if y.len() != x.nrows() {
        return Err(Error::structure(format!("{} targets for {} samples", y.len(), x.nrows())));
    }
    let k = spec.depth() - 1;
    if k == 0 {
        return Err(Error::structure("network has no hidden layer"));
    }
    let built = independence_construction_detailed(spec, x, k, cfg)?;
    let rhs = DMatrix::from_column_slice(y.len(), 1, y.as_slice());
    let lambda = min_norm_solve(&built.features, &rhs)?;
    Ok((built.params, lambda.column(0).into_owned()))
}

/// Append output weights (and a zero bias) to parameters of layers `1..L-1`.
pub fn with_output_layer(mut params: Params, weights: DMatrix<f64>) -> Params {
    let m = weights.ncols();
    params.layers.push(Some(LayerParams::new(weights, DVector::zeros(m))));
    params
}
