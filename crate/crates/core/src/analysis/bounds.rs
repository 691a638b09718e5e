use nalgebra::DMatrix;

use crate::analysis::rank::{estimate_rank, singular_values, RankReport};
use crate::assumptions::check_architecture;
use crate::backprop::{backward_with, residual, BackwardOptions};
use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::forward::{lift_weights, ForwardTrace};
use crate::network::{NetworkSpec, Params};

/// Per-layer factors entering the gradient bounds, for `l = k+1 .. L-1`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundFactor {
    pub layer: usize,
    /// Extreme singular values of `U_{l+1}`.
    pub sigma_min_u: f64,
    pub sigma_max_u: f64,
    /// Extreme absolute entries of `sigma_l'(G_l)`.
    pub min_abs_derivative: f64,
    pub max_abs_derivative: f64,
}

/// Two-sided bound on `||grad_{U_{k+1}} Phi||_F` in terms of the residual.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundReport {
    pub wide_layer: usize,
    pub lower: f64,
    pub upper: f64,
    pub grad_norm: f64,
    /// `||F_L - Y||_F`.
    pub residual: f64,
    pub sigma_min_features: f64,
    pub sigma_max_features: f64,
    pub factors: Vec<BoundFactor>,
}

impl BoundReport {
    /// `lower <= grad_norm <= upper` up to a relative slack.
    pub fn sandwich_holds(&self, slack: f64) -> bool {
        self.lower <= self.grad_norm * (1.0 + slack) + f64::MIN_POSITIVE
            && self.grad_norm <= self.upper * (1.0 + slack) + f64::MIN_POSITIVE
    }

    /// Upper bound divided by the residual norm.
    pub fn upper_factor(&self) -> f64 {
        self.sigma_max_features
            * self
                .factors
                .iter()
                .map(|f| f.sigma_max_u * f.max_abs_derivative)
                .product::<f64>()
    }

    pub fn lower_factor(&self) -> f64 {
        self.sigma_min_features
            * self
                .factors
                .iter()
                .map(|f| f.sigma_min_u * f.min_abs_derivative)
                .product::<f64>()
    }

    pub const CSV_HEADER: [&'static str; 8] = [
        "wide_layer",
        "lower",
        "grad_norm",
        "upper",
        "residual",
        "sigma_min_features",
        "sigma_max_features",
        "factors",
    ];

    /// `factors` is a `;`-separated list of `layer:smin_u:smax_u:min_dsigma:max_dsigma`.
    pub fn csv_record(&self) -> Vec<String> {
        let factors = self
            .factors
            .iter()
            .map(|f| {
                format!(
                    "{}:{:e}:{:e}:{:e}:{:e}",
                    f.layer, f.sigma_min_u, f.sigma_max_u, f.min_abs_derivative, f.max_abs_derivative
                )
            })
            .collect::<Vec<_>>()
            .join(";");
        vec![
            self.wide_layer.to_string(),
            format!("{:e}", self.lower),
            format!("{:e}", self.grad_norm),
            format!("{:e}", self.upper),
            format!("{:e}", self.residual),
            format!("{:e}", self.sigma_min_features),
            format!("{:e}", self.sigma_max_features),
            factors,
        ]
    }
}

/// Evaluate both sides of the gradient sandwich at wide layer `k` together with the
/// actual gradient norm.
pub fn gradient_bounds(
    spec: &NetworkSpec,
    params: &Params,
    trace: &ForwardTrace,
    y: &DMatrix<f64>,
    k: usize,
) -> Result<BoundReport> {
    check_architecture(spec, k, trace.samples())?;
    let depth = spec.depth();
    let grads = backward_with(
        spec,
        params,
        trace,
        y,
        BackwardOptions {
            from_layer: k + 1,
            lifted: true,
            keep_deltas: false,
        },
    )?;
    let grad_u = grads
        .layer(k + 1)
        .and_then(|g| g.grad_u.as_ref())
        .expect("lifted gradient requested");
    let grad_norm = grad_u.norm();
    let res = residual(trace, y)?.norm();

    let fk = singular_values(trace.features(k))?;
    let sigma_max_features = fk.first().copied().unwrap_or(0.0);
    let sigma_min_features = fk.last().copied().unwrap_or(0.0);
    let mut factors = Vec::with_capacity(depth.saturating_sub(k + 1));
    for l in k + 1..depth {
        let u = lift_weights(spec, l + 1, &params.layer(l + 1).expect("validated").weights)?;
        let s = singular_values(&u)?;
        let act = spec.layer(l)?.activation().expect("no pooling");
        let g = trace
            .pre_activation(l)
            .ok_or_else(|| Error::structure(format!("trace lacks G_{l}")))?;
        let (mut dmin, mut dmax) = (f64::INFINITY, 0.0f64);
        for &v in g.iter() {
            let d = act.derivative(v).abs();
            dmin = dmin.min(d);
            dmax = dmax.max(d);
        }
        factors.push(BoundFactor {
            layer: l,
            sigma_min_u: s.last().copied().unwrap_or(0.0),
            sigma_max_u: s.first().copied().unwrap_or(0.0),
            min_abs_derivative: dmin,
            max_abs_derivative: dmax,
        });
    }
    let mut report = BoundReport {
        wide_layer: k,
        lower: 0.0,
        upper: 0.0,
        grad_norm,
        residual: res,
        sigma_min_features,
        sigma_max_features,
        factors,
    };
    report.lower = report.lower_factor() * res;
    report.upper = report.upper_factor() * res;
    Ok(report)
}

#[derive(Debug, Clone, PartialEq)]
pub struct MembershipReport {
    pub in_s_k: bool,
    /// Rank reports of `F_k`, then `U_{k+2} .. U_L`.
    pub detail: Vec<RankReport>,
}

/// Is the point in the set where `F_k` has rank `N` and `U_{k+2}, ..., U_L` have full rank?
pub fn s_k_membership(
    spec: &NetworkSpec,
    params: &Params,
    trace: &ForwardTrace,
    k: usize,
) -> Result<MembershipReport> {
    if k == 0 || k >= spec.depth() {
        return Err(Error::structure(format!("wide layer {k} must be hidden")));
    }
    let n = trace.samples();
    let fk = estimate_rank(trace.features(k))?;
    let mut in_s_k = fk.estimated_rank == n;
    let mut detail = vec![fk];
    for l in k + 2..=spec.depth() {
        let p = params
            .layer(l)
            .ok_or_else(|| Error::UnsupportedLayer {
                layer: l,
                reason: "max-pooling layer above the wide layer".into(),
            })?;
        let r = estimate_rank(&lift_weights(spec, l, &p.weights)?)?;
        in_s_k &= r.is_full_rank();
        detail.push(r);
    }
    Ok(MembershipReport { in_s_k, detail })
}

#[derive(Debug, Clone, PartialEq)]
pub struct CriticalPointReport {
    /// False when the point is outside `S_k`; the equivalence is then not asserted.
    pub applicable: bool,
    pub loss: f64,
    pub grad_norm: f64,
    /// Gradient tolerance `upper_factor * sqrt(2 * tol)` implied by the loss tolerance.
    pub grad_tolerance: f64,
    pub equivalence_holds: bool,
    pub bounds: BoundReport,
}

/// Zero loss versus vanishing `grad_{U_{k+1}} Phi` at a point of `S_k`.
pub fn critical_point_check(
    spec: &NetworkSpec,
    params: &Params,
    dataset: &Dataset,
    k: usize,
    tol: f64,
) -> Result<CriticalPointReport> {
    let trace = crate::forward::forward(spec, params, &dataset.x)?;
    let membership = s_k_membership(spec, params, &trace, k)?;
    let bounds = gradient_bounds(spec, params, &trace, &dataset.y, k)?;
    let loss = 0.5 * bounds.residual * bounds.residual;
    let grad_tolerance = bounds.upper_factor() * (2.0 * tol).sqrt();
    let loss_small = loss <= tol;
    let grad_small = bounds.grad_norm <= grad_tolerance;
    Ok(CriticalPointReport {
        applicable: membership.in_s_k,
        loss,
        grad_norm: bounds.grad_norm,
        grad_tolerance,
        equivalence_holds: membership.in_s_k && loss_small == grad_small,
        bounds,
    })
}
