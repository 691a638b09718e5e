//! Activation functions and the growth/limit profile each one satisfies.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ActivationKind {
    Relu,
    Sigmoid,
    /// `(1/alpha) * ln(1 + exp(alpha * t))`.
    Softplus { alpha: f64 },
    /// Only meaningful on the output layer.
    Identity,
}

/// Asymptotic limits and growth constants of an activation.
///
/// `limit_neg`/`limit_pos` are `None` when the limit is infinite.
/// `exp_bound = (rho1, rho2)` bounds `|sigma(t)| <= rho1 * exp(rho2 * t)` for `t < 0`,
/// `linear_bound = (rho3, rho4)` bounds `|sigma(t)| <= rho3 * t + rho4` for `t >= 0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ActivationProfile {
    pub limit_neg: Option<f64>,
    pub limit_pos: Option<f64>,
    pub exp_bound: Option<(f64, f64)>,
    pub linear_bound: Option<(f64, f64)>,
    pub strictly_monotone: bool,
    pub analytic: bool,
    /// Open interval of attainable values.
    pub range: (f64, f64),
}

impl ActivationProfile {
    /// Either both limits are finite with a vanishing product, or both growth bounds exist.
    pub fn satisfies_limit_alternative(&self) -> bool {
        matches!((self.limit_neg, self.limit_pos), (Some(a), Some(b)) if a * b == 0.0)
    }

    pub fn satisfies_growth_alternative(&self) -> bool {
        self.exp_bound.is_some() && self.linear_bound.is_some()
    }

    pub fn admissible_hidden(&self) -> bool {
        self.satisfies_limit_alternative() || self.satisfies_growth_alternative()
    }
}

/// A failed numeric check of an activation against its profile.
#[derive(Debug, Clone, PartialEq)]
pub struct ProfileViolation {
    pub t: f64,
    pub value: f64,
    pub bound: f64,
    pub check: &'static str,
}

#[inline]
fn sigmoid(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}

impl ActivationKind {
    pub fn softplus(alpha: f64) -> Self {
        ActivationKind::Softplus { alpha }
    }

    #[inline]
    pub fn eval(&self, t: f64) -> f64 {
        match *self {
            ActivationKind::Relu => t.max(0.0),
            ActivationKind::Sigmoid => sigmoid(t),
            ActivationKind::Softplus { alpha } => {
                let s = alpha * t;
                if s > 0.0 {
                    t + (-s).exp().ln_1p() / alpha
                } else {
                    s.exp().ln_1p() / alpha
                }
            }
            ActivationKind::Identity => t,
        }
    }

    /// Derivative; ReLU uses the subgradient 0 at the kink.
    #[inline]
    pub fn derivative(&self, t: f64) -> f64 {
        match *self {
            ActivationKind::Relu => {
                if t > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            ActivationKind::Sigmoid => {
                let s = sigmoid(t);
                s * (1.0 - s)
            }
            ActivationKind::Softplus { alpha } => sigmoid(alpha * t),
            ActivationKind::Identity => 1.0,
        }
    }

    /// Inverse on the attainable range.
    pub fn inverse(&self, y: f64) -> Result<f64> {
        let (lo, hi) = self.profile().range;
        let inside = y > lo && y < hi || matches!(self, ActivationKind::Identity);
        if !inside || !y.is_finite() {
            return Err(Error::Range(format!(
                "{y} is outside the open range ({lo}, {hi}) of {self}"
            )));
        }
        Ok(match *self {
            ActivationKind::Relu | ActivationKind::Identity => y,
            ActivationKind::Sigmoid => (y / (1.0 - y)).ln(),
            // y + ln(1 - exp(-alpha y)) / alpha
            ActivationKind::Softplus { alpha } => y + (-(-alpha * y).exp_m1()).ln() / alpha,
        })
    }

    pub fn profile(&self) -> ActivationProfile {
        match *self {
            ActivationKind::Relu => ActivationProfile {
                limit_neg: Some(0.0),
                limit_pos: None,
                exp_bound: Some((1.0, 1.0)),
                linear_bound: Some((1.0, 1.0)),
                strictly_monotone: false,
                analytic: false,
                range: (0.0, f64::INFINITY),
            },
            ActivationKind::Sigmoid => ActivationProfile {
                limit_neg: Some(0.0),
                limit_pos: Some(1.0),
                exp_bound: None,
                linear_bound: None,
                strictly_monotone: true,
                analytic: true,
                range: (0.0, 1.0),
            },
            ActivationKind::Softplus { alpha } => ActivationProfile {
                limit_neg: Some(0.0),
                limit_pos: None,
                exp_bound: Some((1.0 / alpha, alpha)),
                linear_bound: Some((1.0, std::f64::consts::LN_2 / alpha)),
                strictly_monotone: true,
                analytic: true,
                range: (0.0, f64::INFINITY),
            },
            ActivationKind::Identity => ActivationProfile {
                limit_neg: None,
                limit_pos: None,
                exp_bound: None,
                linear_bound: None,
                strictly_monotone: true,
                analytic: true,
                range: (f64::NEG_INFINITY, f64::INFINITY),
            },
        }
    }

    /// Strictly monotone and differentiable everywhere.
    pub fn is_smooth_monotone(&self) -> bool {
        matches!(
            self,
            ActivationKind::Sigmoid | ActivationKind::Softplus { .. }
        )
    }

    /// Offset with `sigma(beta) != 0`, used by the rank construction.
    pub fn default_beta(&self) -> f64 {
        match self {
            ActivationKind::Sigmoid => 0.0,
            _ => 1.0,
        }
    }

    /// An interval `(beta - 1, beta + 1)` on which the activation is injective.
    pub fn bijective_interval(&self) -> (f64, f64) {
        let beta = self.default_beta();
        (beta - 1.0, beta + 1.0)
    }

    /// Closed sub-interval of the range used for synthetic targets, chosen so that
    /// the inverse stays well conditioned.
    pub fn target_interval(&self) -> Option<(f64, f64)> {
        match self {
            ActivationKind::Sigmoid => Some((0.2, 0.8)),
            ActivationKind::Softplus { .. } => Some((0.5, 1.5)),
            _ => None,
        }
    }

    /// Evaluate the profile bounds at the given points.
    pub fn verify_profile(&self, points: &[f64]) -> std::result::Result<(), ProfileViolation> {
        let prof = self.profile();
        for &t in points {
            let v = self.eval(t);
            let fail = |bound: f64, check| ProfileViolation {
                t,
                value: v,
                bound,
                check,
            };
            if let Some((rho1, rho2)) = prof.exp_bound {
                if t < 0.0 {
                    let bound = rho1 * (rho2 * t).exp();
                    // ReLU's bound is strict: 0 < e^t.
                    let ok = match self {
                        ActivationKind::Relu => v.abs() < bound,
                        // ln(1 + u) <= u holds exactly, but both sides carry a few ulps
                        _ => v.abs() <= bound * (1.0 + 4.0 * f64::EPSILON),
                    };
                    if !ok || v < 0.0 {
                        return Err(fail(bound, "exponential bound for t < 0"));
                    }
                }
            }
            if let Some((rho3, rho4)) = prof.linear_bound {
                if t >= 0.0 {
                    let bound = rho3 * t + rho4;
                    // one ulp of slack for the rounding in ln(2)/alpha + t
                    if v.abs() > bound * (1.0 + f64::EPSILON) {
                        return Err(fail(bound, "linear bound for t >= 0"));
                    }
                }
            }
            if !(v >= prof.range.0 && v <= prof.range.1) {
                return Err(fail(prof.range.0, "range"));
            }
        }
        if let (Some(lo), Some(hi)) = (prof.limit_neg, prof.limit_pos) {
            if (self.eval(-20.0) - lo).abs() > 1e-6 {
                return Err(ProfileViolation {
                    t: -20.0,
                    value: self.eval(-20.0),
                    bound: lo,
                    check: "limit at -inf",
                });
            }
            if (self.eval(20.0) - hi).abs() > 1e-6 {
                return Err(ProfileViolation {
                    t: 20.0,
                    value: self.eval(20.0),
                    bound: hi,
                    check: "limit at +inf",
                });
            }
        }
        Ok(())
    }
}

impl fmt::Display for ActivationKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ActivationKind::Relu => f.write_str("relu"),
            ActivationKind::Sigmoid => f.write_str("sigmoid"),
            ActivationKind::Softplus { alpha } => write!(f, "softplus:{alpha}"),
            ActivationKind::Identity => f.write_str("identity"),
        }
    }
}

impl FromStr for ActivationKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "relu" => Ok(ActivationKind::Relu),
            "sigmoid" => Ok(ActivationKind::Sigmoid),
            "identity" => Ok(ActivationKind::Identity),
            "softplus" => Ok(ActivationKind::Softplus { alpha: 1.0 }),
            _ => {
                let alpha = s
                    .strip_prefix("softplus:")
                    .and_then(|a| a.parse::<f64>().ok())
                    .ok_or_else(|| Error::Parse(format!("unknown activation `{s}`")))?;
                if !(alpha > 0.0 && alpha.is_finite()) {
                    return Err(Error::Parse(format!("softplus alpha must be positive, got {alpha}")));
                }
                Ok(ActivationKind::Softplus { alpha })
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sigmoid_limits() {
        let s = ActivationKind::Sigmoid;
        assert!((s.eval(-20.0)).abs() <= 1e-6);
        assert!((s.eval(20.0) - 1.0).abs() <= 1e-6);
        assert_eq!(s.eval(0.0), 0.5);
    }

    #[test]
    fn softplus_constants() {
        let p = ActivationKind::softplus(4.0).profile();
        assert_eq!(p.exp_bound, Some((0.25, 4.0)));
        assert_eq!(p.linear_bound, Some((1.0, std::f64::consts::LN_2 / 4.0)));
        assert!(p.admissible_hidden());
    }

    #[test]
    fn identity_is_not_admissible() {
        assert!(!ActivationKind::Identity.profile().admissible_hidden());
    }

    #[test]
    fn inverse_round_trips() {
        for act in [ActivationKind::Sigmoid, ActivationKind::softplus(10.0), ActivationKind::softplus(0.5)] {
            for y in [0.21, 0.5, 0.79] {
                let y = if matches!(act, ActivationKind::Softplus { .. }) { y + 0.5 } else { y };
                let t = act.inverse(y).unwrap();
                assert!((act.eval(t) - y).abs() < 1e-13, "{act} {y}");
            }
        }
        assert!(ActivationKind::Sigmoid.inverse(1.0).is_err());
        assert!(ActivationKind::Relu.inverse(-0.1).is_err());
    }

    #[test]
    fn softplus_derivative_matches_difference() {
        let a = ActivationKind::softplus(3.0);
        for t in [-2.0, -0.1, 0.0, 0.7, 4.0] {
            let h = 1e-6;
            let fd = (a.eval(t + h) - a.eval(t - h)) / (2.0 * h);
            assert!((fd - a.derivative(t)).abs() < 1e-8);
        }
    }

    #[test]
    fn parse_display_round_trip() {
        for a in [
            ActivationKind::Relu,
            ActivationKind::Sigmoid,
            ActivationKind::Identity,
            ActivationKind::softplus(0.1 + 0.2),
        ] {
            assert_eq!(a.to_string().parse::<ActivationKind>().unwrap(), a);
        }
        assert!("tanh".parse::<ActivationKind>().is_err());
        assert!("softplus:-1".parse::<ActivationKind>().is_err());
    }
}
