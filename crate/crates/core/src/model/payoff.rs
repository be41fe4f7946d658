//! Bounded, smooth terminal payoffs.
//!
//! The call and digital are mollified versions of `(p - K)^+` and
//! `1{p >= K}`: a capped softplus ramp and a logistic step. Both converge to
//! the raw payoffs as the smoothing width goes to zero.

use serde::Serialize;

use super::interp::MonotoneCubic;
use super::ModelError;

/// Safety factor applied to the interpolant slope bound of grid payoffs.
const GRID_SLOPE_SAFETY: f64 = 1.01;

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Payoff {
    /// `w·softplus((p-K)/w) - w·softplus((p-K-cap)/w)`: a call spread
    /// saturating at `cap` above the strike.
    SmoothedCall {
        strike: f64,
        cap: f64,
        width: f64,
    },
    /// Logistic step `1 / (1 + exp(-(p-K)/w))`.
    SmoothedDigital {
        strike: f64,
        width: f64,
    },
    Scaled {
        inner: Box<Payoff>,
        factor: f64,
    },
    Negated {
        inner: Box<Payoff>,
    },
    /// Sum of the terms; the empty sum is the zero payoff.
    Sum {
        terms: Vec<Payoff>,
    },
    /// Monotone cubic through user data, flat beyond the first and last knot.
    CustomGrid {
        curve: MonotoneCubic,
    },
}

impl Payoff {
    pub fn smoothed_call(strike: f64, cap: f64, width: f64) -> Result<Self, ModelError> {
        check_finite("strike", strike)?;
        check_positive("cap", cap)?;
        check_positive("width", width)?;
        Ok(Payoff::SmoothedCall { strike, cap, width })
    }

    pub fn smoothed_digital(strike: f64, width: f64) -> Result<Self, ModelError> {
        check_finite("strike", strike)?;
        check_positive("width", width)?;
        Ok(Payoff::SmoothedDigital { strike, width })
    }

    pub fn scaled(inner: Payoff, factor: f64) -> Result<Self, ModelError> {
        check_finite("factor", factor)?;
        Ok(Payoff::Scaled {
            inner: Box::new(inner),
            factor,
        })
    }

    pub fn negated(inner: Payoff) -> Self {
        Payoff::Negated {
            inner: Box::new(inner),
        }
    }

    pub fn sum(terms: Vec<Payoff>) -> Self {
        Payoff::Sum { terms }
    }

    pub fn zero() -> Self {
        Payoff::Sum { terms: Vec::new() }
    }

    pub fn custom_grid(prices: Vec<f64>, values: Vec<f64>) -> Result<Self, ModelError> {
        let curve = MonotoneCubic::new(prices, values, true)
            .map_err(|e| ModelError::Validation(format!("payoff grid: {e}")))?;
        Ok(Payoff::CustomGrid { curve })
    }

    /// H(p).
    pub fn value(&self, p: f64) -> f64 {
        match self {
            Payoff::SmoothedCall { strike, cap, width } => {
                let x = p - strike;
                ramp(x, *width) - ramp(x - cap, *width)
            }
            Payoff::SmoothedDigital { strike, width } => logistic((p - strike) / width),
            Payoff::Scaled { inner, factor } => factor * inner.value(p),
            Payoff::Negated { inner } => -inner.value(p),
            Payoff::Sum { terms } => terms.iter().map(|t| t.value(p)).sum(),
            Payoff::CustomGrid { curve } => curve.value(p),
        }
    }

    /// H_p(p).
    pub fn slope(&self, p: f64) -> f64 {
        match self {
            Payoff::SmoothedCall { strike, cap, width } => {
                let x = (p - strike) / width;
                logistic(x) - logistic(x - cap / width)
            }
            Payoff::SmoothedDigital { strike, width } => {
                let s = logistic((p - strike) / width);
                s * (1.0 - s) / width
            }
            Payoff::Scaled { inner, factor } => factor * inner.slope(p),
            Payoff::Negated { inner } => -inner.slope(p),
            Payoff::Sum { terms } => terms.iter().map(|t| t.slope(p)).sum(),
            Payoff::CustomGrid { curve } => {
                if curve.contains(p) {
                    curve.slope(p)
                } else {
                    0.0
                }
            }
        }
    }

    /// Upper bound on sup |H|.
    pub fn bound(&self) -> f64 {
        match self {
            Payoff::SmoothedCall { cap, .. } => *cap,
            Payoff::SmoothedDigital { .. } => 1.0,
            Payoff::Scaled { inner, factor } => factor.abs() * inner.bound(),
            Payoff::Negated { inner } => inner.bound(),
            Payoff::Sum { terms } => terms.iter().map(Payoff::bound).sum(),
            Payoff::CustomGrid { curve } => curve.ys().iter().fold(0.0, |m, v| m.max(v.abs())),
        }
    }

    /// Certified upper bound on sup |H_p|. Exact for the call and digital.
    pub fn sup_slope(&self) -> f64 {
        match self {
            Payoff::SmoothedCall { cap, width, .. } => (cap / (4.0 * width)).tanh(),
            Payoff::SmoothedDigital { width, .. } => 0.25 / width,
            Payoff::Scaled { inner, factor } => factor.abs() * inner.sup_slope(),
            Payoff::Negated { inner } => inner.sup_slope(),
            Payoff::Sum { terms } => terms.iter().map(Payoff::sup_slope).sum(),
            Payoff::CustomGrid { curve } => GRID_SLOPE_SAFETY * curve.max_abs_slope(),
        }
    }

    /// Length scale of the sharpest feature, used to size quadrature rules.
    /// Infinite for payoffs that are identically zero.
    pub fn feature_width(&self) -> f64 {
        match self {
            Payoff::SmoothedCall { width, .. } | Payoff::SmoothedDigital { width, .. } => *width,
            Payoff::Scaled { inner, factor } => {
                if *factor == 0.0 {
                    f64::INFINITY
                } else {
                    inner.feature_width()
                }
            }
            Payoff::Negated { inner } => inner.feature_width(),
            Payoff::Sum { terms } => terms
                .iter()
                .map(Payoff::feature_width)
                .fold(f64::INFINITY, f64::min),
            Payoff::CustomGrid { curve } => curve.min_spacing(),
        }
    }

    /// True when the payoff is structurally zero (empty sum or zero factor).
    pub fn is_zero(&self) -> bool {
        match self {
            Payoff::Scaled { inner, factor } => *factor == 0.0 || inner.is_zero(),
            Payoff::Negated { inner } => inner.is_zero(),
            Payoff::Sum { terms } => terms.iter().all(Payoff::is_zero),
            _ => false,
        }
    }
}

/// `w·softplus(x/w)` written as `max(x,0) + w·log1p(exp(-|x|/w))`.
fn ramp(x: f64, w: f64) -> f64 {
    x.max(0.0) + w * (-(x / w).abs()).exp().ln_1p()
}

pub(crate) fn logistic(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn check_finite(name: &str, v: f64) -> Result<(), ModelError> {
    if v.is_finite() {
        Ok(())
    } else {
        Err(ModelError::Validation(format!("{name} must be finite")))
    }
}

fn check_positive(name: &str, v: f64) -> Result<(), ModelError> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(ModelError::Validation(format!("{name} must be > 0")))
    }
}
