//! Liquidity-premium cost functions `g`.

use serde::Serialize;

use super::interp::MonotoneCubic;
use super::ModelError;

/// Cost function `g` of the aggregate trading speed. Always `g(0) = 0`.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CostFunction {
    /// `g(z) = κ z`.
    Linear { kappa: f64 },
    /// `g(z) = κ z + s (2/π) arctan(C z)`, a smooth version of a
    /// block-shaped book with half-spread `s`.
    SmoothedSpread {
        kappa: f64,
        spread: f64,
        sharpness: f64,
    },
    /// Sampled `z -> g(z)` with monotone cubic interpolation.
    CustomTable { curve: MonotoneCubic },
}

impl CostFunction {
    pub fn linear(kappa: f64) -> Result<Self, ModelError> {
        if !(kappa.is_finite() && kappa > 0.0) {
            return Err(ModelError::Validation("kappa must be > 0".into()));
        }
        Ok(CostFunction::Linear { kappa })
    }

    pub fn smoothed_spread(kappa: f64, spread: f64, sharpness: f64) -> Result<Self, ModelError> {
        if !(kappa.is_finite() && kappa >= 0.0) {
            return Err(ModelError::Validation("kappa must be >= 0".into()));
        }
        if !(spread.is_finite() && spread >= 0.0) {
            return Err(ModelError::Validation("s must be >= 0".into()));
        }
        if !(sharpness.is_finite() && sharpness > 0.0) {
            return Err(ModelError::Validation("C must be > 0".into()));
        }
        if kappa == 0.0 && spread == 0.0 {
            return Err(ModelError::Validation(
                "smoothed spread cost needs kappa > 0 or s > 0".into(),
            ));
        }
        Ok(CostFunction::SmoothedSpread {
            kappa,
            spread,
            sharpness,
        })
    }

    /// Table cost. The table must bracket zero and pass through the origin.
    pub fn custom_table(z: Vec<f64>, g: Vec<f64>) -> Result<Self, ModelError> {
        let curve = MonotoneCubic::new(z, g, false)
            .map_err(|e| ModelError::Validation(format!("cost table: {e}")))?;
        if !(curve.x_min() < 0.0 && curve.x_max() > 0.0) {
            return Err(ModelError::Validation(
                "cost table must cover an interval around z = 0".into(),
            ));
        }
        if curve.value(0.0).abs() > 1e-12 {
            return Err(ModelError::Validation(
                "cost table must satisfy g(0) = 0".into(),
            ));
        }
        Ok(CostFunction::CustomTable { curve })
    }

    /// Domain on which `g` is defined; the whole real line for analytic kinds.
    pub fn domain(&self) -> (f64, f64) {
        match self {
            CostFunction::CustomTable { curve } => (curve.x_min(), curve.x_max()),
            _ => (f64::NEG_INFINITY, f64::INFINITY),
        }
    }
}
