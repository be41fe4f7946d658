//! Problem instances: market, cost function, players and the price/time grid.

mod config;
mod cost;
mod interp;
mod payoff;

use serde::Serialize;
use sha2::{Digest, Sha256};
use thiserror::Error;

pub use config::load_game;
pub use config::{load_config, Config};
pub(crate) use config::{DEFAULT_CAP_STDEVS, DEFAULT_WIDTH_STDEVS};
pub use cost::CostFunction;
pub use interp::MonotoneCubic;
pub use payoff::Payoff;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("parse error: {0}")]
    Parse(String),
    #[error("validation error: {0}")]
    Validation(String),
}

fn invalid(msg: impl Into<String>) -> ModelError {
    ModelError::Validation(msg.into())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MarketParams {
    /// Volatility of the fundamental price (price / sqrt(time)).
    pub sigma: f64,
    /// Permanent impact (price per share).
    pub lambda: f64,
    pub maturity: f64,
    pub p0: f64,
}

impl MarketParams {
    pub fn new(sigma: f64, lambda: f64, maturity: f64, p0: f64) -> Result<Self, ModelError> {
        let m = Self {
            sigma,
            lambda,
            maturity,
            p0,
        };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        if !(self.sigma.is_finite() && self.sigma > 0.0) {
            return Err(invalid("sigma must be > 0"));
        }
        if !(self.lambda.is_finite() && self.lambda > 0.0) {
            return Err(invalid("lambda must be > 0"));
        }
        if !(self.maturity.is_finite() && self.maturity > 0.0) {
            return Err(invalid("T must be > 0"));
        }
        if !self.p0.is_finite() {
            return Err(invalid("p0 must be finite"));
        }
        Ok(())
    }

    /// Standard deviation of the fundamental price over the whole horizon.
    pub fn horizon_stdev(&self) -> f64 {
        self.sigma * self.maturity.sqrt()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum UtilitySpec {
    RiskNeutral,
    /// `u(z) = -exp(-alpha z)`.
    Cara {
        alpha: f64,
    },
}

impl UtilitySpec {
    pub fn cara(alpha: f64) -> Result<Self, ModelError> {
        if !(alpha.is_finite() && alpha > 0.0) {
            return Err(invalid("alpha must be > 0"));
        }
        Ok(UtilitySpec::Cara { alpha })
    }

    /// Risk aversion; zero for the risk-neutral player.
    pub fn alpha(&self) -> f64 {
        match self {
            UtilitySpec::RiskNeutral => 0.0,
            UtilitySpec::Cara { alpha } => *alpha,
        }
    }

    pub fn is_risk_neutral(&self) -> bool {
        matches!(self, UtilitySpec::RiskNeutral)
    }

    pub fn utility(&self, wealth: f64) -> f64 {
        match self {
            UtilitySpec::RiskNeutral => wealth,
            UtilitySpec::Cara { alpha } => -(-alpha * wealth).exp(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PlayerSpec {
    pub utility: UtilitySpec,
    pub endowment: Payoff,
}

impl PlayerSpec {
    pub fn risk_neutral(endowment: Payoff) -> Self {
        Self {
            utility: UtilitySpec::RiskNeutral,
            endowment,
        }
    }

    pub fn cara(alpha: f64, endowment: Payoff) -> Result<Self, ModelError> {
        Ok(Self {
            utility: UtilitySpec::cara(alpha)?,
            endowment,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GameSpec {
    pub market: MarketParams,
    pub cost: CostFunction,
    pub players: Vec<PlayerSpec>,
}

impl GameSpec {
    pub fn new(
        market: MarketParams,
        cost: CostFunction,
        players: Vec<PlayerSpec>,
    ) -> Result<Self, ModelError> {
        let game = Self {
            market,
            cost,
            players,
        };
        game.validate()?;
        Ok(game)
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        self.market.validate()?;
        if self.players.is_empty() {
            return Err(invalid("at least one player is required"));
        }
        for (j, p) in self.players.iter().enumerate() {
            if let UtilitySpec::Cara { alpha } = p.utility {
                if !(alpha.is_finite() && alpha > 0.0) {
                    return Err(invalid(format!("player {}: alpha must be > 0", j + 1)));
                }
            }
            if !(p.endowment.bound().is_finite() && p.endowment.sup_slope().is_finite()) {
                return Err(invalid(format!("player {}: payoff must be bounded", j + 1)));
            }
        }
        Ok(())
    }

    pub fn n_players(&self) -> usize {
        self.players.len()
    }

    pub fn all_risk_neutral(&self) -> bool {
        self.players.iter().all(|p| p.utility.is_risk_neutral())
    }

    /// `max_j sup |H^j_p|`.
    pub fn max_payoff_slope(&self) -> f64 {
        self.players
            .iter()
            .map(|p| p.endowment.sup_slope())
            .fold(0.0, f64::max)
    }

    /// Smallest feature width over all endowments.
    pub fn feature_width(&self) -> f64 {
        self.players
            .iter()
            .map(|p| p.endowment.feature_width())
            .fold(f64::INFINITY, f64::min)
    }

    /// Sum of all endowments as a single payoff.
    pub fn aggregate_payoff(&self) -> Payoff {
        Payoff::sum(self.players.iter().map(|p| p.endowment.clone()).collect())
    }

    /// Hex SHA-256 of the canonical JSON serialization.
    pub fn hash(&self) -> String {
        canonical_hash(self)
    }
}

/// Price/time discretization.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GridSpec {
    pub p_min: f64,
    pub p_max: f64,
    pub n_p: usize,
    pub n_t: usize,
    pub quad_nodes: usize,
}

/// Half-width of the default price domain in units of sigma·sqrt(T).
pub const DOMAIN_STDEVS: f64 = 6.0;

impl GridSpec {
    /// `p0 ± 6σ√T` with 401 price nodes, 2000 time layers and 64 quadrature nodes.
    pub fn default_for(market: &MarketParams) -> Self {
        Self::centered(market, 401, 2000)
    }

    pub fn centered(market: &MarketParams, n_p: usize, n_t: usize) -> Self {
        let half = DOMAIN_STDEVS * market.horizon_stdev();
        Self {
            p_min: market.p0 - half,
            p_max: market.p0 + half,
            n_p,
            n_t,
            quad_nodes: 64,
        }
    }

    pub fn validate(&self, market: &MarketParams) -> Result<(), ModelError> {
        if !(self.p_min.is_finite() && self.p_max.is_finite()) {
            return Err(invalid("grid bounds must be finite"));
        }
        if !(self.p_min < market.p0 && market.p0 < self.p_max) {
            return Err(invalid("grid must satisfy p_min < p0 < p_max"));
        }
        if self.n_p < 3 {
            return Err(invalid("n_p must be >= 3"));
        }
        if self.n_p.is_multiple_of(2) {
            return Err(invalid("n_p must be odd"));
        }
        if self.n_t < 2 {
            return Err(invalid("n_t must be >= 2"));
        }
        if self.quad_nodes < 8 {
            return Err(invalid("quad_nodes must be >= 8"));
        }
        let half = DOMAIN_STDEVS * market.horizon_stdev();
        let slack = 1e-9 * (1.0 + market.p0.abs() + half);
        if self.p_min > market.p0 - half + slack || self.p_max < market.p0 + half - slack {
            return Err(invalid("grid must cover p0 ± 6·sigma·sqrt(T)"));
        }
        Ok(())
    }

    pub fn dp(&self) -> f64 {
        (self.p_max - self.p_min) / (self.n_p - 1) as f64
    }

    pub fn prices(&self) -> Vec<f64> {
        let dp = self.dp();
        (0..self.n_p).map(|i| self.p_min + i as f64 * dp).collect()
    }

    /// Uniform time layers from 0 to `maturity`.
    pub fn times(&self, maturity: f64) -> Vec<f64> {
        let last = (self.n_t - 1) as f64;
        (0..self.n_t).map(|k| maturity * k as f64 / last).collect()
    }

    pub fn hash(&self) -> String {
        canonical_hash(self)
    }
}

pub(crate) fn canonical_hash<T: Serialize>(value: &T) -> String {
    let text = serde_json::to_string(value).expect("model types serialize");
    hex::encode(Sha256::digest(text.as_bytes()))
}
