//! JSON configuration ingestion.
//!
//! ```json
//! {
//!   "market": {"sigma": 1.0, "lambda": 0.01, "T": 1.0, "p0": 100.0},
//!   "cost": {"kind": "linear", "kappa": 0.01},
//!   "players": [
//!     {"utility": {"kind": "risk_neutral"},
//!      "payoff": {"kind": "smoothed_call", "K": 100.0}}
//!   ],
//!   "grid": {"p_min": 94.0, "p_max": 106.0, "n_p": 401, "n_t": 2000, "quad_nodes": 64}
//! }
//! ```
//!
//! Composite payoffs nest through `inner` (scaled, negated) and `terms` (sum);
//! `zero` is the empty sum.
//! Unknown keys anywhere are a parse error.

use serde::Deserialize;

use super::{
    invalid, CostFunction, GameSpec, GridSpec, MarketParams, ModelError, Payoff, PlayerSpec,
    UtilitySpec,
};

/// Default call cap above the strike, in units of sigma·sqrt(T).
pub(crate) const DEFAULT_CAP_STDEVS: f64 = 10.0;
/// Default smoothing width, in units of sigma·sqrt(T).
pub(crate) const DEFAULT_WIDTH_STDEVS: f64 = 0.05;

#[derive(Debug, Clone, PartialEq)]
pub struct Config {
    pub game: GameSpec,
    pub grid: GridSpec,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    market: RawMarket,
    cost: RawCost,
    players: Vec<RawPlayer>,
    #[serde(default)]
    grid: Option<RawGrid>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawMarket {
    sigma: f64,
    lambda: f64,
    #[serde(rename = "T")]
    maturity: f64,
    p0: f64,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawCost {
    kind: String,
    kappa: Option<f64>,
    s: Option<f64>,
    #[serde(rename = "C")]
    sharpness: Option<f64>,
    table: Option<Vec<[f64; 2]>>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawPlayer {
    utility: RawUtility,
    payoff: RawPayoff,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawUtility {
    kind: String,
    alpha: Option<f64>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawPayoff {
    kind: String,
    #[serde(rename = "K")]
    strike: Option<f64>,
    cap: Option<f64>,
    width: Option<f64>,
    factor: Option<f64>,
    grid: Option<Vec<[f64; 2]>>,
    inner: Option<Box<RawPayoff>>,
    terms: Option<Vec<RawPayoff>>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawGrid {
    p_min: f64,
    p_max: f64,
    n_p: usize,
    n_t: usize,
    #[serde(default = "default_quad_nodes")]
    quad_nodes: usize,
}

fn default_quad_nodes() -> usize {
    64
}

/// Parses and validates a configuration; the grid defaults to
/// [`GridSpec::default_for`] when absent.
pub fn load_config(text: &str) -> Result<Config, ModelError> {
    let raw: RawConfig =
        serde_json::from_str(text).map_err(|e| ModelError::Parse(e.to_string()))?;
    let market = MarketParams::new(
        raw.market.sigma,
        raw.market.lambda,
        raw.market.maturity,
        raw.market.p0,
    )?;
    let cost = build_cost(&raw.cost)?;
    if raw.players.is_empty() {
        return Err(invalid("at least one player is required"));
    }
    let players = raw
        .players
        .iter()
        .enumerate()
        .map(|(j, p)| {
            build_player(p, &market).map_err(|e| match e {
                ModelError::Validation(m) => invalid(format!("player {}: {m}", j + 1)),
                other => other,
            })
        })
        .collect::<Result<Vec<_>, _>>()?;
    let game = GameSpec::new(market, cost, players)?;
    let grid = match raw.grid {
        Some(g) => GridSpec {
            p_min: g.p_min,
            p_max: g.p_max,
            n_p: g.n_p,
            n_t: g.n_t,
            quad_nodes: g.quad_nodes,
        },
        None => GridSpec::default_for(&market),
    };
    grid.validate(&market)?;
    Ok(Config { game, grid })
}

/// Parses a configuration and returns only the validated game.
pub fn load_game(text: &str) -> Result<GameSpec, ModelError> {
    load_config(text).map(|c| c.game)
}

fn unused(kind: &str, fields: &[(&str, bool)]) -> Result<(), ModelError> {
    match fields.iter().find(|(_, present)| *present) {
        Some((name, _)) => Err(invalid(format!(
            "field `{name}` is not used by kind `{kind}`"
        ))),
        None => Ok(()),
    }
}

fn required(name: &str, v: Option<f64>) -> Result<f64, ModelError> {
    v.ok_or_else(|| invalid(format!("missing field `{name}`")))
}

fn split_pairs(pairs: &[[f64; 2]]) -> (Vec<f64>, Vec<f64>) {
    pairs.iter().map(|[x, y]| (*x, *y)).unzip()
}

fn build_cost(raw: &RawCost) -> Result<CostFunction, ModelError> {
    match raw.kind.as_str() {
        "linear" => {
            unused(
                "linear",
                &[
                    ("s", raw.s.is_some()),
                    ("C", raw.sharpness.is_some()),
                    ("table", raw.table.is_some()),
                ],
            )?;
            CostFunction::linear(required("kappa", raw.kappa)?)
        }
        "smoothed_spread" => {
            unused("smoothed_spread", &[("table", raw.table.is_some())])?;
            CostFunction::smoothed_spread(
                required("kappa", raw.kappa)?,
                required("s", raw.s)?,
                raw.sharpness.unwrap_or(100.0),
            )
        }
        "custom_table" => {
            unused(
                "custom_table",
                &[
                    ("kappa", raw.kappa.is_some()),
                    ("s", raw.s.is_some()),
                    ("C", raw.sharpness.is_some()),
                ],
            )?;
            let table = raw
                .table
                .as_ref()
                .ok_or_else(|| invalid("missing field `table`"))?;
            let (z, g) = split_pairs(table);
            CostFunction::custom_table(z, g)
        }
        other => Err(invalid(format!("unknown cost kind `{other}`"))),
    }
}

fn build_player(raw: &RawPlayer, market: &MarketParams) -> Result<PlayerSpec, ModelError> {
    let utility = match raw.utility.kind.as_str() {
        "risk_neutral" => {
            unused("risk_neutral", &[("alpha", raw.utility.alpha.is_some())])?;
            UtilitySpec::RiskNeutral
        }
        "cara" => UtilitySpec::cara(required("alpha", raw.utility.alpha)?)?,
        other => return Err(invalid(format!("unknown utility kind `{other}`"))),
    };
    Ok(PlayerSpec {
        utility,
        endowment: build_payoff(&raw.payoff, market)?,
    })
}

fn build_payoff(raw: &RawPayoff, market: &MarketParams) -> Result<Payoff, ModelError> {
    let scale = market.horizon_stdev();
    let kind = raw.kind.as_str();
    match kind {
        "smoothed_call" => {
            unused(
                kind,
                &[
                    ("factor", raw.factor.is_some()),
                    ("grid", raw.grid.is_some()),
                    ("inner", raw.inner.is_some()),
                    ("terms", raw.terms.is_some()),
                ],
            )?;
            Payoff::smoothed_call(
                required("K", raw.strike)?,
                raw.cap.unwrap_or(DEFAULT_CAP_STDEVS * scale),
                raw.width.unwrap_or(DEFAULT_WIDTH_STDEVS * scale),
            )
        }
        "smoothed_digital" => {
            unused(
                kind,
                &[
                    ("cap", raw.cap.is_some()),
                    ("factor", raw.factor.is_some()),
                    ("grid", raw.grid.is_some()),
                    ("inner", raw.inner.is_some()),
                    ("terms", raw.terms.is_some()),
                ],
            )?;
            Payoff::smoothed_digital(
                required("K", raw.strike)?,
                raw.width.unwrap_or(DEFAULT_WIDTH_STDEVS * scale),
            )
        }
        "scaled" | "negated" => {
            unused(
                kind,
                &[
                    ("K", raw.strike.is_some()),
                    ("cap", raw.cap.is_some()),
                    ("width", raw.width.is_some()),
                    ("grid", raw.grid.is_some()),
                    ("terms", raw.terms.is_some()),
                ],
            )?;
            let inner = raw
                .inner
                .as_deref()
                .ok_or_else(|| invalid("missing field `inner`"))?;
            let inner = build_payoff(inner, market)?;
            if kind == "scaled" {
                Payoff::scaled(inner, required("factor", raw.factor)?)
            } else {
                unused(kind, &[("factor", raw.factor.is_some())])?;
                Ok(Payoff::negated(inner))
            }
        }
        "zero" => {
            unused(
                kind,
                &[
                    ("K", raw.strike.is_some()),
                    ("cap", raw.cap.is_some()),
                    ("width", raw.width.is_some()),
                    ("factor", raw.factor.is_some()),
                    ("grid", raw.grid.is_some()),
                    ("inner", raw.inner.is_some()),
                    ("terms", raw.terms.is_some()),
                ],
            )?;
            Ok(Payoff::zero())
        }
        "sum" => {
            unused(
                kind,
                &[
                    ("K", raw.strike.is_some()),
                    ("cap", raw.cap.is_some()),
                    ("width", raw.width.is_some()),
                    ("factor", raw.factor.is_some()),
                    ("grid", raw.grid.is_some()),
                    ("inner", raw.inner.is_some()),
                ],
            )?;
            let terms = raw
                .terms
                .as_ref()
                .ok_or_else(|| invalid("missing field `terms`"))?;
            let terms = terms
                .iter()
                .map(|t| build_payoff(t, market))
                .collect::<Result<Vec<_>, _>>()?;
            Ok(Payoff::sum(terms))
        }
        "custom_grid" => {
            unused(
                kind,
                &[
                    ("K", raw.strike.is_some()),
                    ("cap", raw.cap.is_some()),
                    ("width", raw.width.is_some()),
                    ("factor", raw.factor.is_some()),
                    ("inner", raw.inner.is_some()),
                    ("terms", raw.terms.is_some()),
                ],
            )?;
            let grid = raw
                .grid
                .as_ref()
                .ok_or_else(|| invalid("missing field `grid`"))?;
            let (p, v) = split_pairs(grid);
            Payoff::custom_grid(p, v)
        }
        other => Err(invalid(format!("unknown payoff kind `{other}`"))),
    }
}
