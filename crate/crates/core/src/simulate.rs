//! Monte Carlo of the equilibrium dynamics
//!
//! ```text
//! dP = σ dB + λ Σ_i Ẋ^i(t, P) dt,    dX^j = Ẋ^j dt,    dR^j = Ẋ^j g(Σ_i Ẋ^i) dt
//! ```
//!
//! under the feedback speeds of a [`Solution`], plus the physical-delivery
//! valuation.

use std::io::Write;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::model::{GameSpec, GridSpec, UtilitySpec};
use crate::pdesolve::{solve_fd, FdSettings, Solution, SolveError};
use crate::speeds::SpeedError;

/// Largest tolerated fraction of path-steps evaluated at a clamped price.
pub const MAX_CLAMPED_FRACTION: f64 = 0.01;

#[derive(Debug, Error)]
pub enum SimulateError {
    #[error("n_steps must be >= 10, got {0}")]
    TooFewSteps(usize),
    #[error("n_paths must be >= 1")]
    NoPaths,
    #[error("{clamped} of {total} path-steps left the price grid; widen the grid")]
    GridTooSmall { clamped: usize, total: usize },
    #[error("solution does not match the game: {0}")]
    Mismatch(String),
    #[error(transparent)]
    Speed(#[from] SpeedError),
    #[error(transparent)]
    Solve(#[from] SolveError),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SimulateSettings {
    pub n_paths: usize,
    pub seed: u64,
    pub n_steps: usize,
    /// Keep full `(P, X, R)` trajectories of the first `record_paths`
    /// paths; all paths contribute terminal states.
    pub record_paths: usize,
    /// Pair path `2m+1` with the negated increments of path `2m`.
    pub antithetic: bool,
}

impl Default for SimulateSettings {
    fn default() -> Self {
        Self {
            n_paths: 10_000,
            seed: 0,
            n_steps: 500,
            record_paths: 0,
            antithetic: false,
        }
    }
}

/// Full trajectories of the recorded paths, `[path][step]` and
/// `[player][path][step]`.
#[derive(Debug, Clone, PartialEq)]
pub struct RecordedPaths {
    pub price: Vec<Vec<f64>>,
    pub inventory: Vec<Vec<Vec<f64>>>,
    pub cost: Vec<Vec<Vec<f64>>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PathBundle {
    pub seed: u64,
    pub n_paths: usize,
    pub times: Vec<f64>,
    pub terminal_price: Vec<f64>,
    /// `[player][path]`.
    pub terminal_inventory: Vec<Vec<f64>>,
    pub terminal_cost: Vec<Vec<f64>>,
    pub terminal_payoff: Vec<Vec<f64>>,
    /// `u^j(-R^j_T + H^j(P_T))` per path.
    pub objectives: Vec<Vec<f64>>,
    pub clamped_steps: usize,
    pub paths: Option<RecordedPaths>,
}

/// Price, then per-player inventory and cost, one entry per step.
type Trace = (Vec<f64>, Vec<Vec<f64>>, Vec<Vec<f64>>);

struct PathOutcome {
    price: f64,
    inventory: Vec<f64>,
    cost: Vec<f64>,
    clamped: usize,
    trace: Option<Trace>,
}

fn path_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

pub fn simulate_paths(
    sol: &Solution,
    game: &GameSpec,
    settings: &SimulateSettings,
) -> Result<PathBundle, SimulateError> {
    if settings.n_steps < 10 {
        return Err(SimulateError::TooFewSteps(settings.n_steps));
    }
    if settings.n_paths == 0 {
        return Err(SimulateError::NoPaths);
    }
    let n = game.n_players();
    if sol.n_players() != n {
        return Err(SimulateError::Mismatch(format!(
            "{} players in the solution, {n} in the game",
            sol.n_players()
        )));
    }
    let m = &game.market;
    if (sol.maturity() - m.maturity).abs() > 1e-9 * m.maturity || sol.times[0] != 0.0 {
        return Err(SimulateError::Mismatch(
            "time grid does not span [0, T]".into(),
        ));
    }
    let (p_lo, p_hi) = (sol.prices[0], sol.prices[sol.prices.len() - 1]);
    if !(p_lo <= m.p0 && m.p0 <= p_hi) {
        return Err(SimulateError::Mismatch(
            "p0 lies outside the price grid".into(),
        ));
    }
    let n_steps = settings.n_steps;
    let dt = m.maturity / n_steps as f64;
    let sqrt_dt = dt.sqrt();
    let times: Vec<f64> = (0..=n_steps)
        .map(|s| m.maturity * s as f64 / n_steps as f64)
        .collect();

    let run = |path: usize| -> Result<PathOutcome, SpeedError> {
        let (stream, sign) = if settings.antithetic {
            (
                (path / 2) as u64,
                if path.is_multiple_of(2) { 1.0 } else { -1.0 },
            )
        } else {
            (path as u64, 1.0)
        };
        let mut rng = path_rng(settings.seed, stream);
        let mut p = m.p0;
        let mut x = vec![0.0; n];
        let mut r = vec![0.0; n];
        let mut speeds = vec![0.0; n];
        let mut clamped = 0;
        let mut trace = (path < settings.record_paths).then(|| {
            let mut tp = Vec::with_capacity(n_steps + 1);
            tp.push(p);
            (tp, vec![vec![0.0]; n], vec![vec![0.0]; n])
        });
        for &t in &times[..n_steps] {
            let q = if p < p_lo || p > p_hi {
                clamped += 1;
                p.clamp(p_lo, p_hi)
            } else {
                p
            };
            for (j, s) in speeds.iter_mut().enumerate() {
                *s = sol
                    .interpolate(&sol.speeds[j], t, q)
                    .expect("clamped into the grid");
            }
            let agg: f64 = speeds.iter().sum();
            let g = game.cost.value(agg)?;
            let z: f64 = StandardNormal.sample(&mut rng);
            p += m.lambda * agg * dt + m.sigma * sqrt_dt * sign * z;
            for j in 0..n {
                x[j] += speeds[j] * dt;
                r[j] += speeds[j] * g * dt;
            }
            if let Some((tp, tx, tr)) = trace.as_mut() {
                tp.push(p);
                for j in 0..n {
                    tx[j].push(x[j]);
                    tr[j].push(r[j]);
                }
            }
        }
        Ok(PathOutcome {
            price: p,
            inventory: x,
            cost: r,
            clamped,
            trace,
        })
    };
    let outcomes: Vec<PathOutcome> = (0..settings.n_paths)
        .into_par_iter()
        .map(run)
        .collect::<Result<_, _>>()?;

    let clamped_steps: usize = outcomes.iter().map(|o| o.clamped).sum();
    let total = settings.n_paths * n_steps;
    if clamped_steps as f64 > MAX_CLAMPED_FRACTION * total as f64 {
        return Err(SimulateError::GridTooSmall {
            clamped: clamped_steps,
            total,
        });
    }
    let terminal_price: Vec<f64> = outcomes.iter().map(|o| o.price).collect();
    let per_player = |f: &dyn Fn(&PathOutcome, usize) -> f64| -> Vec<Vec<f64>> {
        (0..n)
            .map(|j| outcomes.iter().map(|o| f(o, j)).collect())
            .collect()
    };
    let terminal_inventory = per_player(&|o, j| o.inventory[j]);
    let terminal_cost = per_player(&|o, j| o.cost[j]);
    let terminal_payoff = per_player(&|o, j| game.players[j].endowment.value(o.price));
    let objectives: Vec<Vec<f64>> = (0..n)
        .map(|j| {
            let u = game.players[j].utility;
            terminal_cost[j]
                .iter()
                .zip(&terminal_payoff[j])
                .map(|(r, h)| u.utility(-r + h))
                .collect()
        })
        .collect();
    let paths = (settings.record_paths > 0).then(|| {
        let kept = settings.record_paths.min(settings.n_paths);
        let mut rec = RecordedPaths {
            price: Vec::with_capacity(kept),
            inventory: vec![Vec::with_capacity(kept); n],
            cost: vec![Vec::with_capacity(kept); n],
        };
        for o in outcomes.into_iter().take(kept) {
            let (tp, tx, tr) = o.trace.expect("recorded");
            rec.price.push(tp);
            for (j, (a, b)) in tx.into_iter().zip(tr).enumerate() {
                rec.inventory[j].push(a);
                rec.cost[j].push(b);
            }
        }
        rec
    });
    Ok(PathBundle {
        seed: settings.seed,
        n_paths: settings.n_paths,
        times,
        terminal_price,
        terminal_inventory,
        terminal_cost,
        terminal_payoff,
        objectives,
        clamped_steps,
        paths,
    })
}

/// Pairwise summation; the reduction tree depends only on the length.
pub fn pairwise_sum(xs: &[f64]) -> f64 {
    if xs.len() <= 32 {
        return xs.iter().sum();
    }
    let mid = xs.len() / 2;
    pairwise_sum(&xs[..mid]) + pairwise_sum(&xs[mid..])
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Estimate {
    pub mean: f64,
    pub std_error: f64,
}

impl Estimate {
    pub fn from_samples(xs: &[f64]) -> Self {
        let n = xs.len() as f64;
        let mean = pairwise_sum(xs) / n;
        if xs.len() < 2 {
            return Self {
                mean,
                std_error: 0.0,
            };
        }
        let sq: Vec<f64> = xs.iter().map(|x| (x - mean) * (x - mean)).collect();
        let var = pairwise_sum(&sq) / (n - 1.0);
        Self {
            mean,
            std_error: (var / n).sqrt(),
        }
    }
}

/// Mean and standard error of each player's realized objective.
pub fn realized_objectives(bundle: &PathBundle, game: &GameSpec) -> Vec<Estimate> {
    debug_assert_eq!(bundle.objectives.len(), game.n_players());
    bundle
        .objectives
        .iter()
        .map(|o| Estimate::from_samples(o))
        .collect()
}

/// Utility-scale value `v^j(0, p0)` read from a solution.
pub fn initial_value(sol: &Solution, game: &GameSpec, j: usize) -> f64 {
    let v = sol
        .interpolate(&sol.values[j], 0.0, game.market.p0)
        .expect("p0 lies on the price grid");
    match game.players[j].utility {
        UtilitySpec::RiskNeutral => v,
        UtilitySpec::Cara { alpha } => -(-alpha * v).exp(),
    }
}

/// `(mean realized objective - v^j(0, p0)) / SE` per player; zero when the
/// difference is exactly zero.
pub fn mc_consistency(bundle: &PathBundle, sol: &Solution, game: &GameSpec) -> Vec<f64> {
    realized_objectives(bundle, game)
        .iter()
        .enumerate()
        .map(|(j, e)| {
            let diff = e.mean - initial_value(sol, game, j);
            if diff == 0.0 {
                0.0
            } else {
                diff / e.std_error
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DeliveryValue {
    pub mean: f64,
    pub theta: Vec<f64>,
    pub values: Vec<f64>,
}

/// Exercise `θ* = clamp((P_T - K)/λ, 0, Θ)` and value
/// `θ*(P_T - ½λθ*) - θ*K` per terminal price sample.
pub fn physical_delivery_value(
    theta_cap: f64,
    strike: f64,
    lambda: f64,
    terminal: &[f64],
) -> DeliveryValue {
    let (theta, values): (Vec<f64>, Vec<f64>) = terminal
        .iter()
        .map(|&p| {
            let th = ((p - strike) / lambda).clamp(0.0, theta_cap.max(0.0));
            (th, th * (p - 0.5 * lambda * th) - th * strike)
        })
        .unzip();
    let mean = if values.is_empty() {
        0.0
    } else {
        pairwise_sum(&values) / values.len() as f64
    };
    DeliveryValue {
        mean,
        theta,
        values,
    }
}

/// Max |speed| of the trading part of a physically settled claim. The
/// liquidation value cancels the price terms, leaving the game with zero
/// endowment; its solution is `X ≡ 0`.
pub fn physical_delivery_trading(game: &GameSpec, grid: &GridSpec) -> Result<f64, SimulateError> {
    let mut trading = game.clone();
    for p in &mut trading.players {
        p.endowment = crate::model::Payoff::zero();
    }
    let sol = solve_fd(&trading, grid, &FdSettings::default())?;
    Ok(sol.max_abs_speed())
}

/// One row per `(path, t)`: `path,t,P,X_1..X_N,R_1..R_N`.
pub fn write_paths_csv(bundle: &PathBundle, out: impl Write) -> Result<(), SimulateError> {
    let rec = bundle
        .paths
        .as_ref()
        .ok_or_else(|| SimulateError::Mismatch("paths were not recorded".into()))?;
    let n = rec.inventory.len();
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["path".to_string(), "t".into(), "P".into()];
    header.extend((1..=n).map(|j| format!("X_{j}")));
    header.extend((1..=n).map(|j| format!("R_{j}")));
    let io = |e: csv::Error| SimulateError::Io(e.into());
    w.write_record(&header).map_err(io)?;
    for (path, prices) in rec.price.iter().enumerate() {
        for (s, &p) in prices.iter().enumerate() {
            let mut row = vec![
                path.to_string(),
                format!("{:.16e}", bundle.times[s]),
                format!("{p:.16e}"),
            ];
            row.extend((0..n).map(|j| format!("{:.16e}", rec.inventory[j][path][s])));
            row.extend((0..n).map(|j| format!("{:.16e}", rec.cost[j][path][s])));
            w.write_record(&row).map_err(io)?;
        }
    }
    w.flush()?;
    Ok(())
}
