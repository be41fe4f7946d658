//! Numerical solution of the coupled value-function system
//!
//! ```text
//! 0 = v^j_t + ½σ² v^j_pp - ½σ² α^j (v^j_p)² + λ Ẋ* v^j_p - Ẋ^j g(Ẋ*)
//! ```
//!
//! (`α^j = 0` for risk-neutral players, transformed values otherwise),
//! by finite differences, by Picard iteration of the mild formulation, or
//! by sampling the linear-cost closed forms.

mod fd;
mod io;
mod picard;
mod residual;

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::closedform::{
    closed_speed_field, gradient_rows, heat_row, rn_individual_values, BurgersProblem,
    ClosedFormError, HeatQuadrature,
};
use crate::model::{GameSpec, GridSpec, ModelError, UtilitySpec};
use crate::speeds::{
    apriori_speed_bound, certify_for_game, CostCertificate, SpeedError, SpeedSolver,
    SpeedSolverSettings,
};

pub use fd::{solve_fd, FdSettings};
pub use io::{read_solution, write_solution, SOLUTION_HEADER_PREFIX};
pub use picard::{solve_picard, PicardSettings};
pub use residual::{burgers_residual, residual, residual_field, ResidualReport};

#[derive(Debug, Error)]
pub enum SolveError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Speed(#[from] SpeedError),
    #[error(transparent)]
    ClosedForm(#[from] ClosedFormError),
    #[error("time step {dt:e} exceeds the stability limit {limit:e}")]
    Stability { dt: f64, limit: f64 },
    #[error("Picard iteration does not contract (sup-change {history:?})")]
    NonContraction { history: Vec<f64> },
    #[error("Picard iteration did not reach {tol:e} in {iterations} iterations (last change {change:e})")]
    PicardIterations {
        iterations: usize,
        tol: f64,
        change: f64,
    },
    #[error("interior residual {residual:e} exceeds {tol:e}")]
    Residual { residual: f64, tol: f64 },
    #[error("malformed solution: {0}")]
    Format(String),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SolutionMeta {
    pub scheme: String,
    pub root_tol: f64,
    pub certificate: Option<CostCertificate>,
    pub speed_bound: f64,
    /// Max interior PDE residual, when computed.
    pub residual: Option<f64>,
    /// Picard sup-changes, one list per time block.
    pub picard_history: Vec<Vec<f64>>,
}

/// Per-player grids are `N × n_t × n_p`; rows follow `times`.
#[derive(Debug, Clone, PartialEq)]
pub struct Solution {
    pub grid: GridSpec,
    pub times: Vec<f64>,
    pub prices: Vec<f64>,
    /// `v^j` for risk-neutral players, `ṽ^j` for CARA players.
    pub values: Vec<Vec<Vec<f64>>>,
    pub gradients: Vec<Vec<Vec<f64>>>,
    pub speeds: Vec<Vec<Vec<f64>>>,
    pub aggregate_speed: Vec<Vec<f64>>,
    pub meta: SolutionMeta,
}

impl Solution {
    pub fn n_players(&self) -> usize {
        self.values.len()
    }

    pub fn maturity(&self) -> f64 {
        *self.times.last().expect("non-empty time grid")
    }

    /// Index of `p0`-like lookups: position of `p` on the price grid, if any.
    pub fn price_index(&self, p: f64) -> Option<usize> {
        let dp = self.grid.dp();
        let i = ((p - self.prices[0]) / dp).round();
        (i >= 0.0 && (i as usize) < self.prices.len())
            .then_some(i as usize)
            .filter(|&i| (self.prices[i] - p).abs() <= 1e-9 * dp)
    }

    /// Bilinear interpolation of a `n_t × n_p` field; `None` outside the grid.
    pub fn interpolate(&self, field: &[Vec<f64>], t: f64, p: f64) -> Option<f64> {
        let (k, wt) = bracket(&self.times, t)?;
        let (i, wp) = bracket(&self.prices, p)?;
        let row = |k: usize| field[k][i] * (1.0 - wp) + field[k][i + 1] * wp;
        Some(row(k) * (1.0 - wt) + row(k + 1) * wt)
    }

    /// Utility-scale value of player `j` at a node.
    pub fn utility_value(&self, game: &GameSpec, j: usize, k: usize, i: usize) -> f64 {
        game.players[j].utility.utility(self.values[j][k][i])
    }

    pub fn max_abs_speed(&self) -> f64 {
        self.speeds
            .iter()
            .flatten()
            .flatten()
            .fold(0.0f64, |m, x| m.max(x.abs()))
    }
}

/// Cell index and fractional weight for linear interpolation on a sorted
/// grid; the last cell is closed on the right.
pub(crate) fn bracket(xs: &[f64], x: f64) -> Option<(usize, f64)> {
    let n = xs.len();
    if n < 2 || !(x >= xs[0] && x <= xs[n - 1]) {
        return None;
    }
    let i = xs.partition_point(|&v| v <= x).clamp(1, n - 1) - 1;
    Some((i, (x - xs[i]) / (xs[i + 1] - xs[i])))
}

/// Speed evaluation shared by the solvers.
pub(crate) struct NodeKernel<'a> {
    pub solver: SpeedSolver<'a>,
    pub lambda: f64,
    pub sigma: f64,
    pub alphas: Vec<f64>,
}

impl<'a> NodeKernel<'a> {
    pub fn new(game: &'a GameSpec, settings: SpeedSolverSettings) -> Result<Self, SolveError> {
        Ok(Self {
            solver: SpeedSolver::for_game(game, settings)?,
            lambda: game.market.lambda,
            sigma: game.market.sigma,
            alphas: game.players.iter().map(|p| p.utility.alpha()).collect(),
        })
    }

    /// Speeds and nonlinear terms at one time layer.
    ///
    /// `grads[j]` is player `j`'s gradient row; fills `speeds[j]`,
    /// `aggregate` and, if given, the source terms `forcing[j]`.
    pub fn layer(
        &self,
        grads: &[&[f64]],
        speeds: &mut [&mut [f64]],
        aggregate: &mut [f64],
        mut forcing: Option<&mut [&mut [f64]]>,
    ) -> Result<(), SolveError> {
        let n = grads.len();
        let n_p = aggregate.len();
        let nodes: Vec<(f64, f64, Vec<f64>)> = (0..n_p)
            .into_par_iter()
            .map(|i| {
                let eff: Vec<f64> = grads.iter().map(|g| self.lambda * g[i]).collect();
                let mut x = vec![0.0; n];
                let (z, gz) = self.solver.solve(&eff, &mut x)?;
                Ok((z, gz, x))
            })
            .collect::<Result<_, SpeedError>>()?;
        let half_var = 0.5 * self.sigma * self.sigma;
        for (i, (z, gz, x)) in nodes.into_iter().enumerate() {
            aggregate[i] = z;
            for j in 0..n {
                speeds[j][i] = x[j];
                if let Some(f) = forcing.as_deref_mut() {
                    let g = grads[j][i];
                    f[j][i] = -half_var * self.alphas[j] * g * g + self.lambda * z * g - x[j] * gz;
                }
            }
        }
        Ok(())
    }
}

/// Samples the linear-cost closed forms: risk-neutral games of any size,
/// or a single CARA player.
pub fn solve_closed(game: &GameSpec, grid: &GridSpec) -> Result<Solution, SolveError> {
    game.validate()?;
    grid.validate(&game.market)?;
    let dp = grid.dp();
    let (times, prices, values) = if game.all_risk_neutral() {
        let iv = rn_individual_values(game, grid, grid.quad_nodes)?;
        (iv.times, iv.prices, iv.players)
    } else {
        let prob = BurgersProblem::cara_single(game)?;
        let times = grid.times(game.market.maturity);
        let prices = grid.prices();
        let v = prob.grid(&times, &prices, &prob.quadrature(grid.quad_nodes));
        (times, prices, vec![v])
    };
    let gradients: Vec<Vec<Vec<f64>>> = values.iter().map(|v| gradient_rows(v, dp)).collect();
    let field = closed_speed_field(game, &gradients)?;
    let certificate = certify_for_game(game).ok();
    Ok(Solution {
        grid: *grid,
        times,
        prices,
        values,
        gradients,
        speeds: field.speeds,
        aggregate_speed: field.aggregate,
        meta: SolutionMeta {
            scheme: "closed".into(),
            root_tol: 0.0,
            speed_bound: certificate.map_or(f64::NAN, |c| apriori_speed_bound(game, &c)),
            certificate,
            residual: None,
            picard_history: Vec::new(),
        },
    })
}

/// Surplus over the no-impact expectation, per player, on the solution
/// grid. CARA players are compared on the utility scale.
pub fn surplus(sol: &Solution, game: &GameSpec, quad_nodes: usize) -> Vec<Vec<Vec<f64>>> {
    let layers: Vec<Vec<Vec<f64>>> = (0..sol.times.len())
        .into_par_iter()
        .map(|k| surplus_layer(sol, game, k, quad_nodes))
        .collect();
    (0..game.n_players())
        .map(|j| layers.iter().map(|l| l[j].clone()).collect())
        .collect()
}

/// [`surplus`] at time layer `k` only, one row per player.
pub fn surplus_layer(
    sol: &Solution,
    game: &GameSpec,
    k: usize,
    quad_nodes: usize,
) -> Vec<Vec<f64>> {
    let m = &game.market;
    let stdev = m.sigma * (sol.maturity() - sol.times[k]).max(0.0).sqrt();
    game.players
        .iter()
        .enumerate()
        .map(|(j, player)| {
            let h = &player.endowment;
            let quad = HeatQuadrature::new(quad_nodes, h.feature_width());
            let values = &sol.values[j][k];
            match player.utility {
                UtilitySpec::RiskNeutral => {
                    let e = heat_row(|x| h.value(x), stdev, &sol.prices, &quad);
                    values.iter().zip(e).map(|(v, e)| v - e).collect()
                }
                UtilitySpec::Cara { alpha } => {
                    let u = |x: f64| -(-alpha * h.value(x)).exp();
                    let e = heat_row(u, stdev, &sol.prices, &quad);
                    values
                        .iter()
                        .zip(e)
                        .map(|(v, e)| -(-alpha * v).exp() - e)
                        .collect()
                }
            }
        })
        .collect()
}
