//! PDE residuals recomputed from a solution by central differences.

use serde::Serialize;

use super::{NodeKernel, Solution, SolveError};
use crate::closedform::central_gradient;
use crate::model::GameSpec;
use crate::speeds::SpeedSolverSettings;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResidualReport {
    pub per_player: Vec<f64>,
    pub overall: f64,
}

/// Residual of each player's equation at every node; zero on the
/// boundary layers and boundary prices.
pub fn residual_field(sol: &Solution, game: &GameSpec) -> Result<Vec<Vec<Vec<f64>>>, SolveError> {
    let n_t = sol.times.len();
    let n_p = sol.prices.len();
    if n_t < 5 || n_p < 5 {
        return Err(SolveError::Format(
            "residual needs at least 5 times and 5 prices".into(),
        ));
    }
    let kernel = NodeKernel::new(game, SpeedSolverSettings::default())?;
    let n = sol.n_players();
    let dp = sol.grid.dp();
    let half_var = 0.5 * game.market.sigma * game.market.sigma;
    let mut out = vec![vec![vec![0.0; n_p]; n_t]; n];
    let mut grads = vec![vec![0.0; n_p]; n];
    let mut speeds = vec![vec![0.0; n_p]; n];
    let mut forcing = vec![vec![0.0; n_p]; n];
    let mut agg = vec![0.0; n_p];
    for k in 1..n_t - 1 {
        for j in 0..n {
            central_gradient(&sol.values[j][k], dp, &mut grads[j]);
        }
        {
            let g: Vec<&[f64]> = grads.iter().map(Vec::as_slice).collect();
            let mut s: Vec<&mut [f64]> = speeds.iter_mut().map(Vec::as_mut_slice).collect();
            let mut f: Vec<&mut [f64]> = forcing.iter_mut().map(Vec::as_mut_slice).collect();
            kernel.layer(&g, &mut s, &mut agg, Some(&mut f))?;
        }
        let span = sol.times[k + 1] - sol.times[k - 1];
        for j in 0..n {
            let v = &sol.values[j];
            for i in 1..n_p - 1 {
                let vt = (v[k + 1][i] - v[k - 1][i]) / span;
                let vpp = (v[k][i + 1] - 2.0 * v[k][i] + v[k][i - 1]) / (dp * dp);
                out[j][k][i] = vt + half_var * vpp + forcing[j][i];
            }
        }
    }
    Ok(out)
}

/// Max absolute interior residual per player and overall.
pub fn residual(sol: &Solution, game: &GameSpec) -> Result<ResidualReport, SolveError> {
    let field = residual_field(sol, game)?;
    let per_player: Vec<f64> = field
        .iter()
        .map(|f| f.iter().flatten().fold(0.0f64, |m, r| m.max(r.abs())))
        .collect();
    let overall = per_player.iter().copied().fold(0.0, f64::max);
    Ok(ResidualReport {
        per_player,
        overall,
    })
}

/// `2 v_t + A v_pp + B v_p²` on interior nodes of a `n_t × n_p` grid.
pub fn burgers_residual(
    values: &[Vec<f64>],
    times: &[f64],
    dp: f64,
    diff_coef: f64,
    quad_coef: f64,
) -> Vec<Vec<f64>> {
    let n_t = values.len();
    let n_p = values[0].len();
    let mut out = vec![vec![0.0; n_p]; n_t];
    for k in 1..n_t - 1 {
        let span = times[k + 1] - times[k - 1];
        for i in 1..n_p - 1 {
            let v = |kk: usize, ii: usize| values[kk][ii];
            let vt = (v(k + 1, i) - v(k - 1, i)) / span;
            let vp = (v(k, i + 1) - v(k, i - 1)) / (2.0 * dp);
            let vpp = (v(k, i + 1) - 2.0 * v(k, i) + v(k, i - 1)) / (dp * dp);
            out[k][i] = 2.0 * vt + diff_coef * vpp + quad_coef * vp * vp;
        }
    }
    out
}
