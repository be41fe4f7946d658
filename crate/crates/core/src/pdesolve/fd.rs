//! Backward time stepping: implicit Euler for the diffusion, explicit
//! nonlinear terms from the previous (later) layer, `v_pp = 0` at both
//! price boundaries.

use serde::Serialize;

use super::{residual, NodeKernel, Solution, SolutionMeta, SolveError};
use crate::closedform::central_gradient;
use crate::model::{GameSpec, GridSpec};
use crate::speeds::{apriori_speed_bound, SpeedSolverSettings};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FdSettings {
    pub speed: SpeedSolverSettings,
    /// Increase `n_t` instead of failing when the step is too large.
    pub refine_time: bool,
    /// Fail if the interior residual exceeds this; `None` skips the check.
    pub residual_tol: Option<f64>,
}

impl Default for FdSettings {
    fn default() -> Self {
        Self {
            speed: SpeedSolverSettings::default(),
            refine_time: true,
            residual_tol: None,
        }
    }
}

/// `I - r D2` with identity boundary rows, factored once.
struct Tridiagonal {
    r: f64,
    /// Modified super-diagonal and inverse pivots of the Thomas sweep.
    c_prime: Vec<f64>,
    inv_pivot: Vec<f64>,
}

impl Tridiagonal {
    fn new(n: usize, r: f64) -> Self {
        let mut c_prime = vec![0.0; n];
        let mut inv_pivot = vec![0.0; n];
        inv_pivot[0] = 1.0;
        c_prime[0] = 0.0;
        for i in 1..n - 1 {
            let pivot = 1.0 + 2.0 * r - (-r) * c_prime[i - 1];
            inv_pivot[i] = 1.0 / pivot;
            c_prime[i] = -r * inv_pivot[i];
        }
        inv_pivot[n - 1] = 1.0;
        Self {
            r,
            c_prime,
            inv_pivot,
        }
    }

    /// Solves in place.
    fn solve(&self, x: &mut [f64]) {
        let n = x.len();
        for i in 1..n - 1 {
            x[i] = (x[i] + self.r * x[i - 1]) * self.inv_pivot[i];
        }
        for i in (1..n - 1).rev() {
            x[i] -= self.c_prime[i] * x[i + 1];
        }
    }
}

/// Largest stable step for the explicit part, `Δp / (2λ·bound + σ²α·h)`.
pub(crate) fn stability_limit(game: &GameSpec, dp: f64, speed_bound: f64) -> f64 {
    let m = &game.market;
    let alpha = game
        .players
        .iter()
        .map(|p| p.utility.alpha())
        .fold(0.0, f64::max);
    let rate = 2.0 * m.lambda * speed_bound + m.sigma * m.sigma * alpha * game.max_payoff_slope();
    if rate > 0.0 {
        dp / rate
    } else {
        f64::INFINITY
    }
}

pub fn solve_fd(
    game: &GameSpec,
    grid: &GridSpec,
    settings: &FdSettings,
) -> Result<Solution, SolveError> {
    game.validate()?;
    grid.validate(&game.market)?;
    let kernel = NodeKernel::new(game, settings.speed)?;
    let cert = kernel.solver.certificate;
    let bound = apriori_speed_bound(game, &cert);
    let m = &game.market;
    let dp = grid.dp();

    let mut grid = *grid;
    let limit = stability_limit(game, dp, bound);
    let dt0 = m.maturity / (grid.n_t - 1) as f64;
    if dt0 > limit {
        if !settings.refine_time {
            return Err(SolveError::Stability { dt: dt0, limit });
        }
        grid.n_t = (m.maturity / limit).ceil() as usize + 1;
    }
    let times = grid.times(m.maturity);
    let prices = grid.prices();
    let (n, n_t, n_p) = (game.n_players(), grid.n_t, grid.n_p);

    let mut values = vec![vec![vec![0.0; n_p]; n_t]; n];
    let mut gradients = vec![vec![vec![0.0; n_p]; n_t]; n];
    let mut speeds = vec![vec![vec![0.0; n_p]; n_t]; n];
    let mut aggregate = vec![vec![0.0; n_p]; n_t];
    let mut forcing = vec![vec![0.0; n_p]; n];

    let last = n_t - 1;
    for (j, player) in game.players.iter().enumerate() {
        for (v, &p) in values[j][last].iter_mut().zip(&prices) {
            *v = player.endowment.value(p);
        }
    }
    let layer = |k: usize,
                 values: &Vec<Vec<Vec<f64>>>,
                 gradients: &mut Vec<Vec<Vec<f64>>>,
                 speeds: &mut Vec<Vec<Vec<f64>>>,
                 aggregate: &mut Vec<Vec<f64>>,
                 forcing: &mut Vec<Vec<f64>>|
     -> Result<(), SolveError> {
        for j in 0..n {
            central_gradient(&values[j][k], dp, &mut gradients[j][k]);
        }
        let grads: Vec<&[f64]> = gradients.iter().map(|g| g[k].as_slice()).collect();
        let mut rows: Vec<&mut [f64]> = speeds.iter_mut().map(|s| s[k].as_mut_slice()).collect();
        let mut force: Vec<&mut [f64]> = forcing.iter_mut().map(|f| f.as_mut_slice()).collect();
        kernel.layer(&grads, &mut rows, &mut aggregate[k], Some(&mut force))
    };
    layer(
        last,
        &values,
        &mut gradients,
        &mut speeds,
        &mut aggregate,
        &mut forcing,
    )?;

    for k in (0..last).rev() {
        let dt = times[k + 1] - times[k];
        let tri = Tridiagonal::new(n_p, 0.5 * m.sigma * m.sigma * dt / (dp * dp));
        for j in 0..n {
            let (head, tail) = values[j].split_at_mut(k + 1);
            let next = &tail[0];
            let cur = &mut head[k];
            for i in 0..n_p {
                cur[i] = next[i] + dt * forcing[j][i];
            }
            tri.solve(cur);
        }
        layer(
            k,
            &values,
            &mut gradients,
            &mut speeds,
            &mut aggregate,
            &mut forcing,
        )?;
    }

    let mut sol = Solution {
        grid,
        times,
        prices,
        values,
        gradients,
        speeds,
        aggregate_speed: aggregate,
        meta: SolutionMeta {
            scheme: "fd".into(),
            root_tol: settings.speed.root_tol,
            certificate: Some(cert),
            speed_bound: bound,
            residual: None,
            picard_history: Vec::new(),
        },
    };
    if let Some(tol) = settings.residual_tol {
        let r = residual(&sol, game)?.overall;
        sol.meta.residual = Some(r);
        if r > tol {
            return Err(SolveError::Residual { residual: r, tol });
        }
    }
    Ok(sol)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tridiagonal_matches_dense_solve() {
        let n = 7;
        let r = 0.8;
        let tri = Tridiagonal::new(n, r);
        let x_true: Vec<f64> = (0..n).map(|i| (i as f64 * 0.7).sin()).collect();
        let mut b = x_true.clone();
        for i in 1..n - 1 {
            b[i] = -r * x_true[i - 1] + (1.0 + 2.0 * r) * x_true[i] - r * x_true[i + 1];
        }
        tri.solve(&mut b);
        for (a, e) in b.iter().zip(&x_true) {
            assert!((a - e).abs() < 1e-14);
        }
    }
}
