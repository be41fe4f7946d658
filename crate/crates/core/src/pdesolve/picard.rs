//! Fixed-point iteration of the mild formulation in time to maturity
//! `u = T - t`:
//!
//! ```text
//! v(u) = e^{uL} H + ∫_0^u e^{(u-r)L} F(v_p(r)) dr,    L = ½σ² ∂_pp
//! ```
//!
//! solved block by block. On a block starting at `u_b` with known `v(u_b)`
//! the map `Ψ` is iterated on the block's sub-layers (trapezoid rule in
//! `r`) until the sup-change of `(v, v_p)` falls below `fixpoint_tol`; the
//! converged block is appended and becomes the next block's initial data.

use serde::Serialize;

use super::{NodeKernel, Solution, SolutionMeta, SolveError};
use crate::closedform::{central_gradient, GridHeat};
use crate::model::{GameSpec, GridSpec};
use crate::speeds::{apriori_speed_bound, SpeedSolverSettings};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PicardSettings {
    /// Block length; `None` means `0.05·T`.
    pub tau: Option<f64>,
    /// Sub-layers per block.
    pub sublayers: usize,
    pub fixpoint_tol: f64,
    pub max_picard_iter: usize,
    pub speed: SpeedSolverSettings,
}

impl Default for PicardSettings {
    fn default() -> Self {
        Self {
            tau: None,
            sublayers: 8,
            fixpoint_tol: 1e-10,
            max_picard_iter: 100,
            speed: SpeedSolverSettings::default(),
        }
    }
}

/// Per-player rows of one layer.
type Layer = Vec<Vec<f64>>;

struct Block<'k, 'g> {
    kernel: &'k NodeKernel<'g>,
    heat: Vec<GridHeat>,
    dp: f64,
    step: f64,
}

impl Block<'_, '_> {
    /// Gradients, speeds, aggregate speed and source terms of a layer.
    fn fields(&self, v: &Layer) -> Result<(Layer, Layer, Vec<f64>, Layer), SolveError> {
        let n = v.len();
        let n_p = v[0].len();
        let mut grads = vec![vec![0.0; n_p]; n];
        for (g, row) in grads.iter_mut().zip(v) {
            central_gradient(row, self.dp, g);
        }
        let mut speeds = vec![vec![0.0; n_p]; n];
        let mut forcing = vec![vec![0.0; n_p]; n];
        let mut agg = vec![0.0; n_p];
        {
            let g: Vec<&[f64]> = grads.iter().map(Vec::as_slice).collect();
            let mut s: Vec<&mut [f64]> = speeds.iter_mut().map(Vec::as_mut_slice).collect();
            let mut f: Vec<&mut [f64]> = forcing.iter_mut().map(Vec::as_mut_slice).collect();
            self.kernel.layer(&g, &mut s, &mut agg, Some(&mut f))?;
        }
        Ok((grads, speeds, agg, forcing))
    }

    /// `Ψ` on sub-layers `1..=m_len` given the source terms of sub-layers
    /// `0..=m_len`.
    fn psi(&self, start: &Layer, forcing: &[Layer], m_len: usize) -> Vec<Layer> {
        let n = start.len();
        let n_p = start[0].len();
        let mut out = Vec::with_capacity(m_len);
        let mut tmp = vec![0.0; n_p];
        for m in 1..=m_len {
            let mut layer = vec![vec![0.0; n_p]; n];
            for j in 0..n {
                let acc = &mut layer[j];
                self.heat[m].apply(&start[j], acc);
                for l in 0..=m {
                    let w = if l == 0 || l == m {
                        0.5 * self.step
                    } else {
                        self.step
                    };
                    self.heat[m - l].apply(&forcing[l][j], &mut tmp);
                    for (a, x) in acc.iter_mut().zip(&tmp) {
                        *a += w * x;
                    }
                }
            }
            out.push(layer);
        }
        out
    }
}

fn sup_change(a: &[Layer], b: &[Layer], ga: &[Layer], gb: &[Layer]) -> f64 {
    let sup = |x: &[Layer], y: &[Layer]| {
        x.iter()
            .zip(y)
            .flat_map(|(lx, ly)| lx.iter().zip(ly))
            .flat_map(|(rx, ry)| rx.iter().zip(ry))
            .fold(0.0f64, |m, (p, q)| m.max((p - q).abs()))
    };
    sup(a, b) + sup(ga, gb)
}

pub fn solve_picard(
    game: &GameSpec,
    grid: &GridSpec,
    settings: &PicardSettings,
) -> Result<Solution, SolveError> {
    game.validate()?;
    grid.validate(&game.market)?;
    let kernel = NodeKernel::new(game, settings.speed)?;
    let cert = kernel.solver.certificate;
    let m = &game.market;
    let dp = grid.dp();
    let n_t = grid.n_t;
    let step = m.maturity / (n_t - 1) as f64;
    let tau = settings.tau.unwrap_or(0.05 * m.maturity);
    if tau.is_nan() || tau <= 0.0 {
        return Err(SolveError::Format("tau must be > 0".into()));
    }
    let mut block_len = settings
        .sublayers
        .max(1)
        .min(((tau / step).floor() as usize).max(1));
    let heat_for = |len: usize| -> Vec<GridHeat> {
        (0..=len)
            .map(|l| GridHeat::new(dp, m.sigma * (l as f64 * step).sqrt()))
            .collect()
    };
    let mut block = Block {
        kernel: &kernel,
        heat: heat_for(block_len),
        dp,
        step,
    };

    let prices = grid.prices();
    let terminal: Layer = game
        .players
        .iter()
        .map(|p| prices.iter().map(|&x| p.endowment.value(x)).collect())
        .collect();
    // Layers in time-to-maturity order.
    let mut v_layers: Vec<Layer> = vec![terminal];
    let (g0, s0, a0, f0) = block.fields(&v_layers[0])?;
    let mut g_layers = vec![g0];
    let mut s_layers = vec![s0];
    let mut a_layers = vec![a0];
    let mut f_start = f0;
    let mut history = Vec::new();

    while v_layers.len() < n_t {
        let m_len = block_len.min(n_t - v_layers.len());
        let start = v_layers.last().expect("seeded").clone();
        // Seed: pure heat flow of the block's initial data.
        let mut iterate: Vec<Layer> = (1..=m_len)
            .map(|mm| {
                start
                    .iter()
                    .map(|row| block.heat[mm].apply_new(row))
                    .collect()
            })
            .collect();
        let mut fields: Vec<(Layer, Layer, Vec<f64>, Layer)> = iterate
            .iter()
            .map(|v| block.fields(v))
            .collect::<Result<_, _>>()?;
        let mut changes: Vec<f64> = Vec::new();
        let mut restart = false;
        loop {
            let mut forcing = Vec::with_capacity(m_len + 1);
            forcing.push(f_start.clone());
            forcing.extend(fields.iter().map(|f| f.3.clone()));
            let next = block.psi(&start, &forcing, m_len);
            let next_fields: Vec<_> = next
                .iter()
                .map(|v| block.fields(v))
                .collect::<Result<_, _>>()?;
            let old_g: Vec<Layer> = fields.iter().map(|f| f.0.clone()).collect();
            let new_g: Vec<Layer> = next_fields.iter().map(|f| f.0.clone()).collect();
            let change = sup_change(&next, &iterate, &new_g, &old_g);
            changes.push(change);
            iterate = next;
            fields = next_fields;
            if change <= settings.fixpoint_tol {
                break;
            }
            let k = changes.len();
            if k >= 3 && changes[k - 1] > changes[k - 2] && changes[k - 2] > changes[k - 3] {
                if block_len == 1 {
                    return Err(SolveError::NonContraction { history: changes });
                }
                block_len /= 2;
                block = Block {
                    kernel: &kernel,
                    heat: heat_for(block_len),
                    dp,
                    step,
                };
                restart = true;
                break;
            }
            if k >= settings.max_picard_iter {
                return Err(SolveError::PicardIterations {
                    iterations: k,
                    tol: settings.fixpoint_tol,
                    change,
                });
            }
        }
        if restart {
            continue;
        }
        history.push(changes);
        for (v, (g, s, a, f)) in iterate.into_iter().zip(fields) {
            v_layers.push(v);
            g_layers.push(g);
            s_layers.push(s);
            a_layers.push(a);
            f_start = f;
        }
    }

    // Back to calendar-time order.
    let n = game.n_players();
    let reorder = |layers: Vec<Layer>| -> Vec<Vec<Vec<f64>>> {
        let mut out = vec![Vec::with_capacity(n_t); n];
        for layer in layers.into_iter().rev() {
            for (j, row) in layer.into_iter().enumerate() {
                out[j].push(row);
            }
        }
        out
    };
    a_layers.reverse();
    Ok(Solution {
        grid: *grid,
        times: grid.times(m.maturity),
        prices,
        values: reorder(v_layers),
        gradients: reorder(g_layers),
        speeds: reorder(s_layers),
        aggregate_speed: a_layers,
        meta: SolutionMeta {
            scheme: "picard".into(),
            root_tol: settings.speed.root_tol,
            certificate: Some(cert),
            speed_bound: apriori_speed_bound(game, &cert),
            residual: None,
            picard_history: history,
        },
    })
}
