//! Analytic solutions for linear cost.
//!
//! The quadratic-gradient equation `0 = 2 v_t + A v_pp + B v_p²` with
//! terminal data `G` is linearized by exponentiation:
//!
//! ```text
//! v(t, p) = (A/B) log E[ exp((B/A) G(p + sqrt(A (T - t)) Z)) ]
//! ```
//!
//! The risk-neutral aggregate value and the single-player CARA value are
//! instances of it; individual risk-neutral values follow from a Duhamel
//! integral of the aggregate gradient.

mod gridheat;
mod quadrature;

use rayon::prelude::*;
use thiserror::Error;

use crate::model::{CostFunction, GameSpec, GridSpec, ModelError, Payoff, UtilitySpec};

pub use gridheat::GridHeat;
pub use quadrature::{HeatQuadrature, QuadratureRule, TRAPEZOID_REACH};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ClosedFormError {
    #[error("no closed form: {0}")]
    Precondition(String),
    #[error(transparent)]
    Model(#[from] ModelError),
}

fn precondition(msg: impl Into<String>) -> ClosedFormError {
    ClosedFormError::Precondition(msg.into())
}

/// `E[f(p + sqrt(variance) Z)]`.
pub fn heat_convolve(f: impl Fn(f64) -> f64, variance: f64, p: f64, rule: &QuadratureRule) -> f64 {
    if variance <= 0.0 {
        return f(p);
    }
    let s = variance.sqrt();
    rule.expect(|z| f(p + s * z))
}

#[derive(Debug, Clone, PartialEq)]
pub struct BurgersProblem {
    /// `A > 0`.
    pub diff_coef: f64,
    /// `B`, any sign.
    pub quad_coef: f64,
    pub terminal: Payoff,
    pub maturity: f64,
}

impl BurgersProblem {
    pub fn new(
        diff_coef: f64,
        quad_coef: f64,
        terminal: Payoff,
        maturity: f64,
    ) -> Result<Self, ClosedFormError> {
        if !(diff_coef.is_finite() && diff_coef > 0.0) {
            return Err(precondition("A must be > 0"));
        }
        if !quad_coef.is_finite() {
            return Err(precondition("B must be finite"));
        }
        if !(maturity.is_finite() && maturity > 0.0) {
            return Err(precondition("T must be > 0"));
        }
        Ok(Self {
            diff_coef,
            quad_coef,
            terminal,
            maturity,
        })
    }

    /// Aggregate value `Σ v^j` of a risk-neutral game with linear cost:
    /// `A = σ²`, `B = 2 λ² N / (κ (N+1)²)`, `G = Σ H^j`.
    pub fn rn_aggregate(game: &GameSpec) -> Result<Self, ClosedFormError> {
        let kappa = linear_kappa(game)?;
        if !game.all_risk_neutral() {
            return Err(precondition("all players must be risk neutral"));
        }
        let n = game.n_players() as f64;
        let m = &game.market;
        Self::new(
            m.sigma * m.sigma,
            2.0 * m.lambda * m.lambda * n / (kappa * (n + 1.0) * (n + 1.0)),
            game.aggregate_payoff(),
            m.maturity,
        )
    }

    /// Transformed value of a single CARA player with linear cost:
    /// `A = σ²`, `B = λ²/(2κ) - σ² α`, `G = H`.
    pub fn cara_single(game: &GameSpec) -> Result<Self, ClosedFormError> {
        let kappa = linear_kappa(game)?;
        if game.n_players() != 1 {
            return Err(precondition(
                "the CARA closed form needs exactly one player",
            ));
        }
        let player = &game.players[0];
        let alpha = match player.utility {
            UtilitySpec::Cara { alpha } => alpha,
            UtilitySpec::RiskNeutral => return Err(precondition("player is not CARA")),
        };
        let m = &game.market;
        Self::new(
            m.sigma * m.sigma,
            m.lambda * m.lambda / (2.0 * kappa) - m.sigma * m.sigma * alpha,
            player.endowment.clone(),
            m.maturity,
        )
    }

    pub fn quadrature(&self, quad_nodes: usize) -> HeatQuadrature {
        HeatQuadrature::new(quad_nodes, self.terminal.feature_width())
    }

    pub fn value(&self, t: f64, p: f64, quad: &HeatQuadrature) -> f64 {
        let variance = self.diff_coef * (self.maturity - t);
        if variance <= 0.0 {
            return self.terminal.value(p);
        }
        let rule = quad.rule_for(variance.sqrt());
        self.value_with(variance, p, &rule)
    }

    fn value_with(&self, variance: f64, p: f64, rule: &QuadratureRule) -> f64 {
        if variance <= 0.0 {
            return self.terminal.value(p);
        }
        let g = &self.terminal;
        if self.quad_coef == 0.0 {
            return heat_convolve(|x| g.value(x), variance, p, rule);
        }
        let c = self.quad_coef / self.diff_coef;
        let s = variance.sqrt();
        let ys: Vec<f64> = rule.nodes().iter().map(|&z| g.value(p + s * z)).collect();
        let peak = ys.iter().fold(0.0f64, |m, y| m.max(y.abs()));
        let w = rule.weights();
        if c.abs() * peak < 1.0 {
            // log E[e^{cG}] = log1p(E[expm1(cG)]) keeps full precision as c -> 0.
            let m: f64 = ys.iter().zip(w).map(|(y, w)| w * (c * y).exp_m1()).sum();
            return m.ln_1p() / c;
        }
        let shift = ys.iter().map(|y| c * y).fold(f64::NEG_INFINITY, f64::max);
        let sum: f64 = ys
            .iter()
            .zip(w)
            .map(|(y, w)| w * (c * y - shift).exp())
            .sum();
        (shift + sum.ln()) / c
    }

    /// Values on `times × prices`, one row per time.
    pub fn grid(&self, times: &[f64], prices: &[f64], quad: &HeatQuadrature) -> Vec<Vec<f64>> {
        times
            .par_iter()
            .map(|&t| self.row(t, prices, quad))
            .collect()
    }

    fn row(&self, t: f64, prices: &[f64], quad: &HeatQuadrature) -> Vec<f64> {
        let variance = self.diff_coef * (self.maturity - t);
        let g = &self.terminal;
        if variance <= 0.0 {
            return prices.iter().map(|&p| g.value(p)).collect();
        }
        let stdev = variance.sqrt();
        let layout = uniform_step(prices).and_then(|dp| quad.row_layout(stdev, dp));
        let Some(layout) = layout else {
            let rule = quad.rule_for(stdev);
            return prices
                .iter()
                .map(|&p| self.value_with(variance, p, &rule))
                .collect();
        };
        let n_p = prices.len();
        let ys = layout.samples(|x| g.value(x), prices[0], n_p);
        if self.quad_coef == 0.0 {
            return layout.sums(&ys, n_p);
        }
        let c = self.quad_coef / self.diff_coef;
        let (lo, hi) = ys
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &y| {
                (a.min(y), b.max(y))
            });
        let peak = lo.abs().max(hi.abs());
        if c.abs() * peak < 1.0 {
            let e: Vec<f64> = ys.iter().map(|y| (c * y).exp_m1()).collect();
            return layout
                .sums(&e, n_p)
                .into_iter()
                .map(|m| m.ln_1p() / c)
                .collect();
        }
        if c.abs() * (hi - lo) < 600.0 {
            let shift = (c * lo).max(c * hi);
            let e: Vec<f64> = ys.iter().map(|y| (c * y - shift).exp()).collect();
            return layout
                .sums(&e, n_p)
                .into_iter()
                .map(|m| (shift + m.ln()) / c)
                .collect();
        }
        let rule = quad.rule_for(stdev);
        prices
            .iter()
            .map(|&p| self.value_with(variance, p, &rule))
            .collect()
    }
}

/// Step of a uniform grid, if `xs` is one.
pub(crate) fn uniform_step(xs: &[f64]) -> Option<f64> {
    let n = xs.len();
    if n < 2 {
        return None;
    }
    let step = (xs[n - 1] - xs[0]) / (n - 1) as f64;
    let uniform = step > 0.0
        && xs
            .iter()
            .enumerate()
            .all(|(i, &x)| (x - (xs[0] + i as f64 * step)).abs() <= 1e-9 * step);
    uniform.then_some(step)
}

/// `E[f(p + stdev Z)]` for every `p` of a price row.
pub fn heat_row(
    f: impl Fn(f64) -> f64,
    stdev: f64,
    prices: &[f64],
    quad: &HeatQuadrature,
) -> Vec<f64> {
    if stdev <= 0.0 {
        return prices.iter().map(|&p| f(p)).collect();
    }
    match uniform_step(prices).and_then(|dp| quad.row_layout(stdev, dp)) {
        Some(layout) => layout.sums(&layout.samples(&f, prices[0], prices.len()), prices.len()),
        None => {
            let rule = quad.rule_for(stdev);
            prices
                .iter()
                .map(|&p| heat_convolve(&f, stdev * stdev, p, &rule))
                .collect()
        }
    }
}

fn linear_kappa(game: &GameSpec) -> Result<f64, ClosedFormError> {
    match game.cost {
        CostFunction::Linear { kappa } => Ok(kappa),
        _ => Err(precondition("cost function must be linear")),
    }
}

pub fn burgers_value(prob: &BurgersProblem, t: f64, p: f64, quad: &HeatQuadrature) -> f64 {
    prob.value(t, p, quad)
}

pub fn rn_aggregate_value(
    game: &GameSpec,
    t: f64,
    p: f64,
    quad: &HeatQuadrature,
) -> Result<f64, ClosedFormError> {
    Ok(BurgersProblem::rn_aggregate(game)?.value(t, p, quad))
}

/// Transformed value `ṽ`; the utility-scale value is `-exp(-α ṽ)`.
pub fn cara_single_value(
    game: &GameSpec,
    t: f64,
    p: f64,
    quad: &HeatQuadrature,
) -> Result<f64, ClosedFormError> {
    Ok(BurgersProblem::cara_single(game)?.value(t, p, quad))
}

/// Central differences inside, second-order one-sided at the ends.
pub fn central_gradient(f: &[f64], dp: f64, out: &mut [f64]) {
    let n = f.len();
    assert!(n >= 3 && out.len() == n);
    let inv = 0.5 / dp;
    out[0] = (-3.0 * f[0] + 4.0 * f[1] - f[2]) * inv;
    for i in 1..n - 1 {
        out[i] = (f[i + 1] - f[i - 1]) * inv;
    }
    out[n - 1] = (3.0 * f[n - 1] - 4.0 * f[n - 2] + f[n - 3]) * inv;
}

pub fn gradient_rows(values: &[Vec<f64>], dp: f64) -> Vec<Vec<f64>> {
    values
        .iter()
        .map(|row| {
            let mut g = vec![0.0; row.len()];
            central_gradient(row, dp, &mut g);
            g
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct IndividualValues {
    pub times: Vec<f64>,
    pub prices: Vec<f64>,
    /// Closed-form aggregate value, `n_t × n_p`.
    pub aggregate: Vec<Vec<f64>>,
    /// Per-player values, `N × n_t × n_p`.
    pub players: Vec<Vec<Vec<f64>>>,
}

/// Individual values of a risk-neutral linear-cost game,
/// `v^j = E[H^j(P_T)] + c ∫_t^T E[v_p(s, P_s)²] ds` with
/// `c = λ²/(κ(N+1)²)`. The time integral uses the trapezoid rule over the
/// grid's time layers, applied recursively through the grid heat semigroup.
pub fn rn_individual_values(
    game: &GameSpec,
    grid: &GridSpec,
    quad_nodes: usize,
) -> Result<IndividualValues, ClosedFormError> {
    let prob = BurgersProblem::rn_aggregate(game)?;
    grid.validate(&game.market)?;
    let m = &game.market;
    let kappa = linear_kappa(game)?;
    let n = game.n_players() as f64;
    let coef = m.lambda * m.lambda / (kappa * (n + 1.0) * (n + 1.0));
    let times = grid.times(m.maturity);
    let prices = grid.prices();
    let dp = grid.dp();
    let aggregate = prob.grid(&times, &prices, &prob.quadrature(quad_nodes));

    // Source q = v_p² per layer, and D(t) = ∫_t^T K_{s-t}[q(s)] ds.
    let source: Vec<Vec<f64>> = gradient_rows(&aggregate, dp)
        .into_iter()
        .map(|row| row.into_iter().map(|g| g * g).collect())
        .collect();
    let n_t = times.len();
    let mut duhamel = vec![vec![0.0; prices.len()]; n_t];
    for k in (0..n_t - 1).rev() {
        let step = times[k + 1] - times[k];
        let heat = GridHeat::new(dp, m.sigma * step.sqrt());
        let carried = heat.apply_new(&duhamel[k + 1]);
        let q_next = heat.apply_new(&source[k + 1]);
        duhamel[k] = carried
            .iter()
            .zip(&q_next)
            .zip(&source[k])
            .map(|((d, qn), q)| d + 0.5 * step * (q + qn))
            .collect();
    }

    let players = game
        .players
        .iter()
        .map(|player| {
            let h = &player.endowment;
            let quad = HeatQuadrature::new(quad_nodes, h.feature_width());
            times
                .par_iter()
                .zip(&duhamel)
                .map(|(&t, d_row)| {
                    let stdev = m.sigma * (m.maturity - t).max(0.0).sqrt();
                    heat_row(|x| h.value(x), stdev, &prices, &quad)
                        .into_iter()
                        .zip(d_row)
                        .map(|(e, d)| e + coef * d)
                        .collect()
                })
                .collect()
        })
        .collect();
    Ok(IndividualValues {
        times,
        prices,
        aggregate,
        players,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpeedField {
    /// `N × n_t × n_p`.
    pub speeds: Vec<Vec<Vec<f64>>>,
    /// `n_t × n_p`, the ordered sum of the player speeds.
    pub aggregate: Vec<Vec<f64>>,
}

/// Linear-cost speeds `Ẋ^j = (λ/κ)(v^j_p - Σ_i v^i_p / (N+1))` from
/// per-player gradient grids.
pub fn closed_speed_field(
    game: &GameSpec,
    gradients: &[Vec<Vec<f64>>],
) -> Result<SpeedField, ClosedFormError> {
    let kappa = linear_kappa(game)?;
    if gradients.len() != game.n_players() {
        return Err(precondition("one gradient grid per player is required"));
    }
    let ratio = game.market.lambda / kappa;
    let n1 = game.n_players() as f64 + 1.0;
    let n_t = gradients[0].len();
    let n_p = gradients[0].first().map_or(0, Vec::len);
    let mut speeds = vec![vec![vec![0.0; n_p]; n_t]; gradients.len()];
    let mut aggregate = vec![vec![0.0; n_p]; n_t];
    for k in 0..n_t {
        for i in 0..n_p {
            let total: f64 = gradients.iter().map(|g| g[k][i]).sum();
            let mean = total / n1;
            let mut sum = 0.0;
            for (j, g) in gradients.iter().enumerate() {
                let x = ratio * (g[k][i] - mean);
                speeds[j][k][i] = x;
                sum += x;
            }
            aggregate[k][i] = sum;
        }
    }
    Ok(SpeedField { speeds, aggregate })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{MarketParams, PlayerSpec};
    use crate::speeds::{aggregate_speed, player_speeds, SpeedSolverSettings};

    fn market() -> MarketParams {
        MarketParams::new(1.0, 0.01, 1.0, 100.0).unwrap()
    }

    fn call() -> Payoff {
        Payoff::smoothed_call(100.0, 10.0, 0.05).unwrap()
    }

    fn digital() -> Payoff {
        Payoff::smoothed_digital(100.0, 0.05).unwrap()
    }

    fn rn_game(payoffs: Vec<Payoff>) -> GameSpec {
        GameSpec::new(
            market(),
            CostFunction::linear(0.01).unwrap(),
            payoffs.into_iter().map(PlayerSpec::risk_neutral).collect(),
        )
        .unwrap()
    }

    #[test]
    fn heat_convolve_examples() {
        let rule = QuadratureRule::gauss_hermite(32);
        assert!((heat_convolve(|_| 2.5, 3.0, 1.0, &rule) - 2.5).abs() < 1e-14);
        assert!((heat_convolve(|x| x, 7.0, 3.0, &rule) - 3.0).abs() < 1e-13);
        assert!((heat_convolve(|x| x * x, 4.0, 3.0, &rule) - 13.0).abs() < 1e-12);
        assert_eq!(heat_convolve(|x| x * x, 0.0, 3.0, &rule), 9.0);
    }

    #[test]
    fn heat_convolve_square_monte_carlo() {
        use rand::SeedableRng;
        use rand_distr::{Distribution, StandardNormal};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        let n = 10_000_000;
        let mean = (0..n)
            .map(|_| {
                let z: f64 = StandardNormal.sample(&mut rng);
                (3.0 + 2.0 * z).powi(2)
            })
            .sum::<f64>()
            / n as f64;
        // Var[(3+2Z)²] = 144 + 32.
        assert!((mean - 13.0).abs() < 4.0 * 176f64.sqrt() / (n as f64).sqrt());
    }

    #[test]
    fn burgers_constant_and_terminal() {
        let c = Payoff::custom_grid(vec![0.0, 1.0], vec![2.5, 2.5]).unwrap();
        for b in [2.0, -0.5, 1e-9] {
            let prob = BurgersProblem::new(1.0, b, c.clone(), 1.0).unwrap();
            let q = prob.quadrature(64);
            assert!((prob.value(0.3, 1.0, &q) - 2.5).abs() < 1e-13);
        }
        let prob = BurgersProblem::new(1.0, 0.5, call(), 1.0).unwrap();
        let q = prob.quadrature(64);
        assert_eq!(prob.value(1.0, 103.0, &q), call().value(103.0));
    }

    #[test]
    fn burgers_on_linear_data() {
        // G(p) = a p locally (wide ramp), v = a p + (B a²/2)(T - t).
        let a = 0.7;
        let ramp = Payoff::scaled(Payoff::smoothed_call(-1000.0, 2000.0, 1.0).unwrap(), a).unwrap();
        for (big_a, big_b) in [(1.0, 2.0), (0.25, -0.5), (4.0, 0.5)] {
            let prob = BurgersProblem::new(big_a, big_b, ramp.clone(), 1.0).unwrap();
            let q = prob.quadrature(64);
            for t in [0.0, 0.5, 0.9] {
                for p in [-5.0, 0.0, 3.0] {
                    let exact = a * (p + 1000.0) + 0.5 * big_b * a * a * (1.0 - t);
                    let v = prob.value(t, p, &q);
                    assert!(
                        (v - exact).abs() < 1e-9,
                        "A={big_a} B={big_b}: {v} vs {exact}"
                    );
                }
            }
            // 2 v_t + A v_pp + B v_p² = 0 by finite differences.
            let (h, k, t, p) = (1e-3, 1e-3, 0.4, 1.0);
            let v = |t, p| prob.value(t, p, &q);
            let vt = (v(t + k, p) - v(t - k, p)) / (2.0 * k);
            let vp = (v(t, p + h) - v(t, p - h)) / (2.0 * h);
            let vpp = (v(t, p + h) - 2.0 * v(t, p) + v(t, p - h)) / (h * h);
            assert!((2.0 * vt + big_a * vpp + big_b * vp * vp).abs() < 1e-6);
        }
    }

    #[test]
    fn burgers_zero_coefficient_is_heat() {
        let prob = BurgersProblem::new(1.0, 0.0, call(), 1.0).unwrap();
        let q = prob.quadrature(64);
        let rule = q.rule_for(1.0);
        let heat = heat_convolve(|x| call().value(x), 1.0, 100.0, &rule);
        assert_eq!(prob.value(0.0, 100.0, &q), heat);
    }

    #[test]
    fn quadrature_size_is_converged() {
        let g = Payoff::sum(vec![
            Payoff::smoothed_call(100.0, 3.0, 0.8).unwrap(),
            Payoff::scaled(Payoff::smoothed_digital(101.0, 0.6).unwrap(), -2.0).unwrap(),
        ]);
        let prob = BurgersProblem::new(1.0, 0.5, g, 1.0).unwrap();
        let (q32, q64) = (prob.quadrature(32), prob.quadrature(64));
        for t in [0.0, 0.5, 0.95] {
            for p in [97.0, 100.0, 104.0] {
                let d = prob.value(t, p, &q32) - prob.value(t, p, &q64);
                assert!(d.abs() <= 1e-8, "t={t} p={p}: {d}");
            }
        }
    }

    #[test]
    fn rn_aggregate_examples() {
        let q = HeatQuadrature::new(64, 0.05);
        let zero_sum = rn_game(vec![call(), Payoff::negated(call())]);
        for p in [95.0, 100.0, 105.0] {
            assert_eq!(rn_aggregate_value(&zero_sum, 0.0, p, &q).unwrap(), 0.0);
        }
        let single = rn_game(vec![call()]);
        let v = rn_aggregate_value(&single, 0.0, 100.0, &q).unwrap();
        let heat = heat_convolve(|x| call().value(x), 1.0, 100.0, &q.rule_for(1.0));
        assert!(v > heat, "{v} <= {heat}");

        let tiny = GameSpec::new(
            MarketParams::new(1.0, 1e-9, 1.0, 100.0).unwrap(),
            CostFunction::linear(0.01).unwrap(),
            vec![PlayerSpec::risk_neutral(call())],
        )
        .unwrap();
        let v = rn_aggregate_value(&tiny, 0.0, 100.0, &q).unwrap();
        assert!((v - heat).abs() < 1e-12);
    }

    #[test]
    fn preconditions_are_enforced() {
        let q = HeatQuadrature::new(64, 0.05);
        let spread = GameSpec::new(
            market(),
            CostFunction::smoothed_spread(0.01, 0.001, 100.0).unwrap(),
            vec![PlayerSpec::risk_neutral(call())],
        )
        .unwrap();
        assert!(rn_aggregate_value(&spread, 0.0, 100.0, &q).is_err());
        let cara2 = GameSpec::new(
            market(),
            CostFunction::linear(0.01).unwrap(),
            vec![
                PlayerSpec::cara(0.01, call()).unwrap(),
                PlayerSpec::cara(0.01, Payoff::negated(call())).unwrap(),
            ],
        )
        .unwrap();
        assert!(cara_single_value(&cara2, 0.0, 100.0, &q).is_err());
        assert!(rn_aggregate_value(&cara2, 0.0, 100.0, &q).is_err());
    }

    fn cara_game(alpha: f64, h: Payoff) -> GameSpec {
        GameSpec::new(
            market(),
            CostFunction::linear(0.01).unwrap(),
            vec![PlayerSpec::cara(alpha, h).unwrap()],
        )
        .unwrap()
    }

    #[test]
    fn cara_limits() {
        let q = HeatQuadrature::new(64, 0.05);
        let rn = rn_game(vec![call()]);
        for p in [97.0, 100.0, 103.0] {
            let a = cara_single_value(&cara_game(1e-8, call()), 0.0, p, &q).unwrap();
            let b = rn_aggregate_value(&rn, 0.0, p, &q).unwrap();
            assert!((a - b).abs() <= 1e-6, "{a} vs {b}");
        }
        // α = λ²/(2κσ²) removes the quadratic term.
        let alpha = 0.01 * 0.01 / (2.0 * 0.01);
        let g = cara_game(alpha, digital());
        let rule = HeatQuadrature::new(64, 0.05);
        let heat = heat_convolve(
            |x| digital().value(x),
            0.6,
            99.0,
            &rule.rule_for(0.6f64.sqrt()),
        );
        let v = cara_single_value(&g, 0.4, 99.0, &q).unwrap();
        assert!((v - heat).abs() < 1e-14);
        assert_eq!(
            cara_single_value(&g, 1.0, 99.0, &q).unwrap(),
            digital().value(99.0)
        );
    }

    fn small_grid(n_t: usize) -> GridSpec {
        GridSpec::centered(&market(), 401, n_t)
    }

    #[test]
    fn single_player_duhamel_matches_burgers() {
        for h in [call(), digital()] {
            let game = rn_game(vec![h]);
            let iv = rn_individual_values(&game, &small_grid(201), 64).unwrap();
            let mut err = 0.0f64;
            for k in 0..iv.times.len() {
                for i in 50..=350 {
                    err = err.max((iv.players[0][k][i] - iv.aggregate[k][i]).abs());
                }
            }
            assert!(err <= 1e-3, "{err}");
        }
    }

    #[test]
    fn individual_values_sum_to_aggregate() {
        let game = rn_game(vec![call(), digital(), Payoff::zero()]);
        let iv = rn_individual_values(&game, &small_grid(201), 64).unwrap();
        let mut err = 0.0f64;
        for k in 0..iv.times.len() {
            for i in 0..iv.prices.len() {
                let s: f64 = iv.players.iter().map(|v| v[k][i]).sum();
                err = err.max((s - iv.aggregate[k][i]).abs());
            }
        }
        assert!(err <= 2e-3, "{err}");
        // Predator value is nonnegative before maturity.
        for row in &iv.players[2] {
            assert!(row.iter().all(|&v| v >= 0.0));
        }
    }

    #[test]
    fn identical_endowments_share_value() {
        let half = Payoff::scaled(call(), 0.5).unwrap();
        let game = rn_game(vec![half.clone(), half]);
        let iv = rn_individual_values(&game, &small_grid(51), 64).unwrap();
        assert_eq!(iv.players[0], iv.players[1]);
    }

    #[test]
    fn surplus_is_nonnegative() {
        let game = rn_game(vec![digital()]);
        let prob = BurgersProblem::rn_aggregate(&game).unwrap();
        let q = prob.quadrature(64);
        let rule = q.rule_for(1.0);
        for p in small_grid(2).prices() {
            let heat = heat_convolve(|x| digital().value(x), 1.0, p, &rule);
            assert!(prob.value(0.0, p, &q) - heat >= -1e-10);
        }
    }

    #[test]
    fn closed_speed_examples() {
        let game = rn_game(vec![call()]);
        let f = closed_speed_field(&game, &[vec![vec![0.4, -0.2]]]).unwrap();
        assert!((f.speeds[0][0][0] - 0.5 * 0.4).abs() < 1e-15);
        assert_eq!(f.aggregate[0][0], f.speeds[0][0][0]);

        let game = rn_game(vec![call(), call(), call()]);
        let f = closed_speed_field(&game, &vec![vec![vec![0.3]]; 3]).unwrap();
        for j in 0..3 {
            assert!((f.speeds[j][0][0] - f.aggregate[0][0] / 3.0).abs() < 1e-15);
        }

        let game = rn_game(vec![call(), Payoff::negated(call())]);
        let grads = [0.37, -0.37];
        let f = closed_speed_field(&game, &[vec![vec![grads[0]]], vec![vec![grads[1]]]]).unwrap();
        assert_eq!(f.aggregate[0][0], 0.0);
        assert!((f.speeds[0][0][0] - 0.37).abs() < 1e-15);
        let lambda = game.market.lambda;
        let eff: Vec<f64> = grads.iter().map(|g| lambda * g).collect();
        let settings = SpeedSolverSettings::default();
        let z = aggregate_speed(&game.cost, 2, eff.iter().sum(), 0.0099, &settings).unwrap();
        let v = player_speeds(&game.cost, &eff, z).unwrap();
        assert!((v[0] - f.speeds[0][0][0]).abs() < 1e-12);
        assert!((v[1] - f.speeds[1][0][0]).abs() < 1e-12);
    }
}
