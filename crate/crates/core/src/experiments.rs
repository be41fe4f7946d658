//! Scripted studies: zero-sum cancellation, predator and split scaling,
//! spread and risk-aversion sweeps, and the tables behind the figures.

use std::collections::BTreeMap;
use std::io::Write;

use serde::Serialize;
use thiserror::Error;

use crate::closedform::{central_gradient, BurgersProblem, ClosedFormError};
use crate::model::{
    CostFunction, GameSpec, GridSpec, MarketParams, ModelError, Payoff, PlayerSpec,
    DEFAULT_CAP_STDEVS, DEFAULT_WIDTH_STDEVS,
};
use crate::pdesolve::{solve_closed, solve_fd, surplus_layer, FdSettings, Solution, SolveError};

/// Sharpness `C` of the smoothed spread cost used by the spread sweep.
pub const SPREAD_SHARPNESS: f64 = 100.0;
/// Additive slack of the pointwise monotonicity check in `split_sweep`.
pub const SPLIT_TOL: f64 = 1e-8;
/// Additive slack of the monotonicity checks in `spread_sweep`.
pub const SPREAD_TOL: f64 = 1e-6;
/// Additive slack of the CARA sign checks.
pub const SIGN_TOL: f64 = 1e-6;
/// Multiplicative slack on the `1/(N+1)` decay of the aggregate speed.
pub const DECAY_SLACK: f64 = 1.1;
/// Price band of the two-player CARA study.
pub const CARA_BAND: (f64, f64) = (95.0, 105.0);

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Solve(#[from] SolveError),
    #[error(transparent)]
    ClosedForm(#[from] ClosedFormError),
    #[error("precondition failed: {0}")]
    Precondition(String),
    #[error("unknown figure id `{0}`; expected fig1 to fig6")]
    UnknownFigure(String),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

fn precondition(msg: impl Into<String>) -> ExperimentError {
    ExperimentError::Precondition(msg.into())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Assertion {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl Assertion {
    fn new(name: impl Into<String>, passed: bool, detail: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            passed,
            detail: detail.into(),
        }
    }
}

/// One parameter value of a sweep.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepPoint {
    pub label: String,
    pub value: f64,
    pub game_hash: String,
    pub scalars: BTreeMap<String, f64>,
    /// Rows over [`SweepResult::prices`].
    pub curves: BTreeMap<String, Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepResult {
    pub study: String,
    pub param: String,
    pub prices: Vec<f64>,
    pub grid_hash: String,
    pub points: Vec<SweepPoint>,
    pub assertions: Vec<Assertion>,
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepSummary<'a> {
    pub study: &'a str,
    pub param: &'a str,
    pub values: Vec<&'a str>,
    pub grid_hash: &'a str,
    pub game_hashes: Vec<&'a str>,
    pub scalars: Vec<&'a BTreeMap<String, f64>>,
    pub assertions: &'a [Assertion],
    pub passed: bool,
}

impl SweepResult {
    fn new(study: &str, param: &str, grid: &GridSpec) -> Self {
        Self {
            study: study.into(),
            param: param.into(),
            prices: grid.prices(),
            grid_hash: grid.hash(),
            points: Vec::new(),
            assertions: Vec::new(),
        }
    }

    pub fn passed(&self) -> bool {
        self.assertions.iter().all(|a| a.passed)
    }

    pub fn failures(&self) -> Vec<&Assertion> {
        self.assertions.iter().filter(|a| !a.passed).collect()
    }

    pub fn summary(&self) -> SweepSummary<'_> {
        SweepSummary {
            study: &self.study,
            param: &self.param,
            values: self.points.iter().map(|p| p.label.as_str()).collect(),
            grid_hash: &self.grid_hash,
            game_hashes: self.points.iter().map(|p| p.game_hash.as_str()).collect(),
            scalars: self.points.iter().map(|p| &p.scalars).collect(),
            assertions: &self.assertions,
            passed: self.passed(),
        }
    }

    /// `param,value,metric,p,y`; scalar metrics leave `p` empty.
    pub fn write_csv(&self, out: impl Write) -> Result<(), ExperimentError> {
        let mut w = csv::Writer::from_writer(out);
        let io = |e: csv::Error| ExperimentError::Io(e.into());
        w.write_record(["param", "value", "metric", "p", "y"])
            .map_err(io)?;
        for pt in &self.points {
            for (name, y) in &pt.scalars {
                w.write_record([&self.param, &pt.label, name, "", &format!("{y:.16e}")])
                    .map_err(io)?;
            }
            for (name, ys) in &pt.curves {
                for (p, y) in self.prices.iter().zip(ys) {
                    w.write_record([
                        &self.param,
                        &pt.label,
                        name,
                        &format!("{p:.16e}"),
                        &format!("{y:.16e}"),
                    ])
                    .map_err(io)?;
                }
            }
        }
        w.flush()?;
        Ok(())
    }
}

fn max_abs(xs: &[f64]) -> f64 {
    xs.iter().fold(0.0f64, |m, x| m.max(x.abs()))
}

fn max_of(xs: &[f64]) -> f64 {
    xs.iter().copied().fold(f64::NEG_INFINITY, f64::max)
}

fn non_increasing(name: &str, seq: &[f64], tol: f64) -> Assertion {
    let bad: Vec<String> = seq
        .windows(2)
        .enumerate()
        .filter(|(_, w)| w[1] > w[0] + tol)
        .map(|(i, w)| format!("#{i}->#{}: {:e} > {:e}", i + 1, w[1], w[0]))
        .collect();
    Assertion::new(name, bad.is_empty(), bad.join("; "))
}

// Figure parameters: K = 100, T = 1, λ = κ = 0.01, p0 = K.

pub fn figure_market(sigma: f64) -> MarketParams {
    MarketParams::new(sigma, 0.01, 1.0, 100.0).expect("valid figure market")
}

pub fn figure_cost() -> CostFunction {
    CostFunction::linear(0.01).expect("valid figure cost")
}

pub fn figure_call(market: &MarketParams) -> Payoff {
    let s = market.horizon_stdev();
    Payoff::smoothed_call(100.0, DEFAULT_CAP_STDEVS * s, DEFAULT_WIDTH_STDEVS * s)
        .expect("valid figure call")
}

pub fn figure_digital(market: &MarketParams) -> Payoff {
    Payoff::smoothed_digital(100.0, DEFAULT_WIDTH_STDEVS * market.horizon_stdev())
        .expect("valid figure digital")
}

fn rn_game(
    market: MarketParams,
    cost: CostFunction,
    payoffs: Vec<Payoff>,
) -> Result<GameSpec, ModelError> {
    GameSpec::new(
        market,
        cost,
        payoffs.into_iter().map(PlayerSpec::risk_neutral).collect(),
    )
}

fn linear_kappa(cost: &CostFunction) -> Result<f64, ExperimentError> {
    match *cost {
        CostFunction::Linear { kappa } => Ok(kappa),
        _ => Err(precondition("a linear cost function is required")),
    }
}

/// `Ẋ*(0, p) = λ/(κ(N+1)) v_p(0, p)` from the aggregate closed form.
pub fn closed_aggregate_speed(
    game: &GameSpec,
    grid: &GridSpec,
) -> Result<Vec<f64>, ExperimentError> {
    let kappa = linear_kappa(&game.cost)?;
    let prob = BurgersProblem::rn_aggregate(game)?;
    let prices = grid.prices();
    let v = prob
        .grid(&[0.0], &prices, &prob.quadrature(grid.quad_nodes))
        .pop()
        .expect("one row");
    let mut vp = vec![0.0; v.len()];
    central_gradient(&v, grid.dp(), &mut vp);
    let factor = game.market.lambda / (kappa * (game.n_players() as f64 + 1.0));
    Ok(vp.into_iter().map(|x| factor * x).collect())
}

/// Solves a risk-neutral game with offsetting endowments and reports the
/// aggregate speed and the sum of values.
pub fn zero_sum_check(game: &GameSpec, grid: &GridSpec) -> Result<SweepResult, ExperimentError> {
    if !game.all_risk_neutral() {
        return Err(precondition("zero-sum check needs risk-neutral players"));
    }
    let sol = solve_fd(game, grid, &FdSettings::default())?;
    let agg = sol
        .aggregate_speed
        .iter()
        .flatten()
        .fold(0.0f64, |m, x| m.max(x.abs()));
    let mut value_sum = 0.0f64;
    for k in 0..sol.times.len() {
        for i in 0..sol.prices.len() {
            let s: f64 = sol.values.iter().map(|v| v[k][i]).sum();
            value_sum = value_sum.max(s.abs());
        }
    }
    let agg_payoff = game.aggregate_payoff();
    let payoff_sum = sol
        .prices
        .iter()
        .fold(0.0f64, |m, &p| m.max(agg_payoff.value(p).abs()));
    let limit = 10.0 * sol.meta.root_tol;
    let mut res = SweepResult::new("zero_sum", "N", grid);
    res.points.push(SweepPoint {
        label: game.n_players().to_string(),
        value: game.n_players() as f64,
        game_hash: game.hash(),
        scalars: BTreeMap::from([
            ("max_abs_aggregate_speed".into(), agg),
            ("max_abs_value_sum".into(), value_sum),
            ("max_abs_payoff_sum".into(), payoff_sum),
            ("root_tol".into(), sol.meta.root_tol),
        ]),
        curves: BTreeMap::from([("aggregate_speed_t0".into(), sol.aggregate_speed[0].clone())]),
    });
    res.assertions.push(Assertion::new(
        "aggregate_speed_vanishes",
        agg <= limit,
        format!("max |aggregate speed| = {agg:e}, limit {limit:e}"),
    ));
    Ok(res)
}

/// `H, Negated(H)` on the market and cost of `base`.
pub fn zero_sum_game(base: &GameSpec, h: &Payoff) -> Result<GameSpec, ModelError> {
    rn_game(
        base.market,
        base.cost.clone(),
        vec![h.clone(), Payoff::negated(h.clone())],
    )
}

fn scaling_sweep(
    study: &str,
    base: &GameSpec,
    ns: &[usize],
    grid: &GridSpec,
    payoffs: impl Fn(usize) -> Result<Vec<Payoff>, ModelError>,
) -> Result<SweepResult, ExperimentError> {
    if ns.is_empty() || ns.contains(&0) {
        return Err(precondition("N values must be >= 1"));
    }
    linear_kappa(&base.cost)?;
    let mut res = SweepResult::new(study, "N", grid);
    for &n in ns {
        let game = rn_game(base.market, base.cost.clone(), payoffs(n)?)?;
        let speed = closed_aggregate_speed(&game, grid)?;
        res.points.push(SweepPoint {
            label: n.to_string(),
            value: n as f64,
            game_hash: game.hash(),
            scalars: BTreeMap::from([("max_abs_aggregate_speed".into(), max_abs(&speed))]),
            curves: BTreeMap::from([("aggregate_speed".into(), speed)]),
        });
    }
    let maxes: Vec<f64> = res
        .points
        .iter()
        .map(|p| p.scalars["max_abs_aggregate_speed"])
        .collect();
    let (n0, m0) = (ns[0] as f64, maxes[0]);
    let bad: Vec<String> = ns
        .iter()
        .zip(&maxes)
        .skip(1)
        .filter_map(|(&n, &m)| {
            let limit = (n0 + 1.0) / (n as f64 + 1.0) * DECAY_SLACK * m0;
            (m > limit).then(|| format!("N={n}: {m:e} > {limit:e}"))
        })
        .collect();
    res.assertions.push(Assertion::new(
        "prefactor_decay",
        bad.is_empty(),
        bad.join("; "),
    ));
    Ok(res)
}

/// Player 1 holds `h1`, `N - 1` predators hold nothing.
pub fn predator_sweep(
    base: &GameSpec,
    h1: &Payoff,
    ns: &[usize],
    grid: &GridSpec,
) -> Result<SweepResult, ExperimentError> {
    let mut res = scaling_sweep("predator", base, ns, grid, |n| {
        let mut v = vec![h1.clone()];
        v.extend((1..n).map(|_| Payoff::zero()));
        Ok(v)
    })?;
    let maxes: Vec<f64> = res
        .points
        .iter()
        .map(|p| p.scalars["max_abs_aggregate_speed"])
        .collect();
    let bad: Vec<String> = maxes
        .windows(2)
        .enumerate()
        .filter(|(_, w)| !(w[1] < w[0] || (w[0] == 0.0 && w[1] == 0.0)))
        .map(|(i, w)| format!("N={}: {:e} vs {:e}", ns[i + 1], w[1], w[0]))
        .collect();
    res.assertions.push(Assertion::new(
        "max_speed_decreasing",
        bad.is_empty(),
        bad.join("; "),
    ));
    Ok(res)
}

/// Each of `N` players holds `h / N`.
pub fn split_sweep(
    base: &GameSpec,
    h: &Payoff,
    ns: &[usize],
    grid: &GridSpec,
) -> Result<SweepResult, ExperimentError> {
    let mut res = scaling_sweep("split", base, ns, grid, |n| {
        let piece = Payoff::scaled(h.clone(), 1.0 / n as f64)?;
        Ok(vec![piece; n])
    })?;
    let mut bad = Vec::new();
    for (a, b) in res.points.iter().zip(res.points.iter().skip(1)) {
        let (ca, cb) = (&a.curves["aggregate_speed"], &b.curves["aggregate_speed"]);
        let worst = ca
            .iter()
            .zip(cb)
            .map(|(x, y)| y.abs() - x.abs())
            .fold(f64::NEG_INFINITY, f64::max);
        if worst > SPLIT_TOL {
            bad.push(format!(
                "N={} -> N={}: increase {worst:e}",
                a.label, b.label
            ));
        }
    }
    res.assertions.push(Assertion::new(
        "pointwise_non_increasing",
        bad.is_empty(),
        bad.join("; "),
    ));
    Ok(res)
}

/// Single risk-neutral player under `κz + s(2/π)arctan(Cz)` for each `s`.
pub fn spread_sweep(
    base: &GameSpec,
    spreads: &[f64],
    sharpness: f64,
    grid: &GridSpec,
) -> Result<SweepResult, ExperimentError> {
    if base.n_players() != 1 || !base.all_risk_neutral() {
        return Err(precondition("spread sweep needs one risk-neutral player"));
    }
    let kappa = match base.cost {
        CostFunction::Linear { kappa } | CostFunction::SmoothedSpread { kappa, .. } => kappa,
        CostFunction::CustomTable { .. } => return Err(precondition("spread sweep needs a kappa")),
    };
    let mut res = SweepResult::new("spread", "s", grid);
    for &s in spreads {
        let cost = CostFunction::smoothed_spread(kappa, s, sharpness)?;
        let game = GameSpec::new(base.market, cost, base.players.clone())?;
        let sol = solve_fd(&game, grid, &FdSettings::default())?;
        let speed = sol.speeds[0][0].clone();
        let surplus = surplus_layer(&sol, &game, 0, grid.quad_nodes).swap_remove(0);
        res.points.push(SweepPoint {
            label: s.to_string(),
            value: s,
            game_hash: game.hash(),
            scalars: BTreeMap::from([
                ("max_abs_speed".into(), max_abs(&speed)),
                ("max_surplus".into(), max_of(&surplus)),
            ]),
            curves: BTreeMap::from([("speed".into(), speed), ("surplus".into(), surplus)]),
        });
    }
    for metric in ["max_abs_speed", "max_surplus"] {
        let seq: Vec<f64> = res.points.iter().map(|p| p.scalars[metric]).collect();
        res.assertions.push(non_increasing(
            &format!("{metric}_non_increasing"),
            &seq,
            SPREAD_TOL,
        ));
    }
    Ok(res)
}

/// Two CARA players, player 1 long `h`, player 2 short `h`, for each
/// `(α¹, α²)`. Player 1 should buy and player 2 sell on [`CARA_BAND`].
pub fn cara_two_player_study(
    market: MarketParams,
    cost: &CostFunction,
    h: &Payoff,
    alphas: &[(f64, f64)],
    grid: &GridSpec,
) -> Result<SweepResult, ExperimentError> {
    let mut res = SweepResult::new("cara2", "alpha", grid);
    let band: Vec<usize> = (0..res.prices.len())
        .filter(|&i| (CARA_BAND.0..=CARA_BAND.1).contains(&res.prices[i]))
        .collect();
    for (idx, &(a1, a2)) in alphas.iter().enumerate() {
        let game = GameSpec::new(
            market,
            cost.clone(),
            vec![
                PlayerSpec::cara(a1, h.clone())?,
                PlayerSpec::cara(a2, Payoff::negated(h.clone()))?,
            ],
        )?;
        let sol = solve_fd(&game, grid, &FdSettings::default())?;
        let surplus = surplus_layer(&sol, &game, 0, grid.quad_nodes);
        let label = format!("{a1}/{a2}");
        let (s1, s2) = (&sol.speeds[0][0], &sol.speeds[1][0]);
        let min_buy = band.iter().map(|&i| s1[i]).fold(f64::INFINITY, f64::min);
        let max_sell = band
            .iter()
            .map(|&i| s2[i])
            .fold(f64::NEG_INFINITY, f64::max);
        res.assertions.push(Assertion::new(
            format!("writer_buys[{label}]"),
            min_buy >= -SIGN_TOL,
            format!("min speed_1 on band = {min_buy:e}"),
        ));
        res.assertions.push(Assertion::new(
            format!("issuer_sells[{label}]"),
            max_sell <= SIGN_TOL,
            format!("max speed_2 on band = {max_sell:e}"),
        ));
        res.points.push(SweepPoint {
            label,
            value: idx as f64,
            game_hash: game.hash(),
            scalars: BTreeMap::from([
                ("alpha_1".into(), a1),
                ("alpha_2".into(), a2),
                ("min_speed_1_band".into(), min_buy),
                ("max_speed_2_band".into(), max_sell),
            ]),
            curves: BTreeMap::from([
                ("speed_1".into(), s1.clone()),
                ("speed_2".into(), s2.clone()),
                ("aggregate_speed".into(), sol.aggregate_speed[0].clone()),
                ("surplus_1".into(), surplus[0].clone()),
                ("surplus_2".into(), surplus[1].clone()),
            ]),
        });
    }
    Ok(res)
}

/// Risk-aversion pairs shown in the two-player CARA figure.
pub const FIGURE_ALPHAS: [(f64, f64); 2] = [(0.01, 0.01), (0.001, 0.1)];
/// Spreads shown in the spread figures.
pub const FIGURE_SPREADS: [f64; 5] = [0.0, 0.001, 0.002, 0.003, 0.004];
/// Player counts shown in the split figure.
pub const FIGURE_NS: [usize; 3] = [1, 10, 100];

/// Rows of one figure; the first CSV column names the panel or curve.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FigureTable {
    pub id: String,
    pub columns: Vec<String>,
    pub rows: Vec<(String, Vec<f64>)>,
}

impl FigureTable {
    pub fn write_csv(&self, out: impl Write) -> Result<(), ExperimentError> {
        let mut w = csv::Writer::from_writer(out);
        let io = |e: csv::Error| ExperimentError::Io(e.into());
        let mut header = vec!["panel".to_string()];
        header.extend(self.columns.iter().cloned());
        w.write_record(&header).map_err(io)?;
        for (panel, row) in &self.rows {
            let mut rec = vec![panel.clone()];
            rec.extend(row.iter().map(|x| format!("{x:.16e}")));
            w.write_record(&rec).map_err(io)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Time layers and price stride of the surface figures.
const SURFACE_LAYERS: usize = 20;
const SURFACE_PRICE_STRIDE: usize = 4;

fn surface(id: &str, panel: &str, payoff: Payoff) -> Result<FigureTable, ExperimentError> {
    let market = figure_market(1.0);
    let game = rn_game(market, figure_cost(), vec![payoff])?;
    let grid = GridSpec::default_for(&market);
    let sol: Solution = solve_closed(&game, &grid)?;
    let step = (sol.times.len() - 1) / SURFACE_LAYERS;
    let mut rows = Vec::new();
    for k in (0..sol.times.len() - 1).step_by(step.max(1)) {
        let surplus = surplus_layer(&sol, &game, k, grid.quad_nodes).swap_remove(0);
        for i in (0..sol.prices.len()).step_by(SURFACE_PRICE_STRIDE) {
            rows.push((
                panel.to_string(),
                vec![sol.times[k], sol.prices[i], sol.speeds[0][k][i], surplus[i]],
            ));
        }
    }
    Ok(FigureTable {
        id: id.into(),
        columns: cols(&["t", "p", "speed", "surplus"]),
        rows,
    })
}

fn cols(names: &[&str]) -> Vec<String> {
    names.iter().map(|s| s.to_string()).collect()
}

fn spread_figure(id: &str, panel: &str, payoff: Payoff) -> Result<FigureTable, ExperimentError> {
    let market = figure_market(1.0);
    let base = rn_game(market, figure_cost(), vec![payoff])?;
    let res = spread_sweep(
        &base,
        &FIGURE_SPREADS,
        SPREAD_SHARPNESS,
        &GridSpec::default_for(&market),
    )?;
    let mut rows = Vec::new();
    for pt in &res.points {
        for (i, &p) in res.prices.iter().enumerate() {
            rows.push((
                panel.to_string(),
                vec![pt.value, p, pt.curves["speed"][i], pt.curves["surplus"][i]],
            ));
        }
    }
    Ok(FigureTable {
        id: id.into(),
        columns: cols(&["s", "p", "speed", "surplus"]),
        rows,
    })
}

/// Tabular data behind figure `fig1` to `fig6` with the published
/// parameters baked in.
pub fn figure_grids(which: &str) -> Result<FigureTable, ExperimentError> {
    let id = which.trim().to_ascii_lowercase();
    let id = if id.starts_with("fig") {
        id
    } else {
        format!("fig{id}")
    };
    let m1 = figure_market(1.0);
    match id.as_str() {
        "fig1" => surface(&id, "call", figure_call(&m1)),
        "fig2" => surface(&id, "digital", figure_digital(&m1)),
        "fig3" => spread_figure(&id, "call", figure_call(&m1)),
        "fig4" => spread_figure(&id, "digital", figure_digital(&m1)),
        "fig5" => {
            let m2 = figure_market(2.0);
            let res = cara_two_player_study(
                m2,
                &figure_cost(),
                &figure_call(&m2),
                &FIGURE_ALPHAS,
                &GridSpec::default_for(&m2),
            )?;
            let mut rows = Vec::new();
            for pt in &res.points {
                let c = &pt.curves;
                for (i, &p) in res.prices.iter().enumerate() {
                    if !(CARA_BAND.0..=CARA_BAND.1).contains(&p) {
                        continue;
                    }
                    rows.push((
                        pt.label.clone(),
                        vec![
                            pt.scalars["alpha_1"],
                            pt.scalars["alpha_2"],
                            p,
                            c["speed_1"][i],
                            c["speed_2"][i],
                            c["aggregate_speed"][i],
                            c["surplus_1"][i],
                            c["surplus_2"][i],
                        ],
                    ));
                }
            }
            let columns = cols(&[
                "alpha_1",
                "alpha_2",
                "p",
                "speed_1",
                "speed_2",
                "aggregate_speed",
                "surplus_1",
                "surplus_2",
            ]);
            Ok(FigureTable { id, columns, rows })
        }
        "fig6" => {
            let base = rn_game(m1, figure_cost(), vec![Payoff::zero()])?;
            let grid = GridSpec::default_for(&m1);
            let mut rows = Vec::new();
            for (panel, h) in [("call", figure_call(&m1)), ("digital", figure_digital(&m1))] {
                let res = split_sweep(&base, &h, &FIGURE_NS, &grid)?;
                for pt in &res.points {
                    for (i, &p) in res.prices.iter().enumerate() {
                        rows.push((
                            panel.to_string(),
                            vec![pt.value, p, pt.curves["aggregate_speed"][i]],
                        ));
                    }
                }
            }
            Ok(FigureTable {
                id,
                columns: cols(&["N", "p", "aggregate_speed"]),
                rows,
            })
        }
        _ => Err(ExperimentError::UnknownFigure(which.to_string())),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn grid(m: &MarketParams) -> GridSpec {
        GridSpec::centered(m, 201, 200)
    }

    fn base() -> GameSpec {
        rn_game(figure_market(1.0), figure_cost(), vec![Payoff::zero()]).unwrap()
    }

    #[test]
    fn zero_sum_examples() {
        let m = figure_market(1.0);
        let h = figure_call(&m);
        let res = zero_sum_check(&zero_sum_game(&base(), &h).unwrap(), &grid(&m)).unwrap();
        assert!(res.passed(), "{:?}", res.assertions);
        let zero = zero_sum_game(&base(), &Payoff::zero()).unwrap();
        let res = zero_sum_check(&zero, &grid(&m)).unwrap();
        assert_eq!(res.points[0].scalars["max_abs_aggregate_speed"], 0.0);
        assert_eq!(res.points[0].scalars["max_abs_value_sum"], 0.0);
        let three = rn_game(
            m,
            figure_cost(),
            vec![
                h.clone(),
                h.clone(),
                Payoff::negated(Payoff::sum(vec![h.clone(), h.clone()])),
            ],
        )
        .unwrap();
        assert!(zero_sum_check(&three, &grid(&m)).unwrap().passed());
        let both_long = rn_game(m, figure_cost(), vec![h.clone(), h]).unwrap();
        assert!(!zero_sum_check(&both_long, &grid(&m)).unwrap().passed());
    }

    #[test]
    fn predator_examples() {
        let m = figure_market(1.0);
        let res = predator_sweep(&base(), &figure_call(&m), &FIGURE_NS, &grid(&m)).unwrap();
        assert!(res.passed(), "{:?}", res.assertions);
        let a = &res.points[0].curves["aggregate_speed"];
        let c = &res.points[2].curves["aggregate_speed"];
        let i = 100;
        assert!(c[i].abs() <= 2.0 / 101.0 * a[i].abs() * 1.1);
        let res = predator_sweep(&base(), &Payoff::zero(), &FIGURE_NS, &grid(&m)).unwrap();
        assert!(res
            .points
            .iter()
            .all(|p| p.scalars["max_abs_aggregate_speed"] == 0.0));
        assert!(res.passed());
    }

    #[test]
    fn split_examples() {
        let m = figure_market(1.0);
        for h in [figure_call(&m), figure_digital(&m), Payoff::zero()] {
            let res = split_sweep(&base(), &h, &FIGURE_NS, &grid(&m)).unwrap();
            assert!(res.passed(), "{:?}", res.assertions);
            assert_eq!(res.points.len(), 3);
        }
    }

    #[test]
    fn split_matches_fd_for_small_n() {
        let m = figure_market(1.0);
        let g = GridSpec::centered(&m, 201, 800);
        let h = figure_call(&m);
        let res = split_sweep(&base(), &h, &[1, 2], &g).unwrap();
        for (pt, n) in res.points.iter().zip([1usize, 2]) {
            let piece = Payoff::scaled(h.clone(), 1.0 / n as f64).unwrap();
            let game = rn_game(m, figure_cost(), vec![piece; n]).unwrap();
            let sol = solve_fd(&game, &g, &FdSettings::default()).unwrap();
            let closed = &pt.curves["aggregate_speed"];
            let worst = (1..200)
                .map(|i| (closed[i] - sol.aggregate_speed[0][i]).abs())
                .fold(0.0f64, f64::max);
            assert!(worst <= 1e-2, "N={n}: {worst}");
        }
    }

    #[test]
    fn scaling_needs_linear_cost() {
        let m = figure_market(1.0);
        let spread = GameSpec::new(
            m,
            CostFunction::smoothed_spread(0.01, 0.001, 100.0).unwrap(),
            base().players,
        )
        .unwrap();
        assert!(matches!(
            split_sweep(&spread, &figure_call(&m), &[1], &grid(&m)),
            Err(ExperimentError::Precondition(_))
        ));
    }

    #[test]
    fn spread_zero_matches_closed_form() {
        let m = figure_market(1.0);
        let g = GridSpec::centered(&m, 201, 400);
        let game = rn_game(m, figure_cost(), vec![figure_call(&m)]).unwrap();
        let res = spread_sweep(&game, &[0.0, 0.004], SPREAD_SHARPNESS, &g).unwrap();
        assert!(res.passed(), "{:?}", res.assertions);
        let closed = solve_closed(&game, &g).unwrap();
        let fd = &res.points[0].curves["speed"];
        let worst = (1..200)
            .map(|i| (fd[i] - closed.speeds[0][0][i]).abs())
            .fold(0.0f64, f64::max);
        assert!(worst <= 1e-2, "{worst}");
    }

    #[test]
    fn cara_zero_payoff_has_no_trading() {
        let m = figure_market(2.0);
        let res = cara_two_player_study(
            m,
            &figure_cost(),
            &Payoff::zero(),
            &[(0.01, 0.01)],
            &GridSpec::centered(&m, 101, 100),
        )
        .unwrap();
        assert!(res.passed());
        assert!(res.points[0].curves["speed_1"].iter().all(|&x| x == 0.0));
    }

    #[test]
    fn csv_and_summary() {
        let m = figure_market(1.0);
        let res = predator_sweep(
            &base(),
            &figure_call(&m),
            &[1, 10],
            &GridSpec::centered(&m, 21, 10),
        )
        .unwrap();
        let mut buf = Vec::new();
        res.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("param,value,metric,p,y\n"));
        assert_eq!(text.lines().count(), 1 + 2 * (1 + 21));
        let json = serde_json::to_value(res.summary()).unwrap();
        assert_eq!(json["values"], serde_json::json!(["1", "10"]));
        assert_eq!(json["passed"], serde_json::json!(true));
        let again = predator_sweep(
            &base(),
            &figure_call(&m),
            &[1, 10],
            &GridSpec::centered(&m, 21, 10),
        )
        .unwrap();
        assert_eq!(res, again);
    }

    #[test]
    fn unknown_figure() {
        assert!(matches!(
            figure_grids("fig9"),
            Err(ExperimentError::UnknownFigure(_))
        ));
    }

    #[test]
    fn split_figure_has_both_payoffs() {
        let t = figure_grids("6").unwrap();
        assert_eq!(t.rows.len(), 2 * 3 * 401);
        assert_eq!(t.columns, cols(&["N", "p", "aggregate_speed"]));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(5))]
        #[test]
        fn zero_sum_random_payoffs(
            k in 97.0..103.0f64,
            cap in 1.0..10.0f64,
            scale in 0.1..2.0f64,
            digital in any::<bool>(),
        ) {
            let m = figure_market(1.0);
            let raw = if digital {
                Payoff::smoothed_digital(k, 0.05).unwrap()
            } else {
                Payoff::smoothed_call(k, cap, 0.05).unwrap()
            };
            let h = Payoff::scaled(raw, scale).unwrap();
            let res = zero_sum_check(&zero_sum_game(&base(), &h).unwrap(), &GridSpec::centered(&m, 101, 100)).unwrap();
            prop_assert!(res.passed(), "{:?}", res.assertions);
        }
    }
}
