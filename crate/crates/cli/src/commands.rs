use std::fs;
use std::path::Path;

use illiq::closedform::ClosedFormError;
use illiq::experiments::{
    cara_two_player_study, figure_call, figure_cost, figure_grids, figure_market, predator_sweep,
    split_sweep, spread_sweep, zero_sum_check, zero_sum_game, ExperimentError, SweepResult,
    FIGURE_ALPHAS, FIGURE_NS, FIGURE_SPREADS, SPREAD_SHARPNESS,
};
use illiq::model::{
    load_config, Config, GameSpec, GridSpec, MarketParams, PlayerSpec, UtilitySpec,
};
use illiq::pdesolve::{
    read_solution, residual, solve_closed, solve_fd, solve_picard, surplus, write_solution,
    FdSettings, PicardSettings, Solution, SolveError,
};
use illiq::simulate::{
    mc_consistency, realized_objectives, simulate_paths, write_paths_csv, SimulateError,
    SimulateSettings,
};
use illiq::speeds::{apriori_speed_bound, certify_for_game};
use serde_json::json;

use crate::manifest::{read_manifest, OutputSet};
use crate::{CliError, Method};

/// Full trajectories kept for the paths CSV; every path enters the summary.
const RECORDED_PATHS: usize = 1000;
const SIMULATION_STEPS: usize = 500;

fn load(path: &Path) -> Result<Config, CliError> {
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::Input(format!("cannot read {}: {e}", path.display())))?;
    load_config(&text).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))
}

fn with_grid(
    grid: GridSpec,
    market: &MarketParams,
    over: Option<(usize, usize)>,
) -> Result<GridSpec, CliError> {
    let grid = match over {
        Some((n_p, n_t)) => GridSpec { n_p, n_t, ..grid },
        None => grid,
    };
    grid.validate(market)
        .map_err(|e| CliError::Input(e.to_string()))?;
    Ok(grid)
}

fn solve_error(e: SolveError) -> CliError {
    match e {
        SolveError::ClosedForm(ClosedFormError::Precondition(m)) => CliError::Mismatch(m),
        SolveError::Model(m) => CliError::Input(m.to_string()),
        other => CliError::Solver(other.to_string()),
    }
}

fn experiment_error(e: ExperimentError) -> CliError {
    match e {
        ExperimentError::Solve(e) => solve_error(e),
        ExperimentError::ClosedForm(ClosedFormError::Precondition(m))
        | ExperimentError::Precondition(m) => CliError::Mismatch(m),
        ExperimentError::ClosedForm(e) => CliError::Solver(e.to_string()),
        other => CliError::Input(other.to_string()),
    }
}

fn pretty(value: &impl serde::Serialize) -> Vec<u8> {
    let mut v = serde_json::to_vec_pretty(value).expect("report serializes");
    v.push(b'\n');
    v
}

pub fn check(config: &Path, out: Option<&Path>) -> Result<(), CliError> {
    let cfg = load(config)?;
    let game = &cfg.game;
    let cert = certify_for_game(game);
    let report = match &cert {
        Ok(c) => json!({
            "config_hash": game.hash(),
            "grid_hash": cfg.grid.hash(),
            "n_players": game.n_players(),
            "certified": true,
            "eps_floor": c.eps_floor,
            "certificate": c,
            "speed_bound": apriori_speed_bound(game, c),
        }),
        Err(e) => json!({
            "config_hash": game.hash(),
            "grid_hash": cfg.grid.hash(),
            "n_players": game.n_players(),
            "certified": false,
            "reason": e.to_string(),
        }),
    };
    println!(
        "{}",
        serde_json::to_string_pretty(&report).expect("report serializes")
    );
    if let Some(dir) = out {
        let mut set = OutputSet::create(dir)?;
        set.write("check.json", &pretty(&report))?;
        set.finish("check", Some(game.hash()), Some(cfg.grid.hash()), None)?;
    }
    cert.map(|_| ())
        .map_err(|e| CliError::Certification(e.to_string()))
}

fn sup_interior_diff(a: &Solution, b: &Solution) -> f64 {
    let mut worst = 0.0f64;
    for (pa, pb) in a.values.iter().zip(&b.values) {
        for (ra, rb) in pa.iter().zip(pb) {
            for i in 1..ra.len() - 1 {
                worst = worst.max((ra[i] - rb[i]).abs());
            }
        }
    }
    worst
}

pub fn solve(
    config: &Path,
    method: Method,
    grid: Option<(usize, usize)>,
    out: &Path,
) -> Result<(), CliError> {
    let cfg = load(config)?;
    let game = &cfg.game;
    let grid = with_grid(cfg.grid, &game.market, grid)?;
    let sol = match method {
        Method::Fd => solve_fd(game, &grid, &FdSettings::default()),
        Method::Picard => solve_picard(game, &grid, &PicardSettings::default()),
        Method::Closed => solve_closed(game, &grid),
    }
    .map_err(solve_error)?;
    let res = residual(&sol, game).map_err(solve_error)?;
    let max_speed = sol.max_abs_speed();
    let bound = sol.meta.speed_bound;
    let within = max_speed <= bound + 1e-6;
    println!("scheme: {}", sol.meta.scheme);
    println!("max interior residual: {:.3e}", res.overall);
    println!(
        "speed bound check: max |speed| {max_speed:.6e} <= {bound:.6e}: {}",
        if within { "ok" } else { "VIOLATED" }
    );
    let closed_diff = if method == Method::Closed {
        None
    } else {
        match solve_closed(game, &sol.grid) {
            Ok(closed) => {
                let d = sup_interior_diff(&sol, &closed);
                println!(
                    "closed-form sup diff (interior): {d:.3e} ({} 1e-2)",
                    if d <= 1e-2 { "within" } else { "above" }
                );
                Some(d)
            }
            Err(_) => None,
        }
    };

    let mut set = OutputSet::create(out)?;
    let mut buf = Vec::new();
    write_solution(&sol, &mut buf).map_err(solve_error)?;
    set.write("solution.csv", &buf)?;
    set.write("surplus.csv", &surplus_csv(&sol, game, grid.quad_nodes)?)?;
    let report = json!({
        "meta": sol.meta,
        "grid": sol.grid,
        "max_residual": res.overall,
        "residual_per_player": res.per_player,
        "max_abs_speed": max_speed,
        "speed_bound_ok": within,
        "closed_form_sup_diff": closed_diff,
    });
    set.write("solve.json", &pretty(&report))?;
    set.finish("solve", Some(game.hash()), Some(sol.grid.hash()), None)?;
    Ok(())
}

fn surplus_csv(sol: &Solution, game: &GameSpec, quad_nodes: usize) -> Result<Vec<u8>, CliError> {
    let s = surplus(sol, game, quad_nodes);
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["t".to_string(), "p".to_string()];
    header.extend((1..=s.len()).map(|j| format!("surplus_{j}")));
    let io = |e: csv::Error| CliError::Input(format!("csv: {e}"));
    w.write_record(&header).map_err(io)?;
    for (k, &t) in sol.times.iter().enumerate() {
        for (i, &p) in sol.prices.iter().enumerate() {
            let mut row = vec![format!("{t:.16e}"), format!("{p:.16e}")];
            row.extend(s.iter().map(|sj| format!("{:.16e}", sj[k][i])));
            w.write_record(&row).map_err(io)?;
        }
    }
    w.into_inner()
        .map_err(|e| CliError::Input(format!("csv: {e}")))
}

fn simulate_error(e: SimulateError) -> CliError {
    match e {
        SimulateError::Mismatch(m) => CliError::Solution(m),
        SimulateError::TooFewSteps(_) | SimulateError::NoPaths | SimulateError::Io(_) => {
            CliError::Input(e.to_string())
        }
        other => CliError::Solver(other.to_string()),
    }
}

pub fn simulate(
    config: &Path,
    solution: &Path,
    paths: usize,
    seed: u64,
    out: &Path,
) -> Result<(), CliError> {
    let cfg = load(config)?;
    let game = &cfg.game;
    let dir = solution
        .parent()
        .filter(|d| !d.as_os_str().is_empty())
        .unwrap_or(Path::new("."));
    let manifest = read_manifest(dir)?;
    let expected = game.hash();
    if manifest.config_hash.as_deref() != Some(expected.as_str()) {
        return Err(CliError::Solution(format!(
            "solution was produced for config {}, this config is {expected}",
            manifest.config_hash.as_deref().unwrap_or("<none>")
        )));
    }
    let file = fs::File::open(solution)
        .map_err(|e| CliError::Input(format!("cannot read {}: {e}", solution.display())))?;
    let sol = read_solution(std::io::BufReader::new(file))
        .map_err(|e| CliError::Solution(e.to_string()))?;
    let settings = SimulateSettings {
        n_paths: paths,
        seed,
        n_steps: SIMULATION_STEPS,
        record_paths: paths.min(RECORDED_PATHS),
        antithetic: false,
    };
    let bundle = simulate_paths(&sol, game, &settings).map_err(simulate_error)?;
    let estimates = realized_objectives(&bundle, game);
    let z = mc_consistency(&bundle, &sol, game);
    let players: Vec<_> = estimates
        .iter()
        .zip(&z)
        .enumerate()
        .map(|(j, (e, z))| {
            println!(
                "player {}: mean {:.6e} se {:.3e} z {z:.3}",
                j + 1,
                e.mean,
                e.std_error
            );
            json!({"player": j + 1, "mean": e.mean, "std_error": e.std_error, "z": z})
        })
        .collect();
    let summary = json!({
        "n_paths": bundle.n_paths,
        "n_steps": SIMULATION_STEPS,
        "seed": seed,
        "recorded_paths": settings.record_paths,
        "clamped_steps": bundle.clamped_steps,
        "players": players,
    });
    let mut set = OutputSet::create(out)?;
    let mut buf = Vec::new();
    write_paths_csv(&bundle, &mut buf).map_err(simulate_error)?;
    set.write("paths.csv", &buf)?;
    set.write("summary.json", &pretty(&summary))?;
    set.finish("simulate", Some(expected), manifest.grid_hash, Some(seed))?;
    Ok(())
}

/// Market, cost and players from the config, or the single long-call
/// figure game.
fn base_game(cfg: Option<&Config>) -> GameSpec {
    match cfg {
        Some(c) => c.game.clone(),
        None => {
            let m = figure_market(1.0);
            GameSpec::new(
                m,
                figure_cost(),
                vec![PlayerSpec::risk_neutral(figure_call(&m))],
            )
            .expect("valid figure game")
        }
    }
}

fn base_grid(
    cfg: Option<&Config>,
    game: &GameSpec,
    over: Option<(usize, usize)>,
) -> Result<GridSpec, CliError> {
    let grid = cfg.map_or_else(|| GridSpec::default_for(&game.market), |c| c.grid);
    with_grid(grid, &game.market, over)
}

pub fn sweep(
    study: &str,
    config: Option<&Path>,
    ns: Option<Vec<usize>>,
    spreads: Option<Vec<f64>>,
    grid: Option<(usize, usize)>,
    out: &Path,
) -> Result<(), CliError> {
    let cfg = config.map(load).transpose()?;
    let config_hash = cfg.as_ref().map(|c| c.game.hash());
    if study == "figure" || study.starts_with("fig") {
        let ids: Vec<String> = if study == "figure" {
            (1..=6).map(|k| format!("fig{k}")).collect()
        } else {
            vec![study.to_string()]
        };
        let mut set = OutputSet::create(out)?;
        for id in ids {
            let table = figure_grids(&id).map_err(experiment_error)?;
            let mut buf = Vec::new();
            table.write_csv(&mut buf).map_err(experiment_error)?;
            set.write(&format!("{}.csv", table.id), &buf)?;
            println!("{}: {} rows", table.id, table.rows.len());
        }
        set.finish("sweep", config_hash, None, None)?;
        return Ok(());
    }
    let base = base_game(cfg.as_ref());
    let ns = ns.unwrap_or_else(|| FIGURE_NS.to_vec());
    let result: SweepResult = match study {
        "zero_sum" => {
            let game = match &cfg {
                Some(c) => c.game.clone(),
                None => zero_sum_game(&base, &base.players[0].endowment)
                    .map_err(|e| CliError::Input(e.to_string()))?,
            };
            let grid = base_grid(cfg.as_ref(), &game, grid)?;
            zero_sum_check(&game, &grid)
        }
        "predator" => {
            let grid = base_grid(cfg.as_ref(), &base, grid)?;
            predator_sweep(&base, &base.players[0].endowment, &ns, &grid)
        }
        "split" => {
            let grid = base_grid(cfg.as_ref(), &base, grid)?;
            split_sweep(&base, &base.players[0].endowment, &ns, &grid)
        }
        "spread" => {
            let grid = base_grid(cfg.as_ref(), &base, grid)?;
            let s = spreads.unwrap_or_else(|| FIGURE_SPREADS.to_vec());
            spread_sweep(&base, &s, SPREAD_SHARPNESS, &grid)
        }
        "cara2" => {
            let (market, cost, h, alphas) = match &cfg {
                Some(c) => {
                    let p = &c.game.players;
                    let alphas = match p.as_slice() {
                        [a, b] => match (a.utility, b.utility) {
                            (UtilitySpec::Cara { alpha: a1 }, UtilitySpec::Cara { alpha: a2 }) => {
                                vec![(a1, a2)]
                            }
                            _ => {
                                return Err(CliError::Mismatch(
                                    "cara2 needs two CARA players".into(),
                                ))
                            }
                        },
                        _ => return Err(CliError::Mismatch("cara2 needs two CARA players".into())),
                    };
                    (
                        c.game.market,
                        c.game.cost.clone(),
                        p[0].endowment.clone(),
                        alphas,
                    )
                }
                None => {
                    let m = figure_market(2.0);
                    (m, figure_cost(), figure_call(&m), FIGURE_ALPHAS.to_vec())
                }
            };
            let start = cfg
                .as_ref()
                .map_or_else(|| GridSpec::default_for(&market), |c| c.grid);
            let grid = with_grid(start, &market, grid)?;
            cara_two_player_study(market, &cost, &h, &alphas, &grid)
        }
        other => return Err(CliError::Input(format!(
            "unknown study `{other}`; expected zero_sum, predator, split, spread, cara2 or figure"
        ))),
    }
    .map_err(experiment_error)?;

    let mut set = OutputSet::create(out)?;
    let mut buf = Vec::new();
    result.write_csv(&mut buf).map_err(experiment_error)?;
    set.write(&format!("{study}.csv"), &buf)?;
    set.write(
        &format!("{study}_assertions.json"),
        &pretty(&result.summary()),
    )?;
    set.finish("sweep", config_hash, Some(result.grid_hash.clone()), None)?;
    for a in &result.assertions {
        println!(
            "[{}] {} {}",
            if a.passed { "PASS" } else { "FAIL" },
            a.name,
            a.detail
        );
    }
    let failed: Vec<&str> = result.failures().iter().map(|a| a.name.as_str()).collect();
    if failed.is_empty() {
        Ok(())
    } else {
        Err(CliError::Assertion(failed.join(", ")))
    }
}
