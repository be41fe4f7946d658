//! Solution CSV: header `t,p,v_1..v_N,grad_1..grad_N,speed_1..speed_N,agg_speed`,
//! one row per `(t, p)` in row-major order, 17 significant digits.

use std::io::{Read, Write};

use super::{Solution, SolutionMeta, SolveError};
use crate::model::GridSpec;

pub const SOLUTION_HEADER_PREFIX: [&str; 2] = ["t", "p"];

fn fmt(x: f64) -> String {
    format!("{x:.16e}")
}

fn csv_err(e: impl std::fmt::Display) -> SolveError {
    SolveError::Format(e.to_string())
}

pub fn write_solution(sol: &Solution, out: impl Write) -> Result<(), SolveError> {
    let n = sol.n_players();
    let mut w = csv::Writer::from_writer(out);
    let mut header: Vec<String> = SOLUTION_HEADER_PREFIX
        .iter()
        .map(|s| s.to_string())
        .collect();
    for name in ["v", "grad", "speed"] {
        header.extend((1..=n).map(|j| format!("{name}_{j}")));
    }
    header.push("agg_speed".into());
    w.write_record(&header).map_err(csv_err)?;
    let mut record = Vec::with_capacity(header.len());
    for (k, &t) in sol.times.iter().enumerate() {
        for (i, &p) in sol.prices.iter().enumerate() {
            record.clear();
            record.push(fmt(t));
            record.push(fmt(p));
            for field in [&sol.values, &sol.gradients, &sol.speeds] {
                record.extend(field.iter().map(|f| fmt(f[k][i])));
            }
            record.push(fmt(sol.aggregate_speed[k][i]));
            w.write_record(&record).map_err(csv_err)?;
        }
    }
    w.flush().map_err(csv_err)?;
    Ok(())
}

pub fn read_solution(input: impl Read) -> Result<Solution, SolveError> {
    let mut r = csv::Reader::from_reader(input);
    let header = r.headers().map_err(csv_err)?.clone();
    let cols = header.len();
    if cols < 6 || (cols - 3) % 3 != 0 || header.get(0) != Some("t") || header.get(1) != Some("p") {
        return Err(SolveError::Format("unexpected solution header".into()));
    }
    let n = (cols - 3) / 3;
    for (j, name) in ["v", "grad", "speed"].iter().enumerate() {
        for jj in 0..n {
            if header.get(2 + j * n + jj) != Some(format!("{name}_{}", jj + 1).as_str()) {
                return Err(SolveError::Format(format!(
                    "unexpected column {}",
                    2 + j * n + jj
                )));
            }
        }
    }
    let mut times: Vec<f64> = Vec::new();
    let mut prices: Vec<f64> = Vec::new();
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(csv_err)?;
        let row: Vec<f64> = rec
            .iter()
            .map(|s| s.trim().parse::<f64>().map_err(csv_err))
            .collect::<Result<_, _>>()?;
        if times.last() != Some(&row[0]) {
            times.push(row[0]);
        }
        if times.len() == 1 {
            prices.push(row[1]);
        }
        rows.push(row);
    }
    let (n_t, n_p) = (times.len(), prices.len());
    if n_t < 2 || n_p < 3 || rows.len() != n_t * n_p {
        return Err(SolveError::Format(
            "solution rows do not form a grid".into(),
        ));
    }
    let mut values = vec![vec![vec![0.0; n_p]; n_t]; n];
    let mut gradients = values.clone();
    let mut speeds = values.clone();
    let mut aggregate = vec![vec![0.0; n_p]; n_t];
    for (idx, row) in rows.iter().enumerate() {
        let (k, i) = (idx / n_p, idx % n_p);
        if row[0] != times[k] || row[1] != prices[i] {
            return Err(SolveError::Format(format!(
                "row {} is out of grid order",
                idx + 2
            )));
        }
        for j in 0..n {
            values[j][k][i] = row[2 + j];
            gradients[j][k][i] = row[2 + n + j];
            speeds[j][k][i] = row[2 + 2 * n + j];
        }
        aggregate[k][i] = row[2 + 3 * n];
    }
    let grid = GridSpec {
        p_min: prices[0],
        p_max: prices[n_p - 1],
        n_p,
        n_t,
        quad_nodes: 64,
    };
    Ok(Solution {
        grid,
        times,
        prices,
        values,
        gradients,
        speeds,
        aggregate_speed: aggregate,
        meta: SolutionMeta {
            scheme: "csv".into(),
            root_tol: 0.0,
            certificate: None,
            speed_bound: f64::NAN,
            residual: None,
            picard_history: Vec::new(),
        },
    })
}
