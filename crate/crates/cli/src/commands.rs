use std::fs::File;
use std::io::{self, Write};
use std::path::Path;

use rayon::prelude::*;
use serde::Serialize;
use serde_json::json;

use relaylab::optimizer::optimize;
use relaylab::{analyze, route_for, sim, Error, Scenario};

use crate::config::{ScenarioFile, SweepSpec, Variable};
use crate::error::CliError;

/// Runs below this many slots give standard errors too wide to be useful.
pub const LOW_SLOT_WARNING: u64 = 100_000;

pub const CSV_HEADER: [&str; 8] = ["value", "T", "T_net", "P_rx_opt", "P_tx_opt", "P_empty", "Q_bar", "stable"];

pub fn load_scenario(config: Option<&Path>) -> Result<Scenario, CliError> {
    match config {
        Some(path) => ScenarioFile::load(path)?.to_scenario(),
        None => ScenarioFile::default().to_scenario(),
    }
}

fn emit<T: Serialize>(value: &T, out: Option<&Path>) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    match out {
        Some(path) => std::fs::write(path, text)?,
        None => io::stdout().lock().write_all(text.as_bytes())?,
    }
    Ok(())
}

pub struct AnalyzeOptions<'a> {
    pub allow_unstable: bool,
    pub dump_config: Option<&'a Path>,
    pub slots: u64,
    pub seed: u64,
}

pub fn analyze_cmd(scenario: &Scenario, out: Option<&Path>, opts: &AnalyzeOptions) -> Result<(), CliError> {
    if let Some(path) = opts.dump_config {
        emit(&ScenarioFile::from_scenario(scenario), Some(path))?;
        log::info!("scenario written to {}", path.display());
    }
    let route = match route_for(scenario) {
        Ok(route) => route,
        Err(Error::EnumerationTooLarge { users, limit }) => {
            log::warn!(
                "{users} non-identical users exceed the exact enumeration limit of {limit}; \
                 reporting simulation estimates instead"
            );
            let stats = sim::run(scenario, opts.slots, opts.seed, sim::DEFAULT_WARMUP)?;
            return emit(&json!({ "route": "simulation", "simulation": stats }), out);
        }
        Err(e) => return Err(e.into()),
    };
    log::info!("route: {route:?}");
    let a = analyze(scenario)?;
    let q = &a.queue;
    let n = scenario.user_count() as f64;
    log::info!(
        "lambda {:.6e}  mu {:.6e}  P(Q=0) {:.6}  Q_bar {:.6}  stable {}",
        q.lambda,
        q.mu,
        q.p_empty,
        q.mean_queue,
        q.stable
    );
    let (t, t_net) = match &a.throughput {
        Some(tp) => {
            log::info!("T {:.6e}  T_net {:.6e}", tp.network / n, tp.network);
            (Some(tp.network / n), Some(tp.network))
        }
        None => (None, None),
    };
    emit(
        &json!({
            "route": a.route,
            "users": scenario.user_count(),
            "lambda": q.lambda,
            "mu": q.mu,
            "p_empty": q.p_empty,
            "mean_queue": q.mean_queue,
            "T": t,
            "T_net": t_net,
            "stable": q.stable,
            "queue": q,
            "throughput": a.throughput,
        }),
        out,
    )?;
    if !q.stable && !opts.allow_unstable {
        return Err(Error::Unstable { drift: q.lambda1 - q.mu }.into());
    }
    Ok(())
}

pub fn optimize_cmd(scenario: &Scenario, out: Option<&Path>, grid: usize, refine: bool) -> Result<(), CliError> {
    let r = optimize(scenario, grid, refine)?;
    log::info!(
        "P_rx {:.6}  P_tx {:.6}  T_net {:.6e}  feasible {}",
        r.rx_on,
        r.tx_on,
        r.network_throughput,
        r.feasible
    );
    emit(&r, out)?;
    if !r.feasible {
        return Err(CliError::Infeasible(format!(
            "no stable activation pair on a {grid}x{grid} grid; smallest lambda - mu {:.3e}",
            r.min_gap.unwrap_or(f64::NAN)
        )));
    }
    Ok(())
}

pub fn simulate_cmd(scenario: &Scenario, out: Option<&Path>, slots: u64, seed: u64, warmup: u64) -> Result<(), CliError> {
    warn_low_slots(slots);
    let stats = sim::run(scenario, slots, seed, warmup)?;
    log::info!(
        "lambda {:.6e}  mu {:.6e}  P(Q=0) {:.6}  Q_bar {:.4}  T_net {:.6e}",
        stats.lambda.mean,
        stats.mu.mean,
        stats.p_empty.mean,
        stats.mean_queue.mean,
        stats.network.mean
    );
    emit(&stats, out)
}

pub fn validate_cmd(scenario: &Scenario, out: Option<&Path>, slots: u64, seed: u64) -> Result<(), CliError> {
    warn_low_slots(slots);
    let a = analyze(scenario)?;
    if !a.queue.stable {
        log::error!(
            "relay queue is unstable: lambda1 {:.6e} >= mu {:.6e}; nothing to validate",
            a.queue.lambda1,
            a.queue.mu
        );
        return Err(Error::Unstable {
            drift: a.queue.lambda1 - a.queue.mu,
        }
        .into());
    }
    let report = sim::validate(scenario, slots, seed)?;
    let mut table = String::from("metric        analytic        empirical       se          z\n");
    for r in &report.rows {
        table.push_str(&format!(
            "{:<12} {:>14.6e}  {:>14.6e}  {:>10.3e}  {:>6.2}{}\n",
            r.metric,
            r.analytic,
            r.empirical,
            r.se,
            r.z,
            if r.flagged { "  !" } else { "" }
        ));
    }
    eprint!("{table}");
    emit(&report, out)?;
    if !report.passed() {
        let bad: Vec<&str> = report.rows.iter().filter(|r| r.flagged).map(|r| r.metric.as_str()).collect();
        return Err(CliError::Validation(format!("|z| > {} for {}", sim::Z_LIMIT, bad.join(", "))));
    }
    Ok(())
}

fn warn_low_slots(slots: u64) {
    if slots < LOW_SLOT_WARNING {
        log::warn!("only {slots} slots: statistical power is low, standard errors will be wide");
    }
}

/// One CSV row; `None` fields are written blank.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub value: f64,
    pub per_user: Option<f64>,
    pub network: Option<f64>,
    pub rx_on: Option<f64>,
    pub tx_on: Option<f64>,
    pub p_empty: Option<f64>,
    pub mean_queue: Option<f64>,
    pub stable: bool,
}

fn sweep_point(spec: &SweepSpec, grid: usize, value: f64) -> Result<SweepRow, CliError> {
    let mut scenario = spec.point(value)?;
    let blank = SweepRow {
        value,
        per_user: None,
        network: None,
        rx_on: None,
        tx_on: None,
        p_empty: None,
        mean_queue: None,
        stable: false,
    };
    if spec.optimize {
        let r = optimize(&scenario, grid, spec.refine)?;
        if !r.feasible {
            return Ok(blank);
        }
        scenario = scenario.with_activation(r.rx_on, r.tx_on);
    }
    let a = analyze(&scenario)?;
    let Some(tp) = a.throughput.filter(|_| a.queue.stable) else {
        return Ok(blank);
    };
    Ok(SweepRow {
        value,
        per_user: Some(tp.network / scenario.user_count() as f64),
        network: Some(tp.network),
        rx_on: Some(scenario.access.rx_on),
        tx_on: Some(scenario.access.tx_on),
        p_empty: Some(a.queue.p_empty),
        mean_queue: Some(a.queue.mean_queue),
        stable: true,
    })
}

/// Evaluates every point in parallel; rows come back in value order.
pub fn sweep_rows(spec: &SweepSpec, grid: usize) -> Result<Vec<SweepRow>, CliError> {
    spec.values.par_iter().map(|&v| sweep_point(spec, grid, v)).collect()
}

pub fn write_csv<W: Write>(spec: &SweepSpec, rows: &[SweepRow], w: W) -> Result<(), CliError> {
    let mut csv = csv::Writer::from_writer(w);
    csv.write_record(CSV_HEADER)?;
    let cell = |x: Option<f64>| x.map(|v| v.to_string()).unwrap_or_default();
    for r in rows {
        let value = match spec.variable {
            Variable::Users => (r.value as usize).to_string(),
            _ => r.value.to_string(),
        };
        csv.write_record([
            value,
            cell(r.per_user),
            cell(r.network),
            cell(r.rx_on),
            cell(r.tx_on),
            cell(r.p_empty),
            cell(r.mean_queue),
            r.stable.to_string(),
        ])?;
    }
    csv.flush()?;
    Ok(())
}

pub fn sweep_cmd(spec: &SweepSpec, out: Option<&Path>, grid: Option<usize>) -> Result<(), CliError> {
    let grid = grid.or(spec.grid).unwrap_or(relaylab::optimizer::DEFAULT_GRID);
    let rows = sweep_rows(spec, grid)?;
    let unstable = rows.iter().filter(|r| !r.stable).count();
    if unstable > 0 {
        log::warn!("{unstable} of {} sweep points are unstable", rows.len());
    }
    match out.or(spec.out.as_deref()) {
        Some(path) => {
            write_csv(spec, &rows, File::create(path)?)?;
            log::info!("{} rows written to {}", rows.len(), path.display());
        }
        None => write_csv(spec, &rows, io::stdout().lock())?,
    }
    Ok(())
}
