//! Result files and the sweep driver.
//!
//! A run directory holds `rounds.csv`, `clients.jsonl`, `timeline.csv`,
//! `summary.json` and, when enabled, `trajectories.csv`.

use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::config::ExperimentConfig;
use super::run::{run, ClientRow, RoundRow, RunRecord, ROUND_HEADERS, TRAJECTORY_HEADERS};
use crate::error::{Error, Result};
use crate::market::{social_welfare, ClientRecord, WelfareReport};

pub const TIMELINE_HEADERS: [&str; 8] = ["cr", "client", "ir", "process", "start_cell", "end_cell", "b_cells", "f_cells"];

pub const SWEEP_HEADERS: [&str; 9] = [
    "value",
    "rounds",
    "total_welfare",
    "total_gain",
    "mean_active",
    "mean_max_workload",
    "shortfall_rounds",
    "dropped",
    "violations",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub config_hash: String,
    pub seed: u64,
    pub policy: String,
    pub rounds: usize,
    pub crs_used: u32,
    pub total_welfare: f64,
    pub total_gain: f64,
    pub shortfall_rounds: usize,
    pub dropped: usize,
    pub violations: Vec<String>,
}

impl Summary {
    pub fn of(rec: &RunRecord) -> Self {
        Summary {
            config_hash: rec.config_hash.clone(),
            seed: rec.seed,
            policy: rec.policy.clone(),
            rounds: rec.rounds.len(),
            crs_used: rec.crs_used,
            total_welfare: rec.total_welfare(),
            total_gain: rec.total_gain(),
            shortfall_rounds: rec.rounds.iter().filter(|r| r.shortfall).count(),
            dropped: rec.rounds.iter().map(|r| r.dropped).sum(),
            violations: rec.violations.clone(),
        }
    }
}

fn csv_err(e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::from(io),
        other => Error::InvalidArgument(format!("csv: {other:?}")),
    }
}

fn write_csv<T: Serialize>(path: &Path, headers: &[&str], rows: impl IntoIterator<Item = T>) -> Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_path(path).map_err(csv_err)?;
    w.write_record(headers).map_err(csv_err)?;
    for r in rows {
        w.serialize(r).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Serialize)]
struct TimelineRow<'a> {
    cr: u32,
    client: u32,
    ir: u32,
    process: &'a str,
    start_cell: u32,
    end_cell: u32,
    b_cells: u32,
    f_cells: u32,
}

/// Writes every output file of `rec` into `dir`, creating it if needed.
pub fn write_outputs(rec: &RunRecord, dir: &Path, trajectories: bool) -> Result<()> {
    fs::create_dir_all(dir)?;
    write_csv(&dir.join("rounds.csv"), &ROUND_HEADERS, &rec.rounds)?;
    let timeline = rec.plans.iter().flat_map(|p| &p.timeline).map(|e| TimelineRow {
        cr: e.cr,
        client: e.client,
        ir: e.ir,
        process: e.process.name(),
        start_cell: e.start_cell,
        end_cell: e.end_cell,
        b_cells: e.b_cells,
        f_cells: e.f_cells,
    });
    write_csv(&dir.join("timeline.csv"), &TIMELINE_HEADERS, timeline)?;
    if trajectories {
        write_csv(&dir.join("trajectories.csv"), &TRAJECTORY_HEADERS, &rec.trajectories)?;
    }
    let mut jl = BufWriter::new(File::create(dir.join("clients.jsonl"))?);
    for c in &rec.clients {
        serde_json::to_writer(&mut jl, c).map_err(|e| Error::InvalidArgument(e.to_string()))?;
        jl.write_all(b"\n")?;
    }
    jl.flush()?;
    let summary = serde_json::to_string_pretty(&Summary::of(rec)).expect("summary serializes");
    fs::write(dir.join("summary.json"), summary + "\n")?;
    Ok(())
}

/// Rows read back from a run directory.
#[derive(Debug, Clone, PartialEq)]
pub struct LoadedRun {
    pub rounds: Vec<RoundRow>,
    pub clients: Vec<ClientRow>,
}

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-9 * (1.0 + a.abs().max(b.abs()))
}

/// Reads `rounds.csv` and `clients.jsonl` and re-checks the bookkeeping
/// identity of every round against its client rows.
pub fn load_outputs(dir: &Path) -> Result<LoadedRun> {
    let mut rd = csv::Reader::from_path(dir.join("rounds.csv")).map_err(csv_err)?;
    let headers = rd.headers().map_err(csv_err)?.clone();
    if headers.iter().ne(ROUND_HEADERS.iter().copied()) {
        return Err(Error::InvalidArgument("rounds.csv header mismatch".into()));
    }
    let rounds: Vec<RoundRow> = rd.deserialize().collect::<std::result::Result<_, _>>().map_err(csv_err)?;
    let mut clients = Vec::new();
    for (k, line) in BufReader::new(File::open(dir.join("clients.jsonl"))?).lines().enumerate() {
        let line = line?;
        let row: ClientRow = serde_json::from_str(&line)
            .map_err(|e| Error::InvalidArgument(format!("clients.jsonl line {}: {e}", k + 1)))?;
        clients.push(row);
    }
    for r in &rounds {
        let records: Vec<ClientRecord> = clients
            .iter()
            .filter(|c| c.ir == r.ir)
            .map(|c| ClientRecord {
                id: c.id,
                workload: c.workload,
                qod: c.qod,
                gain: c.gain,
                payment: c.payment,
                cost: c.cost,
                profit: c.profit,
            })
            .collect();
        let report = WelfareReport {
            phi: r.phi,
            p_r: r.p_r,
            sum_p_n: r.sum_p_n,
            sum_c_n: r.sum_c_n,
            r_m: r.r_m,
            sum_r_n: r.sum_r_n,
            r: r.r,
            active_count: r.active_count,
            alpha: r.alpha,
            beta: r.beta,
            clients: records,
        };
        report
            .check_identity(1e-9)
            .map_err(|e| Error::InvalidArgument(format!("round {}: {e}", r.ir)))?;
        let phi: f64 = report.clients.iter().map(|c| c.gain).sum();
        let cost: f64 = report.clients.iter().map(|c| c.cost).sum();
        if !close(phi, r.phi) || !close(cost, r.sum_c_n) {
            return Err(Error::InvalidArgument(format!("round {}: totals disagree with client rows", r.ir)));
        }
        if !close(r.r, social_welfare(r.r_m, r.sum_r_n, r.alpha, r.beta)) {
            return Err(Error::InvalidArgument(format!("round {}: welfare mismatch", r.ir)));
        }
    }
    Ok(LoadedRun { rounds, clients })
}

/// One run per value of the dotted config path `axis`, all with the same
/// seed.
pub fn sweep(cfg: &ExperimentConfig, axis: &str, values: &[toml::Value]) -> Result<Vec<(toml::Value, RunRecord)>> {
    values
        .iter()
        .map(|v| {
            let c = cfg.with_override(axis, v.clone())?;
            Ok((v.clone(), run(&c)?))
        })
        .collect()
}

#[derive(Serialize)]
struct SweepRow {
    value: String,
    rounds: usize,
    total_welfare: f64,
    total_gain: f64,
    mean_active: f64,
    mean_max_workload: f64,
    shortfall_rounds: usize,
    dropped: usize,
    violations: usize,
}

fn value_label(v: &toml::Value) -> String {
    match v {
        toml::Value::String(s) => s.clone(),
        other => other.to_string(),
    }
}

pub fn write_sweep_summary(path: &Path, runs: &[(toml::Value, RunRecord)]) -> Result<()> {
    let rows = runs.iter().map(|(v, rec)| {
        let n = rec.rounds.len().max(1) as f64;
        SweepRow {
            value: value_label(v),
            rounds: rec.rounds.len(),
            total_welfare: rec.total_welfare(),
            total_gain: rec.total_gain(),
            mean_active: rec.rounds.iter().map(|r| r.active_count as f64).sum::<f64>() / n,
            mean_max_workload: rec.rounds.iter().map(|r| r.max_workload_sum as f64).sum::<f64>() / n,
            shortfall_rounds: rec.rounds.iter().filter(|r| r.shortfall).count(),
            dropped: rec.rounds.iter().map(|r| r.dropped).sum(),
            violations: rec.violations.len(),
        }
    });
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)?;
    }
    write_csv(path, &SWEEP_HEADERS, rows)
}
