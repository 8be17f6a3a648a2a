use std::fs;
use std::path::Path;

use mfp_core::sim::{self, load_outputs, write_outputs, ExperimentConfig, ROUND_HEADERS};
use mfp_core::{rounds_to_complete, PipelineMode, PolicyId};
use sha2::{Digest, Sha256};

fn small(seed: u64, rounds: u32) -> ExperimentConfig {
    let mut c = ExperimentConfig::default();
    c.seed = seed;
    c.rounds = rounds;
    c.scenario.clients = 6;
    c.scenario.targets = 40;
    c.market.max_active = 4;
    c.workload_cap = 3000;
    c
}

fn digest_dir(dir: &Path) -> Vec<(String, String)> {
    let mut names: Vec<_> = fs::read_dir(dir).unwrap().map(|e| e.unwrap().path()).collect();
    names.sort();
    names
        .iter()
        .map(|p| {
            let h = Sha256::digest(fs::read(p).unwrap());
            (p.file_name().unwrap().to_string_lossy().into_owned(), format!("{h:x}"))
        })
        .collect()
}

#[test]
fn zero_rounds_writes_header_only() {
    let rec = sim::run(&small(1, 0)).unwrap();
    assert!(rec.rounds.is_empty() && rec.plans.is_empty());
    let dir = tempfile::tempdir().unwrap();
    write_outputs(&rec, dir.path(), false).unwrap();
    let text = fs::read_to_string(dir.path().join("rounds.csv")).unwrap();
    assert_eq!(text, ROUND_HEADERS.join(",") + "\n");
    assert_eq!(fs::read_to_string(dir.path().join("clients.jsonl")).unwrap(), "");
    assert!(load_outputs(dir.path()).unwrap().rounds.is_empty());
}

#[test]
fn same_seed_same_bytes() {
    let mut cfg = small(7, 3);
    cfg.output.trajectories = true;
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    write_outputs(&sim::run(&cfg).unwrap(), a.path(), true).unwrap();
    write_outputs(&sim::run(&cfg).unwrap(), b.path(), true).unwrap();
    assert_eq!(digest_dir(a.path()), digest_dir(b.path()));

    cfg.seed = 8;
    let c = tempfile::tempdir().unwrap();
    write_outputs(&sim::run(&cfg).unwrap(), c.path(), true).unwrap();
    assert_ne!(digest_dir(a.path()), digest_dir(c.path()));
}

#[test]
fn outputs_reload_and_recheck() {
    let rec = sim::run(&small(3, 3)).unwrap();
    assert!(rec.total_gain() > 0.0);
    let dir = tempfile::tempdir().unwrap();
    write_outputs(&rec, dir.path(), false).unwrap();
    let loaded = load_outputs(dir.path()).unwrap();
    assert_eq!(loaded.rounds, rec.rounds);
    assert_eq!(loaded.clients.len(), rec.clients.len());
}

#[test]
fn tampered_rows_are_rejected() {
    let rec = sim::run(&small(3, 2)).unwrap();
    let dir = tempfile::tempdir().unwrap();
    write_outputs(&rec, dir.path(), false).unwrap();
    let path = dir.path().join("clients.jsonl");
    let text = fs::read_to_string(&path).unwrap();
    let mut lines: Vec<serde_json::Value> = text.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    let row = lines.iter_mut().find(|v| v["workload"].as_u64().unwrap() > 0).unwrap();
    row["profit"] = serde_json::json!(row["profit"].as_f64().unwrap() + 1.0);
    let out: String = lines.iter().map(|v| v.to_string() + "\n").collect();
    fs::write(&path, out).unwrap();
    assert!(load_outputs(dir.path()).is_err());
}

#[test]
fn pipeline_cr_counts() {
    for r in [1, 3] {
        for mode in [PipelineMode::Zeros, PipelineMode::Serial] {
            let mut cfg = small(2, r);
            cfg.pipeline = mode;
            let rec = sim::run(&cfg).unwrap();
            assert_eq!(rec.crs_used, rounds_to_complete(r, mode).unwrap());
            assert_eq!(rec.plans.len() as u32, rec.crs_used);
            assert_eq!(rec.rounds.len() as u32, r);
            assert!(rec.violations.is_empty(), "{:?}", rec.violations);
        }
    }
}

#[test]
fn timeline_keeps_serial_order() {
    let rec = sim::run(&small(5, 3)).unwrap();
    for plan in &rec.plans {
        for e in &plan.timeline {
            assert!(e.end_cell as usize <= plan.dims.0);
            if e.process != mfp_core::zeros::Process::Sensing {
                assert_eq!(e.ir + 1, plan.cr, "consumption belongs to the previous IR");
            } else {
                assert_eq!(e.ir, plan.cr);
            }
        }
    }
}

#[test]
fn quarter_resources_never_gain_more() {
    for seed in 1..=20 {
        let full = small(seed, 2);
        let mut cut = full.clone();
        cut.resources.scale = [0.25; 3];
        let a = sim::run(&full).unwrap();
        let b = sim::run(&cut).unwrap();
        for (x, y) in a.rounds.iter().zip(&b.rounds) {
            assert!(y.phi <= x.phi + 1e-9, "seed {seed} ir {}: {} > {}", x.ir, y.phi, x.phi);
        }
    }
}

#[test]
fn every_policy_runs_clean() {
    for p in PolicyId::ALL {
        let mut cfg = small(4, 2);
        cfg.policy = p;
        let rec = sim::run(&cfg).unwrap();
        assert!(rec.violations.is_empty(), "{p}: {:?}", rec.violations);
        for r in &rec.rounds {
            assert!(r.active_count <= cfg.market.max_active, "{p}");
        }
        let dir = tempfile::tempdir().unwrap();
        write_outputs(&rec, dir.path(), false).unwrap();
        load_outputs(dir.path()).unwrap();
    }
}

#[test]
fn unreachable_target_is_flagged_not_fatal() {
    let mut cfg = small(1, 2);
    cfg.market.theta0 = 1e9;
    let rec = sim::run(&cfg).unwrap();
    assert!(rec.rounds.iter().all(|r| r.shortfall));
    assert!(rec.total_gain() > 0.0);
}

#[test]
fn sweep_one_row_per_value() {
    let cfg = small(1, 1);
    let values: Vec<toml::Value> = (1..=3).map(toml::Value::Integer).collect();
    let runs = sim::sweep(&cfg, "scenario.clients", &values).unwrap();
    assert_eq!(runs.len(), 3);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("sweep.csv");
    sim::write_sweep_summary(&path, &runs).unwrap();
    let text = fs::read_to_string(&path).unwrap();
    assert_eq!(text.lines().count(), 4);
    assert!(text.starts_with(&sim::SWEEP_HEADERS.join(",")));
    let mw: Vec<f64> = runs.iter().map(|(_, r)| r.rounds[0].max_workload_sum as f64).collect();
    assert!(mw.windows(2).all(|w| w[0] <= w[1]), "{mw:?}");
    assert!(sim::sweep(&cfg, "scenario.nope", &values).is_err());
}

fn golden(name: &str, actual: &str) {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden").join(name);
    if std::env::var_os("UPDATE_GOLDEN").is_some() {
        fs::write(&path, actual).unwrap();
    }
    let expected = fs::read_to_string(&path).unwrap_or_else(|_| panic!("missing golden file {name}"));
    assert_eq!(actual, expected, "{name} changed; rerun with UPDATE_GOLDEN=1 if intended");
}

#[test]
fn output_schemas_are_frozen() {
    let mut cfg = small(11, 2);
    cfg.scenario.clients = 3;
    cfg.scenario.targets = 15;
    cfg.output.trajectories = true;
    let dir = tempfile::tempdir().unwrap();
    write_outputs(&sim::run(&cfg).unwrap(), dir.path(), true).unwrap();
    for name in ["rounds.csv", "timeline.csv", "trajectories.csv", "clients.jsonl"] {
        golden(name, &fs::read_to_string(dir.path().join(name)).unwrap());
    }
}
