//! Multi-round simulation loop.

use std::collections::{BTreeMap, BTreeSet};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{ExperimentConfig, SensingMode, TargetMode};
use crate::baselines::{allocate_with_policy, build_policy_quotes, schedule_with_policy, standalone_welfare, SelectionInfo};
use crate::cost::{Bilinear, ConsumptionTask, GenAlloc, ScheduleDecision};
use crate::error::{Error, Result};
use crate::market::{max_achievable_gain, Allocation, ClientQuote, MarketParams, WelfareReport};
use crate::scenario::{comm_links, normalize_counts, status_attributes, step_mobility, EntityKind, ScenarioState, StatusAttributes};
use crate::sensing::{mix_distributions, qod};
use crate::solver::{Budgets, SolveInput, SolveOutcome, SolutionPath};
use crate::zeros::{audit_plan, cycle_time, plan_round, rounds_to_complete, ClientWork, GenRequest, PipelineMode, RoundPlan};

/// Reference workload for latency-based client selection.
const SELECTION_REFERENCE: u64 = 1000;

/// One interaction round, market side.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundRow {
    pub ir: u32,
    pub policy: String,
    pub gain_target: f64,
    pub shortfall: bool,
    pub max_achievable: f64,
    pub max_workload_sum: u64,
    pub phi: f64,
    pub p_r: f64,
    pub sum_p_n: f64,
    pub sum_c_n: f64,
    pub r_m: f64,
    pub sum_r_n: f64,
    pub r: f64,
    pub alpha: f64,
    pub beta: f64,
    pub active_count: usize,
    pub dropped: usize,
    pub t_delta: u32,
    pub gen_budget: u32,
}

pub const ROUND_HEADERS: [&str; 19] = [
    "ir",
    "policy",
    "gain_target",
    "shortfall",
    "max_achievable",
    "max_workload_sum",
    "phi",
    "p_r",
    "sum_p_n",
    "sum_c_n",
    "r_m",
    "sum_r_n",
    "r",
    "alpha",
    "beta",
    "active_count",
    "dropped",
    "t_delta",
    "gen_budget",
];

/// One client in one interaction round.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClientRow {
    pub ir: u32,
    pub id: u32,
    pub a: f64,
    pub b: f64,
    pub qod: f64,
    pub mutv: i64,
    pub mtv: i64,
    /// Workload the market assigned, before any drop.
    pub allocated: u64,
    pub workload: u64,
    pub gain: f64,
    pub payment: f64,
    pub cost: f64,
    pub profit: f64,
    pub path: Option<SolutionPath>,
    pub cell_cost: f64,
    pub schedule: Option<ScheduleDecision>,
    pub dropped: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryRow {
    pub round: u32,
    pub id: u32,
    pub kind: EntityKind,
    pub x: f64,
    pub y: f64,
    pub class: Option<u8>,
}

pub const TRAJECTORY_HEADERS: [&str; 6] = ["round", "id", "kind", "x", "y", "class"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub config_hash: String,
    pub seed: u64,
    pub policy: String,
    pub pipeline: PipelineMode,
    pub crs_used: u32,
    pub rounds: Vec<RoundRow>,
    pub clients: Vec<ClientRow>,
    pub plans: Vec<RoundPlan>,
    pub violations: Vec<String>,
    pub trajectories: Vec<TrajectoryRow>,
}

impl RunRecord {
    pub fn total_welfare(&self) -> f64 {
        self.rounds.iter().map(|r| r.r).sum()
    }

    pub fn total_gain(&self) -> f64 {
        self.rounds.iter().map(|r| r.phi).sum()
    }
}

/// Market outcome of an IR waiting for its consumption round.
struct Pending {
    ir: u32,
    quotes: Vec<ClientQuote>,
    alloc: Allocation,
    params: MarketParams,
    gain_target: f64,
    shortfall: bool,
    max_achievable: f64,
    t_delta: u32,
    gen_budget: u32,
    rows: Vec<ClientRow>,
    /// Whole-cell consumption per client, aligned with `rows`.
    consumption: Vec<Option<[Bilinear; 3]>>,
    gens: Vec<Option<GenAlloc>>,
    inputs: Vec<Option<SolveInput>>,
}

struct ClientState {
    id: u32,
    attrs: StatusAttributes,
    qod: f64,
    input: Option<SolveInput>,
}

/// Label distribution over every target inside some client's wireless disc.
fn global_distribution(state: &ScenarioState, cfg: &ExperimentConfig) -> Vec<f64> {
    let g = &cfg.scenario.geometry;
    let mut seen = BTreeSet::new();
    let classes = cfg.scenario.classes;
    let mut counts = vec![0usize; classes];
    for c in state.clients() {
        for t in state.targets() {
            if c.distance_to(t.position) <= g.d_ws && seen.insert(t.id) {
                if let Some(l) = t.class_label {
                    counts[(l as usize).min(classes - 1)] += 1;
                }
            }
        }
    }
    normalize_counts(&counts)
}

fn local_distribution(attrs: &StatusAttributes, mode: SensingMode, tt: f64, bt: f64) -> Vec<f64> {
    let v = normalize_counts(&attrs.visual_counts);
    let w = normalize_counts(&attrs.wireless_counts);
    match mode {
        SensingMode::VisualOnly => v,
        SensingMode::WirelessOnly => w,
        SensingMode::Multimodal => {
            let mut parts: Vec<(&[f64], f64)> = Vec::new();
            if !v.is_empty() && attrs.a > 0.0 {
                parts.push((&v, attrs.a * tt));
            }
            if !w.is_empty() && attrs.b > 0.0 {
                parts.push((&w, attrs.b * tt * bt));
            }
            if parts.is_empty() {
                Vec::new()
            } else {
                mix_distributions(&parts)
            }
        }
    }
}

/// `busy_band[id]` is the band a client's unfinished model transfers hold
/// in this round; its sensing is quoted on what is left.
fn client_states(
    state: &ScenarioState,
    cfg: &ExperimentConfig,
    budgets: Budgets,
    busy_band: &BTreeMap<u32, usize>,
) -> Result<Vec<ClientState>> {
    let quanta = cfg.resources.quanta;
    let (tt, bt, _) = cfg.resources.dims();
    let global = global_distribution(state, cfg);
    let clients: Vec<_> = state.clients().cloned().collect();
    clients
        .par_iter()
        .map(|c| {
            let mut attrs = status_attributes(c, state, &cfg.scenario, &quanta)?;
            match cfg.sensing_mode {
                SensingMode::VisualOnly => attrs.b = 0.0,
                SensingMode::WirelessOnly => attrs.a = 0.0,
                SensingMode::Multimodal => {}
            }
            let local = local_distribution(&attrs, cfg.sensing_mode, tt as f64, bt as f64);
            let q = if global.is_empty() { 0.0 } else { qod(&local, &global)? };
            let (down, up) = comm_links(c, cfg.scenario.server_position, &cfg.scenario.channel, &quanta)?;
            let input = (down.usable && up.usable).then(|| SolveInput {
                n: 0,
                a: attrs.a,
                b: attrs.b,
                task: ConsumptionTask {
                    d_down: cfg.task.model_down_bits,
                    d_up: cfg.task.model_up_bits,
                    kappa: cfg.task.kappa,
                    c_down: down.spectral_efficiency(),
                    c_up: up.spectral_efficiency(),
                },
                prices: cfg.prices,
                budgets: Budgets {
                    gen_freq: budgets.freq - busy_band.get(&c.id).copied().unwrap_or(0) as f64,
                    ..budgets
                },
                quanta,
            });
            Ok(ClientState {
                id: c.id,
                attrs,
                qod: q,
                input,
            })
        })
        .collect()
}

fn silent_quote(id: u32, qod: f64, lambda_sp: f64) -> ClientQuote {
    ClientQuote {
        id,
        qod,
        gain_rate: lambda_sp * qod,
        mutv: -1,
        mtv: -1,
        cost_curve: Vec::new(),
    }
}

fn trajectory_rows(state: &ScenarioState) -> impl Iterator<Item = TrajectoryRow> + '_ {
    state.entities.iter().map(move |e| TrajectoryRow {
        round: state.round,
        id: e.id,
        kind: e.kind,
        x: e.position[0],
        y: e.position[1],
        class: e.class_label,
    })
}

/// Market and scheduling for one IR: quotes, allocation and per-client
/// whole-cell schedules.
fn open_round(
    ir: u32,
    cfg: &ExperimentConfig,
    state: &ScenarioState,
    t_delta: u32,
    cumulative_phi: f64,
    busy_band: &BTreeMap<u32, usize>,
) -> Result<Pending> {
    let (tt, bt, ft) = cfg.resources.dims();
    let gen_budget = t_delta.min(tt as u32);
    let mut budgets = Budgets::new(tt as f64, bt as f64, ft as f64);
    budgets.gen_time = gen_budget as f64;

    let states = client_states(state, cfg, budgets, busy_band)?;
    let items: Vec<(u32, f64, SolveInput)> = states
        .iter()
        .filter_map(|s| s.input.map(|inp| (s.id, s.qod, inp)))
        .collect();
    let built = build_policy_quotes(cfg.policy, &items, cfg.lambda_sp, cfg.workload_cap)?;
    let mut built = built.into_iter();
    let quotes: Vec<ClientQuote> = states
        .iter()
        .map(|s| match s.input {
            Some(_) => built.next().expect("one quote per usable client"),
            None => silent_quote(s.id, s.qod, cfg.lambda_sp),
        })
        .collect();

    let mut params = cfg.market.params();
    let max_achievable = max_achievable_gain(&quotes, params.max_active);
    if cfg.market.relative_target {
        params.theta0 *= max_achievable;
        params.interval *= max_achievable;
    }
    if cfg.market.target_mode == TargetMode::Cumulative {
        let ceiling = params.theta0 * ir as f64 + params.interval - cumulative_phi;
        params.theta0 = (params.theta0 * ir as f64 - cumulative_phi).max(0.0);
        params.interval = (ceiling - params.theta0).max(f64::MIN_POSITIVE);
    }
    let gain_target = params.theta0;

    let infos: Vec<SelectionInfo> = states
        .iter()
        .zip(&quotes)
        .map(|(s, q)| {
            let sensed = s.attrs.visual_counts.iter().chain(&s.attrs.wireless_counts).sum();
            let welfare = standalone_welfare(q, &cfg.prices, params.alpha, params.beta);
            match &s.input {
                Some(inp) => SelectionInfo::from_input(s.id, inp, SELECTION_REFERENCE, sensed, welfare),
                None => SelectionInfo {
                    id: s.id,
                    comm_latency: f64::INFINITY,
                    comp_latency: f64::INFINITY,
                    sense_latency: f64::INFINITY,
                    sensed_targets: sensed,
                    sensing_capacity: 0.0,
                    standalone_welfare: welfare,
                },
            }
        })
        .collect();

    let (alloc, shortfall) = match allocate_with_policy(cfg.policy, &quotes, &infos, &cfg.prices, &params) {
        Ok((a, _)) => (a, false),
        Err(Error::GainShortfall { .. }) => {
            // Best effort under the same ceiling.
            let relaxed = MarketParams {
                theta0: 0.0,
                interval: params.theta0 + params.interval,
                ..params
            };
            let (a, _) = allocate_with_policy(cfg.policy, &quotes, &infos, &cfg.prices, &relaxed)?;
            (a, true)
        }
        Err(e) => return Err(e),
    };

    let outcomes: Vec<Option<SolveOutcome>> = states
        .par_iter()
        .zip(&alloc.workloads)
        .map(|(s, &n)| {
            s.input.filter(|_| n > 0).map(|inp| {
                let input = SolveInput { n, ..inp };
                schedule_with_policy(cfg.policy, &input)
            })
        })
        .collect();

    let mut rows = Vec::with_capacity(states.len());
    let mut consumption = Vec::with_capacity(states.len());
    let mut gens = Vec::with_capacity(states.len());
    for ((s, q), (&n, out)) in states.iter().zip(&quotes).zip(alloc.workloads.iter().zip(&outcomes)) {
        let cells = out.as_ref().and_then(|o| o.cells);
        let dropped = match (n, out, cells) {
            (0, _, _) => None,
            (_, Some(o), None) => Some(o.reason.clone().unwrap_or_else(|| "no whole-cell schedule".into())),
            _ => None,
        };
        rows.push(ClientRow {
            ir,
            id: s.id,
            a: s.attrs.a,
            b: s.attrs.b,
            qod: s.qod,
            mutv: q.mutv,
            mtv: q.mtv,
            allocated: n,
            workload: if dropped.is_some() { 0 } else { n },
            gain: 0.0,
            payment: 0.0,
            cost: 0.0,
            profit: 0.0,
            path: out.as_ref().and_then(|o| o.path),
            cell_cost: out.as_ref().map_or(0.0, |o| o.cell_cost),
            schedule: cells,
            dropped,
        });
        gens.push(cells.filter(|_| n > 0).map(|c| c.gen));
        consumption.push(cells.filter(|_| n > 0).map(|c| [c.comm_down, c.comp, c.comm_up]));
    }
    Ok(Pending {
        ir,
        quotes,
        alloc,
        params,
        gain_target,
        shortfall,
        max_achievable,
        t_delta,
        gen_budget,
        rows,
        consumption,
        gens,
        inputs: states.iter().map(|s| s.input).collect(),
    })
}

fn gen_work(p: &Pending, cfg: &ExperimentConfig) -> Vec<ClientWork> {
    p.rows
        .iter()
        .zip(&p.gens)
        .map(|(row, g)| ClientWork {
            client: row.id,
            gen: g.filter(|_| row.workload > 0).map(|alloc| GenRequest {
                alloc,
                n: row.workload,
                a: row.a,
                b: row.b,
                prices: cfg.prices,
            }),
            consumption: None,
        })
        .collect()
}

/// Applies the plan's drops and revisions to an IR's sensing.
fn absorb_gen_plan(p: &mut Pending, plan: &RoundPlan, cfg: &ExperimentConfig) {
    for (k, cp) in plan.clients.iter().enumerate() {
        let row = &mut p.rows[k];
        if row.workload == 0 {
            continue;
        }
        match (&cp.dropped, cp.gen) {
            (Some(reason), _) if cp.gen.is_none() => {
                row.dropped = Some(reason.clone());
                row.workload = 0;
                p.consumption[k] = None;
                p.gens[k] = None;
            }
            (_, Some(g)) => {
                p.gens[k] = Some(g);
                if let Some(n) = cp.trimmed_to {
                    row.workload = n;
                    // Resize training to the smaller batch.
                    let resized = p.inputs[k]
                        .and_then(|inp| schedule_with_policy(cfg.policy, &SolveInput { n, ..inp }).cells);
                    if let Some(c) = resized {
                        p.consumption[k] = Some([c.comm_down, c.comp, c.comm_up]);
                        if let Some(s) = row.schedule.as_mut() {
                            s.comm_down = c.comm_down;
                            s.comp = c.comp;
                            s.comm_up = c.comm_up;
                        }
                    }
                }
                if let Some(s) = row.schedule.as_mut() {
                    s.gen = g;
                }
            }
            _ => {}
        }
    }
}

fn absorb_consumption_plan(p: &mut Pending, plan: &RoundPlan) {
    for (k, cp) in plan.clients.iter().enumerate() {
        let row = &mut p.rows[k];
        if row.workload > 0 && cp.consumption.is_none() {
            row.dropped = Some(cp.dropped.clone().unwrap_or_else(|| "consumption not placed".into()));
            row.workload = 0;
        }
    }
}

fn consumption_work(p: &Pending) -> Vec<ClientWork> {
    p.rows
        .iter()
        .zip(&p.consumption)
        .map(|(row, c)| ClientWork {
            client: row.id,
            gen: None,
            consumption: c.filter(|_| row.workload > 0),
        })
        .collect()
}

fn merge_work(gen: Option<Vec<ClientWork>>, cons: Option<Vec<ClientWork>>) -> Vec<ClientWork> {
    match (gen, cons) {
        (Some(mut g), Some(c)) => {
            for (gw, cw) in g.iter_mut().zip(c) {
                debug_assert_eq!(gw.client, cw.client);
                gw.consumption = cw.consumption;
            }
            g
        }
        (Some(g), None) => g,
        (None, Some(c)) => c,
        (None, None) => Vec::new(),
    }
}

fn close_round(p: Pending, cfg: &ExperimentConfig) -> (RoundRow, Vec<ClientRow>) {
    let workloads: Vec<u64> = p.rows.iter().map(|r| r.workload).collect();
    let alloc = Allocation {
        ids: p.alloc.ids.clone(),
        workloads,
    };
    let report = WelfareReport::from_allocation(&p.quotes, &alloc, &cfg.prices, p.params.alpha, p.params.beta);
    let mut rows = p.rows;
    for (row, rec) in rows.iter_mut().zip(&report.clients) {
        row.gain = rec.gain;
        row.payment = rec.payment;
        row.cost = rec.cost;
        row.profit = rec.profit;
    }
    let dropped = rows.iter().filter(|r| r.dropped.is_some()).count();
    let round = RoundRow {
        ir: p.ir,
        policy: cfg.policy.name().to_string(),
        gain_target: p.gain_target,
        shortfall: p.shortfall,
        max_achievable: p.max_achievable,
        max_workload_sum: p.quotes.iter().map(|q| q.max_workload()).sum(),
        phi: report.phi,
        p_r: report.p_r,
        sum_p_n: report.sum_p_n,
        sum_c_n: report.sum_c_n,
        r_m: report.r_m,
        sum_r_n: report.sum_r_n,
        r: report.r,
        alpha: report.alpha,
        beta: report.beta,
        active_count: report.active_count,
        dropped,
        t_delta: p.t_delta,
        gen_budget: p.gen_budget,
    };
    (round, rows)
}

/// Widest model transfer each client still has to make.
fn busy_band(p: &Pending) -> BTreeMap<u32, usize> {
    p.rows
        .iter()
        .zip(&p.consumption)
        .filter(|(r, _)| r.workload > 0)
        .filter_map(|(r, c)| {
            let c = (*c)?;
            Some((r.id, c[0].w.round().max(c[2].w.round()) as usize))
        })
        .collect()
}

fn allocated_gain(p: &Pending) -> f64 {
    p.rows.iter().zip(&p.quotes).map(|(r, q)| q.gain_rate * r.workload as f64).sum()
}

fn next_cycle(p: &Pending, full: u32) -> u32 {
    let prev: Vec<(GenAlloc, [Bilinear; 3])> = p
        .rows
        .iter()
        .zip(p.gens.iter().zip(&p.consumption))
        .filter(|(r, _)| r.workload > 0)
        .filter_map(|(_, (g, c))| Some(((*g)?, (*c)?)))
        .collect();
    cycle_time(&prev, full)
}

/// Runs `cfg.rounds` interaction rounds.
pub fn run(cfg: &ExperimentConfig) -> Result<RunRecord> {
    cfg.validate()?;
    let dims = cfg.resources.dims();
    let full = dims.0 as u32;
    let dt = dims.0 as f64 * cfg.resources.quanta.time;
    let mut record = RunRecord {
        config_hash: cfg.hash(),
        seed: cfg.seed,
        policy: cfg.policy.name().to_string(),
        pipeline: cfg.pipeline,
        crs_used: 0,
        rounds: Vec::new(),
        clients: Vec::new(),
        plans: Vec::new(),
        violations: Vec::new(),
        trajectories: Vec::new(),
    };
    if cfg.rounds == 0 {
        return Ok(record);
    }
    let total_crs = rounds_to_complete(cfg.rounds, cfg.pipeline)?;

    let mut state = ScenarioState::generate(&cfg.scenario, cfg.seed)?;
    let mut t_delta = full;
    let mut cumulative_phi = 0.0;
    let mut pending: Option<Pending> = None;

    for cr in 1..=total_crs {
        let opens = match cfg.pipeline {
            PipelineMode::Zeros => (cr <= cfg.rounds).then_some(cr),
            PipelineMode::Serial => (cr % 2 == 1).then_some(cr.div_ceil(2)),
        };
        let mut opened = match opens {
            Some(ir) => {
                if ir > 1 {
                    state = step_mobility(&state, cfg.scenario.max_speed, cfg.seed, dt)?;
                }
                if cfg.output.trajectories {
                    record.trajectories.extend(trajectory_rows(&state));
                }
                if cfg.pipeline == PipelineMode::Serial {
                    t_delta = full;
                }
                let busy = pending.as_ref().map(busy_band).unwrap_or_default();
                Some(open_round(ir, cfg, &state, t_delta, cumulative_phi, &busy)?)
            }
            None => None,
        };
        let closing = pending.take();
        let work = merge_work(
            opened.as_ref().map(|p| gen_work(p, cfg)),
            closing.as_ref().map(consumption_work),
        );
        let (mut plan, _) = plan_round(cr, t_delta, dims, &work)?;
        record.violations.extend(audit_plan(&plan).into_iter().map(|v| format!("cr {cr}: {v}")));
        if let Some(p) = opened.as_mut() {
            absorb_gen_plan(p, &plan, cfg);
            cumulative_phi += allocated_gain(p);
            t_delta = next_cycle(p, full);
        }
        if let Some(mut p) = closing {
            absorb_consumption_plan(&mut p, &plan);
            let (row, clients) = close_round(p, cfg);
            record.rounds.push(row);
            record.clients.extend(clients);
        }
        plan.clients.retain(|c| c.gen.is_some() || c.consumption.is_some() || c.dropped.is_some());
        record.plans.push(plan);
        pending = opened;
        record.crs_used = cr;
    }
    debug_assert!(pending.is_none());
    Ok(record)
}
