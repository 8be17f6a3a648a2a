//! Comparison policies for scheduling and client selection.
//!
//! Scheduling baselines reuse the exact solver with distorted prices: a
//! process whose width is priced at almost nothing receives its whole box,
//! and a resource priced at almost nothing is spent freely. The resulting
//! schedules are always feasible; they are simply costed at the real prices.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cost::{Bilinear, GenAlloc, PriceVector, ScheduleDecision};
use crate::error::{Error, Result};
use crate::market::{allocate_workloads, Allocation, ClientQuote, MarketParams, WelfareReport};
use crate::solver::{
    constrained_schedule, mtv, mutv, quantize_consumption, quantize_generation, solve_consumption, solve_generation,
    OutcomeKind, SolutionPath, SolveInput, SolveOutcome,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum PolicyId {
    Siscc,
    Wiscc,
    SensOpt,
    CommOpt,
    CompOpt,
    MlC,
    MlCc,
    MlScc,
    MpTsc,
    McT,
    McFc,
    Mlpg,
}

impl PolicyId {
    pub const ALL: [PolicyId; 12] = [
        PolicyId::Siscc,
        PolicyId::Wiscc,
        PolicyId::SensOpt,
        PolicyId::CommOpt,
        PolicyId::CompOpt,
        PolicyId::MlC,
        PolicyId::MlCc,
        PolicyId::MlScc,
        PolicyId::MpTsc,
        PolicyId::McT,
        PolicyId::McFc,
        PolicyId::Mlpg,
    ];

    pub fn name(self) -> &'static str {
        match self {
            PolicyId::Siscc => "SISCC",
            PolicyId::Wiscc => "WISCC",
            PolicyId::SensOpt => "SENS_OPT",
            PolicyId::CommOpt => "COMM_OPT",
            PolicyId::CompOpt => "COMP_OPT",
            PolicyId::MlC => "ML_C",
            PolicyId::MlCc => "ML_CC",
            PolicyId::MlScc => "ML_SCC",
            PolicyId::MpTsc => "MP_TSC",
            PolicyId::McT => "MC_T",
            PolicyId::McFc => "MC_FC",
            PolicyId::Mlpg => "MLPG",
        }
    }

    /// Policies that pick a client subset before allocating.
    pub fn selects_first(self) -> bool {
        matches!(self, PolicyId::MlC | PolicyId::MlCc | PolicyId::MlScc | PolicyId::MpTsc)
    }
}

impl fmt::Display for PolicyId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for PolicyId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let norm = s.trim().to_ascii_uppercase().replace('-', "_");
        PolicyId::ALL
            .into_iter()
            .find(|p| p.name() == norm)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown policy `{s}`")))
    }
}

/// Price multipliers applied before solving.
#[derive(Debug, Clone, Copy)]
struct Bias {
    dt: f64,
    gen_db: f64,
    comm_db: f64,
    df: f64,
}

const CHEAP: f64 = 1e-6;

impl Bias {
    fn of(policy: PolicyId) -> Option<Bias> {
        let one = Bias {
            dt: 1.0,
            gen_db: 1.0,
            comm_db: 1.0,
            df: 1.0,
        };
        match policy {
            PolicyId::SensOpt => Some(Bias { gen_db: CHEAP, ..one }),
            PolicyId::CommOpt => Some(Bias { comm_db: CHEAP, ..one }),
            PolicyId::CompOpt => Some(Bias { df: CHEAP, ..one }),
            PolicyId::McT => Some(Bias {
                gen_db: CHEAP,
                comm_db: CHEAP,
                df: CHEAP,
                ..one
            }),
            PolicyId::McFc => Some(Bias { dt: CHEAP, ..one }),
            _ => None,
        }
    }
}

fn biased_solve(input: &SolveInput, bias: Bias, n: f64) -> Option<ScheduleDecision> {
    let p = &input.prices;
    let b = &input.budgets;
    let gen_prices = PriceVector {
        dt: p.dt * bias.dt,
        db: p.db * bias.gen_db,
        ..*p
    };
    let (gen, _, _) = solve_generation(n, input.a, input.b, &gen_prices, b.gen_time, b.sensing_freq(), None)?;
    let work = input.task.cell_work(n, &input.quanta).ok()?;
    let wp = [p.db * bias.comm_db, p.df * bias.df, p.db * bias.comm_db];
    let (c, _, _) = solve_consumption(work, p.dt * bias.dt, wp, b.cons_time, [b.freq, b.compute, b.freq], None)?;
    Some(assemble(gen, c))
}

fn biased_cells(input: &SolveInput, bias: Bias, n: f64) -> Option<ScheduleDecision> {
    let p = &input.prices;
    let b = &input.budgets;
    let gen_prices = PriceVector {
        dt: p.dt * bias.dt,
        db: p.db * bias.gen_db,
        ..*p
    };
    let fl = |x: f64| (x + 1e-9 * (1.0 + x)).floor().max(0.0) as u64;
    let gen = quantize_generation(n, input.a, input.b, &gen_prices, fl(b.gen_time), fl(b.sensing_freq()))?;
    let work = input.task.cell_work(n, &input.quanta).ok()?;
    let wp = [p.db * bias.comm_db, p.df * bias.df, p.db * bias.comm_db];
    let c = quantize_consumption(work, p.dt * bias.dt, wp, fl(b.cons_time), [fl(b.freq), fl(b.compute), fl(b.freq)])?;
    Some(assemble(gen, c))
}

fn assemble(gen: GenAlloc, c: [Bilinear; 3]) -> ScheduleDecision {
    ScheduleDecision {
        gen,
        comm_down: c[0],
        comp: c[1],
        comm_up: c[2],
    }
}

/// Cost-blind saturating schedule: full sensing window, every width at its
/// box.
fn greedy_schedule(input: &SolveInput, n: f64, whole: bool) -> Option<ScheduleDecision> {
    let b = &input.budgets;
    let round = |x: f64| if whole { (x + 1e-9 * (1.0 + x)).floor() } else { x };
    let up = |x: f64| if whole { (x - 1e-9 * (1.0 + x)).ceil().max(1.0) } else { x };
    let (t_gen, bw, fw, tc) = (round(b.gen_time), round(b.freq), round(b.compute), round(b.cons_time));
    let gw = round(b.sensing_freq());
    if n <= 0.0 {
        return Some(ScheduleDecision::default());
    }
    if t_gen <= 0.0 {
        return None;
    }
    let mut y = if input.b > 0.0 && gw > 0.0 {
        ((n - input.a * t_gen) / (input.b * t_gen)).max(0.0)
    } else {
        0.0
    };
    if whole {
        y = (y - 1e-9 * (1.0 + y)).ceil().max(0.0);
    }
    if y > gw || input.a * t_gen + input.b * t_gen * y < n - 1e-9 * (1.0 + n) {
        return None;
    }
    let gen = GenAlloc {
        x: t_gen,
        y,
        z: if y > 0.0 { t_gen } else { 0.0 },
    };
    let work = input.task.cell_work(n, &input.quanta).ok()?;
    let mut c = [Bilinear::default(); 3];
    for (k, box_w) in [bw, fw, bw].into_iter().enumerate() {
        if work[k] > 0.0 {
            if box_w <= 0.0 {
                return None;
            }
            let t = up(work[k] / box_w);
            let w = if whole { up(work[k] / t) } else { work[k] / t };
            c[k] = Bilinear { t, w };
        }
    }
    if c.iter().map(|x| x.t).sum::<f64>() > tc + 1e-9 * (1.0 + tc) {
        return None;
    }
    Some(assemble(gen, c))
}

/// Continuous schedule a policy uses for `n` samples.
pub fn policy_schedule(policy: PolicyId, input: &SolveInput, n: f64) -> Option<ScheduleDecision> {
    if let Some(bias) = Bias::of(policy) {
        return biased_solve(input, bias, n);
    }
    if policy == PolicyId::Mlpg {
        return greedy_schedule(input, n, false);
    }
    let mut inp = *input;
    inp.n = n.round() as u64;
    constrained_schedule(&inp).schedule
}

/// Cost at the real prices of the schedule a policy uses for `n` samples.
pub fn policy_cost(policy: PolicyId, input: &SolveInput, n: u64) -> Option<f64> {
    if n == 0 {
        return Some(0.0);
    }
    if Bias::of(policy).is_none() && policy != PolicyId::Mlpg {
        return crate::solver::continuous_cost(input, n as f64);
    }
    policy_schedule(policy, input, n as f64).map(|s| s.cost(&input.prices))
}

/// Solve outcome under a policy; the objective differs, feasibility does not.
pub fn schedule_with_policy(policy: PolicyId, input: &SolveInput) -> SolveOutcome {
    let base = constrained_schedule(input);
    if base.kind != OutcomeKind::Optimal || input.n == 0 || (Bias::of(policy).is_none() && policy != PolicyId::Mlpg) {
        return base;
    }
    let n = input.n as f64;
    let (schedule, cells) = match Bias::of(policy) {
        Some(bias) => (biased_solve(input, bias, n), biased_cells(input, bias, n)),
        None => (greedy_schedule(input, n, false), greedy_schedule(input, n, true)),
    };
    let mut out = base;
    out.path = Some(SolutionPath::ActiveSet);
    out.trace.clear();
    out.active_constraints.clear();
    match schedule {
        Some(s) => {
            out.cost = s.cost(&input.prices);
            out.schedule = Some(s);
            out.cell_cost = cells.map(|c| c.cost(&input.prices)).unwrap_or(0.0);
            if out.cells.is_some() {
                out.cells = cells;
            }
        }
        None => {
            out.kind = OutcomeKind::Infeasible;
            out.schedule = None;
            out.cells = None;
            out.reason = Some(format!("{policy} schedule does not fit"));
        }
    }
    out
}

/// Quote whose cost curve is the policy's own schedule cost.
pub fn build_policy_quote(
    policy: PolicyId,
    id: u32,
    qod: f64,
    lambda_sp: f64,
    input: &SolveInput,
    cap: u64,
) -> Result<ClientQuote> {
    if Bias::of(policy).is_none() && policy != PolicyId::Mlpg {
        return ClientQuote::build(id, qod, lambda_sp, input, cap);
    }
    let top = mtv(input)?;
    let top = if top < 0 { -1 } else { (top as u64).min(cap) as i64 };
    let mut cost_curve = Vec::new();
    for n in 0..=top {
        match policy_cost(policy, input, n as u64) {
            Some(c) => cost_curve.push(c),
            None => break,
        }
    }
    Ok(ClientQuote {
        id,
        qod,
        gain_rate: lambda_sp * qod,
        mutv: mutv(input)?,
        mtv: cost_curve.len() as i64 - 1,
        cost_curve,
    })
}

/// Quotes for many clients in parallel, order preserved.
pub fn build_policy_quotes(
    policy: PolicyId,
    items: &[(u32, f64, SolveInput)],
    lambda_sp: f64,
    cap: u64,
) -> Result<Vec<ClientQuote>> {
    items
        .par_iter()
        .map(|(id, q, inp)| build_policy_quote(policy, *id, *q, lambda_sp, inp, cap))
        .collect()
}

/// Per-client figures the selection rules rank by.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionInfo {
    pub id: u32,
    /// Download plus upload time at full bandwidth.
    pub comm_latency: f64,
    /// Training time at full compute for the client's reference workload.
    pub comp_latency: f64,
    /// Sensing time at full bandwidth for the reference workload.
    pub sense_latency: f64,
    pub sensed_targets: usize,
    /// Peak per-cell yield `a + b·B̃`.
    pub sensing_capacity: f64,
    /// Best standalone welfare the client can contribute.
    pub standalone_welfare: f64,
}

impl SelectionInfo {
    /// Latencies for the workload `reference` samples.
    pub fn from_input(id: u32, input: &SolveInput, reference: u64, sensed_targets: usize, standalone_welfare: f64) -> Self {
        let b = &input.budgets;
        let work = input.task.cell_work(reference as f64, &input.quanta).unwrap_or([f64::INFINITY; 3]);
        let capacity = input.a + input.b * b.freq;
        SelectionInfo {
            id,
            comm_latency: (work[0] + work[2]) / b.freq,
            comp_latency: work[1] / b.compute,
            sense_latency: if capacity > 0.0 { reference as f64 / capacity } else { f64::INFINITY },
            sensed_targets,
            sensing_capacity: capacity,
            standalone_welfare,
        }
    }
}

/// Client subset of size `k` chosen by a selection rule. Policies without a
/// selection rule rank by standalone welfare, as the market would.
pub fn select_clients(policy: PolicyId, infos: &[SelectionInfo], k: usize) -> Vec<u32> {
    let mut ranked: Vec<(f64, u32)> = infos
        .iter()
        .map(|i| {
            // Smaller key ranks first.
            let key = match policy {
                PolicyId::MlC => i.comm_latency,
                PolicyId::MlCc => i.comm_latency + i.comp_latency,
                PolicyId::MlScc => i.sense_latency + i.comm_latency + i.comp_latency,
                PolicyId::MpTsc => -(i.sensed_targets as f64 * i.sensing_capacity),
                _ => -i.standalone_welfare,
            };
            (if key.is_nan() { f64::INFINITY } else { key }, i.id)
        })
        .collect();
    ranked.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    ranked.into_iter().take(k).map(|(_, id)| id).collect()
}

/// Best welfare a quote achieves alone, over its rational workloads.
pub fn standalone_welfare(q: &ClientQuote, prices: &PriceVector, alpha: f64, beta: f64) -> f64 {
    (1..=q.max_workload())
        .filter(|&n| prices.ds * n as f64 >= q.cost(n))
        .map(|n| {
            let nf = n as f64;
            alpha * (prices.dtheta * q.gain_rate - prices.ds) * nf + beta * (prices.ds * nf - q.cost(n))
        })
        .fold(0.0, f64::max)
}

/// Fills clients to their maximum volume in order of gain rate until the
/// gain window's ceiling, ignoring cost.
pub fn mlpg_allocate(quotes: &[ClientQuote], params: &MarketParams) -> Allocation {
    let ceiling = params.theta0 + params.interval;
    let mut order: Vec<usize> = (0..quotes.len()).collect();
    order.sort_by(|&i, &j| quotes[j].gain_rate.total_cmp(&quotes[i].gain_rate).then(quotes[i].id.cmp(&quotes[j].id)));
    let mut workloads = vec![0u64; quotes.len()];
    let mut phi = 0.0;
    let mut active = 0;
    for k in order {
        let q = &quotes[k];
        if active >= params.max_active || q.gain_rate <= 0.0 {
            continue;
        }
        let mut n = q.max_workload();
        if ceiling.is_finite() {
            let room = ((ceiling - phi) / q.gain_rate).ceil() - 1.0;
            n = n.min(room.max(0.0) as u64);
        }
        if n > 0 {
            workloads[k] = n;
            phi += q.gain_rate * n as f64;
            active += 1;
        }
    }
    Allocation {
        ids: quotes.iter().map(|q| q.id).collect(),
        workloads,
    }
}

/// Runs a policy's allocation step. `quotes` must be built with
/// [`build_policy_quotes`] for the same policy; the report always uses them,
/// so gains reflect true data quality even when the policy ignores it.
pub fn allocate_with_policy(
    policy: PolicyId,
    quotes: &[ClientQuote],
    infos: &[SelectionInfo],
    prices: &PriceVector,
    params: &MarketParams,
) -> Result<(Allocation, WelfareReport)> {
    match policy {
        PolicyId::Mlpg => {
            let alloc = mlpg_allocate(quotes, params);
            let report = WelfareReport::from_allocation(quotes, &alloc, prices, params.alpha, params.beta);
            Ok((alloc, report))
        }
        PolicyId::Wiscc => {
            let known: Vec<&ClientQuote> = quotes.iter().filter(|q| q.cost_curve.len() > 1).collect();
            let mean_rate = if known.is_empty() {
                0.0
            } else {
                known.iter().map(|q| q.gain_rate).sum::<f64>() / known.len() as f64
            };
            let blind: Vec<ClientQuote> = quotes
                .iter()
                .map(|q| ClientQuote {
                    gain_rate: mean_rate,
                    ..q.clone()
                })
                .collect();
            let (alloc, _) = allocate_workloads(&blind, prices, params)?;
            let report = WelfareReport::from_allocation(quotes, &alloc, prices, params.alpha, params.beta);
            Ok((alloc, report))
        }
        p if p.selects_first() => {
            let chosen = select_clients(p, infos, params.max_active);
            let subset: Vec<ClientQuote> = quotes
                .iter()
                .map(|q| {
                    if chosen.contains(&q.id) {
                        q.clone()
                    } else {
                        ClientQuote {
                            cost_curve: vec![0.0],
                            mtv: 0,
                            ..q.clone()
                        }
                    }
                })
                .collect();
            let (alloc, _) = allocate_workloads(&subset, prices, params)?;
            let report = WelfareReport::from_allocation(quotes, &alloc, prices, params.alpha, params.beta);
            Ok((alloc, report))
        }
        _ => allocate_workloads(quotes, prices, params),
    }
}
