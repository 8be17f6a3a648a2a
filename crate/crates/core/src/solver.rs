//! Per-client minimum-cost scheduling under pool limits (M-OURS).
//!
//! Each service splits into a generation problem (sensing, bounded by the
//! generation time budget and the frequency box) and a consumption problem
//! (download, local training, upload sharing one time budget, each bounded
//! by its own width box). Both are solved exactly by enumerating active
//! inequality sets and keeping the cheapest candidate whose multipliers have
//! the right sign. Workloads small enough that no box binds skip the
//! enumeration and use the closed forms directly.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cost::{
    bilinear_optimum, unconstrained_gen_schedule, Bilinear, ConsumptionTask, GenAlloc, PriceVector,
    ScheduleDecision,
};
use crate::error::{Error, Result};
use crate::resource_pool::ResourceQuanta;

/// Sentinel for a transaction volume no box limits.
pub const UNBOUNDED: i64 = i64::MAX;

const TOL: f64 = 1e-9;
/// Largest time budget, in cells, the integer rounding searches over.
const MAX_INTEGER_CELLS: u64 = 4096;

/// Pool limits seen by one service. Any field may be `f64::INFINITY`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Budgets {
    /// Time cells available for sensing.
    pub gen_time: f64,
    /// Time cells shared by download, training and upload.
    pub cons_time: f64,
    /// Frequency cells per time column.
    pub freq: f64,
    /// Frequency cells sensing may use; at most `freq`.
    #[serde(default = "unbounded_cells")]
    pub gen_freq: f64,
    /// Compute cells per time column.
    pub compute: f64,
}

fn unbounded_cells() -> f64 {
    f64::INFINITY
}

impl Budgets {
    pub fn new(time: f64, freq: f64, compute: f64) -> Self {
        Budgets {
            gen_time: time,
            cons_time: time,
            freq,
            gen_freq: freq,
            compute,
        }
    }

    /// Effective sensing band, `min(gen_freq, freq)`.
    pub fn sensing_freq(&self) -> f64 {
        self.gen_freq.min(self.freq)
    }

    pub fn unbounded() -> Self {
        Budgets::new(f64::INFINITY, f64::INFINITY, f64::INFINITY)
    }

    fn all_finite(&self) -> bool {
        self.gen_time.is_finite() && self.cons_time.is_finite() && self.freq.is_finite() && self.sensing_freq().is_finite() && self.compute.is_finite()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolveInput {
    pub n: u64,
    pub a: f64,
    pub b: f64,
    pub task: ConsumptionTask,
    pub prices: PriceVector,
    pub budgets: Budgets,
    pub quanta: ResourceQuanta,
}

/// Inequality constraints that can bind at an optimum.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Constraint {
    GenTime,
    GenFreq,
    /// Wireless bandwidth pinned at zero.
    GenVisualOnly,
    ConsTime,
    DownFreq,
    CompCompute,
    UpFreq,
}

const WIDTH_CONSTRAINTS: [Constraint; 3] = [Constraint::DownFreq, Constraint::CompCompute, Constraint::UpFreq];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolutionPath {
    /// Workload within the unconstrained volume; closed forms apply.
    ClosedForm,
    /// Some box binds; active-set enumeration.
    ActiveSet,
}

/// One active-set candidate considered during a solve.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub process: String,
    pub active: Vec<Constraint>,
    pub cost: Option<f64>,
    pub valid: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum OutcomeKind {
    Optimal,
    Infeasible,
    NotParticipating,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveOutcome {
    pub kind: OutcomeKind,
    pub path: Option<SolutionPath>,
    /// Continuous optimum.
    pub schedule: Option<ScheduleDecision>,
    pub cost: f64,
    /// Whole-cell schedule, present when all budgets are finite.
    pub cells: Option<ScheduleDecision>,
    pub cell_cost: f64,
    pub mutv: i64,
    pub mtv: i64,
    pub active_constraints: Vec<Constraint>,
    pub trace: Vec<Candidate>,
    pub reason: Option<String>,
}

impl SolveOutcome {
    fn empty(kind: OutcomeKind, mutv: i64, mtv: i64) -> Self {
        SolveOutcome {
            kind,
            path: None,
            schedule: None,
            cost: 0.0,
            cells: None,
            cell_cost: 0.0,
            mutv,
            mtv,
            active_constraints: Vec::new(),
            trace: Vec::new(),
            reason: None,
        }
    }

    pub fn is_optimal(&self) -> bool {
        self.kind == OutcomeKind::Optimal
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("outcome serializes")
    }
}

/// Normalized instance: everything in cell units.
#[derive(Debug, Clone, Copy)]
struct Problem {
    a: f64,
    b: f64,
    w_down: f64,
    w_up: f64,
    per_sample: f64,
    prices: PriceVector,
    budgets: Budgets,
}

impl Problem {
    fn new(input: &SolveInput) -> Result<Self> {
        if !(input.a >= 0.0 && input.b >= 0.0) {
            return Err(Error::InvalidArgument("status attributes must be nonnegative".into()));
        }
        let [w_down, _, w_up] = input.task.cell_work(0.0, &input.quanta)?;
        Ok(Problem {
            a: input.a,
            b: input.b,
            w_down,
            w_up,
            per_sample: input.task.comp_cells_per_sample(&input.quanta),
            prices: input.prices,
            budgets: input.budgets,
        })
    }

    fn work(&self, n: f64) -> [f64; 3] {
        [self.w_down, self.per_sample * n, self.w_up]
    }

    fn width_prices(&self) -> [f64; 3] {
        [self.prices.db, self.prices.df, self.prices.db]
    }

    fn boxes(&self) -> [f64; 3] {
        [self.budgets.freq, self.budgets.compute, self.budgets.freq]
    }
}

fn floor_volume(x: f64) -> i64 {
    if x.is_nan() {
        return 0;
    }
    if x >= 9.0e18 {
        return UNBOUNDED;
    }
    if x < 0.0 {
        return -1;
    }
    (x + TOL * (1.0 + x)).floor() as i64
}

fn leq(x: f64, bound: f64) -> bool {
    x <= bound + TOL * (1.0 + bound.abs())
}

/// Largest sample count the sensing boxes can produce: `⌊T(a + bB)⌋`.
pub fn gen_mtv(a: f64, b: f64, time: f64, freq: f64) -> i64 {
    let rate = a + if freq > 0.0 { b * freq } else { 0.0 };
    if rate <= 0.0 || time <= 0.0 {
        return 0;
    }
    floor_volume(time * rate)
}

/// Largest sample count whose unconstrained sensing optimum fits the boxes.
pub fn gen_mutv(a: f64, b: f64, prices: &PriceVector, time: f64, freq: f64) -> i64 {
    if time <= 0.0 || (a <= 0.0 && b <= 0.0) {
        return 0;
    }
    if b <= 0.0 {
        return floor_volume(a * time);
    }
    let (dt, db) = (prices.dt, prices.db);
    // Above n_c the interior optimum uses positive bandwidth.
    let n_c = a * a * db / (b * dt);
    let n_x = if a * time <= n_c { a * time } else { time * time * b * dt / db };
    let cap = a + b * freq.max(0.0);
    let n_y = cap * cap * db / (b * dt);
    floor_volume(n_x.min(n_y))
}

fn consumption_mtv_continuous(p: &Problem) -> i64 {
    let [bd, fc, bu] = p.boxes();
    let mut comm = 0.0;
    for (w, bx) in [(p.w_down, bd), (p.w_up, bu)] {
        if w > 0.0 {
            if bx <= 0.0 {
                return -1;
            }
            comm += w / bx;
        }
    }
    let rem = p.budgets.cons_time - comm;
    if rem < -TOL * (1.0 + comm) {
        return -1;
    }
    if p.per_sample <= 0.0 {
        return UNBOUNDED;
    }
    if fc <= 0.0 {
        return 0;
    }
    floor_volume(rem.max(0.0) * fc / p.per_sample)
}

fn ceil_cells(x: f64) -> u64 {
    (x - TOL * (1.0 + x)).ceil().max(0.0) as u64
}

fn floor_cells(x: f64) -> u64 {
    if x >= MAX_INTEGER_CELLS as f64 {
        MAX_INTEGER_CELLS
    } else {
        (x + TOL * (1.0 + x)).floor().max(0.0) as u64
    }
}

fn consumption_mtv_cells(p: &Problem) -> i64 {
    let tc = floor_cells(p.budgets.cons_time);
    let bx = floor_cells(p.budgets.freq);
    let fc = floor_cells(p.budgets.compute);
    let mut comm = 0u64;
    for w in [p.w_down, p.w_up] {
        if w > 0.0 {
            if bx == 0 {
                return -1;
            }
            comm += ceil_cells(w / bx as f64).max(1);
        }
    }
    if comm > tc {
        return -1;
    }
    if p.per_sample <= 0.0 {
        return UNBOUNDED;
    }
    floor_volume((tc - comm) as f64 * fc as f64 / p.per_sample)
}

fn consumption_mutv(p: &Problem) -> i64 {
    let (dt, db, df) = (p.prices.dt, p.prices.db, p.prices.df);
    let mut comm_time = 0.0;
    for w in [p.w_down, p.w_up] {
        let (s, _) = bilinear_optimum(w, dt, db);
        if !leq(s.w, p.budgets.freq) {
            return -1;
        }
        comm_time += s.t;
    }
    let rem = p.budgets.cons_time - comm_time;
    if rem < 0.0 {
        return -1;
    }
    if p.per_sample <= 0.0 {
        return UNBOUNDED;
    }
    let n_w = p.budgets.compute * p.budgets.compute * df / (p.per_sample * dt);
    let n_t = rem * rem * dt / (df * p.per_sample);
    floor_volume(n_w.min(n_t))
}

/// Largest workload whose unconstrained optimum respects every box, or −1
/// when even the fixed model transfers do not fit unconstrained.
pub fn mutv(input: &SolveInput) -> Result<i64> {
    let p = Problem::new(input)?;
    let b = &input.budgets;
    Ok(gen_mutv(p.a, p.b, &p.prices, b.gen_time, b.sensing_freq()).min(consumption_mutv(&p)))
}

fn mtv_of(p: &Problem) -> i64 {
    let b = &p.budgets;
    let mut m = gen_mtv(p.a, p.b, b.gen_time, b.sensing_freq()).min(consumption_mtv_continuous(p));
    if b.all_finite() {
        let g = gen_mtv(p.a, p.b, floor_cells(b.gen_time) as f64, floor_cells(b.sensing_freq()) as f64);
        m = m.min(g).min(consumption_mtv_cells(p));
    }
    m
}

/// Largest feasible workload, whole-cell rounding included when budgets are
/// finite; −1 when the model cannot even be relayed.
pub fn mtv(input: &SolveInput) -> Result<i64> {
    Ok(mtv_of(&Problem::new(input)?))
}

fn better(cost: f64, key: (f64, f64, f64), best: &Option<(f64, (f64, f64, f64))>) -> bool {
    match best {
        None => true,
        Some((bc, bk)) => {
            let scale = TOL * (1.0 + bc.abs());
            if cost < bc - scale {
                true
            } else if cost > bc + scale {
                false
            } else {
                key < *bk
            }
        }
    }
}

/// Minimum-cost sensing allocation for `n` samples within `time` visual
/// cells and `freq` wireless cells, by active-set enumeration.
pub fn solve_generation(
    n: f64,
    a: f64,
    b: f64,
    prices: &PriceVector,
    time: f64,
    freq: f64,
    mut trace: Option<&mut Vec<Candidate>>,
) -> Option<(GenAlloc, f64, Vec<Constraint>)> {
    use Constraint::*;
    if n <= 0.0 {
        return Some((GenAlloc::default(), 0.0, Vec::new()));
    }
    let (dt, db) = (prices.dt, prices.db);
    let mut push = |active: Vec<Constraint>, g: Option<GenAlloc>, valid: bool| {
        if let Some(t) = trace.as_deref_mut() {
            t.push(Candidate {
                process: "generation".into(),
                active,
                cost: g.map(|g| g.x * dt + g.y * db),
                valid,
            });
        }
    };

    if b <= 0.0 || freq <= 0.0 {
        if a <= 0.0 {
            push(vec![GenVisualOnly], None, false);
            return None;
        }
        let x = n / a;
        let ok = leq(x, time);
        let g = GenAlloc { x: x.min(time), y: 0.0, z: 0.0 };
        let mut active = vec![GenVisualOnly];
        if ok && (x - time).abs() <= TOL * (1.0 + time) {
            active.insert(0, GenTime);
        }
        push(active.clone(), Some(g), ok);
        return ok.then(|| (g, g.x * dt, active));
    }

    let cap = a + b * freq;
    let x_lo = if freq.is_finite() { n / cap } else { 0.0 };
    if !leq(x_lo, time) {
        push(vec![GenTime, GenFreq], None, false);
        return None;
    }
    let x_lo = x_lo.min(time);
    let x_hi = if a > 0.0 { n / a } else { f64::INFINITY };
    let y_of = |x: f64| ((n - a * x) / (b * x)).max(0.0);
    let sign_ok = |m: f64, scale: f64| m >= -TOL * (1.0 + scale);

    let mut cands: Vec<(Vec<Constraint>, Option<GenAlloc>, bool)> = Vec::new();

    // No box binds.
    let x0 = (n * db / (b * dt)).sqrt();
    let ok = x0 >= x_lo && x0 <= x_hi && leq(x0, time);
    cands.push((vec![], Some(GenAlloc { x: x0, y: y_of(x0), z: x0 }), ok));

    // Pure visual: y = 0 binds.
    if a > 0.0 {
        let x = x_hi;
        let lambda = db - dt * b * x / a;
        let ok = leq(x, time) && sign_ok(lambda, db);
        cands.push((vec![GenVisualOnly], Some(GenAlloc { x, y: 0.0, z: 0.0 }), ok));
    }

    // Visual time binds.
    if time.is_finite() {
        let y = (n - a * time) / (b * time);
        let lambda = db * n / (b * time * time) - dt;
        let ok = y >= -TOL && leq(y, freq) && sign_ok(lambda, dt);
        let y = y.clamp(0.0, freq);
        cands.push((vec![GenTime], Some(GenAlloc { x: time, y, z: time }), ok));
    }

    // Wireless bandwidth binds.
    if freq.is_finite() {
        let lambda = dt * b * n / (cap * cap) - db;
        let ok = leq(x_lo, time) && sign_ok(lambda, db);
        cands.push((vec![GenFreq], Some(GenAlloc { x: x_lo, y: freq, z: x_lo }), ok));
    }

    // Corners.
    if time.is_finite() && freq.is_finite() {
        let ok = (n - time * cap).abs() <= TOL * (1.0 + n);
        cands.push((vec![GenTime, GenFreq], Some(GenAlloc { x: time, y: freq, z: time }), ok));
    }
    if time.is_finite() && a > 0.0 {
        let lambda = db * n / (b * time * time) - dt;
        let ok = (n - a * time).abs() <= TOL * (1.0 + n) && sign_ok(lambda, dt);
        cands.push((vec![GenTime, GenVisualOnly], Some(GenAlloc { x: time, y: 0.0, z: 0.0 }), ok));
    }

    let mut best: Option<(f64, (f64, f64, f64))> = None;
    let mut chosen = None;
    for (active, g, ok) in cands {
        if ok {
            let g = g.expect("valid candidates carry an allocation");
            let cost = g.x * dt + g.y * db;
            if better(cost, (g.x, g.y, 0.0), &best) {
                best = Some((cost, (g.x, g.y, 0.0)));
                chosen = Some((g, cost, active.clone()));
            }
        }
        push(active, g, ok);
    }
    chosen
}

fn consumption_cost(s: &[Bilinear; 3], dt: f64, p: &[f64; 3]) -> f64 {
    s.iter().zip(p).map(|(b, pk)| dt * b.t + pk * b.w).sum()
}

fn consumption_key(s: &[Bilinear; 3]) -> (f64, f64, f64) {
    (s.iter().map(|b| b.t).sum(), s[0].w + s[2].w, s[1].w)
}

/// Minimum-cost consumption schedule: `work[k]` cells per process with
/// width prices `p`, width boxes `boxes`, sharing `time` cells. Enumerates
/// every box subset with the shared time budget slack or tight.
pub fn solve_consumption(
    work: [f64; 3],
    dt: f64,
    p: [f64; 3],
    time: f64,
    boxes: [f64; 3],
    mut trace: Option<&mut Vec<Candidate>>,
) -> Option<([Bilinear; 3], f64, Vec<Constraint>)> {
    let live: Vec<usize> = (0..3).filter(|&k| work[k] > 0.0).collect();
    if live.is_empty() {
        return Some(([Bilinear::default(); 3], 0.0, Vec::new()));
    }
    let mut floor_time = 0.0;
    for &k in &live {
        if boxes[k] <= 0.0 {
            return None;
        }
        floor_time += work[k] / boxes[k];
    }
    if !leq(floor_time, time) {
        return None;
    }

    let mut best: Option<(f64, (f64, f64, f64))> = None;
    let mut chosen = None;
    for mask in 0..(1usize << live.len()) {
        for tight in [false, true] {
            let bound: Vec<usize> = live.iter().enumerate().filter(|(i, _)| mask >> i & 1 == 1).map(|(_, &k)| k).collect();
            let free: Vec<usize> = live.iter().copied().filter(|k| !bound.contains(k)).collect();
            let mut s = [Bilinear::default(); 3];
            for &k in &bound {
                s[k] = Bilinear { t: work[k] / boxes[k], w: boxes[k] };
            }
            let mut valid = bound.iter().all(|&k| boxes[k].is_finite());
            let mut lambda = 0.0;
            if valid && !tight {
                for &k in &free {
                    let (b, _) = bilinear_optimum(work[k], dt, p[k]);
                    s[k] = b;
                    valid &= leq(b.w, boxes[k]);
                }
                valid &= leq(s.iter().map(|b| b.t).sum(), time);
            } else if valid {
                let rem = time - bound.iter().map(|&k| s[k].t).sum::<f64>();
                if !rem.is_finite() {
                    valid = false;
                } else if free.is_empty() {
                    valid = rem.abs() <= TOL * (1.0 + time);
                    lambda = bound
                        .iter()
                        .map(|&k| p[k] * boxes[k] * boxes[k] / work[k] - dt)
                        .fold(0.0, f64::max);
                } else if rem <= 0.0 {
                    valid = false;
                } else {
                    let spread: f64 = free.iter().map(|&k| (work[k] * p[k]).sqrt()).sum();
                    let root = spread / rem;
                    lambda = root * root - dt;
                    valid &= lambda >= -TOL * (1.0 + dt);
                    for &k in &free {
                        let t = (work[k] * p[k]).sqrt() / root;
                        s[k] = Bilinear { t, w: work[k] / t };
                        valid &= leq(s[k].w, boxes[k]);
                    }
                }
            }
            // Box multipliers must be nonnegative.
            for &k in &bound {
                let nu = (dt + lambda.max(0.0)) * work[k] / (boxes[k] * boxes[k]) - p[k];
                valid &= nu >= -TOL * (1.0 + p[k]);
            }
            let mut active: Vec<Constraint> = bound.iter().map(|&k| WIDTH_CONSTRAINTS[k]).collect();
            if tight {
                active.insert(0, Constraint::ConsTime);
            }
            let cost = valid.then(|| consumption_cost(&s, dt, &p));
            if let Some(c) = cost {
                let key = consumption_key(&s);
                if better(c, key, &best) {
                    best = Some((c, key));
                    chosen = Some((s, c, active.clone()));
                }
            }
            if let Some(t) = trace.as_deref_mut() {
                t.push(Candidate {
                    process: "consumption".into(),
                    active,
                    cost,
                    valid,
                });
            }
        }
    }
    chosen
}

/// Same problem as [`solve_consumption`], solved by bisection on the shared
/// time multiplier: each process takes `t = max(W/box, sqrt(pW/(Δt+λ)))`.
pub fn solve_consumption_bisection(
    work: [f64; 3],
    dt: f64,
    p: [f64; 3],
    time: f64,
    boxes: [f64; 3],
) -> Option<([Bilinear; 3], f64)> {
    let times = |lambda: f64| -> [f64; 3] {
        let mut t = [0.0; 3];
        for k in 0..3 {
            if work[k] > 0.0 {
                t[k] = (work[k] / boxes[k]).max((p[k] * work[k] / (dt + lambda)).sqrt());
            }
        }
        t
    };
    let floor: f64 = (0..3).filter(|&k| work[k] > 0.0).map(|k| work[k] / boxes[k]).sum();
    if (0..3).any(|k| work[k] > 0.0 && boxes[k] <= 0.0) || !leq(floor, time) {
        return None;
    }
    let sum = |t: [f64; 3]| t.iter().sum::<f64>();
    let t = if sum(times(0.0)) <= time {
        times(0.0)
    } else {
        let mut hi = 1.0;
        while sum(times(hi)) > time && hi < 1e300 {
            hi *= 2.0;
        }
        let mut lo = 0.0;
        for _ in 0..400 {
            let mid = 0.5 * (lo + hi);
            if sum(times(mid)) > time {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        times(hi)
    };
    let mut s = [Bilinear::default(); 3];
    for k in 0..3 {
        if work[k] > 0.0 {
            s[k] = Bilinear { t: t[k], w: work[k] / t[k] };
        }
    }
    Some((s, consumption_cost(&s, dt, &p)))
}

/// Cheapest whole-cell sensing allocation producing at least `n` samples.
pub fn quantize_generation(n: f64, a: f64, b: f64, prices: &PriceVector, time: u64, freq: u64) -> Option<GenAlloc> {
    if n <= 0.0 {
        return Some(GenAlloc::default());
    }
    let mut best: Option<(f64, (f64, f64, f64))> = None;
    let mut chosen = None;
    for x in 1..=time.min(MAX_INTEGER_CELLS) {
        let xf = x as f64;
        let need = n - a * xf;
        let y = if need <= TOL * (1.0 + n) {
            0
        } else if b > 0.0 {
            ceil_cells(need / (b * xf))
        } else {
            continue;
        };
        if y > freq {
            continue;
        }
        let g = GenAlloc {
            x: xf,
            y: y as f64,
            z: if y > 0 { xf } else { 0.0 },
        };
        let cost = xf * prices.dt + g.y * prices.db;
        if better(cost, (g.x, g.y, 0.0), &best) {
            best = Some((cost, (g.x, g.y, 0.0)));
            chosen = Some(g);
        }
        if y == 0 {
            // Longer sensing only adds time.
            break;
        }
    }
    chosen
}

/// Cheapest whole-cell consumption schedule within `time` cells; exact over
/// all integer time splits.
pub fn quantize_consumption(work: [f64; 3], dt: f64, p: [f64; 3], time: u64, boxes: [u64; 3]) -> Option<[Bilinear; 3]> {
    let time = time.min(MAX_INTEGER_CELLS);
    // Per process: (t, w, cost) options.
    let mut options: Vec<Vec<(u64, u64, f64)>> = Vec::with_capacity(3);
    for k in 0..3 {
        if work[k] <= 0.0 {
            options.push(vec![(0, 0, 0.0)]);
            continue;
        }
        if boxes[k] == 0 {
            return None;
        }
        let lo = ceil_cells(work[k] / boxes[k] as f64).max(1);
        let hi = time.min(ceil_cells(work[k]).max(lo));
        let opts: Vec<_> = (lo..=hi)
            .map(|t| {
                let w = ceil_cells(work[k] / t as f64).max(1);
                (t, w, dt * t as f64 + p[k] * w as f64)
            })
            .collect();
        if opts.is_empty() {
            return None;
        }
        options.push(opts);
    }
    type Pick = (f64, (f64, f64, f64), [(u64, u64); 3]);
    let mut best: Option<Pick> = None;
    // Cheapest (down, up) pair per combined time.
    let mut pairs: Vec<Option<(f64, (u64, u64), (u64, u64))>> = vec![None; time as usize + 1];
    for &(t0, w0, c0) in &options[0] {
        for &(t2, w2, c2) in &options[2] {
            let s = (t0 + t2) as usize;
            if s > time as usize {
                continue;
            }
            let c = c0 + c2;
            let replace = match pairs[s] {
                None => true,
                Some((bc, _, (bt0, _))) => c < bc - TOL * (1.0 + bc) || ((c - bc).abs() <= TOL * (1.0 + bc) && t0 < bt0),
            };
            if replace {
                pairs[s] = Some((c, (t0, w0), (t2, w2)));
            }
        }
    }
    for (s, pair) in pairs.iter().enumerate() {
        let Some((c02, d, u)) = pair else { continue };
        for &(t1, w1, c1) in &options[1] {
            if s as u64 + t1 > time {
                break;
            }
            let cost = c02 + c1;
            let key = ((s as u64 + t1) as f64, (d.1 + u.1) as f64, w1 as f64);
            let cur = best.as_ref().map(|(c, k, _)| (*c, *k));
            if better(cost, key, &cur) {
                best = Some((cost, key, [*d, (t1, w1), *u]));
            }
        }
    }
    best.map(|(_, _, picks)| {
        picks.map(|(t, w)| Bilinear {
            t: t as f64,
            w: w as f64,
        })
    })
}

fn assemble(gen: GenAlloc, cons: [Bilinear; 3]) -> ScheduleDecision {
    ScheduleDecision {
        gen,
        comm_down: cons[0],
        comp: cons[1],
        comm_up: cons[2],
    }
}

fn quantize(p: &Problem, n: f64) -> Option<ScheduleDecision> {
    let b = &p.budgets;
    if !b.all_finite() {
        return None;
    }
    let gen = quantize_generation(n, p.a, p.b, &p.prices, floor_cells(b.gen_time), floor_cells(b.sensing_freq()))?;
    let bx = floor_cells(b.freq);
    let cons = quantize_consumption(
        p.work(n),
        p.prices.dt,
        p.width_prices(),
        floor_cells(b.cons_time),
        [bx, floor_cells(b.compute), bx],
    )?;
    Some(assemble(gen, cons))
}

/// Continuous minimum cost of `n` samples, or `None` when infeasible.
/// Skips whole-cell rounding and tracing; used to sample cost curves.
pub fn continuous_cost(input: &SolveInput, n: f64) -> Option<f64> {
    let p = Problem::new(input).ok()?;
    if n <= 0.0 {
        return Some(0.0);
    }
    let b = &p.budgets;
    let (_, g, _) = solve_generation(n, p.a, p.b, &p.prices, b.gen_time, b.sensing_freq(), None)?;
    let (_, c, _) = solve_consumption(p.work(n), p.prices.dt, p.width_prices(), b.cons_time, p.boxes(), None)?;
    Some(g + c)
}

/// Minimum-cost schedule for one service.
///
/// Workloads up to the unconstrained volume take the closed forms; larger
/// feasible ones go through active-set enumeration; anything above the
/// maximum volume is infeasible. A zero workload yields an empty schedule.
pub fn constrained_schedule(input: &SolveInput) -> SolveOutcome {
    let problem = match Problem::new(input) {
        Ok(p) => p,
        Err(e) => {
            let mut out = SolveOutcome::empty(OutcomeKind::Infeasible, -1, -1);
            out.reason = Some(e.to_string());
            return out;
        }
    };
    let b = &input.budgets;
    let max_volume = mtv_of(&problem);
    let unc_volume = gen_mutv(problem.a, problem.b, &problem.prices, b.gen_time, b.sensing_freq())
        .min(consumption_mutv(&problem))
        .min(max_volume);
    let n = input.n;

    if n == 0 {
        let mut out = SolveOutcome::empty(OutcomeKind::Optimal, unc_volume, max_volume);
        out.path = Some(SolutionPath::ClosedForm);
        out.schedule = Some(ScheduleDecision::default());
        out.cells = b.all_finite().then(ScheduleDecision::default);
        return out;
    }
    if !(b.cons_time > 0.0) || b.gen_time < 0.0 || n as i128 > max_volume as i128 {
        let mut out = SolveOutcome::empty(OutcomeKind::Infeasible, unc_volume, max_volume);
        out.reason = Some(if max_volume < 0 {
            "model transfers alone exceed the time budget".into()
        } else {
            format!("workload {n} exceeds maximum transaction volume {max_volume}")
        });
        return out;
    }

    let nf = n as f64;
    let mut trace = Vec::new();
    let (schedule, active, path) = if (n as i128) <= unc_volume as i128 {
        let Ok((gen, _)) = unconstrained_gen_schedule(nf, problem.a, problem.b, &problem.prices) else {
            unreachable!("positive volume implies a sensing modality")
        };
        let w = problem.work(nf);
        let p = problem.width_prices();
        let cons = [0, 1, 2].map(|k| bilinear_optimum(w[k], problem.prices.dt, p[k]).0);
        (assemble(gen, cons), Vec::new(), SolutionPath::ClosedForm)
    } else {
        let gen = solve_generation(nf, problem.a, problem.b, &problem.prices, b.gen_time, b.sensing_freq(), Some(&mut trace));
        let cons = solve_consumption(
            problem.work(nf),
            problem.prices.dt,
            problem.width_prices(),
            b.cons_time,
            problem.boxes(),
            Some(&mut trace),
        );
        match (gen, cons) {
            (Some((g, _, mut ag)), Some((c, _, ac))) => {
                ag.extend(ac);
                (assemble(g, c), ag, SolutionPath::ActiveSet)
            }
            _ => {
                let mut out = SolveOutcome::empty(OutcomeKind::Infeasible, unc_volume, max_volume);
                out.trace = trace;
                out.reason = Some("no active set satisfies the optimality conditions".into());
                return out;
            }
        }
    };
    let cells = quantize(&problem, nf);
    if b.all_finite() && cells.is_none() {
        let mut out = SolveOutcome::empty(OutcomeKind::Infeasible, unc_volume, max_volume);
        out.trace = trace;
        out.reason = Some("no whole-cell schedule fits the pools".into());
        return out;
    }
    SolveOutcome {
        kind: OutcomeKind::Optimal,
        path: Some(path),
        schedule: Some(schedule),
        cost: schedule.cost(&input.prices),
        cell_cost: cells.map(|c| c.cost(&input.prices)).unwrap_or(0.0),
        cells,
        mutv: unc_volume,
        mtv: max_volume,
        active_constraints: active,
        trace,
        reason: None,
    }
}

/// Per-client dispatch: inactive clients do not participate, active ones get
/// [`constrained_schedule`]. Clients are solved in parallel; output order
/// matches input order.
pub fn m_ours(clients: &[(SolveInput, bool)]) -> Vec<SolveOutcome> {
    clients
        .par_iter()
        .map(|(input, active)| {
            if *active {
                constrained_schedule(input)
            } else {
                let mut out = SolveOutcome::empty(OutcomeKind::NotParticipating, 0, 0);
                out.reason = Some("not participating in transactions".into());
                out
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit_prices() -> PriceVector {
        PriceVector {
            dt: 1.0,
            db: 1.0,
            ds: 1.0,
            dtheta: 1.0,
            df: 1.0,
        }
    }

    fn gen_only(n: u64, a: f64, b: f64, time: f64, freq: f64) -> SolveInput {
        SolveInput {
            n,
            a,
            b,
            task: ConsumptionTask {
                d_down: 0.0,
                d_up: 0.0,
                kappa: 0.0,
                c_down: 1.0,
                c_up: 1.0,
            },
            prices: unit_prices(),
            budgets: Budgets {
                gen_time: time,
                cons_time: 1.0,
                freq,
                gen_freq: freq,
                compute: 1.0,
            },
            quanta: ResourceQuanta::new(1.0, 1.0, 1.0).unwrap(),
        }
    }

    #[test]
    fn mutv_examples() {
        assert_eq!(gen_mutv(1.0, 1.0, &unit_prices(), 2.0, 10.0), 4);
        assert_eq!(mutv(&gen_only(0, 1.0, 1.0, 2.0, 10.0)).unwrap(), 4);
        let mut inf = gen_only(0, 1.0, 1.0, 1.0, 1.0);
        inf.budgets = Budgets::unbounded();
        assert_eq!(mutv(&inf).unwrap(), UNBOUNDED);
        assert_eq!(gen_mutv(1.0, 1.0, &unit_prices(), 0.0, 10.0), 0);
    }

    #[test]
    fn mutv_matches_box_check() {
        // x0(N) ≤ 2 exactly for N ≤ 4.
        for n in 1..=10u64 {
            let (g, _) = unconstrained_gen_schedule(n as f64, 1.0, 1.0, &unit_prices()).unwrap();
            assert_eq!(g.x <= 2.0 + 1e-12, n <= 4, "n={n}");
        }
    }

    #[test]
    fn mtv_examples() {
        assert_eq!(gen_mtv(1.0, 1.0, 2.0, 3.0), 8);
        let mut inp = gen_only(0, 1e9, 0.0, 1e9, 10.0);
        inp.task.kappa = 1.0;
        inp.budgets = Budgets {
            gen_time: 1e9,
            cons_time: 2.0,
            freq: 10.0,
            gen_freq: 10.0,
            compute: 10.0,
        };
        assert_eq!(mtv(&inp).unwrap(), 20);
        inp.task.d_down = 100.0;
        assert_eq!(mtv(&inp).unwrap(), -1);
    }

    #[test]
    fn time_bound_example() {
        let out = constrained_schedule(&gen_only(4, 1.0, 1.0, 1.0, 10.0));
        assert!(out.is_optimal());
        let s = out.schedule.unwrap();
        assert!((s.gen.x - 1.0).abs() < 1e-12 && (s.gen.y - 3.0).abs() < 1e-12);
        assert!((out.cost - 4.0).abs() < 1e-12);
        assert_eq!(out.path, Some(SolutionPath::ActiveSet));
        assert!(out.active_constraints.contains(&Constraint::GenTime));
    }

    #[test]
    fn closed_form_path_below_mutv() {
        let out = constrained_schedule(&gen_only(4, 1.0, 1.0, 2.0, 10.0));
        assert_eq!(out.path, Some(SolutionPath::ClosedForm));
        assert!((out.cost - 3.0).abs() < 1e-12);
    }

    #[test]
    fn zero_and_infeasible() {
        let out = constrained_schedule(&gen_only(0, 1.0, 1.0, 2.0, 3.0));
        assert!(out.is_optimal());
        assert_eq!(out.cost, 0.0);
        assert_eq!(out.schedule, Some(ScheduleDecision::default()));
        let out = constrained_schedule(&gen_only(9, 1.0, 1.0, 2.0, 3.0));
        assert_eq!(out.kind, OutcomeKind::Infeasible);
        assert_eq!(out.mtv, 8);
        assert!(constrained_schedule(&gen_only(8, 1.0, 1.0, 2.0, 3.0)).is_optimal());
    }

    #[test]
    fn saturated_at_mtv() {
        let out = constrained_schedule(&gen_only(8, 1.0, 1.0, 2.0, 3.0));
        let s = out.schedule.unwrap();
        assert!((s.gen.x - 2.0).abs() < 1e-9 && (s.gen.y - 3.0).abs() < 1e-9);
        assert!((out.cost - 5.0).abs() < 1e-9);
    }

    #[test]
    fn m_ours_dispatch() {
        let inp = gen_only(4, 1.0, 1.0, 1.0, 10.0);
        let out = m_ours(&[(inp, false), (inp, true), (gen_only(0, 1.0, 1.0, 1.0, 1.0), true)]);
        assert_eq!(out[0].kind, OutcomeKind::NotParticipating);
        assert_eq!(out[1], constrained_schedule(&inp));
        assert_eq!(out[2].cost, 0.0);
    }

    #[test]
    fn enumeration_matches_bisection() {
        let mut trace = Vec::new();
        let work = [30.0, 50.0, 20.0];
        for time in [10.0, 14.0, 20.0, 40.0] {
            for boxes in [[3.0, 5.0, 3.0], [10.0, 10.0, 10.0], [2.5, 10.0, 4.0]] {
                let e = solve_consumption(work, 1.0, [1.0, 2.0, 1.0], time, boxes, Some(&mut trace));
                let s = solve_consumption_bisection(work, 1.0, [1.0, 2.0, 1.0], time, boxes);
                match (e, s) {
                    (Some((_, ce, _)), Some((_, cs))) => assert!((ce - cs).abs() < 1e-6 * (1.0 + ce), "{ce} vs {cs}"),
                    (None, None) => {}
                    other => panic!("disagree at time {time}: {other:?}"),
                }
            }
        }
    }

    #[test]
    fn quantized_cover_workload() {
        let g = quantize_generation(37.0, 3.0, 2.0, &unit_prices(), 10, 5).unwrap();
        assert!(3.0 * g.x + 2.0 * g.x * g.y >= 37.0);
        let c = quantize_consumption([7.5, 12.0, 3.0], 1.0, [1.0, 1.0, 1.0], 10, [4, 5, 4]).unwrap();
        assert!(c.iter().map(|b| b.t).sum::<f64>() <= 10.0);
        for (b, w) in c.iter().zip([7.5, 12.0, 3.0]) {
            assert!(b.t * b.w >= w);
        }
    }

    #[test]
    fn outcome_json_round_trip() {
        let out = constrained_schedule(&gen_only(4, 1.0, 1.0, 1.0, 10.0));
        let back: SolveOutcome = serde_json::from_str(&out.to_json()).unwrap();
        assert_eq!(back, out);
    }
}
