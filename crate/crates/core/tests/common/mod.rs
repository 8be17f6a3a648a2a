//! Brute-force references and random instances shared by the test targets.
#![allow(dead_code)]

use mfp_core::cost::GenAlloc;
use mfp_core::solver::mtv;
use mfp_core::{Bilinear, Budgets, ConsumptionTask, PriceVector, ResourceQuanta, ScheduleDecision, SolveInput};
use rand::Rng;

/// Instance in cell units: unit quanta and unit spectral efficiency, so the
/// task bits are the transfer cells and kappa is the training cells per
/// sample.
pub fn cell_instance(n: u64, a: f64, b: f64, w_down: f64, w_up: f64, per_sample: f64, prices: PriceVector, budgets: Budgets) -> SolveInput {
    SolveInput {
        n,
        a,
        b,
        task: ConsumptionTask {
            d_down: w_down,
            d_up: w_up,
            kappa: per_sample,
            c_down: 1.0,
            c_up: 1.0,
        },
        prices,
        budgets,
        quanta: ResourceQuanta::new(1.0, 1.0, 1.0).unwrap(),
    }
}

/// Draws a feasible instance with `1 ≤ n ≤ mtv`.
///
/// a ∈ [0.5, 20], b ∈ {0} ∪ [0.1, 5], prices ∈ [0.1, 10], time budgets
/// ∈ [2, 20], frequency and compute boxes ∈ [1, 16], transfer work
/// ∈ {0} ∪ [0.1, 4] cells, per-sample training ∈ [0.001, 0.05] cells.
pub fn random_instance(rng: &mut impl Rng) -> SolveInput {
    loop {
        let prices = PriceVector {
            dt: rng.gen_range(0.1..10.0),
            db: rng.gen_range(0.1..10.0),
            df: rng.gen_range(0.1..10.0),
            ..PriceVector::default()
        };
        let time = rng.gen_range(2.0..20.0);
        let mut budgets = Budgets::new(time, rng.gen_range(1.0..16.0), rng.gen_range(1.0..16.0));
        budgets.gen_time = rng.gen_range(2.0..20.0);
        let b = if rng.gen_bool(0.2) { 0.0 } else { rng.gen_range(0.1..5.0) };
        let work = |rng: &mut dyn rand::RngCore| if rng.gen_bool(0.15) { 0.0 } else { rng.gen_range(0.1..4.0) };
        let (wd, wu) = (work(rng), work(rng));
        let mut inp = cell_instance(0, rng.gen_range(0.5..20.0), b, wd, wu, rng.gen_range(0.001..0.05), prices, budgets);
        let top = mtv(&inp).unwrap();
        if top < 1 {
            continue;
        }
        inp.n = if rng.gen_bool(0.1) { top as u64 } else { rng.gen_range(1..=top as u64) };
        return inp;
    }
}

fn linspace(lo: f64, hi: f64, k: usize) -> impl Iterator<Item = f64> {
    (0..=k).map(move |i| if k == 0 { lo } else { lo + (hi - lo) * i as f64 / k as f64 })
}

/// Cheapest sensing over `k + 1` sensing times; the band is the least that
/// meets the yield at each time. `None` if no grid point is feasible.
pub fn grid_generation(n: f64, a: f64, b: f64, p: &PriceVector, time: f64, freq: f64, k: usize) -> Option<f64> {
    let lo = if a + b * freq > 0.0 { n / (a + b * freq) } else { return None };
    let hi = if a > 0.0 { time.min(n / a) } else { time };
    if lo > hi * (1.0 + 1e-12) {
        return None;
    }
    let mut best: Option<f64> = None;
    for x in linspace(lo, hi.max(lo), k) {
        let y = if b > 0.0 { ((n / x - a) / b).max(0.0) } else { 0.0 };
        if y > freq * (1.0 + 1e-12) || a * x + b * x * y < n * (1.0 - 1e-12) {
            continue;
        }
        let c = p.dt * x + p.db * y;
        best = Some(best.map_or(c, |b: f64| b.min(c)));
    }
    best
}

fn process_cost(w: f64, t: f64, dt: f64, p: f64, bx: f64) -> Option<f64> {
    if w <= 0.0 {
        return Some(0.0);
    }
    if t <= 0.0 || w / t > bx * (1.0 + 1e-12) {
        return None;
    }
    Some(dt * t + p * w / t)
}

/// Cheapest consumption over a `k × k` grid of transfer times; training
/// gets the best time left over in closed form.
pub fn grid_consumption(work: [f64; 3], dt: f64, p: [f64; 3], time: f64, boxes: [f64; 3], k: usize) -> Option<f64> {
    let range = |w: f64, bx: f64| if w > 0.0 { (w / bx, time) } else { (0.0, 0.0) };
    let (d_lo, d_hi) = range(work[0], boxes[0]);
    let (u_lo, u_hi) = range(work[2], boxes[2]);
    let kd = if work[0] > 0.0 { k } else { 0 };
    let ku = if work[2] > 0.0 { k } else { 0 };
    let mut best: Option<f64> = None;
    for t1 in linspace(d_lo, d_hi.max(d_lo), kd) {
        let Some(c1) = process_cost(work[0], t1, dt, p[0], boxes[0]) else { continue };
        for t3 in linspace(u_lo, u_hi.max(u_lo), ku) {
            let rem = time - t1 - t3;
            if rem < -1e-12 {
                break;
            }
            let Some(c3) = process_cost(work[2], t3, dt, p[2], boxes[2]) else { continue };
            let c2 = if work[1] > 0.0 {
                let lo = work[1] / boxes[1];
                if lo > rem * (1.0 + 1e-12) {
                    continue;
                }
                let t2 = (work[1] * p[1] / dt).sqrt().clamp(lo, rem.max(lo));
                dt * t2 + p[1] * work[1] / t2
            } else {
                0.0
            };
            let c = c1 + c2 + c3;
            best = Some(best.map_or(c, |b: f64| b.min(c)));
        }
    }
    best
}

/// Largest cost gap a grid of `k` steps can leave on a smooth convex
/// one-dimensional slice, scaled to the instance.
pub fn grid_slack(scale: f64, k: usize) -> f64 {
    scale * 4.0 / (k as f64 * k as f64) + 1e-9 * scale
}

/// Every box, time and yield constraint of a continuous schedule, as
/// messages.
pub fn violations(inp: &SolveInput, s: &ScheduleDecision) -> Vec<String> {
    let b = &inp.budgets;
    let tol = |x: f64| 1e-7 * (1.0 + x.abs());
    let mut v = Vec::new();
    let GenAlloc { x, y, z } = s.gen;
    if x > b.gen_time + tol(b.gen_time) {
        v.push(format!("sensing time {x} > {}", b.gen_time));
    }
    if y > b.sensing_freq() + tol(b.freq) {
        v.push(format!("sensing band {y} > {}", b.freq));
    }
    if z > x + tol(x) || x < 0.0 || y < 0.0 {
        v.push("sensing allocation out of range".into());
    }
    let n = inp.n as f64;
    if inp.a * x + inp.b * z * y < n - tol(n) {
        v.push(format!("yield {} < {n}", inp.a * x + inp.b * z * y));
    }
    let work = inp.task.cell_work(n, &inp.quanta).unwrap();
    let procs: [Bilinear; 3] = [s.comm_down, s.comp, s.comm_up];
    let boxes = [b.freq, b.compute, b.freq];
    for k in 0..3 {
        if work[k] > 0.0 && procs[k].t * procs[k].w < work[k] - tol(work[k]) {
            v.push(format!("process {k} moves {} of {}", procs[k].t * procs[k].w, work[k]));
        }
        if procs[k].w > boxes[k] + tol(boxes[k]) {
            v.push(format!("process {k} width {} > {}", procs[k].w, boxes[k]));
        }
    }
    let total = s.consumption_time();
    if total > b.cons_time + tol(b.cons_time) {
        v.push(format!("consumption time {total} > {}", b.cons_time));
    }
    v
}
