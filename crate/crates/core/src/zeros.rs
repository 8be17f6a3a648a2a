//! Z-shaped overlapped round orchestration.
//!
//! Interaction round `r` senses in communication round `r` and trains in
//! round `r + 1`, so every communication round hosts the sensing of one IR
//! and the download/train/upload of the previous one. Layout inside one
//! client's pool for one communication round:
//!
//! ```text
//! freq rows  B̃ ┌──────┬──────────┬──────┐
//!              │ down │          │  up  │   top rows
//!              │      │          │      │
//!              │ sensing (bottom rows, cols 0..x)
//!            0 └──────┴──────────┴──────┘
//! compute        ·····│  train   │·····     rows 0..w
//!                0    t1      t1+t2    t1+t2+t3
//! ```

use serde::{Deserialize, Serialize};

use crate::cost::{Bilinear, GenAlloc, PriceVector};
use crate::error::{Error, Result};
use crate::resource_pool::{Region, ServiceId, SharedResourcePool};
use crate::solver::{gen_mtv, quantize_generation};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PipelineMode {
    Zeros,
    Serial,
}

/// Communication rounds needed for `r` interaction rounds.
pub fn rounds_to_complete(r: u32, mode: PipelineMode) -> Result<u32> {
    if r == 0 {
        return Err(Error::InvalidArgument("need at least one interaction round".into()));
    }
    Ok(match mode {
        PipelineMode::Zeros => r + 1,
        PipelineMode::Serial => 2 * r,
    })
}

/// Round cycle for the next IR: the longest sensing or consumption time of
/// any client in the previous IR, or `full` when there is none.
pub fn cycle_time(prev: &[(GenAlloc, [Bilinear; 3])], full: u32) -> u32 {
    prev.iter()
        .map(|(g, c)| {
            let cons: f64 = c.iter().map(|b| b.t).sum();
            cons.max(g.x).ceil() as u32
        })
        .max()
        .map_or(full, |t| t.min(full))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Process {
    Sensing,
    CommDown,
    Comp,
    CommUp,
}

impl Process {
    pub fn name(self) -> &'static str {
        match self {
            Process::Sensing => "sensing",
            Process::CommDown => "comm_down",
            Process::Comp => "comp",
            Process::CommUp => "comm_up",
        }
    }
}

/// One rectangle of a plan; cells are local to communication round `cr`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimelineEntry {
    pub cr: u32,
    pub client: u32,
    /// Interaction round the work belongs to.
    pub ir: u32,
    pub process: Process,
    pub start_cell: u32,
    pub end_cell: u32,
    pub b_cells: u32,
    pub f_cells: u32,
}

/// Work one client brings into a communication round.
#[derive(Debug, Clone, PartialEq)]
pub struct ClientWork {
    pub client: u32,
    /// Sensing of the current IR: whole-cell allocation plus what is needed
    /// to redo it under a narrower band.
    pub gen: Option<GenRequest>,
    /// Consumption of the previous IR, whole cells: down, train, up.
    pub consumption: Option<[Bilinear; 3]>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GenRequest {
    pub alloc: GenAlloc,
    pub n: u64,
    pub a: f64,
    pub b: f64,
    pub prices: PriceVector,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClientPlan {
    pub client: u32,
    pub gen: Option<GenAlloc>,
    pub consumption: Option<[Bilinear; 3]>,
    /// Sensing was redone with a narrower band to clear the downlink/uplink.
    pub revised: bool,
    /// Samples sensed after a revision that could not keep the full workload.
    pub trimmed_to: Option<u64>,
    pub dropped: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundPlan {
    /// Communication round index (1-based).
    pub cr: u32,
    pub t_delta: u32,
    pub gen_budget: u32,
    pub dims: (usize, usize, usize),
    pub clients: Vec<ClientPlan>,
    pub timeline: Vec<TimelineEntry>,
}

fn cells(x: f64) -> usize {
    x.round().max(0.0) as usize
}

fn place_consumption(
    pool: &mut SharedResourcePool,
    svc: ServiceId,
    c: &[Bilinear; 3],
    cr: u32,
    client: u32,
    out: &mut Vec<TimelineEntry>,
) -> Result<()> {
    let bt = pool.freq_cells();
    let [down, comp, up] = c.map(|b| (cells(b.t), cells(b.w)));
    let mut col = 0;
    let mut entries = Vec::new();
    for (process, (t, w)) in [(Process::CommDown, down), (Process::Comp, comp), (Process::CommUp, up)] {
        if t == 0 {
            continue;
        }
        if process == Process::Comp {
            pool.reserve(&Region::time_compute(col..col + t, 0..w), svc)?;
        } else {
            if w > bt {
                return Err(Error::Infeasible(format!("{} needs {w} of {bt} frequency cells", process.name())));
            }
            pool.reserve(&Region::time_freq(col..col + t, bt - w..bt), svc)?;
        }
        let (b_cells, f_cells) = if process == Process::Comp { (0, w) } else { (w, 0) };
        entries.push(TimelineEntry {
            cr,
            client,
            ir: svc.round(),
            process,
            start_cell: col as u32,
            end_cell: (col + t) as u32,
            b_cells: b_cells as u32,
            f_cells: f_cells as u32,
        });
        col += t;
    }
    out.extend(entries);
    Ok(())
}

fn place_gen(
    pool: &mut SharedResourcePool,
    svc: ServiceId,
    g: &GenAlloc,
    cr: u32,
    client: u32,
) -> Result<Option<TimelineEntry>> {
    let (x, y) = (cells(g.x), cells(g.y));
    if x == 0 {
        return Ok(None);
    }
    if y > 0 {
        pool.reserve(&Region::time_freq(0..x, 0..y), svc)?;
    }
    Ok(Some(TimelineEntry {
        cr,
        client,
        ir: svc.round(),
        process: Process::Sensing,
        start_cell: 0,
        end_cell: x as u32,
        b_cells: y as u32,
        f_cells: 0,
    }))
}

/// Lays out one communication round for every client.
///
/// Sensing of IR `cr` is capped at `min(T̃, t_delta)` columns. Consumption
/// of IR `cr − 1` takes the whole round. When sensing bandwidth collides
/// with the model transfers, sensing is redone once with the band narrowed
/// by the widest transfer, keeping as many samples as the narrower band
/// allows; if none fit, the client's sensing is dropped for the round.
pub fn plan_round(
    cr: u32,
    t_delta: u32,
    dims: (usize, usize, usize),
    work: &[ClientWork],
) -> Result<(RoundPlan, Vec<SharedResourcePool>)> {
    if cr == 0 {
        return Err(Error::InvalidArgument("communication rounds are 1-based".into()));
    }
    let (tt, bt, ft) = dims;
    let gen_budget = (t_delta as usize).min(tt) as u32;
    let mut plans = Vec::with_capacity(work.len());
    let mut pools = Vec::with_capacity(work.len());
    let mut timeline = Vec::new();

    for w in work {
        let mut pool = SharedResourcePool::new(tt, bt, ft)?;
        let mut plan = ClientPlan {
            client: w.client,
            gen: None,
            consumption: None,
            revised: false,
            trimmed_to: None,
            dropped: None,
        };
        if let Some(c) = &w.consumption {
            let svc = ServiceId::new(cr - 1, w.client);
            let total: f64 = c.iter().map(|b| b.t).sum();
            if cells(total) > tt {
                plan.dropped = Some(format!("consumption needs {total} of {tt} time cells"));
            } else {
                match place_consumption(&mut pool, svc, c, cr, w.client, &mut timeline) {
                    Ok(()) => plan.consumption = Some(*c),
                    Err(e) => plan.dropped = Some(format!("consumption placement failed: {e}")),
                }
            }
        }
        if let Some(req) = &w.gen {
            let svc = ServiceId::new(cr, w.client);
            let mut g = req.alloc;
            if cells(g.x) > gen_budget as usize {
                plan.dropped = Some(format!("sensing needs {} of {gen_budget} time cells", g.x));
            } else {
                let mut trial = pool.clone();
                let placed = match place_gen(&mut trial, svc, &g, cr, w.client) {
                    Ok(e) => Some((trial, e)),
                    Err(Error::Conflict { .. }) => {
                        let widest = plan
                            .consumption
                            .map(|c| cells(c[0].w).max(cells(c[2].w)))
                            .unwrap_or(0);
                        let narrowed = bt.saturating_sub(widest) as u64;
                        let fit = gen_mtv(req.a, req.b, gen_budget as f64, narrowed as f64).max(0) as u64;
                        let n = req.n.min(fit);
                        let revised = if n == 0 {
                            None
                        } else {
                            quantize_generation(n as f64, req.a, req.b, &req.prices, gen_budget as u64, narrowed)
                        };
                        match revised {
                            Some(r) => {
                                g = r;
                                plan.revised = true;
                                if n < req.n {
                                    plan.trimmed_to = Some(n);
                                }
                                let mut trial = pool.clone();
                                place_gen(&mut trial, svc, &g, cr, w.client).ok().map(|e| (trial, e))
                            }
                            None => None,
                        }
                    }
                    Err(e) => return Err(e),
                };
                match placed {
                    Some((p, entry)) => {
                        pool = p;
                        timeline.extend(entry);
                        plan.gen = Some(g);
                    }
                    None => plan.dropped = Some("sensing does not fit beside the model transfers".into()),
                }
            }
        }
        plans.push(plan);
        pools.push(pool);
    }
    Ok((
        RoundPlan {
            cr,
            t_delta,
            gen_budget,
            dims,
            clients: plans,
            timeline,
        },
        pools,
    ))
}

/// Checks timing order and per-column capacity of a plan from its timeline
/// alone. Returns one message per violation.
pub fn audit_plan(plan: &RoundPlan) -> Vec<String> {
    let (tt, bt, ft) = plan.dims;
    let mut issues = Vec::new();
    let mut clients: Vec<u32> = plan.timeline.iter().map(|e| e.client).collect();
    clients.sort_unstable();
    clients.dedup();
    for c in clients {
        let mine: Vec<&TimelineEntry> = plan.timeline.iter().filter(|e| e.client == c).collect();
        let find = |p: Process| mine.iter().find(|e| e.process == p);
        let mut prev_end = 0;
        for p in [Process::CommDown, Process::Comp, Process::CommUp] {
            if let Some(e) = find(p) {
                if e.start_cell < prev_end {
                    issues.push(format!("cr {} client {c}: {} starts before its predecessor ends", plan.cr, p.name()));
                }
                prev_end = e.end_cell;
            }
        }
        if prev_end as usize > tt {
            issues.push(format!("cr {} client {c}: consumption overruns the round", plan.cr));
        }
        if let Some(s) = find(Process::Sensing) {
            if s.end_cell > plan.gen_budget {
                issues.push(format!("cr {} client {c}: sensing exceeds its {} cell budget", plan.cr, plan.gen_budget));
            }
        }
        for col in 0..tt as u32 {
            let live = mine.iter().filter(|e| e.start_cell <= col && col < e.end_cell);
            let (b, f) = live.fold((0, 0), |(b, f), e| (b + e.b_cells, f + e.f_cells));
            if b as usize > bt {
                issues.push(format!("cr {} client {c}: column {col} uses {b} of {bt} frequency cells", plan.cr));
            }
            if f as usize > ft {
                issues.push(format!("cr {} client {c}: column {col} uses {f} of {ft} compute cells", plan.cr));
            }
        }
    }
    issues
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bl(t: f64, w: f64) -> Bilinear {
        Bilinear { t, w }
    }

    fn prices() -> PriceVector {
        PriceVector {
            dt: 1.0,
            db: 1.0,
            ds: 1.0,
            dtheta: 1.0,
            df: 1.0,
        }
    }

    #[test]
    fn round_counts() {
        assert_eq!(rounds_to_complete(1, PipelineMode::Zeros).unwrap(), 2);
        assert_eq!(rounds_to_complete(1, PipelineMode::Serial).unwrap(), 2);
        assert_eq!(rounds_to_complete(10, PipelineMode::Zeros).unwrap(), 11);
        assert_eq!(rounds_to_complete(10, PipelineMode::Serial).unwrap(), 20);
        let r = 1_000_000;
        let ratio = rounds_to_complete(r, PipelineMode::Zeros).unwrap() as f64
            / rounds_to_complete(r, PipelineMode::Serial).unwrap() as f64;
        assert!((ratio - 0.5).abs() < 1e-5);
        assert!(rounds_to_complete(0, PipelineMode::Zeros).is_err());
    }

    #[test]
    fn cycle_is_slowest_client() {
        let g = GenAlloc::default();
        let prev = [(g, [bl(1.0, 1.0), bl(1.0, 1.0), bl(1.0, 1.0)]), (g, [bl(1.0, 1.0), bl(2.0, 1.0), bl(1.0, 1.0)])];
        assert_eq!(cycle_time(&prev, 10), 4);
        assert_eq!(cycle_time(&[], 10), 10);
    }

    #[test]
    fn plan_respects_order_and_capacity() {
        let work = [ClientWork {
            client: 3,
            gen: Some(GenRequest {
                alloc: GenAlloc { x: 4.0, y: 2.0, z: 4.0 },
                n: 10,
                a: 1.0,
                b: 1.0,
                prices: prices(),
            }),
            consumption: Some([bl(2.0, 3.0), bl(3.0, 4.0), bl(1.0, 2.0)]),
        }];
        let (plan, pools) = plan_round(2, 10, (10, 8, 10), &work).unwrap();
        assert!(audit_plan(&plan).is_empty(), "{:?}", audit_plan(&plan));
        assert_eq!(plan.clients[0].dropped, None);
        assert_eq!(plan.timeline.len(), 4);
        assert_eq!(pools[0].per_quantum_bandwidth_load(0), 5);
        assert_eq!(pools[0].per_quantum_compute_load(3), 4);
    }

    #[test]
    fn saturated_band_triggers_revision() {
        // Sensing wants 5 rows under a 4-row downlink in an 8-row band.
        let work = [ClientWork {
            client: 0,
            gen: Some(GenRequest {
                alloc: GenAlloc { x: 2.0, y: 5.0, z: 2.0 },
                n: 12,
                a: 1.0,
                b: 1.0,
                prices: prices(),
            }),
            consumption: Some([bl(2.0, 4.0), bl(2.0, 1.0), bl(2.0, 4.0)]),
        }];
        let (plan, pools) = plan_round(2, 10, (10, 8, 10), &work).unwrap();
        let c = &plan.clients[0];
        assert!(c.revised && c.dropped.is_none(), "{c:?}");
        let g = c.gen.unwrap();
        assert!(g.y <= 4.0 && g.x + g.x * g.y >= 12.0);
        assert!(audit_plan(&plan).is_empty());
        for col in 0..10 {
            assert!(pools[0].per_quantum_bandwidth_load(col) <= 8);
        }
    }

    #[test]
    fn oversize_sensing_dropped() {
        let work = [ClientWork {
            client: 0,
            gen: Some(GenRequest {
                alloc: GenAlloc { x: 6.0, y: 0.0, z: 0.0 },
                n: 6,
                a: 1.0,
                b: 0.0,
                prices: prices(),
            }),
            consumption: None,
        }];
        let (plan, _) = plan_round(1, 4, (10, 8, 10), &work).unwrap();
        assert!(plan.clients[0].dropped.is_some());
        assert!(plan.clients[0].gen.is_none());
    }

    #[test]
    fn audit_catches_overlap() {
        let mut plan = RoundPlan {
            cr: 1,
            t_delta: 10,
            gen_budget: 10,
            dims: (10, 4, 4),
            clients: Vec::new(),
            timeline: vec![
                TimelineEntry { cr: 1, client: 0, ir: 0, process: Process::CommDown, start_cell: 0, end_cell: 3, b_cells: 3, f_cells: 0 },
                TimelineEntry { cr: 1, client: 0, ir: 0, process: Process::Comp, start_cell: 2, end_cell: 4, b_cells: 0, f_cells: 2 },
            ],
        };
        assert_eq!(audit_plan(&plan).len(), 1);
        plan.timeline.push(TimelineEntry { cr: 1, client: 0, ir: 1, process: Process::Sensing, start_cell: 0, end_cell: 2, b_cells: 2, f_cells: 0 });
        assert_eq!(audit_plan(&plan).len(), 3);
    }
}
