//! Resource prices, schedules and the unconstrained minimum-cost solutions
//! of each sub-process.
//!
//! Everything here works in cell units. A communication of `D` bits over a
//! link with spectral efficiency `c` needs `W = D / (c·β·τ)` time×frequency
//! cells; a computation of `C` cycles needs `W = C / (q·τ)` time×compute
//! cells. Each process then obeys the bilinear law `t·w = W`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::resource_pool::ResourceQuanta;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PriceVector {
    /// Per time cell.
    pub dt: f64,
    /// Per frequency cell.
    pub db: f64,
    /// Per sample paid by the server.
    pub ds: f64,
    /// Per unit of learning gain paid by the application.
    pub dtheta: f64,
    /// Per compute cell.
    pub df: f64,
}

impl Default for PriceVector {
    fn default() -> Self {
        PriceVector {
            dt: 1.0,
            db: 1.0,
            ds: 0.05,
            dtheta: 10.0,
            df: 1.0,
        }
    }
}

impl PriceVector {
    pub fn validate(&self) -> Result<()> {
        let all = [self.dt, self.db, self.ds, self.dtheta, self.df];
        if all.iter().all(|p| p.is_finite() && *p > 0.0) {
            Ok(())
        } else {
            Err(Error::InvalidArgument(format!(
                "prices must be finite and positive: {self:?}"
            )))
        }
    }
}

/// Sensing allocation: `x` visual time, `y` wireless bandwidth, `z` wireless
/// time (never longer than `x`).
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct GenAlloc {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

/// Time `t` and width `w` (frequency or compute cells) of one process.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Bilinear {
    pub t: f64,
    pub w: f64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct ScheduleDecision {
    pub gen: GenAlloc,
    pub comm_down: Bilinear,
    pub comp: Bilinear,
    pub comm_up: Bilinear,
}

/// Cost split by resource kind.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct CostBreakdown {
    pub time: f64,
    pub freq: f64,
    pub compute: f64,
}

impl CostBreakdown {
    pub fn total(&self) -> f64 {
        self.time + self.freq + self.compute
    }
}

impl ScheduleDecision {
    pub fn gen_cost(&self, prices: &PriceVector) -> f64 {
        gen_cost(&self.gen, prices)
    }

    pub fn consumption_time(&self) -> f64 {
        self.comm_down.t + self.comp.t + self.comm_up.t
    }

    pub fn total_time(&self) -> f64 {
        self.gen.x + self.consumption_time()
    }

    pub fn total_freq(&self) -> f64 {
        self.gen.y + self.comm_down.w + self.comm_up.w
    }

    pub fn breakdown(&self, prices: &PriceVector) -> CostBreakdown {
        CostBreakdown {
            time: prices.dt * self.total_time(),
            freq: prices.db * self.total_freq(),
            compute: prices.df * self.comp.w,
        }
    }

    pub fn cost(&self, prices: &PriceVector) -> f64 {
        self.breakdown(prices).total()
    }
}

/// `x·Δt + y·Δb`; wireless sensing time rides under visual time.
pub fn gen_cost(gen: &GenAlloc, prices: &PriceVector) -> f64 {
    gen.x * prices.dt + gen.y * prices.db
}

/// Consumption workload of one service: model sizes, cycles per sample and
/// the spectral efficiencies of both links.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConsumptionTask {
    pub d_down: f64,
    pub d_up: f64,
    pub kappa: f64,
    pub c_down: f64,
    pub c_up: f64,
}

impl ConsumptionTask {
    /// Cell workloads `(W_down, W_comp, W_up)` for `n` samples.
    pub fn cell_work(&self, n: f64, quanta: &ResourceQuanta) -> Result<[f64; 3]> {
        Ok([
            comm_cells(self.d_down, self.c_down, quanta)?,
            self.comp_cells_per_sample(quanta) * n,
            comm_cells(self.d_up, self.c_up, quanta)?,
        ])
    }

    pub fn comp_cells_per_sample(&self, quanta: &ResourceQuanta) -> f64 {
        self.kappa / (quanta.compute * quanta.time)
    }
}

/// Time×frequency cells needed to move `bits` at spectral efficiency `c`.
pub fn comm_cells(bits: f64, c: f64, quanta: &ResourceQuanta) -> Result<f64> {
    if bits == 0.0 {
        return Ok(0.0);
    }
    if !(c > 0.0) {
        return Err(Error::LinkUnusable(format!(
            "spectral efficiency {c} cannot carry {bits} bits"
        )));
    }
    Ok(bits / (c * quanta.freq * quanta.time))
}

/// Minimizer of `Δt·t + p·w` subject to `t·w = work`.
pub fn bilinear_optimum(work: f64, dt: f64, p: f64) -> (Bilinear, f64) {
    if work <= 0.0 {
        return (Bilinear::default(), 0.0);
    }
    let t = (work * p / dt).sqrt();
    let w = (work * dt / p).sqrt();
    (Bilinear { t, w }, 2.0 * (work * dt * p).sqrt())
}

/// Unconstrained minimum-cost sensing allocation for `n` samples.
///
/// Falls back to pure visual sensing when the interior optimum would need
/// negative bandwidth or when the wireless channel yields nothing.
pub fn unconstrained_gen_schedule(n: f64, a: f64, b: f64, prices: &PriceVector) -> Result<(GenAlloc, f64)> {
    if n <= 0.0 {
        return Ok((GenAlloc::default(), 0.0));
    }
    if a <= 0.0 && b <= 0.0 {
        return Err(Error::Infeasible(format!(
            "client senses no samples but {n} were requested"
        )));
    }
    if b > 0.0 {
        let x0 = (n * prices.db / (b * prices.dt)).sqrt();
        let y0 = ((n * b * prices.dt / prices.db).sqrt() - a) / b;
        if y0 >= 0.0 {
            let cost = 2.0 * (n * prices.dt * prices.db / b).sqrt() - a * prices.db / b;
            return Ok((GenAlloc { x: x0, y: y0, z: x0 }, cost));
        }
    }
    let x = n / a;
    Ok((GenAlloc { x, y: 0.0, z: 0.0 }, x * prices.dt))
}

/// Unconstrained minimum-cost transfer of `bits` at spectral efficiency `c`.
pub fn unconstrained_comm_schedule(
    bits: f64,
    c: f64,
    prices: &PriceVector,
    quanta: &ResourceQuanta,
) -> Result<(Bilinear, f64)> {
    let work = comm_cells(bits, c, quanta)?;
    Ok(bilinear_optimum(work, prices.dt, prices.db))
}

/// Unconstrained minimum-cost computation of `cycles`.
pub fn unconstrained_comp_schedule(cycles: f64, prices: &PriceVector, quanta: &ResourceQuanta) -> (Bilinear, f64) {
    bilinear_optimum(cycles / (quanta.compute * quanta.time), prices.dt, prices.df)
}

/// Sum of the four unconstrained sub-process minima.
pub fn total_min_cost_unconstrained(
    n: f64,
    a: f64,
    b: f64,
    task: &ConsumptionTask,
    prices: &PriceVector,
    quanta: &ResourceQuanta,
) -> Result<f64> {
    let (_, g) = unconstrained_gen_schedule(n, a, b, prices)?;
    let (_, down) = unconstrained_comm_schedule(task.d_down, task.c_down, prices, quanta)?;
    let (_, comp) = unconstrained_comp_schedule(task.kappa * n, prices, quanta);
    let (_, up) = unconstrained_comm_schedule(task.d_up, task.c_up, prices, quanta)?;
    Ok(g + down + comp + up)
}
