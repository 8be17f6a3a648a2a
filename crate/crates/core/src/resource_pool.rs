//! Quantized shared resource pools.
//!
//! Each client owns one pool per communication round: a frequency×time
//! occupancy grid and a compute×time occupancy grid sharing one time axis.
//! Reservations are rectangular and audited; the pool never places work on
//! its own, it only records what the scheduler decided and rejects overlaps.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Physical size of one cell along each resource axis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ResourceQuanta {
    /// Seconds per time cell.
    pub time: f64,
    /// Hz per frequency cell.
    pub freq: f64,
    /// CPU cycles per second per compute cell.
    pub compute: f64,
}

/// Bandwidth of 100 resource blocks of 12 subcarriers at 30 kHz spacing.
pub const HZ_PER_100_RB: f64 = 100.0 * 12.0 * 30e3;

impl Default for ResourceQuanta {
    fn default() -> Self {
        ResourceQuanta {
            time: 1.0,
            freq: HZ_PER_100_RB,
            compute: 1e5,
        }
    }
}

impl ResourceQuanta {
    pub fn new(time: f64, freq: f64, compute: f64) -> Result<Self> {
        for (name, v) in [("time", time), ("freq", freq), ("compute", compute)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidArgument(format!(
                    "{name} quantum must be positive, got {v}"
                )));
            }
        }
        Ok(ResourceQuanta { time, freq, compute })
    }
}

/// Identifies one MFP service (one client in one ISCC round).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct ServiceId(pub u64);

impl ServiceId {
    pub fn new(round: u32, client: u32) -> Self {
        ServiceId(((round as u64) << 32) | client as u64)
    }

    pub fn round(self) -> u32 {
        (self.0 >> 32) as u32
    }

    pub fn client(self) -> u32 {
        self.0 as u32
    }
}

impl fmt::Display for ServiceId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "r{}c{}", self.round(), self.client())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Grid {
    TimeFreq,
    TimeCompute,
}

/// A rectangular block of cells: `rows` along the resource axis, `cols` along time.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Region {
    pub grid: Grid,
    pub cols: Range<usize>,
    pub rows: Range<usize>,
}

impl Region {
    pub fn time_freq(cols: Range<usize>, rows: Range<usize>) -> Self {
        Region {
            grid: Grid::TimeFreq,
            cols,
            rows,
        }
    }

    pub fn time_compute(cols: Range<usize>, rows: Range<usize>) -> Self {
        Region {
            grid: Grid::TimeCompute,
            cols,
            rows,
        }
    }
}

/// Cells counted per direction, first-occupied rule.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ResourceConsumption {
    pub t: usize,
    pub b: usize,
    pub f: usize,
}

impl std::ops::Add for ResourceConsumption {
    type Output = ResourceConsumption;
    fn add(self, o: Self) -> Self {
        ResourceConsumption {
            t: self.t + o.t,
            b: self.b + o.b,
            f: self.f + o.f,
        }
    }
}

impl std::ops::AddAssign for ResourceConsumption {
    fn add_assign(&mut self, o: Self) {
        *self = *self + o;
    }
}

#[derive(Debug, Clone, Default)]
struct Footprint {
    cols: BTreeSet<usize>,
    freq_rows: BTreeSet<usize>,
    compute_rows: BTreeSet<usize>,
}

#[derive(Debug, Clone)]
pub struct SharedResourcePool {
    time_cells: usize,
    freq_cells: usize,
    compute_cells: usize,
    // Row-major: index = row * time_cells + col.
    tf: Vec<Option<ServiceId>>,
    tc: Vec<Option<ServiceId>>,
    footprints: BTreeMap<ServiceId, Footprint>,
}

impl SharedResourcePool {
    pub fn new(time_cells: usize, freq_cells: usize, compute_cells: usize) -> Result<Self> {
        if time_cells == 0 || freq_cells == 0 || compute_cells == 0 {
            return Err(Error::InvalidArgument(format!(
                "pool dimensions must be >= 1, got ({time_cells}, {freq_cells}, {compute_cells})"
            )));
        }
        Ok(SharedResourcePool {
            time_cells,
            freq_cells,
            compute_cells,
            tf: vec![None; freq_cells * time_cells],
            tc: vec![None; compute_cells * time_cells],
            footprints: BTreeMap::new(),
        })
    }

    pub fn time_cells(&self) -> usize {
        self.time_cells
    }

    pub fn freq_cells(&self) -> usize {
        self.freq_cells
    }

    pub fn compute_cells(&self) -> usize {
        self.compute_cells
    }

    fn grid(&self, grid: Grid) -> (&[Option<ServiceId>], usize) {
        match grid {
            Grid::TimeFreq => (&self.tf, self.freq_cells),
            Grid::TimeCompute => (&self.tc, self.compute_cells),
        }
    }

    pub fn holder(&self, grid: Grid, row: usize, col: usize) -> Option<ServiceId> {
        let (cells, rows) = self.grid(grid);
        if row >= rows || col >= self.time_cells {
            return None;
        }
        cells[row * self.time_cells + col]
    }

    /// Marks `region` as held by `service` and returns the cells newly counted
    /// for that service.
    ///
    /// The whole region is checked before anything is written, so a failed
    /// reservation leaves the pool untouched. Cells already held by the same
    /// service are accepted and not counted twice.
    pub fn reserve(&mut self, region: &Region, service: ServiceId) -> Result<ResourceConsumption> {
        let (cells, rows) = self.grid(region.grid);
        if region.cols.start > region.cols.end
            || region.rows.start > region.rows.end
            || region.cols.end > self.time_cells
            || region.rows.end > rows
        {
            return Err(Error::InvalidArgument(format!(
                "region {:?} x {:?} outside {}x{} grid",
                region.rows, region.cols, rows, self.time_cells
            )));
        }
        for row in region.rows.clone() {
            for col in region.cols.clone() {
                if let Some(holder) = cells[row * self.time_cells + col] {
                    if holder != service {
                        return Err(Error::Conflict {
                            row,
                            col,
                            holder,
                            requester: service,
                        });
                    }
                }
            }
        }
        if region.rows.is_empty() || region.cols.is_empty() {
            return Ok(ResourceConsumption::default());
        }

        let width = self.time_cells;
        let cells = match region.grid {
            Grid::TimeFreq => &mut self.tf,
            Grid::TimeCompute => &mut self.tc,
        };
        for row in region.rows.clone() {
            for col in region.cols.clone() {
                cells[row * width + col] = Some(service);
            }
        }

        let fp = self.footprints.entry(service).or_default();
        let mut used = ResourceConsumption::default();
        for col in region.cols.clone() {
            if fp.cols.insert(col) {
                used.t += 1;
            }
        }
        let row_set = match region.grid {
            Grid::TimeFreq => &mut fp.freq_rows,
            Grid::TimeCompute => &mut fp.compute_rows,
        };
        let mut new_rows = 0;
        for row in region.rows.clone() {
            if row_set.insert(row) {
                new_rows += 1;
            }
        }
        match region.grid {
            Grid::TimeFreq => used.b = new_rows,
            Grid::TimeCompute => used.f = new_rows,
        }
        Ok(used)
    }

    /// Total consumption recorded for `service` so far.
    pub fn consumption_of(&self, service: ServiceId) -> ResourceConsumption {
        self.footprints
            .get(&service)
            .map(|fp| ResourceConsumption {
                t: fp.cols.len(),
                b: fp.freq_rows.len(),
                f: fp.compute_rows.len(),
            })
            .unwrap_or_default()
    }

    /// Number of occupied frequency cells in time column `col`.
    pub fn per_quantum_bandwidth_load(&self, col: usize) -> usize {
        self.column_load(Grid::TimeFreq, col)
    }

    /// Number of occupied compute cells in time column `col`.
    pub fn per_quantum_compute_load(&self, col: usize) -> usize {
        self.column_load(Grid::TimeCompute, col)
    }

    fn column_load(&self, grid: Grid, col: usize) -> usize {
        let (cells, rows) = self.grid(grid);
        if col >= self.time_cells {
            return 0;
        }
        (0..rows)
            .filter(|r| cells[r * self.time_cells + col].is_some())
            .count()
    }

    pub fn snapshot(&self) -> PoolSnapshot {
        let mut occupied = Vec::new();
        for (grid, cells, rows) in [
            (Grid::TimeFreq, &self.tf, self.freq_cells),
            (Grid::TimeCompute, &self.tc, self.compute_cells),
        ] {
            for row in 0..rows {
                for col in 0..self.time_cells {
                    if let Some(service) = cells[row * self.time_cells + col] {
                        occupied.push(OccupiedCell {
                            grid,
                            row,
                            col,
                            service,
                        });
                    }
                }
            }
        }
        PoolSnapshot {
            time_cells: self.time_cells,
            freq_cells: self.freq_cells,
            compute_cells: self.compute_cells,
            occupied,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OccupiedCell {
    pub grid: Grid,
    pub row: usize,
    pub col: usize,
    pub service: ServiceId,
}

/// JSON-friendly dump of a pool.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoolSnapshot {
    pub time_cells: usize,
    pub freq_cells: usize,
    pub compute_cells: usize,
    pub occupied: Vec<OccupiedCell>,
}

impl PoolSnapshot {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("snapshot serializes")
    }
}
