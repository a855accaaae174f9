//! Delay, throughput, occupancy and ordering statistics, and the CSV row
//! format used by sweeps.

use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::queueing::Cell;

/// Column names of a results row, in order.
pub const CSV_COLUMNS: [&str; 15] = [
    "scenario_id",
    "pattern",
    "N",
    "k",
    "load",
    "omega_or_l_or_h",
    "throughput_abs",
    "throughput_rel",
    "mean_delay",
    "p99_delay",
    "max_vomq",
    "max_cb",
    "mean_cb",
    "in_order_violations",
    "seed",
];

pub fn csv_header() -> String {
    CSV_COLUMNS.join(",")
}

/// Per-flow in-order checker at the output ports.
///
/// A departure is a violation when a later cell of the same flow has
/// already left, so a single swap counts once.
#[derive(Debug, Clone)]
pub struct OrderChecker {
    ports: usize,
    next: Vec<u64>,
    violations: u64,
}

impl OrderChecker {
    pub fn new(ports: usize) -> Self {
        Self {
            ports,
            next: vec![0; ports * ports],
            violations: 0,
        }
    }

    /// Records a departure; returns the error describing the first
    /// violation it detects.
    pub fn observe(&mut self, cell: &Cell, t: u64) -> Result<()> {
        let slot = &mut self.next[cell.src * self.ports + cell.dst];
        if cell.seq < *slot {
            self.violations += 1;
            return Err(Error::OutOfOrder {
                src: cell.src,
                dst: cell.dst,
                expected: *slot,
                got: cell.seq,
                slot: t,
            });
        }
        *slot = cell.seq + 1;
        Ok(())
    }

    pub fn violations(&self) -> u64 {
        self.violations
    }
}

/// Raw counters for one measurement window. Every derived statistic is
/// computed from these, so merging two reports is plain addition.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct MetricsReport {
    pub ports: usize,
    pub measure_slots: u64,
    /// Cells that entered a VOQ during the window.
    pub offered: u64,
    /// Cells that left an output port during the window.
    pub departed: u64,
    /// Cells injected / delivered over the whole run, warmup included.
    pub injected_total: u64,
    pub departed_total: u64,
    pub delay_sum: u64,
    /// `delay_histogram[d]` counts departures with delay `d`.
    pub delay_histogram: Vec<u64>,
    pub max_vomq: usize,
    pub max_cb: usize,
    /// Sum over window slots of total crosspoint-buffer occupancy.
    pub cb_occupancy_sum: u64,
    /// Crosspoint buffers that received at least one cell in the window.
    pub active_cbs: usize,
    pub in_order_violations: u64,
    pub pause_signals: u64,
}

impl MetricsReport {
    pub fn new(ports: usize) -> Self {
        Self {
            ports,
            ..Self::default()
        }
    }

    /// Counts a departure at slot `t` inside the window.
    pub fn record_departure(&mut self, cell: &Cell, t: u64) {
        let d = (t - cell.t_arrival) as usize;
        if self.delay_histogram.len() <= d {
            self.delay_histogram.resize(d + 1, 0);
        }
        self.delay_histogram[d] += 1;
        self.delay_sum += d as u64;
        self.departed += 1;
    }

    /// Departures per output port per slot.
    pub fn throughput_abs(&self) -> f64 {
        let denom = self.ports as f64 * self.measure_slots as f64;
        if denom == 0.0 {
            0.0
        } else {
            self.departed as f64 / denom
        }
    }

    /// Departures relative to offered cells; 0 when nothing was offered.
    pub fn throughput_rel(&self) -> f64 {
        if self.offered == 0 {
            0.0
        } else {
            self.departed as f64 / self.offered as f64
        }
    }

    pub fn offered_load(&self) -> f64 {
        let denom = self.ports as f64 * self.measure_slots as f64;
        if denom == 0.0 {
            0.0
        } else {
            self.offered as f64 / denom
        }
    }

    pub fn mean_delay(&self) -> f64 {
        if self.departed == 0 {
            0.0
        } else {
            self.delay_sum as f64 / self.departed as f64
        }
    }

    /// Delay quantile `q` in `(0, 1]`; 0 for an empty histogram.
    pub fn delay_quantile(&self, q: f64) -> u64 {
        let total: u64 = self.delay_histogram.iter().sum();
        if total == 0 {
            return 0;
        }
        let target = (q * total as f64).ceil().max(1.0) as u64;
        let mut acc = 0;
        for (d, &c) in self.delay_histogram.iter().enumerate() {
            acc += c;
            if acc >= target {
                return d as u64;
            }
        }
        (self.delay_histogram.len() - 1) as u64
    }

    pub fn p99_delay(&self) -> u64 {
        self.delay_quantile(0.99)
    }

    /// Time-averaged occupancy of the crosspoint buffers that carried
    /// traffic.
    pub fn mean_cb(&self) -> f64 {
        let denom = self.measure_slots as f64 * self.active_cbs as f64;
        if denom == 0.0 {
            0.0
        } else {
            self.cb_occupancy_sum as f64 / denom
        }
    }

    /// Combines two reports over disjoint windows of the same switch.
    pub fn merge(&self, other: &MetricsReport) -> MetricsReport {
        let mut hist = self.delay_histogram.clone();
        if hist.len() < other.delay_histogram.len() {
            hist.resize(other.delay_histogram.len(), 0);
        }
        for (h, o) in hist.iter_mut().zip(&other.delay_histogram) {
            *h += o;
        }
        MetricsReport {
            ports: self.ports.max(other.ports),
            measure_slots: self.measure_slots + other.measure_slots,
            offered: self.offered + other.offered,
            departed: self.departed + other.departed,
            injected_total: self.injected_total + other.injected_total,
            departed_total: self.departed_total + other.departed_total,
            delay_sum: self.delay_sum + other.delay_sum,
            delay_histogram: hist,
            max_vomq: self.max_vomq.max(other.max_vomq),
            max_cb: self.max_cb.max(other.max_cb),
            cb_occupancy_sum: self.cb_occupancy_sum + other.cb_occupancy_sum,
            active_cbs: self.active_cbs.max(other.active_cbs),
            in_order_violations: self.in_order_violations + other.in_order_violations,
            pause_signals: self.pause_signals + other.pause_signals,
        }
    }
}

/// Identifying columns of a results row.
#[derive(Debug, Clone, PartialEq)]
pub struct RowLabel {
    pub scenario_id: String,
    pub pattern: String,
    pub n_ports: usize,
    pub k: usize,
    pub load: f64,
    /// Pattern parameter: ω, burst length or hot-spot port; empty if none.
    pub param: String,
    pub seed: u64,
}

/// One CSV line, without a trailing newline. Floats use a fixed number of
/// decimals so output is byte-stable.
pub fn csv_row(label: &RowLabel, r: &MetricsReport) -> String {
    let mut s = String::new();
    let _ = write!(
        s,
        "{},{},{},{},{:.4},{},{:.6},{:.6},{:.4},{},{},{},{:.6},{},{}",
        label.scenario_id,
        label.pattern,
        label.n_ports,
        label.k,
        label.load,
        label.param,
        r.throughput_abs(),
        r.throughput_rel(),
        r.mean_delay(),
        r.p99_delay(),
        r.max_vomq,
        r.max_cb,
        r.mean_cb(),
        r.in_order_violations,
        label.seed,
    );
    s
}
