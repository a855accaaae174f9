//! Slot-synchronous simulation of the fabric, and the output-queued
//! reference switch.
//!
//! Each call to [`Fabric::step`] runs one slot in a fixed phase order:
//!
//! 1. every OP serves at most one cell, round-robin over its `m` CBs;
//! 2. every CIM link forwards the head of the VOMQ its COM currently
//!    connects to, into the CB for the cell's output, unless that CB is full;
//! 3. every IP forwards the head of one eligible VOQ, round-robin, through
//!    its current IM/CIM path into a VOMQ, and arms that VOQ's hold-down
//!    timer;
//! 4. this slot's arrivals enter their VOQs;
//! 5. VOMQs and CBs evaluate their pause/resume thresholds.
//!
//! Departures run before transfers, so a cell moves through at most one
//! stage per slot.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::error::{Error, QueueKind, Result};
use crate::flow_control::{Capacities, PauseState, ThresholdConfig};
use crate::metrics::{MetricsReport, OrderChecker, RowLabel};
use crate::queueing::{
    cb_index, vomq_for, vomq_index, voq_index, Cell, CellQueue, CrosspointId, VomqId,
};
use crate::schedule::{com_route, SlotSchedule};
use crate::sequencing::{HoldDownTimer, InputPortCounters};
use crate::topology::{PortAddress, SwitchGeometry};
use crate::traffic::TrafficSpec;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FabricConfig {
    pub geometry: SwitchGeometry,
    pub capacities: Capacities,
    pub thresholds: ThresholdConfig,
    /// Stop with an error at the first out-of-order delivery instead of
    /// only counting it.
    pub abort_on_reorder: bool,
    /// Keep a per-cell log of stage transitions.
    pub trace: bool,
    pub op_arbiter: OpArbiter,
    /// Arm hold-down timers; off only for ablation runs.
    pub hold_down: bool,
}

/// How an OP chooses among its non-empty CBs.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OpArbiter {
    /// Round-robin over the `m` CBs, pointer one past the last served.
    #[default]
    RoundRobin,
    /// The head cell that entered its CB earliest, ties broken
    /// round-robin. Serves the OP's CBs as one FIFO.
    OldestFirst,
}

impl FabricConfig {
    pub fn new(geometry: SwitchGeometry) -> Self {
        let capacities = Capacities::default();
        Self {
            geometry,
            capacities,
            thresholds: ThresholdConfig::defaults_for(&capacities),
            abort_on_reorder: true,
            trace: false,
            op_arbiter: OpArbiter::RoundRobin,
            hold_down: true,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.thresholds.validate(&self.capacities)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TraceStage {
    VoqToVomq(VomqId),
    VomqToCb(CrosspointId),
    OpDepart,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TraceEvent {
    pub slot: u64,
    pub stage: TraceStage,
    pub src: usize,
    pub dst: usize,
    pub seq: u64,
}

/// Cell movements in one slot.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct StepCounts {
    pub arrivals: u32,
    pub voq_to_vomq: u32,
    pub vomq_to_cb: u32,
    pub departures: u32,
}

/// Buffering stages, in path order.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Voq = 0,
    Vomq = 1,
    Crosspoint = 2,
}

/// The complete state of one switch.
#[derive(Debug, Clone)]
pub struct Fabric {
    cfg: FabricConfig,
    geo: SwitchGeometry,
    schedule: SlotSchedule,
    t: u64,
    voqs: Vec<CellQueue>,
    /// Per IP, a bitmask of non-empty VOQs.
    voq_mask: Vec<u64>,
    mask_words: usize,
    ip_ptr: Vec<usize>,
    timers: Vec<HoldDownTimer>,
    vomqs: Vec<CellQueue>,
    cbs: Vec<CellQueue>,
    /// Cells held in each OP's CBs.
    op_load: Vec<usize>,
    op_ptr: Vec<usize>,
    cb_received: Vec<bool>,
    ipc: InputPortCounters,
    pause: PauseState,
    next_seq: Vec<u64>,
    order: OrderChecker,
    occupancy: [u64; 3],
    departed: Vec<Cell>,
    trace: Vec<TraceEvent>,
}

impl Fabric {
    pub fn new(cfg: FabricConfig) -> Result<Self> {
        cfg.validate()?;
        let geo = cfg.geometry;
        let n = geo.ports();
        let k = geo.k();
        let m = geo.m();
        let vomq_count = geo.links() * k;
        let cb_count = n * m;
        let mask_words = n.div_ceil(64);
        let caps = cfg.capacities;
        Ok(Self {
            cfg,
            geo,
            schedule: SlotSchedule::new(geo),
            t: 0,
            voqs: (0..n * n)
                .map(|i| CellQueue::new(QueueKind::Voq, i, None))
                .collect(),
            voq_mask: vec![0; n * mask_words],
            mask_words,
            ip_ptr: vec![0; n],
            timers: vec![HoldDownTimer::default(); n * n],
            vomqs: (0..vomq_count)
                .map(|i| CellQueue::new(QueueKind::Vomq, i, Some(caps.vomq)))
                .collect(),
            cbs: (0..cb_count)
                .map(|i| CellQueue::new(QueueKind::Crosspoint, i, Some(caps.cb)))
                .collect(),
            op_load: vec![0; n],
            op_ptr: vec![0; n],
            cb_received: vec![false; cb_count],
            ipc: InputPortCounters::new(vomq_count, cfg.thresholds.delay_vomq),
            pause: PauseState::new(cfg.thresholds, vomq_count, cb_count, m),
            next_seq: vec![0; n * n],
            order: OrderChecker::new(n),
            occupancy: [0; 3],
            departed: Vec::new(),
            trace: Vec::new(),
        })
    }

    pub fn config(&self) -> &FabricConfig {
        &self.cfg
    }

    pub fn geometry(&self) -> &SwitchGeometry {
        &self.geo
    }

    pub fn schedule(&self) -> &SlotSchedule {
        &self.schedule
    }

    /// The slot the next call to [`step`](Self::step) will simulate.
    pub fn slot(&self) -> u64 {
        self.t
    }

    pub fn voq_len(&self, u: usize, v: usize) -> usize {
        self.voqs[voq_index(u, v, &self.geo)].len()
    }

    pub fn vomq(&self, id: VomqId) -> &CellQueue {
        &self.vomqs[id.flat(&self.geo)]
    }

    pub fn vomq_len(&self, flat: usize) -> usize {
        self.vomqs[flat].len()
    }

    pub fn cb_len(&self, v: usize, r: usize) -> usize {
        self.cbs[cb_index(v, r, &self.geo)].len()
    }

    /// Cells currently held in `stage`, over all its queues.
    pub fn stage_occupancy(&self, stage: Stage) -> u64 {
        self.occupancy[stage as usize]
    }

    pub fn in_flight(&self) -> u64 {
        self.occupancy.iter().sum()
    }

    /// Largest single-VOMQ occupancy since the last window reset.
    pub fn max_vomq(&self) -> usize {
        self.vomqs
            .iter()
            .map(CellQueue::high_water)
            .max()
            .unwrap_or(0)
    }

    pub fn max_cb(&self) -> usize {
        self.cbs
            .iter()
            .map(CellQueue::high_water)
            .max()
            .unwrap_or(0)
    }

    /// Number of CBs that received a cell since the last window reset.
    pub fn active_cbs(&self) -> usize {
        self.cb_received.iter().filter(|&&b| b).count()
    }

    /// Starts a fresh measurement window for the high-water marks and the
    /// active-CB count.
    pub fn reset_window(&mut self) {
        self.vomqs.iter_mut().for_each(CellQueue::reset_high_water);
        self.cbs.iter_mut().for_each(CellQueue::reset_high_water);
        self.cb_received.iter_mut().for_each(|b| *b = false);
    }

    pub fn order_violations(&self) -> u64 {
        self.order.violations()
    }

    pub fn pause_signals(&self) -> u64 {
        self.pause.signals_issued()
    }

    pub fn trace(&self) -> &[TraceEvent] {
        &self.trace
    }

    /// Cells that left an OP during the last step.
    pub fn last_departures(&self) -> &[Cell] {
        &self.departed
    }

    /// Places `count` cells of flow `src -> dst` directly into a VOMQ,
    /// stamped as arriving now. Used to set up replay scenarios.
    pub fn preload_vomq(&mut self, id: VomqId, src: usize, dst: usize, count: usize) -> Result<()> {
        let n = self.geo.ports();
        for (what, index) in [("input port", src), ("output port", dst)] {
            if index >= n {
                return Err(Error::OutOfRange {
                    what,
                    index,
                    bound: n,
                });
            }
        }
        if dst / self.geo.m() != id.om {
            return Err(Error::InvalidScenario(format!(
                "output {dst} is not on OM {}",
                id.om
            )));
        }
        let qi = id.flat(&self.geo);
        for _ in 0..count {
            let seq = self.take_seq(src, dst);
            self.vomqs[qi].enqueue(Cell::new(src, dst, seq, self.t), self.t)?;
            self.occupancy[Stage::Vomq as usize] += 1;
        }
        Ok(())
    }

    fn take_seq(&mut self, u: usize, v: usize) -> u64 {
        let s = &mut self.next_seq[voq_index(u, v, &self.geo)];
        let seq = *s;
        *s += 1;
        seq
    }

    /// Simulates one slot with the given `(input, output)` arrivals.
    pub fn step(&mut self, arrivals: &[(usize, usize)]) -> Result<StepCounts> {
        let t = self.t;
        let mut counts = StepCounts::default();
        self.pause.deliver(t);
        self.departed.clear();

        self.serve_outputs(t, &mut counts)?;
        self.forward_vomqs(t, &mut counts)?;
        self.forward_voqs(t, &mut counts)?;
        self.accept_arrivals(t, arrivals, &mut counts)?;
        self.evaluate_flow_control(t);

        self.t += 1;
        Ok(counts)
    }

    fn serve_outputs(&mut self, t: u64, counts: &mut StepCounts) -> Result<()> {
        let m = self.geo.m();
        for v in 0..self.geo.ports() {
            if self.op_load[v] == 0 {
                continue;
            }
            let start = self.op_ptr[v];
            let candidates = (0..m).map(|off| (start + off) % m).filter_map(|r| {
                self.cbs[cb_index(v, r, &self.geo)]
                    .head()
                    .map(|c| (c.t_vomq_depart.unwrap_or(0), r))
            });
            let chosen = match self.cfg.op_arbiter {
                OpArbiter::RoundRobin => candidates.map(|(_, r)| r).next(),
                // min_by_key keeps the first of equal keys, i.e. round-robin order.
                OpArbiter::OldestFirst => candidates.min_by_key(|&(t, _)| t).map(|(_, r)| r),
            };
            let Some(r) = chosen else { continue };
            let cell = self.cbs[cb_index(v, r, &self.geo)].dequeue_head(t)?;
            self.op_ptr[v] = (r + 1) % m;
            self.op_load[v] -= 1;
            self.occupancy[Stage::Crosspoint as usize] -= 1;
            counts.departures += 1;
            if let Err(e) = self.order.observe(&cell, t) {
                if self.cfg.abort_on_reorder {
                    return Err(e);
                }
            }
            self.log(t, TraceStage::OpDepart, &cell);
            self.departed.push(cell);
        }
        Ok(())
    }

    fn forward_vomqs(&mut self, t: u64, counts: &mut StepCounts) -> Result<()> {
        let k = self.geo.k();
        for link in 0..self.geo.links() {
            let (r, p) = (link / k, link % k);
            let j = com_route(p, t, &self.geo);
            let qi = vomq_index(link, j, &self.geo);
            let Some(head) = self.vomqs[qi].head() else {
                continue;
            };
            let v = head.dst;
            let ci = cb_index(v, r, &self.geo);
            // The CB's forward flag: a full CB holds the VOMQ head back.
            if self.cbs[ci].is_full() {
                continue;
            }
            let cell = self.vomqs[qi].dequeue_head(t)?;
            self.log(
                t,
                TraceStage::VomqToCb(CrosspointId {
                    com: r,
                    output: PortAddress::new(v / self.geo.m(), v % self.geo.m()),
                }),
                &cell,
            );
            self.cbs[ci].enqueue(cell, t)?;
            self.cb_received[ci] = true;
            self.op_load[v] += 1;
            self.occupancy[Stage::Vomq as usize] -= 1;
            self.occupancy[Stage::Crosspoint as usize] += 1;
            counts.vomq_to_cb += 1;
        }
        Ok(())
    }

    fn forward_voqs(&mut self, t: u64, counts: &mut StepCounts) -> Result<()> {
        let n = self.geo.ports();
        let k = self.geo.k();
        let m = self.geo.m();
        for u in 0..n {
            let words = &self.voq_mask[u * self.mask_words..(u + 1) * self.mask_words];
            if words.iter().all(|&w| w == 0) {
                continue;
            }
            let link = self
                .schedule
                .link_for_input(PortAddress::new(u / k, u % k), t);
            let link_flat = link.cim * k + link.port;
            let timers = &self.timers[u * n..(u + 1) * n];
            let pause = &self.pause;
            let geo = &self.geo;
            let chosen = pick_cyclic(words, self.ip_ptr[u], n, |v| {
                timers[v].may_serve(t)
                    && !pause.output_paused(v)
                    && !pause.vomq_paused(vomq_index(link_flat, v / m, geo))
            });
            let Some(v) = chosen else { continue };

            let qi = voq_index(u, v, &self.geo);
            let cell = self.voqs[qi].dequeue_head(t)?;
            if self.voqs[qi].is_empty() {
                self.voq_mask[u * self.mask_words + v / 64] &= !(1u64 << (v % 64));
            }
            let id = vomq_for(&cell, link, &self.geo);
            let vi = id.flat(&self.geo);
            let sigma = self.ipc.count(vi, self.vomqs[vi].len()) + 1;
            self.log(t, TraceStage::VoqToVomq(id), &cell);
            self.vomqs[vi].enqueue(cell, t)?;
            if self.cfg.hold_down {
                self.timers[qi].on_cell_forwarded(sigma, t, k);
            }
            self.ip_ptr[u] = (v + 1) % n;
            self.occupancy[Stage::Voq as usize] -= 1;
            self.occupancy[Stage::Vomq as usize] += 1;
            counts.voq_to_vomq += 1;
        }
        Ok(())
    }

    fn accept_arrivals(
        &mut self,
        t: u64,
        arrivals: &[(usize, usize)],
        counts: &mut StepCounts,
    ) -> Result<()> {
        let n = self.geo.ports();
        for &(u, v) in arrivals {
            for (what, index) in [("input port", u), ("output port", v)] {
                if index >= n {
                    return Err(Error::OutOfRange {
                        what,
                        index,
                        bound: n,
                    });
                }
            }
            let seq = self.take_seq(u, v);
            self.voqs[voq_index(u, v, &self.geo)].enqueue(Cell::new(u, v, seq, t), t)?;
            self.voq_mask[u * self.mask_words + v / 64] |= 1u64 << (v % 64);
            self.occupancy[Stage::Voq as usize] += 1;
            counts.arrivals += 1;
        }
        Ok(())
    }

    fn evaluate_flow_control(&mut self, t: u64) {
        for (i, q) in self.vomqs.iter().enumerate() {
            self.pause.evaluate_vomq(i, q.len(), t);
        }
        for (i, q) in self.cbs.iter().enumerate() {
            self.pause.evaluate_cb(i, q.len(), t);
        }
        if self.ipc.delay() > 0 {
            self.ipc.observe(self.vomqs.iter().map(CellQueue::len));
        }
        if !self.cfg.thresholds.hold_counts_during_pause {
            self.freeze_paused_timers(t);
        }
    }

    /// Pushes back the timers of VOQs that were paused during slot `t`.
    fn freeze_paused_timers(&mut self, t: u64) {
        let n = self.geo.ports();
        let k = self.geo.k();
        let m = self.geo.m();
        for u in 0..n {
            let link = self
                .schedule
                .link_for_input(PortAddress::new(u / k, u % k), t);
            let link_flat = link.cim * k + link.port;
            for v in 0..n {
                let timer = &mut self.timers[u * n + v];
                if !timer.is_active(t) {
                    continue;
                }
                let paused = self.pause.output_paused(v)
                    || self
                        .pause
                        .vomq_paused(vomq_index(link_flat, v / m, &self.geo));
                if paused {
                    timer.extend();
                }
            }
        }
    }

    fn log(&mut self, slot: u64, stage: TraceStage, cell: &Cell) {
        if self.cfg.trace {
            self.trace.push(TraceEvent {
                slot,
                stage,
                src: cell.src,
                dst: cell.dst,
                seq: cell.seq,
            });
        }
    }
}

/// First index `v` in cyclic order from `start` whose bit is set in `words`
/// and for which `ok(v)` holds.
fn pick_cyclic(
    words: &[u64],
    start: usize,
    n: usize,
    mut ok: impl FnMut(usize) -> bool,
) -> Option<usize> {
    for (lo, hi) in [(start, n), (0, start)] {
        let mut pos = lo;
        while let Some(v) = next_set(words, pos, hi) {
            if ok(v) {
                return Some(v);
            }
            pos = v + 1;
        }
    }
    None
}

fn next_set(words: &[u64], from: usize, hi: usize) -> Option<usize> {
    if from >= hi {
        return None;
    }
    let mut w = from / 64;
    let mut bits = words[w] & (!0u64 << (from % 64));
    loop {
        if bits != 0 {
            let v = w * 64 + bits.trailing_zeros() as usize;
            return (v < hi).then_some(v);
        }
        w += 1;
        if w * 64 >= hi {
            return None;
        }
        bits = words[w];
    }
}

/// A complete simulation run: switch, traffic and measurement window.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub id: String,
    pub geometry: SwitchGeometry,
    pub traffic: TrafficSpec,
    pub capacities: Capacities,
    pub thresholds: ThresholdConfig,
    pub warmup: u64,
    pub measure: u64,
    pub op_arbiter: OpArbiter,
    pub abort_on_reorder: bool,
    pub hold_down: bool,
}

impl Scenario {
    /// Default buffers and thresholds, `10·N·k` warmup slots and `10⁶`
    /// measured slots.
    pub fn new(id: impl Into<String>, geometry: SwitchGeometry, traffic: TrafficSpec) -> Self {
        let capacities = Capacities::default();
        Self {
            id: id.into(),
            geometry,
            traffic,
            capacities,
            thresholds: ThresholdConfig::defaults_for(&capacities),
            warmup: 10 * (geometry.ports() * geometry.k()) as u64,
            measure: 1_000_000,
            op_arbiter: OpArbiter::RoundRobin,
            abort_on_reorder: true,
            hold_down: true,
        }
    }

    pub fn with_slots(mut self, warmup: u64, measure: u64) -> Self {
        self.warmup = warmup;
        self.measure = measure;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.measure == 0 {
            return Err(Error::InvalidScenario(
                "measure slots must be positive".into(),
            ));
        }
        self.thresholds.validate(&self.capacities)?;
        self.traffic.validate(&self.geometry)
    }

    pub fn fabric_config(&self) -> FabricConfig {
        FabricConfig {
            geometry: self.geometry,
            capacities: self.capacities,
            thresholds: self.thresholds,
            abort_on_reorder: self.abort_on_reorder,
            trace: false,
            op_arbiter: self.op_arbiter,
            hold_down: self.hold_down,
        }
    }

    pub fn label(&self) -> RowLabel {
        RowLabel {
            scenario_id: self.id.clone(),
            pattern: self.traffic.pattern.name().to_string(),
            n_ports: self.geometry.ports(),
            k: self.geometry.k(),
            load: self.traffic.load,
            param: self.traffic.pattern.param(),
            seed: self.traffic.seed,
        }
    }
}

/// Per-slot history of one buffering stage: total occupancy at the end of
/// each slot, and the cells that entered and left it during the slot.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct StageSeries {
    pub initial: u64,
    pub occupancy: Vec<u32>,
    pub arrivals: Vec<u32>,
    pub departures: Vec<u32>,
}

impl StageSeries {
    fn push(&mut self, occupancy: u64, arrivals: u32, departures: u32) {
        self.occupancy.push(occupancy as u32);
        self.arrivals.push(arrivals);
        self.departures.push(departures);
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct StageTrace {
    pub voq: StageSeries,
    pub vomq: StageSeries,
    pub cb: StageSeries,
}

/// Runs `scenario` and returns statistics for its measurement window.
pub fn run(scenario: &Scenario) -> Result<MetricsReport> {
    simulate(scenario, false).map(|(r, _)| r)
}

/// Like [`run`], also returning the per-slot stage history of the whole
/// run, warmup included.
pub fn run_traced(scenario: &Scenario) -> Result<(MetricsReport, StageTrace)> {
    simulate(scenario, true).map(|(r, tr)| (r, tr.unwrap_or_default()))
}

fn simulate(scenario: &Scenario, traced: bool) -> Result<(MetricsReport, Option<StageTrace>)> {
    scenario.validate()?;
    let geo = scenario.geometry;
    let mut fabric = Fabric::new(scenario.fabric_config())?;
    let mut gen = scenario.traffic.generator(&geo)?;
    let mut report = MetricsReport::new(geo.ports());
    report.measure_slots = scenario.measure;
    let mut trace = traced.then(StageTrace::default);
    let mut arrivals = Vec::new();
    let end = scenario.warmup + scenario.measure;

    for t in 0..end {
        if t == scenario.warmup {
            fabric.reset_window();
        }
        gen.arrivals(&mut arrivals);
        let c = fabric.step(&arrivals)?;
        report.injected_total += u64::from(c.arrivals);
        report.departed_total += u64::from(c.departures);
        if let Some(tr) = trace.as_mut() {
            tr.voq.push(
                fabric.stage_occupancy(Stage::Voq),
                c.arrivals,
                c.voq_to_vomq,
            );
            tr.vomq.push(
                fabric.stage_occupancy(Stage::Vomq),
                c.voq_to_vomq,
                c.vomq_to_cb,
            );
            tr.cb.push(
                fabric.stage_occupancy(Stage::Crosspoint),
                c.vomq_to_cb,
                c.departures,
            );
        }
        if t >= scenario.warmup {
            report.offered += u64::from(c.arrivals);
            for cell in fabric.last_departures() {
                report.record_departure(cell, t);
            }
            report.cb_occupancy_sum += fabric.stage_occupancy(Stage::Crosspoint);
        }
    }
    report.max_vomq = fabric.max_vomq();
    report.max_cb = fabric.max_cb();
    report.active_cbs = fabric.active_cbs();
    report.in_order_violations = fabric.order_violations();
    report.pause_signals = fabric.pause_signals();
    Ok((report, trace))
}

/// Ideal output-queued switch fed by the same generator: each arrival
/// joins its output's unbounded FIFO in its arrival slot, and each output
/// sends one cell per slot, starting the slot after arrival.
pub fn run_oq_baseline(scenario: &Scenario) -> Result<MetricsReport> {
    scenario.validate()?;
    let geo = scenario.geometry;
    let n = geo.ports();
    let mut gen = scenario.traffic.generator(&geo)?;
    let mut report = MetricsReport::new(n);
    report.measure_slots = scenario.measure;
    let mut queues: Vec<VecDeque<Cell>> = vec![VecDeque::new(); n];
    let mut order = OrderChecker::new(n);
    let mut next_seq = vec![0u64; n * n];
    let mut arrivals = Vec::new();

    for t in 0..scenario.warmup + scenario.measure {
        let window = t >= scenario.warmup;
        for q in queues.iter_mut() {
            if let Some(mut cell) = q.pop_front() {
                cell.t_op_depart = Some(t);
                order.observe(&cell, t)?;
                report.departed_total += 1;
                if window {
                    report.record_departure(&cell, t);
                }
            }
        }
        gen.arrivals(&mut arrivals);
        for &(u, v) in &arrivals {
            let seq = next_seq[u * n + v];
            next_seq[u * n + v] += 1;
            queues[v].push_back(Cell::new(u, v, seq, t));
        }
        report.injected_total += arrivals.len() as u64;
        if window {
            report.offered += arrivals.len() as u64;
        }
    }
    report.in_order_violations = order.violations();
    Ok(report)
}

/// VOMQ entry and exit slots of one flow's cells.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FlowTimes {
    pub source: PortAddress,
    pub vomq_in: Vec<u64>,
    pub vomq_out: Vec<u64>,
}

/// Three flows into `OP(0,0)` of a `k = 3` switch, each a burst of three
/// back-to-back cells: from `IP(0,0)` starting at slot 0, from `IP(2,2)`
/// at slot 1 and from `IP(1,1)` at slot 2. The later flows find the VOMQs
/// already occupied, so their second cells are held down.
pub fn replay_three_flows() -> Result<Vec<FlowTimes>> {
    let geo = SwitchGeometry::symmetric(3)?;
    let mut cfg = FabricConfig::new(geo);
    cfg.trace = true;
    let mut fabric = Fabric::new(cfg)?;
    let sources = [
        PortAddress::new(0, 0),
        PortAddress::new(2, 2),
        PortAddress::new(1, 1),
    ];
    let k = geo.k();
    let flat: Vec<usize> = sources.iter().map(|a| a.module * k + a.port).collect();

    for t in 0..24u64 {
        let batch: Vec<(usize, usize)> = flat
            .iter()
            .enumerate()
            .filter(|&(f, _)| (f as u64..f as u64 + 3).contains(&t))
            .map(|(_, &u)| (u, 0))
            .collect();
        fabric.step(&batch)?;
    }

    let flows = sources
        .iter()
        .zip(&flat)
        .map(|(&source, &u)| {
            let pick = |want: fn(&TraceStage) -> bool| -> Vec<u64> {
                fabric
                    .trace()
                    .iter()
                    .filter(|e| e.src == u && want(&e.stage))
                    .map(|e| e.slot)
                    .collect()
            };
            FlowTimes {
                source,
                vomq_in: pick(|s| matches!(s, TraceStage::VoqToVomq(_))),
                vomq_out: pick(|s| matches!(s, TraceStage::VomqToCb(_))),
            }
        })
        .collect();
    Ok(flows)
}

/// End-to-end delays of `cells` back-to-back cells of one flow through an
/// otherwise empty switch, the first arriving at slot `start`.
pub fn single_flow_delays(
    geometry: SwitchGeometry,
    src: PortAddress,
    dst: PortAddress,
    cells: usize,
    start: u64,
) -> Result<Vec<u64>> {
    src.validate(&geometry)?;
    dst.validate(&geometry)?;
    let u = src.module * geometry.k() + src.port;
    let v = dst.module * geometry.m() + dst.port;
    let mut fabric = Fabric::new(FabricConfig::new(geometry))?;
    let mut delays = Vec::with_capacity(cells);
    let last = start + cells as u64;
    let mut t = 0u64;
    while delays.len() < cells {
        let batch: &[(usize, usize)] = if (start..last).contains(&t) {
            &[(u, v)]
        } else {
            &[]
        };
        fabric.step(batch)?;
        delays.extend(
            fabric
                .last_departures()
                .iter()
                .map(|c| c.delay().unwrap_or_default()),
        );
        t += 1;
        if t > last + 4 * (cells as u64 + 4) * geometry.k() as u64 {
            return Err(Error::InvalidScenario("flow did not drain".into()));
        }
    }
    Ok(delays)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::traffic::Pattern;

    fn g(k: usize) -> SwitchGeometry {
        SwitchGeometry::symmetric(k).unwrap()
    }

    #[test]
    fn cyclic_pick() {
        let words = [0b1011_0010u64];
        assert_eq!(pick_cyclic(&words, 0, 8, |_| true), Some(1));
        assert_eq!(pick_cyclic(&words, 2, 8, |_| true), Some(4));
        assert_eq!(pick_cyclic(&words, 6, 8, |_| true), Some(7));
        assert_eq!(pick_cyclic(&words, 6, 8, |v| v != 7), Some(1));
        assert_eq!(pick_cyclic(&words, 0, 8, |_| false), None);
        let wide = [0u64, 1 << 3];
        assert_eq!(pick_cyclic(&wide, 10, 80, |_| true), Some(67));
        assert_eq!(pick_cyclic(&wide, 70, 80, |_| true), Some(67));
    }

    #[test]
    fn idle_step_only_advances_time() {
        let mut f = Fabric::new(FabricConfig::new(g(3))).unwrap();
        for _ in 0..10 {
            assert_eq!(f.step(&[]).unwrap(), StepCounts::default());
        }
        assert_eq!(f.slot(), 10);
        assert_eq!(f.in_flight(), 0);
        assert_eq!(f.pause_signals(), 0);
    }

    #[test]
    fn minimum_latency_is_one_slot_per_stage() {
        let mut cfg = FabricConfig::new(g(3));
        cfg.trace = true;
        let mut f = Fabric::new(cfg).unwrap();
        f.step(&[(0, 3)]).unwrap();
        for _ in 0..10 {
            f.step(&[]).unwrap();
        }
        let slots: Vec<u64> = f.trace().iter().map(|e| e.slot).collect();
        assert_eq!(slots.len(), 3);
        assert!(slots[0] >= 1 && slots[1] > slots[0] && slots[2] > slots[1]);
    }

    #[test]
    fn three_flow_replay() {
        let flows = replay_three_flows().unwrap();
        let ins: Vec<Vec<u64>> = flows.iter().map(|f| f.vomq_in.clone()).collect();
        let outs: Vec<Vec<u64>> = flows.iter().map(|f| f.vomq_out.clone()).collect();
        assert_eq!(ins, vec![vec![1, 2, 3], vec![2, 6, 7], vec![3, 10, 11]]);
        assert_eq!(outs, vec![vec![4, 5, 6], vec![7, 8, 9], vec![10, 11, 12]]);
    }

    #[test]
    fn cells_are_conserved() {
        let geo = g(3);
        let mut s = Scenario::new(
            "c",
            geo,
            TrafficSpec::new(Pattern::BernoulliUniform, 0.9, 5),
        )
        .with_slots(100, 5000);
        s.abort_on_reorder = false;
        let (r, trace) = run_traced(&s).unwrap();
        let last = |s: &StageSeries| u64::from(*s.occupancy.last().unwrap());
        assert_eq!(
            r.injected_total,
            r.departed_total + last(&trace.voq) + last(&trace.vomq) + last(&trace.cb)
        );
        assert_eq!(r.delay_histogram.iter().sum::<u64>(), r.departed);
    }

    #[test]
    fn zero_load() {
        let s = Scenario::new(
            "z",
            g(2),
            TrafficSpec::new(Pattern::BernoulliUniform, 0.0, 1),
        )
        .with_slots(10, 1000);
        let r = run(&s).unwrap();
        assert_eq!(r.departed, 0);
        assert!(r.delay_histogram.is_empty());
        assert_eq!(r.throughput_abs(), 0.0);
        let oq = run_oq_baseline(&s).unwrap();
        assert_eq!(oq.departed, 0);
    }

    #[test]
    fn oq_light_load_delay_is_one() {
        let s = Scenario::new(
            "o",
            g(4),
            TrafficSpec::new(Pattern::BernoulliUniform, 0.01, 3),
        )
        .with_slots(0, 20_000);
        let r = run_oq_baseline(&s).unwrap();
        assert!(r.departed > 0);
        assert!(
            r.mean_delay() >= 1.0 && r.mean_delay() < 1.01,
            "{}",
            r.mean_delay()
        );
    }

    #[test]
    fn reorder_aborts_by_default() {
        // Round-robin over CBs lets a later cell of a flow overtake an
        // earlier one queued behind another flow.
        let s = Scenario::new(
            "r",
            g(3),
            TrafficSpec::new(Pattern::BernoulliUniform, 0.9, 5),
        )
        .with_slots(0, 5000);
        assert!(matches!(run(&s), Err(Error::OutOfOrder { .. })));
    }

    #[test]
    fn oldest_first_with_roomy_buffers_keeps_order() {
        let mut s = Scenario::new(
            "o",
            g(3),
            TrafficSpec::new(Pattern::BernoulliUniform, 0.9, 5),
        )
        .with_slots(0, 20_000);
        s.op_arbiter = OpArbiter::OldestFirst;
        s.capacities.cb = 1000;
        s.thresholds.pause_cb = 990;
        s.thresholds.resume_cb = 980;
        assert_eq!(run(&s).unwrap().in_order_violations, 0);
    }

    #[test]
    fn invalid_arrival_rejected() {
        let mut f = Fabric::new(FabricConfig::new(g(2))).unwrap();
        assert!(matches!(f.step(&[(0, 4)]), Err(Error::OutOfRange { .. })));
    }

    #[test]
    fn run_is_deterministic() {
        let mut s = Scenario::new(
            "d",
            g(3),
            TrafficSpec::new(Pattern::Bursty { burst_mean: 4.0 }, 0.7, 11),
        )
        .with_slots(200, 5000);
        s.abort_on_reorder = false;
        assert_eq!(run(&s).unwrap(), run(&s).unwrap());
    }
}
