//! Two-level pause/resume backpressure.
//!
//! A VOMQ whose occupancy rises above `T_pv` tells the IPs that feed it to
//! pause; it releases them once it falls below `T_rv`. A crosspoint buffer
//! above `T_pc` pauses, through its VOMQs, every IP's VOQ for that output
//! port, and resumes them below `T_rc`. Signals take `D_v` / `D_c` slots to
//! reach the IPs.
//!
//! Every IP connected to a queue receives the same signal, so the pause
//! flags are kept once per VOMQ and once per crosspoint buffer rather than
//! replicated per IP.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Buffer sizes, in cells.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Capacities {
    pub vomq: usize,
    pub cb: usize,
}

impl Default for Capacities {
    fn default() -> Self {
        Self { vomq: 64, cb: 8 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ThresholdConfig {
    pub pause_vomq: usize,
    pub resume_vomq: usize,
    pub pause_cb: usize,
    pub resume_cb: usize,
    pub delay_vomq: u64,
    pub delay_cb: u64,
    /// Whether a hold-down timer keeps running while its VOQ is paused.
    #[serde(default = "default_true")]
    pub hold_counts_during_pause: bool,
}

fn default_true() -> bool {
    true
}

impl ThresholdConfig {
    /// Thresholds a few cells below each capacity, with zero signalling
    /// delay.
    pub fn defaults_for(caps: &Capacities) -> Self {
        let pause_vomq = caps.vomq.saturating_sub(4);
        let pause_cb = caps.cb.saturating_sub(2);
        Self {
            pause_vomq,
            resume_vomq: pause_vomq.saturating_sub(4),
            pause_cb,
            resume_cb: pause_cb.saturating_sub(2),
            delay_vomq: 0,
            delay_cb: 0,
            hold_counts_during_pause: true,
        }
    }

    pub fn validate(&self, caps: &Capacities) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidThresholds(msg));
        if self.pause_vomq <= self.resume_vomq {
            return bad(format!(
                "VOMQ pause threshold {} must exceed resume threshold {}",
                self.pause_vomq, self.resume_vomq
            ));
        }
        if self.pause_cb <= self.resume_cb {
            return bad(format!(
                "CB pause threshold {} must exceed resume threshold {}",
                self.pause_cb, self.resume_cb
            ));
        }
        // A pause fires only once occupancy exceeds the threshold, so the
        // threshold must sit strictly below capacity, with room for the
        // cells that arrive while the signal is in flight.
        if self.pause_vomq >= caps.vomq || (caps.vomq - self.pause_vomq) < self.delay_vomq as usize
        {
            return bad(format!(
                "VOMQ capacity {} leaves no headroom above pause threshold {} for delay {}",
                caps.vomq, self.pause_vomq, self.delay_vomq
            ));
        }
        if self.pause_cb >= caps.cb || (caps.cb - self.pause_cb) < self.delay_cb as usize {
            return bad(format!(
                "CB capacity {} leaves no headroom above pause threshold {} for delay {}",
                caps.cb, self.pause_cb, self.delay_cb
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Signal {
    Pause,
    Resume,
    None,
}

/// Hysteresis decision for a VOMQ at `occupancy`.
pub fn vomq_backpressure(occupancy: usize, cfg: &ThresholdConfig) -> Signal {
    hysteresis(occupancy, cfg.pause_vomq, cfg.resume_vomq)
}

/// Hysteresis decision for a crosspoint buffer at `occupancy`.
pub fn cb_backpressure(occupancy: usize, cfg: &ThresholdConfig) -> Signal {
    hysteresis(occupancy, cfg.pause_cb, cfg.resume_cb)
}

fn hysteresis(occupancy: usize, pause: usize, resume: usize) -> Signal {
    if occupancy > pause {
        Signal::Pause
    } else if occupancy < resume {
        Signal::Resume
    } else {
        Signal::None
    }
}

/// Slot from which a signal issued at the end of slot `issued_at` governs
/// forwarding decisions. Decisions at slot `t` honour every signal with
/// `effective_at <= t` that was issued before `t`, so `delay = 0` takes
/// effect at the next slot boundary.
pub fn apply_signal_delay(issued_at: u64, delay: u64) -> u64 {
    issued_at + delay
}

#[derive(Debug, Clone, Copy)]
struct Pending {
    effective_at: u64,
    queue: usize,
    paused: bool,
}

/// Pause flags as seen by the input ports, plus signals still in flight.
#[derive(Debug, Clone)]
pub struct PauseState {
    cfg: ThresholdConfig,
    m: usize,
    vomq_seen: Vec<bool>,
    vomq_issued: Vec<bool>,
    cb_seen: Vec<bool>,
    cb_issued: Vec<bool>,
    /// Number of paused crosspoint buffers per output port, as seen.
    output_paused: Vec<u32>,
    vomq_pending: VecDeque<Pending>,
    cb_pending: VecDeque<Pending>,
    signals_issued: u64,
}

impl PauseState {
    /// `vomqs` and `cbs` are the total queue counts; crosspoint buffers are
    /// laid out `m` per output port.
    pub fn new(cfg: ThresholdConfig, vomqs: usize, cbs: usize, m: usize) -> Self {
        Self {
            cfg,
            m,
            vomq_seen: vec![false; vomqs],
            vomq_issued: vec![false; vomqs],
            cb_seen: vec![false; cbs],
            cb_issued: vec![false; cbs],
            output_paused: vec![0; cbs / m.max(1)],
            vomq_pending: VecDeque::new(),
            cb_pending: VecDeque::new(),
            signals_issued: 0,
        }
    }

    pub fn config(&self) -> &ThresholdConfig {
        &self.cfg
    }

    /// Number of pause or resume signals emitted so far.
    pub fn signals_issued(&self) -> u64 {
        self.signals_issued
    }

    /// Applies every in-flight signal that has become effective by `t`.
    pub fn deliver(&mut self, t: u64) {
        while let Some(p) = self.vomq_pending.front().copied() {
            if p.effective_at > t {
                break;
            }
            self.vomq_pending.pop_front();
            self.vomq_seen[p.queue] = p.paused;
        }
        while let Some(p) = self.cb_pending.front().copied() {
            if p.effective_at > t {
                break;
            }
            self.cb_pending.pop_front();
            if self.cb_seen[p.queue] != p.paused {
                let v = p.queue / self.m;
                if p.paused {
                    self.output_paused[v] += 1;
                } else {
                    self.output_paused[v] -= 1;
                }
                self.cb_seen[p.queue] = p.paused;
            }
        }
    }

    /// Evaluates VOMQ `index` at the end of slot `t`.
    pub fn evaluate_vomq(&mut self, index: usize, occupancy: usize, t: u64) -> Signal {
        let signal = vomq_backpressure(occupancy, &self.cfg);
        let delay = self.cfg.delay_vomq;
        Self::issue(
            signal,
            index,
            t,
            delay,
            &mut self.vomq_issued,
            &mut self.vomq_pending,
            &mut self.signals_issued,
        )
    }

    /// Evaluates crosspoint buffer `index` at the end of slot `t`.
    pub fn evaluate_cb(&mut self, index: usize, occupancy: usize, t: u64) -> Signal {
        let signal = cb_backpressure(occupancy, &self.cfg);
        let delay = self.cfg.delay_cb;
        Self::issue(
            signal,
            index,
            t,
            delay,
            &mut self.cb_issued,
            &mut self.cb_pending,
            &mut self.signals_issued,
        )
    }

    fn issue(
        signal: Signal,
        index: usize,
        t: u64,
        delay: u64,
        issued: &mut [bool],
        pending: &mut VecDeque<Pending>,
        count: &mut u64,
    ) -> Signal {
        let paused = match signal {
            Signal::Pause => true,
            Signal::Resume => false,
            Signal::None => return Signal::None,
        };
        if issued[index] == paused {
            return Signal::None;
        }
        issued[index] = paused;
        *count += 1;
        pending.push_back(Pending {
            effective_at: apply_signal_delay(t, delay),
            queue: index,
            paused,
        });
        signal
    }

    /// Whether IPs currently believe VOMQ `index` has asked them to pause.
    pub fn vomq_paused(&self, index: usize) -> bool {
        self.vomq_seen[index]
    }

    /// Whether IPs currently hold traffic for output port `v`.
    pub fn output_paused(&self, v: usize) -> bool {
        self.output_paused[v] > 0
    }
}
