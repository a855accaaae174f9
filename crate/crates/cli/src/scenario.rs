//! Scenario files: a TOML document describing one sweep, or the replay
//! suite.

use std::path::PathBuf;

use lbc_core::engine::OpArbiter;
use lbc_core::{
    Capacities, Pattern, Scenario, Spread, SwitchGeometry, ThresholdConfig, TrafficSpec,
};
use serde::Deserialize;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Kind {
    #[default]
    Sweep,
    Replay,
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeometrySection {
    pub k: usize,
    pub n: Option<usize>,
    pub m: Option<usize>,
}

/// One traffic pattern of a sweep, tagged by `pattern`.
#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(tag = "pattern", rename_all = "snake_case", deny_unknown_fields)]
pub enum TrafficEntry {
    BernoulliUniform,
    Bursty {
        burst_mean: f64,
    },
    Unbalanced {
        omega: f64,
    },
    Hotspot {
        #[serde(default)]
        port: usize,
    },
    StressA {
        #[serde(default)]
        spread: Spread,
    },
    StressB,
}

impl From<TrafficEntry> for Pattern {
    fn from(e: TrafficEntry) -> Self {
        match e {
            TrafficEntry::BernoulliUniform => Pattern::BernoulliUniform,
            TrafficEntry::Bursty { burst_mean } => Pattern::Bursty { burst_mean },
            TrafficEntry::Unbalanced { omega } => Pattern::Unbalanced { omega },
            TrafficEntry::Hotspot { port } => Pattern::Hotspot { port },
            TrafficEntry::StressA { spread } => Pattern::StressA { spread },
            TrafficEntry::StressB => Pattern::StressB,
        }
    }
}

fn yes() -> bool {
    true
}

fn default_id() -> String {
    "scenario".into()
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    #[serde(default)]
    pub kind: Kind,
    #[serde(default = "default_id")]
    pub id: String,
    pub geometry: Option<GeometrySection>,
    #[serde(default)]
    pub traffic: Vec<TrafficEntry>,
    #[serde(default)]
    pub loads: Vec<f64>,
    pub capacities: Option<Capacities>,
    pub thresholds: Option<ThresholdConfig>,
    pub warmup: Option<u64>,
    pub measure: Option<u64>,
    #[serde(default)]
    pub seed: u64,
    pub output: Option<PathBuf>,
    #[serde(default)]
    pub op_arbiter: OpArbiter,
    #[serde(default = "yes")]
    pub abort_on_reorder: bool,
    #[serde(default = "yes")]
    pub hold_down: bool,
}

impl ScenarioFile {
    pub fn parse(text: &str) -> Result<Self, String> {
        toml::from_str(text).map_err(|e| e.to_string())
    }

    pub fn geometry(&self) -> Result<SwitchGeometry, String> {
        let g = self.geometry.ok_or("missing [geometry] table")?;
        SwitchGeometry::new(g.n.unwrap_or(g.k), g.k, g.m.unwrap_or(g.k)).map_err(|e| e.to_string())
    }

    /// Expands the sweep into validated scenarios, pattern-major.
    pub fn points(&self, seed: Option<u64>) -> Result<Vec<Scenario>, String> {
        if self.kind != Kind::Sweep {
            return Err("replay files do not describe a sweep".into());
        }
        if self.traffic.is_empty() {
            return Err("at least one [[traffic]] entry is required".into());
        }
        if self.loads.is_empty() {
            return Err("`loads` must list at least one load".into());
        }
        let geometry = self.geometry()?;
        let seed = seed.unwrap_or(self.seed);
        let capacities = self.capacities.unwrap_or_default();
        let thresholds = self
            .thresholds
            .unwrap_or_else(|| ThresholdConfig::defaults_for(&capacities));

        let mut out = Vec::with_capacity(self.traffic.len() * self.loads.len());
        for &entry in &self.traffic {
            for &load in &self.loads {
                let mut s = Scenario::new(
                    self.id.clone(),
                    geometry,
                    TrafficSpec::new(entry.into(), load, seed),
                );
                s.capacities = capacities;
                s.thresholds = thresholds;
                if let Some(w) = self.warmup {
                    s.warmup = w;
                }
                if let Some(m) = self.measure {
                    s.measure = m;
                }
                s.op_arbiter = self.op_arbiter;
                s.abort_on_reorder = self.abort_on_reorder;
                s.hold_down = self.hold_down;
                s.validate()
                    .map_err(|e| format!("{} at load {load}: {e}", entry_name(entry)))?;
                out.push(s);
            }
        }
        Ok(out)
    }

    /// Rejects sweep settings in a replay file.
    pub fn check_replay(&self) -> Result<(), String> {
        let stray = self.geometry.is_some()
            || !self.traffic.is_empty()
            || !self.loads.is_empty()
            || self.capacities.is_some()
            || self.thresholds.is_some()
            || self.warmup.is_some()
            || self.measure.is_some();
        if stray {
            Err("replay files take only `kind`, `id` and `output`".into())
        } else {
            Ok(())
        }
    }
}

fn entry_name(e: TrafficEntry) -> &'static str {
    Pattern::from(e).name()
}
