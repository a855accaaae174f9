//! Cell-level simulator and analytical oracle for the split-central-buffered
//! load-balancing Clos-network switch.
//!
//! The fabric has `k` input modules (IMs) of `n` ports, `m` central modules
//! each split into an input part (CIM) and an output part (COM), and `k`
//! output modules (OMs). Every stage is reconfigured in a fixed cyclic
//! pattern, so no matching is ever computed. Cells queue in VOQs at the
//! inputs, in VOMQs between CIM and COM, and in crosspoint buffers (CBs) at
//! the outputs. Hold-down timers at the inputs keep each flow in order.

pub mod analysis;
pub mod engine;
pub mod error;
pub mod flow_control;
pub mod matrix;
pub mod metrics;
pub mod queueing;
pub mod schedule;
pub mod sequencing;
pub mod topology;
pub mod traffic;

pub use engine::{run, run_oq_baseline, run_traced, Fabric, FabricConfig, Scenario};
pub use error::{Error, QueueKind, Result};
pub use flow_control::{Capacities, ThresholdConfig};
pub use matrix::Matrix;
pub use metrics::{csv_header, csv_row, MetricsReport, RowLabel};
pub use queueing::Cell;
pub use schedule::SlotSchedule;
pub use topology::{LinkAddress, PortAddress, SwitchGeometry};
pub use traffic::{Pattern, Spread, TrafficSpec};
