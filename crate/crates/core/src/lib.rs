//! Slotted random access with a full-duplex relay: exact and closed-form
//! queue/throughput analysis, activation optimization and a slot simulator.

pub mod analysis;
pub mod error;
pub mod optimizer;
pub mod oracle;
pub mod phy;
pub mod queue;
pub mod scenario;
pub mod sim;
pub mod throughput;

pub use analysis::{analyze, route_for, Analysis, Route};
pub use error::{Error, Result};
pub use optimizer::{optimize, stability_region, OptimizationResult, StabilityRegion};
pub use phy::{Link, Node, PhyConfig, Topology, UserLinks};
pub use queue::QueueMetrics;
pub use scenario::{AccessConfig, Scenario};
pub use throughput::ThroughputReport;
pub use sim::{SimStats, ValidationReport};
