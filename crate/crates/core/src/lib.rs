//! Simulation and analysis toolkit for heterogeneous ("mixed") CACC platoons.
//!
//! * [`dynamics`]: longitudinal vehicle model with first-order actuation lag.
//! * [`controllers`]: ACC, PATH, Ploeg and GSBL control laws plus an IDM driver.
//! * [`topology`]: platoon configuration strings, egoLeader election and
//!   connectivity matrices.
//! * [`scenarios`]: single-platoon disturbance runs and multi-lane ring traffic.
//! * [`metrics`]: comfort, safety and efficiency metrics, throughput and
//!   speed volatility.

pub mod controllers;
pub mod dynamics;
pub mod error;
pub mod metrics;
pub mod scenarios;
pub mod topology;

pub use controllers::{Agent, Beacon, ControllerSet};
pub use dynamics::{step_vehicle, DynamicsParams, VehicleState};
pub use error::{CoreError, Result};
pub use metrics::{Baselines, MetricReport, WindowRule};
pub use scenarios::{RingSpec, ScenarioKind, SingleScenario, Trace};
pub use topology::{parse_config, Controller, EgoLeader, PlatoonConfig};
