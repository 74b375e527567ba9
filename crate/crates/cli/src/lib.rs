//! Experiment orchestration for the platoon simulator: spec files, sweeps,
//! result persistence and reports. The `platoon` binary is a thin wrapper.

pub mod matrix;
pub mod report;
pub mod ring;
pub mod single;
pub mod spec;
pub mod store;

pub use spec::ExperimentSpec;
pub use store::Store;

/// Process exit codes.
pub mod exit {
    pub const OK: u8 = 0;
    pub const RUNTIME: u8 = 1;
    pub const CONFIG: u8 = 2;
    pub const COLLISION: u8 = 3;
    pub const PARTIAL: u8 = 4;
}
