pub mod lane_change;
pub mod ring;
pub mod single;
pub mod trace;

pub use lane_change::{lane_change_decision, LaneChange, LaneChangeParams, LaneView, Neighborhood};
pub use ring::{
    detect_collisions, run_ring, spawn_ring_traffic, BaselinePolicy, PlatoonPolicy, PlatoonSlot, RingOutcome, RingPlatoon, RingSpec,
    RingVehicle, World,
};
pub use single::{
    leader_profile, leader_profile_accel, run_single_platoon, LeaderElection, LeaderProfile, ScenarioKind, SingleScenario, KMH,
};
pub use trace::{CounterEvent, Device, Event, EventKind, Sample, Trace};
