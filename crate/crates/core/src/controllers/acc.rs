use serde::{Deserialize, Serialize};

use crate::dynamics::VehicleState;

/// Constant time headway ACC.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AccParams {
    /// Desired time headway [s].
    #[serde(rename = "H")]
    pub headway: f64,
    pub lambda: f64,
    /// Proportional gain of the speed-keeping loop used when a set speed is
    /// configured (ring traffic) [1/s].
    pub cruise_gain: f64,
    /// Radar range; beyond it the vehicle cruises [m].
    pub radar_range: f64,
    /// Desired gap at rest [m].
    pub standstill: f64,
}

impl Default for AccParams {
    fn default() -> Self {
        Self { headway: 1.2, lambda: 0.1, cruise_gain: 1.0, radar_range: 250.0, standstill: 2.0 }
    }
}

impl AccParams {
    /// Standstill distance plus the time-headway term.
    pub fn desired_gap(&self, speed: f64) -> f64 {
        self.standstill + self.headway * speed
    }
}

/// `u = -(1/H) (v_i - v_{i-1} + lambda (x_i - x_{i-1} + l_{i-1} + s0 + H v_i))`
/// where `s0` is the standstill distance (zero gives the bare headway law).
pub fn acc_control(ego: &VehicleState, pred: &VehicleState, p: &AccParams) -> f64 {
    let spacing_error = ego.position - pred.position + pred.length + p.desired_gap(ego.speed);
    let speed_error = ego.speed - pred.speed;
    -(speed_error + p.lambda * spacing_error) / p.headway
}

/// Speed-keeping law towards a set speed.
pub fn cruise_control(ego: &VehicleState, set_speed: f64, p: &AccParams) -> f64 {
    p.cruise_gain * (set_speed - ego.speed)
}
