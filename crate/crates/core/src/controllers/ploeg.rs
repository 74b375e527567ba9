use serde::{Deserialize, Serialize};

use super::Beacon;
use crate::dynamics::VehicleState;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PloegParams {
    #[serde(rename = "H")]
    pub headway: f64,
    pub kp: f64,
    pub kd: f64,
    /// Desired gap at rest [m].
    pub standstill: f64,
}

impl Default for PloegParams {
    fn default() -> Self {
        Self { headway: 0.5, kp: 0.2, kd: 0.7, standstill: 2.0 }
    }
}

/// Integrated controller state `u_i`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct PloegState {
    pub u: f64,
}

impl PloegParams {
    /// Standstill distance plus the time-headway term.
    pub fn desired_gap(&self, speed: f64) -> f64 {
        self.standstill + self.headway * speed
    }
}

impl PloegState {
    /// Engage with the ego's current actual acceleration.
    pub fn engaged(ego: &VehicleState) -> Self {
        Self { u: ego.accel }
    }
}

/// Time derivative of the Ploeg command; the spacing policy is `s0 + H v`.
pub fn ploeg_rate(ego: &VehicleState, pred: &Beacon, u: f64, p: &PloegParams) -> f64 {
    let spacing_error = pred.position - ego.position - pred.length - p.desired_gap(ego.speed);
    let speed_error = pred.speed - ego.speed - p.headway * ego.accel;
    (-u + p.kp * spacing_error + p.kd * speed_error + pred.ctrl_input) / p.headway
}

/// Forward-Euler integration of the command over one control period `dt`;
/// returns the updated `u_i`.
pub fn ploeg_control(ego: &VehicleState, pred: &Beacon, p: &PloegParams, state: &mut PloegState, dt: f64) -> f64 {
    state.u += dt * ploeg_rate(ego, pred, state.u, p);
    state.u
}

#[cfg(test)]
mod tests {
    use super::*;

    fn setup(gap_surplus: f64, u_pred: f64) -> (VehicleState, Beacon) {
        let p = PloegParams::default();
        let v = 25.0;
        let ego = VehicleState::new(0.0, v, 4.0);
        let pred = Beacon {
            vehicle_id: 0,
            position: 4.0 + p.desired_gap(v) + gap_surplus,
            speed: v,
            accel: 0.0,
            ctrl_input: u_pred,
            length: 4.0,
            timestamp: 0.0,
        };
        (ego, pred)
    }

    #[test]
    fn equilibrium_holds() {
        let (ego, pred) = setup(0.0, 0.0);
        let mut s = PloegState::default();
        assert_eq!(ploeg_control(&ego, &pred, &PloegParams::default(), &mut s, 0.1), 0.0);
    }

    #[test]
    fn gap_surplus_one_meter() {
        let (ego, pred) = setup(1.0, 0.0);
        let p = PloegParams::default();
        assert!((ploeg_rate(&ego, &pred, 0.0, &p) - 0.4).abs() < 1e-9);
        let mut s = PloegState::default();
        let u = ploeg_control(&ego, &pred, &p, &mut s, 0.1);
        assert!((u - 0.04).abs() < 1e-9, "{u}");
    }

    #[test]
    fn predecessor_feedforward() {
        let (ego, pred) = setup(0.0, -8.0);
        let r = ploeg_rate(&ego, &pred, 0.0, &PloegParams::default());
        assert!((r + 16.0).abs() < 1e-9, "{r}");
    }

    #[test]
    fn engagement_uses_actual_accel() {
        let ego = VehicleState { accel: -0.7, ..VehicleState::new(0.0, 20.0, 4.0) };
        assert_eq!(PloegState::engaged(&ego).u, -0.7);
    }
}
