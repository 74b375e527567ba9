//! Longitudinal point-mass dynamics with a first-order actuation lag.
//!
//! The commanded acceleration `u` is clamped, passed through the lag
//! `a' = a + dt/tau * (u - a)`, and integrated with semi-implicit Euler
//! (speed first, then position from the new speed).

use serde::{Deserialize, Serialize};

use crate::error::{finite, CoreError, Result};

/// Kinematic and actuation state of one vehicle. `position` is the front
/// bumper coordinate along the road.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VehicleState {
    pub position: f64,
    pub speed: f64,
    pub accel: f64,
    pub ctrl_input: f64,
    pub length: f64,
    pub lane: usize,
}

impl VehicleState {
    pub fn new(position: f64, speed: f64, length: f64) -> Self {
        Self { position, speed, accel: 0.0, ctrl_input: 0.0, length, lane: 0 }
    }

    pub fn in_lane(mut self, lane: usize) -> Self {
        self.lane = lane;
        self
    }

    /// Rear bumper coordinate.
    pub fn rear(&self) -> f64 {
        self.position - self.length
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DynamicsParams {
    /// Actuation lag time constant [s].
    pub tau: f64,
    /// Integration step [s].
    pub dt: f64,
    pub u_min: f64,
    pub u_max: f64,
    /// Lower clamp applied while a vehicle is commanded to brake in an emergency.
    pub emergency_u_min: f64,
}

impl Default for DynamicsParams {
    fn default() -> Self {
        Self { tau: 0.5, dt: 0.01, u_min: -8.0, u_max: 2.5, emergency_u_min: -8.0 }
    }
}

impl DynamicsParams {
    pub fn validate(&self) -> Result<()> {
        let ok = self.tau > 0.0 && self.dt > 0.0 && self.u_min < 0.0 && self.u_max > 0.0 && self.emergency_u_min <= self.u_min;
        if ok {
            Ok(())
        } else {
            Err(CoreError::InvalidParam(format!(
                "dynamics: need tau > 0, dt > 0, u_min < 0 < u_max, emergency_u_min <= u_min (got {self:?})"
            )))
        }
    }

    pub fn clamp(&self, u: f64, emergency: bool) -> f64 {
        let lo = if emergency { self.emergency_u_min } else { self.u_min };
        u.clamp(lo, self.u_max)
    }
}

/// Advance one vehicle by `params.dt` under command `u_cmd`.
pub fn step_vehicle(state: &VehicleState, u_cmd: f64, params: &DynamicsParams) -> Result<VehicleState> {
    step_vehicle_with(state, u_cmd, params, false)
}

/// As [`step_vehicle`], selecting the emergency lower clamp when `emergency` is set.
pub fn step_vehicle_with(state: &VehicleState, u_cmd: f64, params: &DynamicsParams, emergency: bool) -> Result<VehicleState> {
    finite("u_cmd", u_cmd)?;
    let u = params.clamp(u_cmd, emergency);
    let mut accel = state.accel + (params.dt / params.tau) * (u - state.accel);
    let mut speed = state.speed + accel * params.dt;
    if speed <= 0.0 {
        speed = 0.0;
        if accel < 0.0 {
            accel = 0.0;
        }
    }
    Ok(VehicleState { position: state.position + speed * params.dt, speed, accel, ctrl_input: u, ..*state })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn run(mut s: VehicleState, u: f64, p: &DynamicsParams, seconds: f64) -> VehicleState {
        let steps = (seconds / p.dt).round() as usize;
        for _ in 0..steps {
            s = step_vehicle(&s, u, p).unwrap();
        }
        s
    }

    #[test]
    fn zero_input_is_fixed_point() {
        let p = DynamicsParams::default();
        let s = VehicleState::new(0.0, 20.0, 4.0);
        let n = step_vehicle(&s, 0.0, &p).unwrap();
        assert_eq!(n.accel, 0.0);
        assert_eq!(n.speed, 20.0);
    }

    #[test]
    fn step_response_at_one_tau() {
        let p = DynamicsParams::default();
        let s = run(VehicleState::new(0.0, 20.0, 4.0), 1.0, &p, p.tau);
        let analytic = 1.0 - (-1.0f64).exp();
        // one-dt discretization error of the explicit lag update
        assert!((s.accel - analytic).abs() < p.dt / p.tau, "{}", s.accel);
    }

    #[test]
    fn standstill_clamp() {
        let p = DynamicsParams::default();
        let s = VehicleState { accel: -1.0, ..VehicleState::new(0.0, 0.005, 4.0) };
        let n = step_vehicle(&s, -1.0, &p).unwrap();
        assert_eq!(n.speed, 0.0);
        assert_eq!(n.accel, 0.0);
        assert_eq!(n.position, 0.0);
    }

    #[test]
    fn input_is_clamped() {
        let p = DynamicsParams::default();
        let n = step_vehicle(&VehicleState::new(0.0, 10.0, 4.0), 50.0, &p).unwrap();
        assert_eq!(n.ctrl_input, p.u_max);
        let n = step_vehicle(&VehicleState::new(0.0, 10.0, 4.0), -50.0, &p).unwrap();
        assert_eq!(n.ctrl_input, p.u_min);
    }

    #[test]
    fn rejects_non_finite_command() {
        let p = DynamicsParams::default();
        let s = VehicleState::new(0.0, 10.0, 4.0);
        assert!(step_vehicle(&s, f64::NAN, &p).is_err());
        assert!(step_vehicle(&s, f64::INFINITY, &p).is_err());
    }

    #[test]
    fn converges_within_five_tau() {
        let p = DynamicsParams::default();
        for &u in &[-6.0, -1.0, 0.7, 2.0] {
            let s = run(VehicleState::new(0.0, 30.0, 4.0), u, &p, 5.0 * p.tau);
            assert!(((s.accel - u) / u).abs() < 0.01, "u={u} accel={}", s.accel);
        }
    }

    #[test]
    fn dt_refinement_changes_position_little() {
        let coarse = DynamicsParams::default();
        let fine = DynamicsParams { dt: coarse.dt / 2.0, ..coarse };
        let s0 = VehicleState::new(0.0, 10.0, 4.0);
        let a = run(s0, 0.3, &coarse, 100.0);
        let b = run(s0, 0.3, &fine, 100.0);
        assert!(((a.position - b.position) / b.position).abs() < 0.005);
    }

    #[test]
    fn validate_rejects_bad_params() {
        assert!(DynamicsParams::default().validate().is_ok());
        assert!(DynamicsParams { tau: 0.0, ..Default::default() }.validate().is_err());
        assert!(DynamicsParams { emergency_u_min: -1.0, ..Default::default() }.validate().is_err());
    }
}
