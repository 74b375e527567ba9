//! GSBL bidirectional spring-damper CACC and its follower mode logic.
//!
//! Each vehicle is coupled to its predecessor and (when present) its
//! successor by a spring of rest length `d` and a damper, plus a speed
//! reference term `-r (v_i - v_r)`. The reference `v_r` and gain `r` are
//! set from the egoLeader's beacons by [`gsbl_mode_update`].

use serde::{Deserialize, Serialize};

use super::Beacon;
use crate::dynamics::VehicleState;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GsblParams {
    /// Spring stiffness [1/s^2].
    pub k: f64,
    /// Damping [1/s].
    pub h: f64,
    /// Default speed-reference gain [1/s].
    pub r: f64,
    pub r_min: f64,
    pub r_max: f64,
    /// Spring rest length, i.e. the desired bumper gap [m].
    pub d: f64,
    /// Leader deceleration that triggers override [m/s^2].
    pub delta_a: f64,
    /// Look-ahead used to extrapolate the leader speed [s].
    pub delta_t: f64,
    /// Gap below which a closing vehicle enters override [m].
    pub close_gap: f64,
    /// Closing speed above which the short-gap trigger fires [m/s].
    pub close_speed: f64,
    /// `|v_i - v_des|` below which `r` saturates at `r_max` [m/s].
    pub r_guard: f64,
}

impl Default for GsblParams {
    fn default() -> Self {
        Self {
            k: 0.7,
            h: 0.71,
            r: 0.5f64.sqrt(),
            r_min: 0.5f64.sqrt(),
            r_max: 8.0,
            d: 5.0,
            delta_a: -2.0,
            delta_t: 1.0,
            close_gap: 4.0,
            close_speed: 0.1,
            r_guard: 0.01,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum GsblMode {
    Cruise,
    Override,
}

impl GsblMode {
    pub fn as_str(self) -> &'static str {
        match self {
            GsblMode::Cruise => "cruise",
            GsblMode::Override => "override",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GsblState {
    pub mode: GsblMode,
    /// Current reference speed [m/s].
    pub v_r: f64,
    /// Current speed-reference gain [1/s].
    pub r: f64,
}

impl GsblState {
    pub fn cruise(v_r: f64, p: &GsblParams) -> Self {
        Self { mode: GsblMode::Cruise, v_r, r: p.r }
    }
}

/// Follower logic run on every egoLeader beacon.
///
/// Leaves override only when the leader's control input becomes
/// non-negative again.
pub fn gsbl_mode_update(p: &GsblParams, state: &GsblState, leader: &Beacon, ego: &VehicleState, pred: &VehicleState) -> GsblState {
    let (v_l, u_l) = (leader.speed, leader.ctrl_input);
    let mut mode = state.mode;
    if u_l >= 0.0 {
        mode = GsblMode::Cruise;
    } else {
        let strong_braking = u_l <= p.delta_a;
        let gap = pred.rear() - ego.position;
        let closing = gap <= p.close_gap && ego.speed - pred.speed > p.close_speed;
        if strong_braking || closing {
            mode = GsblMode::Override;
        }
    }
    match mode {
        GsblMode::Override => {
            let a_des = u_l;
            let v_des = v_l + u_l * p.delta_t;
            let dv = ego.speed - v_des;
            let r = if dv.abs() < p.r_guard { p.r_max } else { (a_des / dv).abs() };
            GsblState { mode, v_r: v_des, r: r.clamp(p.r_min, p.r_max) }
        }
        GsblMode::Cruise => GsblState { mode, v_r: v_l, r: p.r },
    }
}

/// Spring-damper law. With both neighbours this is the two-sided law for
/// inner vehicles; without a successor it reduces to the tail law; without
/// a predecessor it is the front-vehicle law driven by the external `v_r`.
pub fn gsbl_control(ego: &VehicleState, pred: Option<&Beacon>, succ: Option<&Beacon>, p: &GsblParams, state: &GsblState) -> f64 {
    let mut u = -state.r * (ego.speed - state.v_r);
    if let Some(pred) = pred {
        let gap = pred.position - pred.length - ego.position;
        u += p.k * (gap - p.d) - p.h * (ego.speed - pred.speed);
    }
    if let Some(succ) = succ {
        let gap = ego.position - ego.length - succ.position;
        u += -p.k * (gap - p.d) - p.h * (ego.speed - succ.speed);
    }
    u
}
