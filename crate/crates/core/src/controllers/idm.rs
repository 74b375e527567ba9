use serde::{Deserialize, Serialize};

use crate::dynamics::VehicleState;

/// Intelligent Driver Model, standing in for a human driver.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IdmParams {
    /// Desired speed [m/s]; overridden per vehicle in ring traffic.
    pub v0: f64,
    /// Time headway [s].
    #[serde(rename = "T")]
    pub headway: f64,
    pub a_max: f64,
    pub b_comf: f64,
    /// Jam gap [m].
    pub s0: f64,
    pub delta: f64,
    /// The driver re-evaluates the situation this often and holds the
    /// command in between [s]. Zero reacts every step.
    pub reaction: f64,
}

impl Default for IdmParams {
    fn default() -> Self {
        Self { v0: 33.33, headway: 1.5, a_max: 1.0, b_comf: 1.5, s0: 2.0, delta: 4.0, reaction: 0.6 }
    }
}

impl IdmParams {
    /// Gap needed to follow at `v` in steady state, ignoring the free-road term.
    pub fn safe_gap(&self, v: f64) -> f64 {
        self.s0 + v * self.headway
    }
}

/// `pred` is the sensed predecessor (gap follows from positions and length).
pub fn idm_control(ego: &VehicleState, pred: Option<&VehicleState>, p: &IdmParams) -> f64 {
    let v = ego.speed;
    let free = 1.0 - (v / p.v0).powf(p.delta);
    let interaction = match pred {
        None => 0.0,
        Some(q) => {
            let gap = (q.rear() - ego.position).max(0.01);
            let dv = v - q.speed;
            let s_star = p.s0 + (v * p.headway + v * dv / (2.0 * (p.a_max * p.b_comf).sqrt())).max(0.0);
            (s_star / gap).powi(2)
        }
    };
    p.a_max * (free - interaction)
}
