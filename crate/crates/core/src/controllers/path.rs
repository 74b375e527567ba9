use serde::{Deserialize, Serialize};

use super::Beacon;
use crate::dynamics::VehicleState;
use crate::error::{CoreError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PathParams {
    #[serde(rename = "C1")]
    pub c1: f64,
    /// Damping ratio.
    pub xi: f64,
    /// Bandwidth [rad/s].
    pub omega_n: f64,
    /// Desired bumper-to-bumper distance [m].
    pub dd: f64,
}

impl Default for PathParams {
    fn default() -> Self {
        Self { c1: 0.5, xi: 1.0, omega_n: 0.2, dd: 5.0 }
    }
}

impl PathParams {
    pub fn gains(&self) -> Result<PathGains> {
        if !(self.dd > 0.0) {
            return Err(CoreError::InvalidParam(format!("PATH dd must be > 0, got {}", self.dd)));
        }
        path_gains(self.c1, self.xi, self.omega_n)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PathGains {
    pub alpha1: f64,
    pub alpha2: f64,
    pub alpha3: f64,
    pub alpha4: f64,
    pub alpha5: f64,
}

pub fn path_gains(c1: f64, xi: f64, omega_n: f64) -> Result<PathGains> {
    if xi < 1.0 || !xi.is_finite() {
        return Err(CoreError::InvalidParam(format!("PATH damping xi must be >= 1, got {xi}")));
    }
    if !(0.0..=1.0).contains(&c1) || !(omega_n > 0.0) {
        return Err(CoreError::InvalidParam(format!("PATH needs 0 <= C1 <= 1 and omega_n > 0 (got C1={c1}, omega_n={omega_n})")));
    }
    let root = xi + (xi * xi - 1.0).sqrt();
    Ok(PathGains {
        alpha1: 1.0 - c1,
        alpha2: c1,
        alpha3: -(2.0 * xi - c1 * root) * omega_n,
        alpha4: -c1 * root * omega_n,
        alpha5: -omega_n * omega_n,
    })
}

/// PATH law. `leader` carries `(u_0, v_0)` of the egoLeader.
pub fn path_control(ego: &VehicleState, pred: &Beacon, leader: &Beacon, g: &PathGains, dd: f64) -> f64 {
    g.alpha1 * pred.ctrl_input
        + g.alpha2 * leader.ctrl_input
        + g.alpha3 * (ego.speed - pred.speed)
        + g.alpha4 * (ego.speed - leader.speed)
        + g.alpha5 * (ego.position - pred.position + pred.length + dd)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn beacon(position: f64, speed: f64, u: f64) -> Beacon {
        Beacon { vehicle_id: 0, position, speed, accel: 0.0, ctrl_input: u, length: 4.0, timestamp: 0.0 }
    }

    #[test]
    fn table_gains() {
        let g = path_gains(0.5, 1.0, 0.2).unwrap();
        assert_eq!(g.alpha1, 0.5);
        assert_eq!(g.alpha2, 0.5);
        assert!((g.alpha3 + 0.3).abs() < 1e-15);
        assert!((g.alpha4 + 0.1).abs() < 1e-15);
        assert!((g.alpha5 + 0.04).abs() < 1e-15);
    }

    #[test]
    fn degenerate_apportioning() {
        let g = path_gains(0.0, 1.0, 0.2).unwrap();
        assert_eq!((g.alpha2, g.alpha4), (0.0, 0.0));
        let g = path_gains(1.0, 1.0, 0.2).unwrap();
        assert_eq!(g.alpha1, 0.0);
    }

    #[test]
    fn underdamped_rejected() {
        assert!(path_gains(0.5, 0.9, 0.2).is_err());
    }

    #[test]
    fn control_cases() {
        let g = path_gains(0.5, 1.0, 0.2).unwrap();
        let v = 27.0;
        let ego = VehicleState::new(0.0, v, 4.0);
        let leader = beacon(500.0, v, 0.0);
        // gap exactly dd
        assert!(path_control(&ego, &beacon(9.0, v, 0.0), &leader, &g, 5.0).abs() < 1e-12);
        // one metre surplus closes the gap
        let u = path_control(&ego, &beacon(10.0, v, 0.0), &leader, &g, 5.0);
        assert!((u - 0.04).abs() < 1e-12, "{u}");
        // leader feed-forward
        let u = path_control(&ego, &beacon(9.0, v, 0.0), &beacon(500.0, v, -8.0), &g, 5.0);
        assert!((u + 4.0).abs() < 1e-12, "{u}");
    }
}
