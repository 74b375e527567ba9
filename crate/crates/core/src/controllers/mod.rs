//! Longitudinal control laws and the per-vehicle dispatch that wires them to
//! sensed neighbours and received beacons.

mod acc;
mod gsbl;
mod idm;
mod path;
mod ploeg;

pub use acc::{acc_control, cruise_control, AccParams};
pub use gsbl::{gsbl_control, gsbl_mode_update, GsblMode, GsblParams, GsblState};
pub use idm::{idm_control, IdmParams};
pub use path::{path_control, path_gains, PathGains, PathParams};
pub use ploeg::{ploeg_control, ploeg_rate, PloegParams, PloegState};

use serde::{Deserialize, Serialize};

use crate::dynamics::VehicleState;
use crate::error::{CoreError, Result};
use crate::topology::Controller;

/// Periodic V2X message. Positions are expressed in the receiver's frame
/// when delivered on a ring, so gaps can be read off directly.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Beacon {
    pub vehicle_id: usize,
    pub position: f64,
    pub speed: f64,
    pub accel: f64,
    pub ctrl_input: f64,
    pub length: f64,
    pub timestamp: f64,
}

impl Beacon {
    pub fn from_state(vehicle_id: usize, s: &VehicleState, timestamp: f64) -> Self {
        Self { vehicle_id, position: s.position, speed: s.speed, accel: s.accel, ctrl_input: s.ctrl_input, length: s.length, timestamp }
    }

    pub fn is_fresh(&self, now: f64, max_age: f64) -> bool {
        now - self.timestamp <= max_age + 1e-9
    }

    pub fn as_state(&self) -> VehicleState {
        VehicleState {
            position: self.position,
            speed: self.speed,
            accel: self.accel,
            ctrl_input: self.ctrl_input,
            length: self.length,
            lane: 0,
        }
    }
}

/// All controller parameter sets of one experiment.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ControllerSet {
    pub acc: AccParams,
    pub ploeg: PloegParams,
    pub path: PathParams,
    pub gsbl: GsblParams,
    pub idm: IdmParams,
    /// Speed-tracking gain of an independent head [1/s].
    pub head_gain: f64,
    /// Beacon period [s]. Control laws run every integration step on fresh
    /// on-board sensing and the latest received beacon.
    pub beacon_period: f64,
    /// Beacons older than this are stale [s].
    pub staleness_bound: f64,
}

impl Default for ControllerSet {
    fn default() -> Self {
        Self {
            acc: AccParams::default(),
            ploeg: PloegParams::default(),
            path: PathParams::default(),
            gsbl: GsblParams::default(),
            idm: IdmParams::default(),
            head_gain: 1.0,
            beacon_period: 0.1,
            staleness_bound: 0.25,
        }
    }
}

impl ControllerSet {
    pub fn validate(&self) -> Result<()> {
        self.path.gains()?;
        let positive = [
            ("ACC H", self.acc.headway),
            ("ACC lambda", self.acc.lambda),
            ("PLOEG H", self.ploeg.headway),
            ("PLOEG kp", self.ploeg.kp),
            ("PLOEG kd", self.ploeg.kd),
            ("GSBL k", self.gsbl.k),
            ("GSBL h", self.gsbl.h),
            ("GSBL d", self.gsbl.d),
            ("IDM a_max", self.idm.a_max),
            ("IDM b_comf", self.idm.b_comf),
            ("beacon period", self.beacon_period),
        ];
        if let Some((name, v)) = positive.iter().find(|(_, v)| !(*v > 0.0)) {
            return Err(CoreError::InvalidParam(format!("{name} must be > 0, got {v}")));
        }
        let g = &self.gsbl;
        if !(g.r_min <= g.r && g.r <= g.r_max) || g.delta_a >= 0.0 {
            return Err(CoreError::InvalidParam(format!("GSBL needs r_min <= r <= r_max and delta_a < 0 (got {g:?})")));
        }
        Ok(())
    }

    /// Steady-state bumper gap a homogeneous follower keeps at `speed`.
    pub fn equilibrium_gap(&self, ctrl: Controller, speed: f64) -> f64 {
        match ctrl {
            Controller::Acc | Controller::Independent => self.acc.desired_gap(speed),
            Controller::Ploeg => self.ploeg.desired_gap(speed),
            Controller::Path => self.path.dd,
            Controller::Gsbl => self.gsbl.d,
            Controller::Idm => self.idm.safe_gap(speed),
        }
    }
}

/// Where a vehicle's "leader" information comes from this tick.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LeaderRef {
    Vehicle(Beacon),
    /// Externally commanded speed and acceleration (scenario profile).
    External {
        speed: f64,
        accel: f64,
    },
    None,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Neighbors {
    pub pred: Option<Beacon>,
    /// Successor, populated only for members of the same platoon.
    pub succ: Option<Beacon>,
    pub leader: LeaderRef,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ControlFlag {
    StaleBeacon,
    MissingPredecessor,
    MissingLeader,
}

impl ControlFlag {
    pub fn as_str(self) -> &'static str {
        match self {
            ControlFlag::StaleBeacon => "stale_beacon",
            ControlFlag::MissingPredecessor => "missing_predecessor",
            ControlFlag::MissingLeader => "missing_leader",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Decision {
    pub u: f64,
    /// Use the emergency lower clamp when actuating.
    pub emergency: bool,
    pub flag: Option<ControlFlag>,
    /// Set when the GSBL mode changed on this tick.
    pub mode_change: Option<GsblMode>,
}

impl Decision {
    fn plain(u: f64) -> Self {
        Self { u, emergency: false, flag: None, mode_change: None }
    }

    fn flagged(u: f64, flag: ControlFlag) -> Self {
        Self { flag: Some(flag), ..Self::plain(u) }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum AgentState {
    Stateless,
    Ploeg(PloegState),
    Gsbl(GsblState),
    /// Command held until the next reaction instant.
    Idm {
        held: f64,
        next: f64,
    },
}

/// One vehicle's controller together with its private state.
#[derive(Debug, Clone, PartialEq)]
pub struct Agent {
    pub kind: Controller,
    /// Desired cruising speed; `None` for pure followers.
    pub set_speed: Option<f64>,
    state: AgentState,
    last_u: f64,
}

impl Agent {
    pub fn new(kind: Controller, set_speed: Option<f64>, ego: &VehicleState, params: &ControllerSet) -> Self {
        let state = match kind {
            Controller::Ploeg => AgentState::Ploeg(PloegState::engaged(ego)),
            Controller::Gsbl => AgentState::Gsbl(GsblState::cruise(set_speed.unwrap_or(ego.speed), &params.gsbl)),
            Controller::Idm => AgentState::Idm { held: ego.accel, next: f64::NEG_INFINITY },
            _ => AgentState::Stateless,
        };
        Self { kind, set_speed, state, last_u: ego.accel }
    }

    pub fn gsbl_mode(&self) -> Option<GsblMode> {
        match self.state {
            AgentState::Gsbl(s) => Some(s.mode),
            _ => None,
        }
    }

    pub fn gsbl_state(&self) -> Option<GsblState> {
        match self.state {
            AgentState::Gsbl(s) => Some(s),
            _ => None,
        }
    }

    pub fn last_command(&self) -> f64 {
        self.last_u
    }

    /// Evaluate the control law at time `now`; `dt` is the time since the
    /// previous evaluation (used by integrating laws).
    pub fn decide(&mut self, ego: &VehicleState, nb: &Neighbors, params: &ControllerSet, now: f64, dt: f64) -> Decision {
        let fresh = |b: &Beacon| b.is_fresh(now, params.staleness_bound);
        let d = match self.kind {
            Controller::Independent => match nb.leader {
                LeaderRef::External { speed, accel } => Decision::plain(accel + params.head_gain * (speed - ego.speed)),
                _ => match self.set_speed {
                    Some(v) => Decision::plain(params.head_gain * (v - ego.speed)),
                    None => Decision::flagged(0.0, ControlFlag::MissingLeader),
                },
            },
            Controller::Acc => self.acc(ego, nb.pred.as_ref(), params),
            Controller::Idm => {
                let AgentState::Idm { ref mut held, ref mut next } = self.state else { unreachable!() };
                if now + 1e-9 >= *next {
                    let p = IdmParams { v0: self.set_speed.unwrap_or(params.idm.v0), ..params.idm };
                    let pred = nb.pred.map(|b| b.as_state());
                    *held = idm_control(ego, pred.as_ref(), &p);
                    *next = now + params.idm.reaction;
                }
                Decision::plain(*held)
            }
            Controller::Ploeg => match nb.pred {
                None => self.acc(ego, None, params),
                Some(pred) if !fresh(&pred) => Decision::flagged(self.last_u, ControlFlag::StaleBeacon),
                Some(pred) => {
                    let AgentState::Ploeg(ref mut s) = self.state else { unreachable!() };
                    Decision::plain(ploeg_control(ego, &pred, &params.ploeg, s, dt))
                }
            },
            Controller::Path => {
                let leader = match nb.leader {
                    LeaderRef::Vehicle(b) => Some(b),
                    LeaderRef::External { speed, accel } => {
                        Some(Beacon { speed, ctrl_input: accel, timestamp: now, ..Beacon::from_state(0, ego, now) })
                    }
                    LeaderRef::None => None,
                };
                match (nb.pred, leader) {
                    (None, _) => self.acc(ego, None, params),
                    (Some(pred), None) => {
                        let mut d = self.acc(ego, Some(&pred), params);
                        d.flag = Some(ControlFlag::MissingLeader);
                        d
                    }
                    (Some(pred), Some(leader)) if !fresh(&pred) || !fresh(&leader) => {
                        Decision::flagged(self.last_u, ControlFlag::StaleBeacon)
                    }
                    (Some(pred), Some(leader)) => {
                        // gains were validated with the parameter set
                        let g = params.path.gains().expect("validated PATH gains");
                        Decision::plain(path_control(ego, &pred, &leader, &g, params.path.dd))
                    }
                }
            }
            Controller::Gsbl => self.gsbl(ego, nb, params, now),
        };
        self.last_u = d.u;
        d
    }

    fn acc(&self, ego: &VehicleState, pred: Option<&Beacon>, params: &ControllerSet) -> Decision {
        let cruise = self.set_speed.map(|v| cruise_control(ego, v, &params.acc));
        let follow = pred
            .filter(|b| b.position - b.length - ego.position <= params.acc.radar_range)
            .map(|b| acc_control(ego, &b.as_state(), &params.acc));
        match (cruise, follow) {
            (Some(c), Some(f)) => Decision::plain(c.min(f)),
            (Some(c), None) => Decision::plain(c),
            (None, Some(f)) => Decision::plain(f),
            (None, None) => Decision::flagged(0.0, ControlFlag::MissingPredecessor),
        }
    }

    fn gsbl(&mut self, ego: &VehicleState, nb: &Neighbors, params: &ControllerSet, now: f64) -> Decision {
        let fresh = |b: &Beacon| b.is_fresh(now, params.staleness_bound);
        let AgentState::Gsbl(prev) = self.state else { unreachable!() };
        let p = &params.gsbl;
        if let Some(pred) = nb.pred {
            if !fresh(&pred) {
                let mut d = self.acc(ego, Some(&pred), params);
                d.flag = Some(ControlFlag::StaleBeacon);
                return d;
            }
        }
        let next = match (nb.leader, nb.pred) {
            (LeaderRef::Vehicle(b), Some(pred)) if fresh(&b) => gsbl_mode_update(p, &prev, &b, ego, &pred.as_state()),
            (LeaderRef::Vehicle(_), _) => prev,
            (LeaderRef::External { speed, .. }, _) => GsblState { mode: GsblMode::Cruise, v_r: speed, r: p.r },
            (LeaderRef::None, _) => match self.set_speed {
                Some(v) => GsblState { v_r: v, ..prev },
                None => prev,
            },
        };
        self.state = AgentState::Gsbl(next);
        let succ = nb.succ.filter(|b| fresh(b));
        let u = gsbl_control(ego, nb.pred.as_ref(), succ.as_ref(), p, &next);
        let mut d = Decision::plain(u);
        if next.mode != prev.mode {
            d.mode_change = Some(next.mode);
        }
        if nb.pred.is_none() && matches!(nb.leader, LeaderRef::Vehicle(_)) {
            d.flag = Some(ControlFlag::MissingPredecessor);
        }
        d
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn beacon(position: f64, speed: f64, u: f64, t: f64) -> Beacon {
        Beacon { vehicle_id: 0, position, speed, accel: 0.0, ctrl_input: u, length: 4.0, timestamp: t }
    }

    #[test]
    fn default_set_is_valid() {
        ControllerSet::default().validate().unwrap();
        let bad = ControllerSet { gsbl: GsblParams { r: 9.0, ..Default::default() }, ..Default::default() };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn stale_ploeg_beacon_holds_output() {
        let params = ControllerSet::default();
        let ego = VehicleState { accel: 0.3, ..VehicleState::new(0.0, 20.0, 4.0) };
        let mut a = Agent::new(Controller::Ploeg, None, &ego, &params);
        let nb = Neighbors { pred: Some(beacon(30.0, 20.0, 0.0, 0.0)), succ: None, leader: LeaderRef::None };
        let d = a.decide(&ego, &nb, &params, 1.0, 0.1);
        assert_eq!(d.flag, Some(ControlFlag::StaleBeacon));
        assert_eq!(d.u, 0.3);
    }

    #[test]
    fn acc_without_predecessor_cruises_or_flags() {
        let params = ControllerSet::default();
        let ego = VehicleState::new(0.0, 20.0, 4.0);
        let nb = Neighbors { pred: None, succ: None, leader: LeaderRef::None };
        let d = Agent::new(Controller::Acc, Some(22.0), &ego, &params).decide(&ego, &nb, &params, 0.0, 0.1);
        assert_eq!((d.u, d.flag), (2.0, None));
        let d = Agent::new(Controller::Acc, None, &ego, &params).decide(&ego, &nb, &params, 0.0, 0.1);
        assert_eq!(d.flag, Some(ControlFlag::MissingPredecessor));
    }

    #[test]
    fn acc_takes_the_more_cautious_of_cruise_and_follow() {
        let params = ControllerSet::default();
        let ego = VehicleState::new(0.0, 30.0, 4.0);
        let nb = Neighbors { pred: Some(beacon(4.0 + 20.0, 25.0, 0.0, 0.0)), succ: None, leader: LeaderRef::None };
        let d = Agent::new(Controller::Acc, Some(36.0), &ego, &params).decide(&ego, &nb, &params, 0.0, 0.1);
        let follow = acc_control(&ego, &nb.pred.unwrap().as_state(), &params.acc);
        assert_eq!(d.u, follow);
    }

    #[test]
    fn gsbl_reports_mode_switches() {
        let params = ControllerSet::default();
        let ego = VehicleState::new(0.0, 20.0, 4.0);
        let mut a = Agent::new(Controller::Gsbl, None, &ego, &params);
        let pred = beacon(9.0, 20.0, 0.0, 0.0);
        let nb = Neighbors { pred: Some(pred), succ: None, leader: LeaderRef::Vehicle(beacon(50.0, 20.0, -8.0, 0.0)) };
        let d = a.decide(&ego, &nb, &params, 0.0, 0.1);
        assert_eq!(d.mode_change, Some(GsblMode::Override));
        let d = a.decide(&ego, &nb, &params, 0.0, 0.1);
        assert_eq!(d.mode_change, None);
        assert_eq!(a.gsbl_mode(), Some(GsblMode::Override));
    }

    #[test]
    fn equilibrium_gaps() {
        let p = ControllerSet::default();
        assert!((p.equilibrium_gap(Controller::Acc, 10.0) - 14.0).abs() < 1e-12);
        assert!((p.equilibrium_gap(Controller::Ploeg, 10.0) - 7.0).abs() < 1e-12);
        assert_eq!(p.equilibrium_gap(Controller::Path, 10.0), 5.0);
        assert_eq!(p.equilibrium_gap(Controller::Gsbl, 10.0), 5.0);
    }
}
