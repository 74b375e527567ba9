//! Single-platoon disturbance experiments: an independent head follows a
//! sinusoidal speed profile or performs an emergency stop while the
//! followers react through their own controllers.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use super::trace::{Event, EventKind, Sample, Trace};
use crate::controllers::{Agent, Beacon, ControlFlag, ControllerSet, LeaderRef, Neighbors};
use crate::dynamics::{step_vehicle_with, DynamicsParams, VehicleState};
use crate::error::{CoreError, Result};
use crate::topology::{elect_ego_leaders, Controller, EgoLeader, PlatoonConfig};

pub const KMH: f64 = 1.0 / 3.6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScenarioKind {
    Sinusoidal,
    Braking,
}

impl ScenarioKind {
    pub const ALL: [ScenarioKind; 2] = [ScenarioKind::Sinusoidal, ScenarioKind::Braking];

    pub fn as_str(self) -> &'static str {
        match self {
            ScenarioKind::Sinusoidal => "sinusoidal",
            ScenarioKind::Braking => "braking",
        }
    }

    /// One-letter tag used in summary tables.
    pub fn tag(self) -> &'static str {
        match self {
            ScenarioKind::Sinusoidal => "S",
            ScenarioKind::Braking => "B",
        }
    }
}

impl std::str::FromStr for ScenarioKind {
    type Err = CoreError;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "sinusoidal" | "s" => Ok(ScenarioKind::Sinusoidal),
            "braking" | "b" => Ok(ScenarioKind::Braking),
            other => Err(CoreError::InvalidParam(format!("unknown scenario {other:?}"))),
        }
    }
}

/// Head speed profile. Times are measured from the profile start.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LeaderProfile {
    pub base_speed: f64,
    pub amplitude: f64,
    /// Sinusoid frequency [Hz].
    pub frequency: f64,
    /// Emergency deceleration magnitude [m/s^2].
    pub brake_decel: f64,
    pub brake_onset: f64,
}

impl Default for LeaderProfile {
    fn default() -> Self {
        Self { base_speed: 100.0 * KMH, amplitude: 10.0 * KMH, frequency: 0.1, brake_decel: 8.0, brake_onset: 30.0 }
    }
}

/// Which vehicle followers take their leader information from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LeaderElection {
    /// Nearest vehicle ahead with a different controller.
    #[default]
    Nearest,
    /// Always the platoon head.
    Head,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SingleScenario {
    pub kind: ScenarioKind,
    pub cfg: PlatoonConfig,
    /// Total simulated time [s].
    pub duration: f64,
    /// Start of the analysis window [s].
    pub warmup: f64,
    /// Simulation time at which the head profile starts; constant base speed before.
    pub profile_start: f64,
    pub profile: LeaderProfile,
    pub vehicle_length: f64,
    /// Added to every follower's equilibrium gap at the start [m].
    pub gap_offset: f64,
    pub election: LeaderElection,
    /// Record one trace sample every this many integration steps.
    pub record_every: usize,
}

impl SingleScenario {
    /// Defaults: sinusoid starts after 30 s of steady cruising and the
    /// analysis window covers the five periods after the first one;
    /// braking starts at 30 s.
    pub fn new(kind: ScenarioKind, cfg: PlatoonConfig) -> Self {
        let (duration, warmup, profile_start) = match kind {
            ScenarioKind::Sinusoidal => (90.0, 40.0, 30.0),
            ScenarioKind::Braking => (50.0, 30.0, 0.0),
        };
        Self {
            kind,
            cfg,
            duration,
            warmup,
            profile_start,
            profile: LeaderProfile::default(),
            vehicle_length: 4.0,
            gap_offset: 0.0,
            election: LeaderElection::Nearest,
            record_every: 1,
        }
    }

    pub fn with_cfg(&self, cfg: PlatoonConfig) -> Self {
        Self { cfg, ..self.clone() }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.duration > self.warmup) || self.warmup < 0.0 {
            return Err(CoreError::InvalidParam(format!(
                "scenario needs duration > warmup >= 0 (got {} / {})",
                self.duration, self.warmup
            )));
        }
        if self.kind == ScenarioKind::Sinusoidal && !(self.profile.frequency > 0.0) {
            return Err(CoreError::InvalidParam("sinusoid frequency must be > 0".into()));
        }
        if self.record_every == 0 {
            return Err(CoreError::InvalidParam("record_every must be >= 1".into()));
        }
        Ok(())
    }

    /// Target `(speed, accel)` of the head at simulation time `t`.
    pub fn head_target(&self, t: f64) -> (f64, f64) {
        let tp = t - self.profile_start;
        if tp < 0.0 {
            return (self.profile.base_speed, 0.0);
        }
        (leader_profile(self.kind, &self.profile, tp), leader_profile_accel(self.kind, &self.profile, tp))
    }
}

/// Target head speed at profile time `t`.
pub fn leader_profile(kind: ScenarioKind, p: &LeaderProfile, t: f64) -> f64 {
    match kind {
        ScenarioKind::Sinusoidal => p.base_speed + p.amplitude * (2.0 * PI * p.frequency * t).sin(),
        ScenarioKind::Braking => {
            if t < p.brake_onset {
                p.base_speed
            } else {
                (p.base_speed - p.brake_decel * (t - p.brake_onset)).max(0.0)
            }
        }
    }
}

/// Time derivative of [`leader_profile`].
pub fn leader_profile_accel(kind: ScenarioKind, p: &LeaderProfile, t: f64) -> f64 {
    match kind {
        ScenarioKind::Sinusoidal => {
            let w = 2.0 * PI * p.frequency;
            p.amplitude * w * (w * t).cos()
        }
        ScenarioKind::Braking => {
            if t >= p.brake_onset && leader_profile(kind, p, t) > 0.0 {
                -p.brake_decel
            } else {
                0.0
            }
        }
    }
}

/// Run one platoon from a warm start: every follower starts at its own
/// controller's equilibrium gap at the base speed.
pub fn run_single_platoon(s: &SingleScenario, dynp: &DynamicsParams, params: &ControllerSet) -> Result<Trace> {
    s.validate()?;
    dynp.validate()?;
    params.validate()?;
    let n = s.cfg.len();
    let v0 = s.profile.base_speed;

    let mut states = Vec::with_capacity(n);
    let mut front = 0.0;
    for i in 0..n {
        if i > 0 {
            front -= s.vehicle_length + params.equilibrium_gap(s.cfg.get(i), v0) + s.gap_offset;
        }
        states.push(VehicleState::new(front, v0, s.vehicle_length));
    }

    let elected = elect_ego_leaders(&s.cfg);
    let ego_leader = |i: usize| match s.election {
        LeaderElection::Nearest => elected.get(i),
        LeaderElection::Head => Some(EgoLeader::Vehicle(0)),
    };
    let mut agents: Vec<Agent> = (0..n)
        .map(|i| {
            let kind = if i == 0 && s.cfg.get(0) != Controller::Gsbl { Controller::Independent } else { s.cfg.get(i) };
            Agent::new(kind, None, &states[i], params)
        })
        .collect();

    let steps = (s.duration / dynp.dt).round() as usize;
    let beacon_every = ((params.beacon_period / dynp.dt).round() as usize).max(1);
    let mut commands = vec![0.0; n];
    let mut flags: Vec<Option<ControlFlag>> = vec![None; n];
    let mut broadcast: Vec<Beacon> = Vec::new();
    let mut trace = Trace::new(s.cfg.controllers().to_vec());

    for k in 0..steps {
        let t = k as f64 * dynp.dt;
        if k % beacon_every == 0 {
            broadcast =
                states.iter().enumerate().map(|(i, st)| Beacon { ctrl_input: commands[i], ..Beacon::from_state(i, st, t) }).collect();
        }
        // radar-measured position and speed, V2X-received acceleration and command
        let sensed = |j: usize| Beacon { position: states[j].position, speed: states[j].speed, ..broadcast[j] };
        let (target_v, target_a) = s.head_target(t);
        let external = LeaderRef::External { speed: target_v, accel: target_a };
        let mut emergency = vec![false; n];
        for i in 0..n {
            let leader = if i == 0 {
                external
            } else {
                match ego_leader(i) {
                    Some(EgoLeader::Vehicle(j)) => LeaderRef::Vehicle(broadcast[j]),
                    Some(EgoLeader::External) => external,
                    None => LeaderRef::None,
                }
            };
            let nb = Neighbors { pred: (i > 0).then(|| sensed(i - 1)), succ: (i + 1 < n).then(|| sensed(i + 1)), leader };
            let d = agents[i].decide(&states[i], &nb, params, t, dynp.dt);
            commands[i] = dynp.clamp(d.u, d.emergency);
            emergency[i] = d.emergency;
            if let Some(mode) = d.mode_change {
                trace.events.push(Event {
                    time: t,
                    kind: EventKind::ModeSwitch,
                    veh_a: i,
                    veh_b: ego_leader(i).and_then(EgoLeader::vehicle),
                    detail: mode.as_str().into(),
                });
            }
            if d.flag != flags[i] {
                if let Some(f) = d.flag {
                    trace.events.push(Event { time: t, kind: EventKind::ControlFlag, veh_a: i, veh_b: None, detail: f.as_str().into() });
                }
                flags[i] = d.flag;
            }
        }

        if k % s.record_every == 0 {
            let samples: Vec<Sample> = (0..n)
                .map(|i| Sample {
                    position: states[i].position,
                    lane: 0,
                    speed: states[i].speed,
                    accel: states[i].accel,
                    ctrl_input: commands[i],
                    gap: (i > 0).then(|| states[i - 1].rear() - states[i].position),
                    mode: agents[i].gsbl_mode(),
                })
                .collect();
            trace.push_tick(t, samples);
        }

        for i in 0..n {
            states[i] = step_vehicle_with(&states[i], commands[i], dynp, emergency[i])?;
        }

        let t_next = (k + 1) as f64 * dynp.dt;
        if let Some(i) = (1..n).find(|&i| states[i - 1].rear() - states[i].position <= 0.0) {
            trace.events.push(Event {
                time: t_next,
                kind: EventKind::Collision,
                veh_a: i,
                veh_b: Some(i - 1),
                detail: format!("x={:.6}", states[i].position),
            });
            trace.terminated_by_collision = true;
            break;
        }
    }
    Ok(trace)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::topology::parse_config;

    #[test]
    fn sinusoid_profile_points() {
        let p = LeaderProfile::default();
        assert!((leader_profile(ScenarioKind::Sinusoidal, &p, 0.0) - 27.7778).abs() < 1e-4);
        assert!((leader_profile(ScenarioKind::Sinusoidal, &p, 2.5) - 30.5556).abs() < 1e-4);
        assert!((leader_profile(ScenarioKind::Sinusoidal, &p, 7.5) - 25.0).abs() < 1e-4);
    }

    #[test]
    fn braking_profile_stops() {
        let p = LeaderProfile::default();
        let stop = p.brake_onset + p.base_speed / p.brake_decel;
        assert!((stop - p.brake_onset - 3.472).abs() < 1e-3);
        assert!(leader_profile(ScenarioKind::Braking, &p, stop) < 1e-9);
        assert_eq!(leader_profile(ScenarioKind::Braking, &p, stop + 5.0), 0.0);
        assert_eq!(leader_profile(ScenarioKind::Braking, &p, p.brake_onset - 0.1), p.base_speed);
        assert_eq!(leader_profile_accel(ScenarioKind::Braking, &p, p.brake_onset + 1.0), -8.0);
    }

    #[test]
    fn warm_start_gaps() {
        let s =
            SingleScenario { duration: 0.05, warmup: 0.0, ..SingleScenario::new(ScenarioKind::Sinusoidal, parse_config("-ALPG").unwrap()) };
        let t = run_single_platoon(&s, &DynamicsParams::default(), &ControllerSet::default()).unwrap();
        let v = s.profile.base_speed;
        let g: Vec<f64> = (1..5).map(|i| t.sample(0, i).gap.unwrap()).collect();
        assert!((g[0] - (2.0 + 1.2 * v)).abs() < 1e-9);
        assert!((g[1] - (2.0 + 0.5 * v)).abs() < 1e-9);
        assert!((g[2] - 5.0).abs() < 1e-9);
        assert!((g[3] - 5.0).abs() < 1e-9);
    }

    #[test]
    fn invalid_scenario_rejected() {
        let mut s = SingleScenario::new(ScenarioKind::Sinusoidal, parse_config("-PP").unwrap());
        s.warmup = s.duration;
        assert!(run_single_platoon(&s, &DynamicsParams::default(), &ControllerSet::default()).is_err());
    }
}
