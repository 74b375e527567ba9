//! Multi-lane ring road where platoons share the road with non-cooperative
//! ACC or IDM vehicles.

use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::lane_change::{lane_change_decision, LaneChange, LaneChangeParams, LaneView, Neighborhood};
use super::single::KMH;
use super::trace::{CounterEvent, Device, Event, EventKind, Sample, Trace};
use crate::controllers::{Agent, Beacon, ControllerSet, LeaderRef, Neighbors};
use crate::dynamics::{step_vehicle_with, DynamicsParams, VehicleState};
use crate::error::{CoreError, Result};
use crate::metrics::{throughput_series, volatility, ThroughputSeries};
use crate::topology::{elect_ego_leaders, Controller, EgoLeader, EgoLeaderMap, PlatoonConfig};

const STREAM_CLASSES: u64 = 1;
const STREAM_CONTROLLERS: u64 = 2;
const STREAM_PLACEMENT: u64 = 3;

/// Follower controllers of the platoons on the ring.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum PlatoonPolicy {
    #[serde(rename = "P")]
    AllP,
    #[serde(rename = "L")]
    AllL,
    #[serde(rename = "G")]
    AllG,
    RandomMix,
}

impl PlatoonPolicy {
    pub const ALL: [PlatoonPolicy; 4] = [PlatoonPolicy::AllP, PlatoonPolicy::AllL, PlatoonPolicy::AllG, PlatoonPolicy::RandomMix];

    pub fn as_str(self) -> &'static str {
        match self {
            PlatoonPolicy::AllP => "P",
            PlatoonPolicy::AllL => "L",
            PlatoonPolicy::AllG => "G",
            PlatoonPolicy::RandomMix => "RandomMix",
        }
    }

    fn draw(self, rng: &mut ChaCha8Rng) -> Controller {
        match self {
            PlatoonPolicy::AllP => Controller::Path,
            PlatoonPolicy::AllL => Controller::Ploeg,
            PlatoonPolicy::AllG => Controller::Gsbl,
            PlatoonPolicy::RandomMix => Controller::CACC[rng.random_range(0..3)],
        }
    }
}

impl fmt::Display for PlatoonPolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for PlatoonPolicy {
    type Err = CoreError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "p" | "allp" | "path" => Ok(PlatoonPolicy::AllP),
            "l" | "alll" | "ploeg" => Ok(PlatoonPolicy::AllL),
            "g" | "allg" | "gsbl" => Ok(PlatoonPolicy::AllG),
            "randommix" | "random" | "mix" => Ok(PlatoonPolicy::RandomMix),
            _ => Err(CoreError::InvalidParam(format!("unknown platoon policy {s:?}"))),
        }
    }
}

/// Controller of every vehicle outside a platoon.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum BaselinePolicy {
    #[serde(rename = "ACC")]
    Acc,
    #[serde(rename = "IDM")]
    Idm,
}

impl BaselinePolicy {
    pub const ALL: [BaselinePolicy; 2] = [BaselinePolicy::Acc, BaselinePolicy::Idm];

    pub fn as_str(self) -> &'static str {
        match self {
            BaselinePolicy::Acc => "ACC",
            BaselinePolicy::Idm => "IDM",
        }
    }

    pub fn controller(self) -> Controller {
        match self {
            BaselinePolicy::Acc => Controller::Acc,
            BaselinePolicy::Idm => Controller::Idm,
        }
    }
}

impl fmt::Display for BaselinePolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for BaselinePolicy {
    type Err = CoreError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "acc" | "a" => Ok(BaselinePolicy::Acc),
            "idm" | "eidm" => Ok(BaselinePolicy::Idm),
            _ => Err(CoreError::InvalidParam(format!("unknown baseline policy {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RingSpec {
    /// Ring length [m].
    pub circumference: f64,
    #[serde(rename = "M_L")]
    pub lanes: usize,
    /// Vehicles per km of road, all lanes together.
    #[serde(rename = "D_v")]
    pub density: f64,
    #[serde(rename = "N")]
    pub platoon_size: usize,
    /// Fraction of vehicles travelling in platoons.
    #[serde(rename = "R")]
    pub penetration: f64,
    pub policy: PlatoonPolicy,
    pub baseline: BaselinePolicy,
    /// Desired-speed classes, one per lane from the right [m/s].
    pub speed_classes: Vec<f64>,
    /// Half-width of the uniform jitter around a class speed [m/s].
    pub speed_jitter: f64,
    pub vehicle_length: f64,
    /// Measured time after the warmup [s].
    pub duration: f64,
    pub warmup: f64,
    pub seed: u64,
    /// Speed sampling period for volatility [s].
    pub sample_period: f64,
    /// Counting window of the throughput devices [s].
    pub throughput_window: f64,
    /// Record a full trace at this period when set [s].
    pub trace_period: Option<f64>,
    pub lane_change: LaneChangeParams,
}

impl Default for RingSpec {
    fn default() -> Self {
        Self {
            circumference: 10_000.0,
            lanes: 3,
            density: 60.0,
            platoon_size: 8,
            penetration: 0.0,
            policy: PlatoonPolicy::RandomMix,
            baseline: BaselinePolicy::Acc,
            speed_classes: vec![100.0 * KMH, 115.0 * KMH, 130.0 * KMH],
            speed_jitter: 5.0 * KMH,
            vehicle_length: 4.0,
            duration: 600.0,
            warmup: 120.0,
            seed: 1,
            sample_period: 0.5,
            throughput_window: 15.0,
            trace_period: None,
            lane_change: LaneChangeParams::default(),
        }
    }
}

impl RingSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(CoreError::InvalidParam(m));
        if !(0.0..=1.0).contains(&self.penetration) {
            return bad(format!("R must lie in [0, 1], got {}", self.penetration));
        }
        if self.lanes == 0 || self.platoon_size < 2 || self.speed_classes.is_empty() {
            return bad("need >= 1 lane, N >= 2 and at least one speed class".into());
        }
        if !(self.circumference > 0.0 && self.density >= 0.0 && self.duration > 0.0 && self.warmup >= 0.0) {
            return bad("circumference and duration must be > 0, density and warmup >= 0".into());
        }
        if !(self.sample_period > 0.0 && self.throughput_window > 0.0 && self.vehicle_length > 0.0) {
            return bad("sample period, throughput window and vehicle length must be > 0".into());
        }
        if self.speed_classes.iter().any(|&v| v - self.speed_jitter <= 0.0) {
            return bad("every speed class minus the jitter must stay positive".into());
        }
        Ok(())
    }

    pub fn n_vehicles(&self) -> usize {
        (self.density * self.circumference / 1000.0 + 1e-9).floor() as usize
    }

    pub fn n_platoons(&self) -> usize {
        (self.n_vehicles() as f64 * self.penetration / self.platoon_size as f64 + 1e-9).floor() as usize
    }

    pub fn n_singles(&self) -> usize {
        self.n_vehicles() - self.n_platoons() * self.platoon_size
    }

    /// Positions of the N, E, S, W counting devices.
    pub fn counter_positions(&self) -> [f64; 4] {
        let q = self.circumference / 4.0;
        [0.0, q, 2.0 * q, 3.0 * q]
    }

    fn lane_of_class(&self, class: usize) -> usize {
        class.min(self.lanes - 1)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlatoonSlot {
    pub platoon: usize,
    pub index: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RingVehicle {
    pub id: usize,
    /// Label used in traces (the platoon head keeps the `-` label).
    pub label: Controller,
    pub desired_speed: f64,
    pub platoon: Option<PlatoonSlot>,
    /// Unwrapped position (odometer) plus lane and dynamics.
    pub state: VehicleState,
    pub last_lane_change: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RingPlatoon {
    pub config: PlatoonConfig,
    pub members: Vec<usize>,
    leaders: EgoLeaderMap,
}

/// Complete state of the ring at one instant.
#[derive(Debug, Clone)]
pub struct World {
    pub spec: RingSpec,
    pub vehicles: Vec<RingVehicle>,
    pub agents: Vec<Agent>,
    pub platoons: Vec<RingPlatoon>,
    /// Vehicle ids per lane, ascending by wrapped position.
    pub lanes: Vec<Vec<usize>>,
    /// Index of each vehicle inside its lane list.
    slot: Vec<usize>,
    pub spawn_speeds: Vec<f64>,
    pub time: f64,
}

struct Unit {
    /// Vehicle ids front to back.
    members: Vec<usize>,
    kinds: Vec<Controller>,
    desired: f64,
    class: usize,
}

fn leading_gap(kind: Controller, v: f64, params: &ControllerSet) -> f64 {
    match kind {
        Controller::Idm => params.idm.safe_gap(v),
        _ => params.acc.desired_gap(v),
    }
}

impl Unit {
    fn span(&self, v: f64, len: f64, params: &ControllerSet) -> f64 {
        let internal: f64 = self.kinds.iter().skip(1).map(|&k| params.equilibrium_gap(k, v)).sum();
        self.members.len() as f64 * len + internal
    }

    fn required(&self, v: f64, len: f64, params: &ControllerSet) -> f64 {
        self.span(v, len, params) + leading_gap(self.kinds[0], v, params)
    }
}

/// Place all vehicles of `spec` on the ring with equilibrium spacing.
pub fn spawn_ring_traffic(spec: &RingSpec, params: &ControllerSet) -> Result<World> {
    spec.validate()?;
    params.validate()?;
    let (n_total, n_platoons, n) = (spec.n_vehicles(), spec.n_platoons(), spec.platoon_size);
    let mut rng_class = ChaCha8Rng::seed_from_u64(spec.seed);
    rng_class.set_stream(STREAM_CLASSES);
    let mut rng_ctrl = ChaCha8Rng::seed_from_u64(spec.seed);
    rng_ctrl.set_stream(STREAM_CONTROLLERS);
    let mut rng_place = ChaCha8Rng::seed_from_u64(spec.seed);
    rng_place.set_stream(STREAM_PLACEMENT);

    let draw_speed = |rng: &mut ChaCha8Rng| {
        let class = rng.random_range(0..spec.speed_classes.len());
        let jitter = if spec.speed_jitter > 0.0 { rng.random_range(-spec.speed_jitter..=spec.speed_jitter) } else { 0.0 };
        (class, spec.speed_classes[class] + jitter)
    };

    let mut units = Vec::new();
    let mut platoons = Vec::with_capacity(n_platoons);
    let mut labels = Vec::with_capacity(n_total);
    let mut kinds = Vec::with_capacity(n_total);
    for p in 0..n_platoons {
        let (class, desired) = draw_speed(&mut rng_class);
        let mut cfg = vec![Controller::Independent];
        cfg.extend((1..n).map(|_| spec.policy.draw(&mut rng_ctrl)));
        let config = PlatoonConfig::new(cfg.clone())?;
        let members: Vec<usize> = (p * n..(p + 1) * n).collect();
        let mut unit_kinds = cfg.clone();
        unit_kinds[0] = Controller::Acc;
        labels.extend(cfg.iter().copied());
        kinds.extend(unit_kinds.iter().copied());
        platoons.push(RingPlatoon { leaders: elect_ego_leaders(&config), config, members: members.clone() });
        units.push(Unit { members, kinds: unit_kinds, desired, class });
    }
    let single = spec.baseline.controller();
    for id in n_platoons * n..n_total {
        let (class, desired) = draw_speed(&mut rng_class);
        labels.push(single);
        kinds.push(single);
        units.push(Unit { members: vec![id], kinds: vec![single], desired, class });
    }

    // lane assignment: class lane when it fits at standstill, else the rightmost lane that does
    let len = spec.vehicle_length;
    let mut lane_units: Vec<Vec<usize>> = vec![Vec::new(); spec.lanes];
    let mut lane_load = vec![0.0; spec.lanes];
    let total_required: f64 = units.iter().map(|u| u.required(0.0, len, params)).sum();
    for (u, unit) in units.iter().enumerate() {
        let need = unit.required(0.0, len, params);
        let preferred = spec.lane_of_class(unit.class);
        let fits = |l: usize| lane_load[l] + need <= spec.circumference;
        let lane = if fits(preferred) {
            preferred
        } else if unit.members.len() == 1 {
            match (0..spec.lanes).find(|&l| fits(l)) {
                Some(l) => l,
                None => return Err(overfill(spec, total_required)),
            }
        } else {
            return Err(overfill(spec, total_required));
        };
        lane_load[lane] += need;
        lane_units[lane].push(u);
    }

    let mut states = vec![VehicleState::new(0.0, 0.0, len); n_total];
    let mut spawn_speeds = vec![0.0; spec.lanes];
    for (lane, list) in lane_units.iter_mut().enumerate() {
        if list.is_empty() {
            continue;
        }
        list.shuffle(&mut rng_place);
        let offset = rng_place.random_range(0.0..spec.circumference);
        let required = |v: f64| list.iter().map(|&u| units[u].required(v, len, params)).sum::<f64>();
        let v_cap = list.iter().map(|&u| units[u].desired).fold(f64::INFINITY, f64::min);
        let v = if required(v_cap) <= spec.circumference {
            v_cap
        } else {
            let (mut lo, mut hi) = (0.0, v_cap);
            for _ in 0..60 {
                let mid = 0.5 * (lo + hi);
                if required(mid) <= spec.circumference {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            lo
        };
        spawn_speeds[lane] = v;
        let extra = (spec.circumference - required(v)).max(0.0) / list.len() as f64;
        let mut front = offset;
        for (k, &u) in list.iter().enumerate() {
            let unit = &units[u];
            if k > 0 {
                front -= leading_gap(unit.kinds[0], v, params) + extra;
            }
            for (m, &id) in unit.members.iter().enumerate() {
                if m > 0 {
                    front -= len + params.equilibrium_gap(unit.kinds[m], v);
                }
                states[id] = VehicleState { lane, ..VehicleState::new(front.rem_euclid(spec.circumference), v, len) };
            }
            front -= len;
        }
    }

    let mut vehicles = Vec::with_capacity(n_total);
    let mut agents = Vec::with_capacity(n_total);
    let mut slot_of = vec![None; n_total];
    for (p, pl) in platoons.iter().enumerate() {
        for (index, &id) in pl.members.iter().enumerate() {
            slot_of[id] = Some(PlatoonSlot { platoon: p, index });
        }
    }
    let desired_of = {
        let mut d = vec![0.0; n_total];
        for u in &units {
            for &id in &u.members {
                d[id] = u.desired;
            }
        }
        d
    };
    for id in 0..n_total {
        let follower = slot_of[id].is_some_and(|s| s.index > 0);
        let set_speed = (!follower).then_some(desired_of[id]);
        agents.push(Agent::new(kinds[id], set_speed, &states[id], params));
        vehicles.push(RingVehicle {
            id,
            label: labels[id],
            desired_speed: desired_of[id],
            platoon: slot_of[id],
            state: states[id],
            last_lane_change: f64::NEG_INFINITY,
        });
    }
    let mut world = World {
        spec: spec.clone(),
        vehicles,
        agents,
        platoons,
        lanes: vec![Vec::new(); spec.lanes],
        slot: vec![0; n_total],
        spawn_speeds,
        time: 0.0,
    };
    world.rebuild_lanes();
    Ok(world)
}

fn overfill(spec: &RingSpec, total_required: f64) -> CoreError {
    let capacity = spec.lanes as f64 * spec.circumference;
    let max_density = spec.density * capacity / total_required;
    CoreError::Overfill { requested: spec.density, max_density: (max_density * 10.0).floor() / 10.0 }
}

impl World {
    /// A world with hand-placed single vehicles, `(lane, position, speed, controller)`.
    pub fn with_vehicles(spec: &RingSpec, placed: &[(usize, f64, f64, Controller)], params: &ControllerSet) -> Result<Self> {
        spec.validate()?;
        let mut vehicles = Vec::new();
        let mut agents = Vec::new();
        for (id, &(lane, x, v, kind)) in placed.iter().enumerate() {
            if lane >= spec.lanes {
                return Err(CoreError::InvalidParam(format!("lane {lane} out of range")));
            }
            let state = VehicleState { lane, ..VehicleState::new(x, v, spec.vehicle_length) };
            agents.push(Agent::new(kind, Some(v), &state, params));
            vehicles.push(RingVehicle { id, label: kind, desired_speed: v, platoon: None, state, last_lane_change: f64::NEG_INFINITY });
        }
        let n = vehicles.len();
        let mut w = World {
            spec: spec.clone(),
            vehicles,
            agents,
            platoons: Vec::new(),
            lanes: vec![Vec::new(); spec.lanes],
            slot: vec![0; n],
            spawn_speeds: vec![0.0; spec.lanes],
            time: 0.0,
        };
        w.rebuild_lanes();
        Ok(w)
    }

    fn wrapped(&self, id: usize) -> f64 {
        self.vehicles[id].state.position.rem_euclid(self.spec.circumference)
    }

    /// Distance travelled from `from` forward to `to` along the ring.
    fn ahead(&self, from: usize, to: usize) -> f64 {
        (self.wrapped(to) - self.wrapped(from)).rem_euclid(self.spec.circumference)
    }

    fn bumper_gap(&self, ego: usize, pred: usize) -> f64 {
        self.ahead(ego, pred) - self.vehicles[pred].state.length
    }

    pub fn rebuild_lanes(&mut self) {
        for l in &mut self.lanes {
            l.clear();
        }
        for v in &self.vehicles {
            self.lanes[v.state.lane].push(v.id);
        }
        let pos: Vec<f64> = (0..self.vehicles.len()).map(|i| self.wrapped(i)).collect();
        for l in 0..self.lanes.len() {
            self.lanes[l].sort_by(|&a, &b| pos[a].total_cmp(&pos[b]).then(a.cmp(&b)));
            self.reslot(l);
        }
    }

    fn reslot(&mut self, lane: usize) {
        for (k, &id) in self.lanes[lane].iter().enumerate() {
            self.slot[id] = k;
        }
    }

    /// Vehicle directly ahead in the same lane.
    pub fn predecessor(&self, id: usize) -> Option<usize> {
        let lane = &self.lanes[self.vehicles[id].state.lane];
        (lane.len() > 1).then(|| lane[(self.slot[id] + 1) % lane.len()])
    }

    /// Lead and lag vehicles around `id`'s position in another lane.
    fn lane_view(&self, id: usize, lane: usize) -> LaneView {
        let list = &self.lanes[lane];
        if list.is_empty() {
            return LaneView::default();
        }
        let x = self.wrapped(id);
        let k = list.partition_point(|&j| self.wrapped(j) < x);
        let lead = list[k % list.len()];
        let lag = list[(k + list.len() - 1) % list.len()];
        let me = &self.vehicles[id].state;
        let same_platoon = match (self.vehicles[lead].platoon, self.vehicles[lag].platoon) {
            (Some(a), Some(b)) => a.platoon == b.platoon && lead != lag,
            _ => false,
        };
        LaneView {
            lead: Some((self.bumper_gap(id, lead), self.vehicles[lead].state.speed)),
            lag: Some((self.ahead(lag, id) - me.length, self.vehicles[lag].state.speed)),
            inside_platoon: same_platoon,
        }
    }

    fn neighborhood(&self, id: usize) -> Neighborhood {
        let v = &self.vehicles[id];
        let lane = v.state.lane;
        let current =
            LaneView { lead: self.predecessor(id).map(|p| (self.bumper_gap(id, p), self.vehicles[p].state.speed)), ..LaneView::default() };
        Neighborhood {
            speed: v.state.speed,
            desired_speed: v.desired_speed,
            since_change: self.time - v.last_lane_change,
            current,
            left: (lane + 1 < self.spec.lanes).then(|| self.lane_view(id, lane + 1)),
            right: (lane > 0).then(|| self.lane_view(id, lane - 1)),
        }
    }

    /// Evaluate lane changes of all non-platoon vehicles in id order.
    pub fn lane_changes(&mut self, events: &mut Vec<Event>) {
        let p = self.spec.lane_change;
        for id in 0..self.vehicles.len() {
            if self.vehicles[id].platoon.is_some() || self.time - self.vehicles[id].last_lane_change < p.cooldown {
                continue;
            }
            let from = self.vehicles[id].state.lane;
            let to = match lane_change_decision(&self.neighborhood(id), &p) {
                LaneChange::Stay => continue,
                LaneChange::Left => from + 1,
                LaneChange::Right => from - 1,
            };
            let k = self.slot[id];
            self.lanes[from].remove(k);
            self.reslot(from);
            let x = self.wrapped(id);
            let at = self.lanes[to].partition_point(|&j| self.wrapped(j) < x);
            self.lanes[to].insert(at, id);
            self.reslot(to);
            let v = &mut self.vehicles[id];
            v.state.lane = to;
            v.last_lane_change = self.time;
            events.push(Event { time: self.time, kind: EventKind::LaneChange, veh_a: id, veh_b: None, detail: format!("{from}->{to}") });
        }
    }
}

/// Same-lane bumper overlaps (gap <= 0) in the current world state.
pub fn detect_collisions(world: &World) -> Vec<Event> {
    let mut out = Vec::new();
    for lane in &world.lanes {
        if lane.len() < 2 {
            continue;
        }
        for (k, &ego) in lane.iter().enumerate() {
            let pred = lane[(k + 1) % lane.len()];
            let gap = world.bumper_gap(ego, pred);
            if gap <= 0.0 {
                out.push(Event {
                    time: world.time,
                    kind: EventKind::Collision,
                    veh_a: ego,
                    veh_b: Some(pred),
                    detail: format!("x={:.6} gap={:.6}", world.wrapped(ego), gap),
                });
            }
        }
    }
    out
}

/// Everything measured in one ring run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RingOutcome {
    pub spec: RingSpec,
    pub labels: Vec<Controller>,
    pub platoon_member: Vec<bool>,
    pub spawn_speeds: Vec<f64>,
    /// Device passings after the warmup.
    pub counters: Vec<CounterEvent>,
    /// Per-vehicle speeds sampled after the warmup.
    pub speed_samples: Vec<Vec<f64>>,
    /// Collisions and lane changes.
    pub events: Vec<Event>,
    pub terminated_by_collision: bool,
    pub end_time: f64,
    #[serde(skip)]
    pub trace: Option<Trace>,
}

impl RingOutcome {
    pub fn n_vehicles(&self) -> usize {
        self.labels.len()
    }

    pub fn throughput(&self) -> Result<ThroughputSeries> {
        let t0 = self.spec.warmup;
        throughput_series(&self.counters, self.spec.throughput_window, t0, t0 + self.spec.duration)
    }

    /// Run-average road throughput [veh/h].
    pub fn mean_throughput(&self) -> Result<f64> {
        Ok(self.throughput()?.mean_road())
    }

    /// Speed volatility per vehicle; vehicles with a degenerate series are skipped.
    pub fn volatilities(&self) -> Vec<f64> {
        self.speed_samples.iter().filter_map(|s| volatility(s).ok()).collect()
    }

    pub fn mean_speed(&self) -> f64 {
        let (sum, n) = self.speed_samples.iter().flatten().fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
        if n == 0 {
            0.0
        } else {
            sum / n as f64
        }
    }

    pub fn lane_change_count(&self) -> usize {
        self.events.iter().filter(|e| e.kind == EventKind::LaneChange).count()
    }

    pub fn collisions(&self) -> impl Iterator<Item = &Event> {
        self.events.iter().filter(|e| e.kind == EventKind::Collision)
    }
}

/// Spawn and simulate a ring for `warmup + duration` seconds.
pub fn run_ring(spec: &RingSpec, dynp: &DynamicsParams, params: &ControllerSet) -> Result<RingOutcome> {
    dynp.validate()?;
    let mut world = spawn_ring_traffic(spec, params)?;
    simulate(&mut world, dynp, params)
}

fn simulate(world: &mut World, dynp: &DynamicsParams, params: &ControllerSet) -> Result<RingOutcome> {
    let spec = world.spec.clone();
    let n = world.vehicles.len();
    let dt = dynp.dt;
    let per = |period: f64| ((period / dt).round() as usize).max(1);
    let steps = ((spec.warmup + spec.duration) / dt).round() as usize;
    let warmup_steps = (spec.warmup / dt).round() as usize;
    let beacon_every = per(params.beacon_period);
    let sample_every = per(spec.sample_period);
    let trace_every = spec.trace_period.map(per);
    let quarter = spec.circumference / 4.0;

    let mut events = Vec::new();
    let mut counters = Vec::new();
    let mut speed_samples = vec![Vec::with_capacity(((spec.duration / spec.sample_period) as usize) + 1); n];
    let mut trace = trace_every.map(|_| Trace::new(world.vehicles.iter().map(|v| v.label).collect()));
    let mut broadcast: Vec<Beacon> = Vec::new();
    let mut commands = vec![0.0; n];
    let mut terminated = false;
    let mut end_time = spec.warmup + spec.duration;

    for k in 0..steps {
        let t = k as f64 * dt;
        world.time = t;
        if k % beacon_every == 0 {
            world.rebuild_lanes();
            world.lane_changes(&mut events);
            broadcast =
                world.vehicles.iter().map(|v| Beacon { ctrl_input: commands[v.id], ..Beacon::from_state(v.id, &v.state, t) }).collect();
        }
        if k >= warmup_steps && (k - warmup_steps) % sample_every == 0 {
            for (i, v) in world.vehicles.iter().enumerate() {
                speed_samples[i].push(v.state.speed);
            }
        }
        let record = trace_every.is_some_and(|e| k % e == 0);

        for id in 0..n {
            let ego = world.vehicles[id].state;
            // relative distances put neighbours into the ego's unwrapped frame
            let sensed = |j: usize, pos: f64| Beacon {
                position: pos,
                speed: world.vehicles[j].state.speed,
                length: world.vehicles[j].state.length,
                ..broadcast[j]
            };
            let pred = world.predecessor(id).map(|j| sensed(j, ego.position + world.ahead(id, j)));
            let (succ, leader) = match world.vehicles[id].platoon {
                Some(slot) if slot.index > 0 => {
                    let pl = &world.platoons[slot.platoon];
                    let succ = pl.members.get(slot.index + 1).map(|&j| sensed(j, ego.position - world.ahead(j, id)));
                    let leader = match pl.leaders.get(slot.index) {
                        Some(EgoLeader::Vehicle(m)) => {
                            let j = pl.members[m];
                            LeaderRef::Vehicle(Beacon { position: ego.position + world.ahead(id, j), ..broadcast[j] })
                        }
                        Some(EgoLeader::External) => LeaderRef::External { speed: world.vehicles[pl.members[0]].desired_speed, accel: 0.0 },
                        None => LeaderRef::None,
                    };
                    (succ, leader)
                }
                _ => (None, LeaderRef::None),
            };
            let nb = Neighbors { pred, succ, leader };
            let d = world.agents[id].decide(&ego, &nb, params, t, dt);
            commands[id] = dynp.clamp(d.u, d.emergency);
        }

        if let Some(tr) = trace.as_mut().filter(|_| record) {
            let samples: Vec<Sample> = (0..n)
                .map(|i| {
                    let s = &world.vehicles[i].state;
                    Sample {
                        position: world.wrapped(i),
                        lane: s.lane,
                        speed: s.speed,
                        accel: s.accel,
                        ctrl_input: commands[i],
                        gap: world.predecessor(i).map(|j| world.bumper_gap(i, j)),
                        mode: world.agents[i].gsbl_mode(),
                    }
                })
                .collect();
            tr.push_tick(t, samples);
        }

        let t_next = (k + 1) as f64 * dt;
        for id in 0..n {
            let before = world.vehicles[id].state;
            let after = step_vehicle_with(&before, commands[id], dynp, false)?;
            world.vehicles[id].state = after;
            if k + 1 > warmup_steps {
                let (b0, b1) = ((before.position / quarter).floor() as i64, (after.position / quarter).floor() as i64);
                for b in b0 + 1..=b1 {
                    counters.push(CounterEvent {
                        device: Device::ALL[b.rem_euclid(4) as usize],
                        time: t_next,
                        vehicle: id,
                        lane: after.lane,
                    });
                }
            }
        }
        world.time = t_next;
        let hits = detect_collisions(world);
        if !hits.is_empty() {
            events.extend(hits);
            terminated = true;
            end_time = t_next;
            break;
        }
    }

    if let Some(tr) = trace.as_mut() {
        tr.events = events.clone();
        tr.counters = counters.clone();
        tr.terminated_by_collision = terminated;
    }
    Ok(RingOutcome {
        labels: world.vehicles.iter().map(|v| v.label).collect(),
        platoon_member: world.vehicles.iter().map(|v| v.platoon.is_some()).collect(),
        spawn_speeds: world.spawn_speeds.clone(),
        spec,
        counters,
        speed_samples,
        events,
        terminated_by_collision: terminated,
        end_time,
        trace,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn short(density: f64, r: f64) -> RingSpec {
        RingSpec { density, penetration: r, duration: 30.0, warmup: 10.0, ..RingSpec::default() }
    }

    #[test]
    fn spawn_counts() {
        let s = RingSpec { density: 60.0, penetration: 0.5, platoon_size: 8, ..RingSpec::default() };
        assert_eq!(s.n_vehicles(), 600);
        assert_eq!(s.n_platoons(), 37);
        assert_eq!(s.n_singles(), 304);
        let s = RingSpec { density: 10.0, ..RingSpec::default() };
        assert_eq!((s.n_vehicles(), s.n_platoons()), (100, 0));
    }

    #[test]
    fn spawn_is_collision_free_and_platoons_stay_together() {
        let p = ControllerSet::default();
        let w = spawn_ring_traffic(&RingSpec { density: 60.0, penetration: 0.5, ..RingSpec::default() }, &p).unwrap();
        assert!(detect_collisions(&w).is_empty());
        assert_eq!(w.vehicles.len(), 600);
        for pl in &w.platoons {
            let lane = w.vehicles[pl.members[0]].state.lane;
            for pair in pl.members.windows(2) {
                assert_eq!(w.vehicles[pair[1]].state.lane, lane);
                assert_eq!(w.predecessor(pair[1]), Some(pair[0]));
            }
        }
    }

    #[test]
    fn dense_idm_spawn_fits() {
        let s = RingSpec { density: 180.0, baseline: BaselinePolicy::Idm, ..RingSpec::default() };
        let w = spawn_ring_traffic(&s, &ControllerSet::default()).unwrap();
        assert_eq!(w.vehicles.len(), 1800);
        assert!(detect_collisions(&w).is_empty());
    }

    #[test]
    fn overfill_reports_capacity() {
        let s = RingSpec { density: 2000.0, ..RingSpec::default() };
        match spawn_ring_traffic(&s, &ControllerSet::default()) {
            Err(CoreError::Overfill { requested, max_density }) => {
                assert_eq!(requested, 2000.0);
                assert!(max_density > 100.0 && max_density < 2000.0, "{max_density}");
            }
            other => panic!("expected overfill, got {other:?}"),
        }
    }

    #[test]
    fn collision_detection_rules() {
        let spec = RingSpec::default();
        let p = ControllerSet::default();
        let w = World::with_vehicles(&spec, &[(0, 100.0, 20.0, Controller::Acc), (0, 150.0, 20.0, Controller::Acc)], &p).unwrap();
        assert!(detect_collisions(&w).is_empty());
        let w = World::with_vehicles(&spec, &[(0, 100.0, 20.0, Controller::Acc), (0, 103.99, 20.0, Controller::Acc)], &p).unwrap();
        let ev = detect_collisions(&w);
        assert_eq!(ev.len(), 1);
        assert_eq!((ev[0].veh_a, ev[0].veh_b), (0, Some(1)));
        let w = World::with_vehicles(&spec, &[(0, 100.0, 20.0, Controller::Acc), (1, 101.0, 20.0, Controller::Acc)], &p).unwrap();
        assert!(detect_collisions(&w).is_empty());
        // wrap-around pair
        let w = World::with_vehicles(&spec, &[(0, 9_998.0, 20.0, Controller::Acc), (0, 1.0, 20.0, Controller::Acc)], &p).unwrap();
        assert_eq!(detect_collisions(&w).len(), 1);
    }

    #[test]
    fn short_run_is_deterministic() {
        let d = DynamicsParams::default();
        let p = ControllerSet::default();
        let s = RingSpec { policy: PlatoonPolicy::RandomMix, ..short(20.0, 0.5) };
        let a = run_ring(&s, &d, &p).unwrap();
        let b = run_ring(&s, &d, &p).unwrap();
        assert_eq!(a, b);
        assert!(!a.terminated_by_collision);
        assert!(!a.counters.is_empty());
    }

    #[test]
    fn zero_penetration_ignores_policy() {
        let d = DynamicsParams::default();
        let p = ControllerSet::default();
        let a = run_ring(&RingSpec { policy: PlatoonPolicy::AllP, ..short(20.0, 0.0) }, &d, &p).unwrap();
        let b = run_ring(&RingSpec { policy: PlatoonPolicy::AllG, ..short(20.0, 0.0) }, &d, &p).unwrap();
        assert_eq!(a.counters, b.counters);
        assert_eq!(a.speed_samples, b.speed_samples);
    }
}
