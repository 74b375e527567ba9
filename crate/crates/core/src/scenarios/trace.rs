//! Time-indexed record of one experiment run plus CSV export.

use std::io::{self, Write};

use serde::{Deserialize, Serialize};

use crate::controllers::GsblMode;
use crate::topology::Controller;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub position: f64,
    pub lane: usize,
    pub speed: f64,
    /// Actual (post-lag) acceleration.
    pub accel: f64,
    /// Command applied from this sample until the next control tick.
    pub ctrl_input: f64,
    /// Bumper gap to the predecessor; `None` without one.
    pub gap: Option<f64>,
    pub mode: Option<GsblMode>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum EventKind {
    Collision,
    ModeSwitch,
    LaneChange,
    ControlFlag,
}

impl EventKind {
    pub fn as_str(self) -> &'static str {
        match self {
            EventKind::Collision => "collision",
            EventKind::ModeSwitch => "mode_switch",
            EventKind::LaneChange => "lane_change",
            EventKind::ControlFlag => "control_flag",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Event {
    pub time: f64,
    pub kind: EventKind,
    pub veh_a: usize,
    pub veh_b: Option<usize>,
    pub detail: String,
}

/// Counting devices placed at the four compass points of a ring.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Device {
    N,
    E,
    S,
    W,
}

impl Device {
    pub const ALL: [Device; 4] = [Device::N, Device::E, Device::S, Device::W];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Device::N => "N",
            Device::E => "E",
            Device::S => "S",
            Device::W => "W",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CounterEvent {
    pub device: Device,
    pub time: f64,
    pub vehicle: usize,
    pub lane: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trace {
    /// Controller label per vehicle.
    pub labels: Vec<Controller>,
    pub times: Vec<f64>,
    /// Row-major: `samples[tick * n + vehicle]`.
    pub samples: Vec<Sample>,
    pub events: Vec<Event>,
    pub counters: Vec<CounterEvent>,
    pub terminated_by_collision: bool,
}

impl Trace {
    pub fn new(labels: Vec<Controller>) -> Self {
        Self { labels, times: Vec::new(), samples: Vec::new(), events: Vec::new(), counters: Vec::new(), terminated_by_collision: false }
    }

    pub fn n_vehicles(&self) -> usize {
        self.labels.len()
    }

    pub fn n_ticks(&self) -> usize {
        self.times.len()
    }

    pub fn push_tick(&mut self, time: f64, samples: impl IntoIterator<Item = Sample>) {
        self.times.push(time);
        self.samples.extend(samples);
        debug_assert_eq!(self.samples.len(), self.times.len() * self.labels.len());
    }

    pub fn sample(&self, tick: usize, vehicle: usize) -> &Sample {
        &self.samples[tick * self.labels.len() + vehicle]
    }

    pub fn tick_samples(&self, tick: usize) -> &[Sample] {
        let n = self.labels.len();
        &self.samples[tick * n..(tick + 1) * n]
    }

    pub fn series(&self, vehicle: usize) -> impl Iterator<Item = (f64, &Sample)> + '_ {
        self.times.iter().enumerate().map(move |(k, &t)| (t, self.sample(k, vehicle)))
    }

    pub fn collisions(&self) -> impl Iterator<Item = &Event> {
        self.events.iter().filter(|e| e.kind == EventKind::Collision)
    }

    /// Minimum follower gap over the whole trace.
    pub fn min_gap(&self) -> Option<f64> {
        self.samples.iter().filter_map(|s| s.gap).reduce(f64::min)
    }

    /// Copy with every timestamp shifted by `dt`.
    pub fn time_shifted(&self, dt: f64) -> Self {
        let mut t = self.clone();
        t.times.iter_mut().for_each(|x| *x += dt);
        t.events.iter_mut().for_each(|e| e.time += dt);
        t.counters.iter_mut().for_each(|c| c.time += dt);
        t
    }

    /// `t,veh,lane,x,v,a,u,gap,ctrl,mode`
    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "t,veh,lane,x,v,a,u,gap,ctrl,mode")?;
        for (k, &t) in self.times.iter().enumerate() {
            for (i, s) in self.tick_samples(k).iter().enumerate() {
                let gap = s.gap.map(|g| format!("{g:.6}")).unwrap_or_default();
                let mode = s.mode.map(GsblMode::as_str).unwrap_or("");
                writeln!(
                    w,
                    "{t:.6},{i},{},{:.6},{:.6},{:.6},{:.6},{gap},{},{mode}",
                    s.lane,
                    s.position,
                    s.speed,
                    s.accel,
                    s.ctrl_input,
                    self.labels[i].symbol()
                )?;
            }
        }
        Ok(())
    }

    /// `t,kind,veh_a,veh_b,detail`
    pub fn write_events_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "t,kind,veh_a,veh_b,detail")?;
        for e in &self.events {
            let b = e.veh_b.map(|b| b.to_string()).unwrap_or_default();
            writeln!(w, "{:.6},{},{},{b},{}", e.time, e.kind.as_str(), e.veh_a, e.detail)?;
        }
        Ok(())
    }

    /// `t,device,veh,lane`
    pub fn write_counters_csv<W: Write>(&self, w: W) -> io::Result<()> {
        write_counters_csv(&self.counters, w)
    }
}

pub fn write_counters_csv<W: Write>(counters: &[CounterEvent], mut w: W) -> io::Result<()> {
    writeln!(w, "t,device,veh,lane")?;
    for c in counters {
        writeln!(w, "{:.6},{},{},{}", c.time, c.device.as_str(), c.vehicle, c.lane)?;
    }
    Ok(())
}
