//! Comparative platoon metrics (comfort, safety, efficiency) and the ring
//! traffic statistics (throughput, speed volatility).

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::controllers::ControllerSet;
use crate::dynamics::DynamicsParams;
use crate::error::{CoreError, Result};
use crate::scenarios::{run_single_platoon, CounterEvent, Device, ScenarioKind, SingleScenario, Trace};
use crate::topology::{Controller, PlatoonConfig};

/// End-of-emergency speed: 5 km/h.
pub const BRAKING_SPEED_FLOOR: f64 = 5.0 / 3.6;
/// Head command at or below which an emergency manoeuvre is considered started.
pub const EMERGENCY_ONSET: f64 = -4.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Window {
    pub t0: f64,
    pub t1: f64,
    /// The end condition was never met and the window runs to the trace end.
    pub truncated: bool,
}

impl Window {
    fn contains(&self, t: f64) -> bool {
        t >= self.t0 - 1e-9 && t <= self.t1 + 1e-9
    }
}

/// How the analysis window is derived from a trace.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum WindowRule {
    /// Offsets from the first timestamp of the trace.
    Fixed { from: f64, to: f64 },
    /// Emergency onset until every vehicle is below 5 km/h; samples of a
    /// vehicle already below 5 km/h are ignored for the comfort metric.
    Braking,
}

impl WindowRule {
    pub fn for_scenario(kind: ScenarioKind, warmup: f64, duration: f64) -> Self {
        match kind {
            ScenarioKind::Sinusoidal => WindowRule::Fixed { from: warmup, to: duration },
            ScenarioKind::Braking => WindowRule::Braking,
        }
    }

    pub fn resolve(&self, trace: &Trace) -> Result<Window> {
        match *self {
            WindowRule::Fixed { from, to } => {
                let start = *trace.times.first().ok_or_else(|| CoreError::TraceMismatch("empty trace".into()))?;
                let end = *trace.times.last().unwrap_or(&start);
                let t1 = (start + to).min(end);
                Ok(Window { t0: start + from, t1, truncated: start + to > end + 1e-9 })
            }
            WindowRule::Braking => braking_window(trace),
        }
    }
}

pub fn braking_window(trace: &Trace) -> Result<Window> {
    let onset = (0..trace.n_ticks()).find(|&k| trace.sample(k, 0).ctrl_input <= EMERGENCY_ONSET).ok_or(CoreError::NoBrakingOnset)?;
    let t0 = trace.times[onset];
    let end = (onset..trace.n_ticks()).find(|&k| trace.tick_samples(k).iter().all(|s| s.speed < BRAKING_SPEED_FLOOR));
    Ok(match end {
        Some(k) => Window { t0, t1: trace.times[k], truncated: false },
        None => Window { t0, t1: *trace.times.last().unwrap(), truncated: true },
    })
}

/// A per-follower metric plus its platoon-level minimum.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlatoonMetric {
    /// Entry `k` belongs to vehicle `k + 1`.
    pub per_vehicle: Vec<f64>,
    pub worst: f64,
    pub worst_vehicle: usize,
}

impl PlatoonMetric {
    fn from_followers(per_vehicle: Vec<f64>) -> Result<Self> {
        let (idx, &worst) = per_vehicle
            .iter()
            .enumerate()
            .min_by(|a, b| a.1.total_cmp(b.1))
            .ok_or_else(|| CoreError::Degenerate("platoon without followers".into()))?;
        Ok(Self { worst, worst_vehicle: idx + 1, per_vehicle })
    }
}

fn same_size(a: &Trace, b: &Trace) -> Result<()> {
    if a.n_vehicles() != b.n_vehicles() {
        return Err(CoreError::TraceMismatch(format!("platoon sizes differ: {} vs {}", a.n_vehicles(), b.n_vehicles())));
    }
    if a.n_vehicles() < 2 {
        return Err(CoreError::TraceMismatch("need at least one follower".into()));
    }
    Ok(())
}

fn max_abs_accel(trace: &Trace, vehicle: usize, w: &Window, floor: bool) -> f64 {
    trace
        .series(vehicle)
        .filter(|(t, s)| w.contains(*t) && !(floor && s.speed < BRAKING_SPEED_FLOOR))
        .map(|(_, s)| s.accel.abs())
        .fold(0.0, f64::max)
}

fn min_gap(trace: &Trace, vehicle: usize, w: &Window) -> Result<f64> {
    trace
        .series(vehicle)
        .filter(|(t, _)| w.contains(*t))
        .filter_map(|(_, s)| s.gap)
        .reduce(f64::min)
        .ok_or_else(|| CoreError::Degenerate(format!("vehicle {vehicle} has no gap samples in window")))
}

/// Comfort: `max|a^A_i| - max|a^c_i|` per follower, minimum over the platoon.
pub fn delta_a(trace_c: &Trace, trace_acc: &Trace, rule: WindowRule) -> Result<PlatoonMetric> {
    same_size(trace_c, trace_acc)?;
    let (wc, wa) = (rule.resolve(trace_c)?, rule.resolve(trace_acc)?);
    let floor = matches!(rule, WindowRule::Braking);
    let per = (1..trace_c.n_vehicles()).map(|i| max_abs_accel(trace_acc, i, &wa, floor) - max_abs_accel(trace_c, i, &wc, floor)).collect();
    PlatoonMetric::from_followers(per)
}

/// Safety: `min d^c_i - min d*_i` per follower, where `d*` is the gap of the
/// same vehicle in the homogeneous platoon of its own controller.
pub fn delta_d(trace_c: &Trace, cfg: &PlatoonConfig, homogeneous: &BTreeMap<Controller, Trace>, rule: WindowRule) -> Result<PlatoonMetric> {
    if cfg.len() != trace_c.n_vehicles() {
        return Err(CoreError::TraceMismatch("config and trace sizes differ".into()));
    }
    let wc = rule.resolve(trace_c)?;
    let mut per = Vec::with_capacity(cfg.len() - 1);
    for i in 1..cfg.len() {
        let ctrl = cfg.get(i);
        let base = homogeneous.get(&ctrl).ok_or(CoreError::MissingBaseline(ctrl))?;
        same_size(trace_c, base)?;
        let wb = rule.resolve(base)?;
        per.push(min_gap(trace_c, i, &wc)? - min_gap(base, i, &wb)?);
    }
    PlatoonMetric::from_followers(per)
}

/// Maximum over the window of the summed follower gaps.
pub fn max_occupancy(trace: &Trace, w: &Window) -> f64 {
    (0..trace.n_ticks())
        .filter(|&k| w.contains(trace.times[k]))
        .map(|k| trace.tick_samples(k).iter().filter_map(|s| s.gap).sum::<f64>())
        .fold(f64::NEG_INFINITY, f64::max)
}

/// Efficiency `L^A_max / L^c_max`.
pub fn eta(trace_c: &Trace, trace_acc: &Trace, rule: WindowRule) -> Result<f64> {
    same_size(trace_c, trace_acc)?;
    let lc = max_occupancy(trace_c, &rule.resolve(trace_c)?);
    let la = max_occupancy(trace_acc, &rule.resolve(trace_acc)?);
    if !(lc > 0.0) || !(la > 0.0) {
        return Err(CoreError::Degenerate(format!("non-positive occupancy ({la} / {lc})")));
    }
    Ok(la / lc)
}

/// One row of the comparative tables.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub config: String,
    pub scenario: ScenarioKind,
    pub delta_a: f64,
    pub delta_a_vehicle: usize,
    pub delta_d: f64,
    pub delta_d_vehicle: usize,
    pub eta: f64,
    pub delta_a_per_vehicle: Vec<f64>,
    pub delta_d_per_vehicle: Vec<f64>,
    pub window: [f64; 2],
    pub window_truncated: bool,
    pub min_gap: f64,
    pub collided: bool,
}

/// Baseline traces a configuration is compared against: the all-ACC string
/// and one homogeneous platoon per controller (ACC included).
#[derive(Debug, Clone, PartialEq)]
pub struct Baselines {
    pub acc: Trace,
    pub homogeneous: BTreeMap<Controller, Trace>,
}

impl Baselines {
    pub fn new(acc: Trace, mut homogeneous: BTreeMap<Controller, Trace>) -> Self {
        homogeneous.entry(Controller::Acc).or_insert_with(|| acc.clone());
        Self { acc, homogeneous }
    }

    /// Run the four homogeneous platoons (`-AAA…`, `-PPP…`, `-LLL…`, `-GGG…`)
    /// with the size and settings of `template`.
    pub fn simulate(template: &SingleScenario, dynp: &DynamicsParams, params: &ControllerSet) -> Result<Self> {
        let n = template.cfg.len();
        let mut homogeneous = BTreeMap::new();
        for ctrl in [Controller::Acc, Controller::Path, Controller::Ploeg, Controller::Gsbl] {
            let cfg = PlatoonConfig::homogeneous(ctrl, n)?;
            homogeneous.insert(ctrl, run_single_platoon(&template.with_cfg(cfg), dynp, params)?);
        }
        let acc = homogeneous[&Controller::Acc].clone();
        Ok(Self { acc, homogeneous })
    }
}

pub fn metric_report(
    cfg: &PlatoonConfig,
    scenario: ScenarioKind,
    trace: &Trace,
    baselines: &Baselines,
    rule: WindowRule,
) -> Result<MetricReport> {
    let da = delta_a(trace, &baselines.acc, rule)?;
    let dd = delta_d(trace, cfg, &baselines.homogeneous, rule)?;
    let w = rule.resolve(trace)?;
    Ok(MetricReport {
        config: cfg.to_string(),
        scenario,
        delta_a: da.worst,
        delta_a_vehicle: da.worst_vehicle,
        delta_d: dd.worst,
        delta_d_vehicle: dd.worst_vehicle,
        eta: eta(trace, &baselines.acc, rule)?,
        delta_a_per_vehicle: da.per_vehicle,
        delta_d_per_vehicle: dd.per_vehicle,
        window: [w.t0, w.t1],
        window_truncated: w.truncated,
        min_gap: trace.min_gap().unwrap_or(f64::INFINITY),
        collided: trace.terminated_by_collision,
    })
}

/// Per-device passing counts in consecutive windows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThroughputSeries {
    pub window_s: f64,
    pub t_start: f64,
    /// `counts[device][window]`
    pub counts: [Vec<usize>; 4],
}

impl ThroughputSeries {
    /// Vehicles per hour at one device, per window.
    pub fn rate(&self, device: Device) -> Vec<f64> {
        let scale = 3600.0 / self.window_s;
        self.counts[device.index()].iter().map(|&c| c as f64 * scale).collect()
    }

    /// Road throughput: mean over the four devices, per window.
    pub fn road(&self) -> Vec<f64> {
        let rates: Vec<Vec<f64>> = Device::ALL.iter().map(|&d| self.rate(d)).collect();
        (0..self.counts[0].len()).map(|k| rates.iter().map(|r| r[k]).sum::<f64>() / 4.0).collect()
    }

    pub fn mean_road(&self) -> f64 {
        let r = self.road();
        if r.is_empty() {
            0.0
        } else {
            r.iter().sum::<f64>() / r.len() as f64
        }
    }
}

/// Bin counter events from `[t_start, t_end)` into `window_s` windows.
pub fn throughput_series(counters: &[CounterEvent], window_s: f64, t_start: f64, t_end: f64) -> Result<ThroughputSeries> {
    if !(window_s > 0.0) {
        return Err(CoreError::InvalidParam(format!("window must be > 0, got {window_s}")));
    }
    let n = ((t_end - t_start) / window_s - 1e-9).ceil().max(0.0) as usize;
    let mut counts: [Vec<usize>; 4] = std::array::from_fn(|_| vec![0; n]);
    for c in counters {
        if c.time < t_start || c.time >= t_end {
            continue;
        }
        let k = (((c.time - t_start) / window_s) as usize).min(n.saturating_sub(1));
        counts[c.device.index()][k] += 1;
    }
    Ok(ThroughputSeries { window_s, t_start, counts })
}

/// Coefficient of variation `sigma / |mean|` with the `n - 1` estimator.
pub fn volatility(series: &[f64]) -> Result<f64> {
    if series.len() < 2 {
        return Err(CoreError::Degenerate("volatility needs at least 2 samples".into()));
    }
    let n = series.len() as f64;
    let mean = series.iter().sum::<f64>() / n;
    if mean == 0.0 {
        return Err(CoreError::Degenerate("zero-mean speed series".into()));
    }
    let var = series.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    Ok(var.sqrt() / mean.abs())
}

/// Linear-interpolated quantile of sorted data.
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

/// Boxplot summary: quartiles, whiskers at the last sample within 1.5 IQR,
/// and the samples beyond them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoxStats {
    pub n: usize,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub whisker_low: f64,
    pub whisker_high: f64,
    pub outliers: Vec<f64>,
}

pub fn box_stats(values: &[f64]) -> Option<BoxStats> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let (q1, median, q3) = (quantile_sorted(&v, 0.25), quantile_sorted(&v, 0.5), quantile_sorted(&v, 0.75));
    let iqr = q3 - q1;
    let (lo_fence, hi_fence) = (q1 - 1.5 * iqr, q3 + 1.5 * iqr);
    let inside = || v.iter().copied().filter(|&x| x >= lo_fence && x <= hi_fence);
    Some(BoxStats {
        n: v.len(),
        q1,
        median,
        q3,
        whisker_low: inside().reduce(f64::min).unwrap_or(q1),
        whisker_high: inside().reduce(f64::max).unwrap_or(q3),
        outliers: v.iter().copied().filter(|&x| x < lo_fence || x > hi_fence).collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenarios::Sample;

    fn synthetic(speeds: &[&[f64]], u0: &[f64]) -> Trace {
        let n = speeds[0].len();
        let mut t = Trace::new(vec![Controller::Independent; n]);
        for (k, row) in speeds.iter().enumerate() {
            let samples = row.iter().enumerate().map(|(i, &v)| Sample {
                position: 0.0,
                lane: 0,
                speed: v,
                accel: 0.0,
                ctrl_input: if i == 0 { u0[k] } else { 0.0 },
                gap: (i > 0).then_some(10.0),
                mode: None,
            });
            t.push_tick(k as f64, samples);
        }
        t
    }

    #[test]
    fn braking_window_bounds() {
        let t = synthetic(&[&[20.0, 20.0], &[12.0, 15.0], &[1.0, 2.0], &[0.0, 1.0]], &[0.0, -8.0, -8.0, 0.0]);
        assert_eq!(braking_window(&t).unwrap(), Window { t0: 1.0, t1: 3.0, truncated: false });
    }

    #[test]
    fn braking_window_truncated_and_degenerate() {
        let t = synthetic(&[&[20.0, 20.0], &[12.0, 15.0]], &[-8.0, -8.0]);
        assert!(braking_window(&t).unwrap().truncated);
        let t = synthetic(&[&[0.0, 0.0], &[0.0, 0.0]], &[-8.0, 0.0]);
        let w = braking_window(&t).unwrap();
        assert_eq!(w.t0, w.t1);
    }

    #[test]
    fn braking_window_needs_onset() {
        let t = synthetic(&[&[20.0, 20.0], &[21.0, 20.0]], &[1.0, -1.5]);
        assert_eq!(braking_window(&t), Err(CoreError::NoBrakingOnset));
    }

    #[test]
    fn volatility_values() {
        assert_eq!(volatility(&[7.0; 10]).unwrap(), 0.0);
        let x = volatility(&[10.0, 20.0]).unwrap();
        assert!((x - 5.0 * 2f64.sqrt() / 15.0).abs() < 1e-12);
        assert!(volatility(&[1.0, -1.0]).is_err());
        assert!(volatility(&[1.0]).is_err());
    }

    #[test]
    fn throughput_unit_conversion() {
        let ev: Vec<CounterEvent> = (0..10).map(|i| CounterEvent { device: Device::N, time: i as f64, vehicle: i, lane: 0 }).collect();
        let s = throughput_series(&ev, 15.0, 0.0, 15.0).unwrap();
        assert_eq!(s.rate(Device::N), vec![2400.0]);
        assert_eq!(s.rate(Device::S), vec![0.0]);
        assert_eq!(s.road(), vec![600.0]);
        let empty = throughput_series(&[], 15.0, 0.0, 60.0).unwrap();
        assert_eq!(empty.road(), vec![0.0; 4]);
        assert!(throughput_series(&[], 0.0, 0.0, 1.0).is_err());
    }

    #[test]
    fn box_stats_whiskers() {
        let mut v: Vec<f64> = (1..=9).map(f64::from).collect();
        v.push(100.0);
        let b = box_stats(&v).unwrap();
        assert_eq!(b.median, 5.5);
        assert_eq!(b.q1, 3.25);
        assert_eq!(b.q3, 7.75);
        assert_eq!(b.whisker_low, 1.0);
        assert_eq!(b.whisker_high, 9.0);
        assert_eq!(b.outliers, vec![100.0]);
    }
}

#[cfg(test)]
mod proptests {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #[test]
        fn volatility_is_scale_free(xs in proptest::collection::vec(1.0f64..40.0, 2..50), k in 0.01f64..100.0) {
            let a = volatility(&xs).unwrap();
            let scaled: Vec<f64> = xs.iter().map(|x| x * k).collect();
            let b = volatility(&scaled).unwrap();
            prop_assert!((a - b).abs() <= 1e-9 * (1.0 + a));
        }

        #[test]
        fn throughput_conserves_counts(times in proptest::collection::vec(0.0f64..600.0, 0..200)) {
            let ev: Vec<CounterEvent> = times.iter().enumerate()
                .map(|(i, &t)| CounterEvent { device: Device::ALL[i % 4], time: t, vehicle: i, lane: 0 })
                .collect();
            let s = throughput_series(&ev, 15.0, 0.0, 600.0).unwrap();
            for d in Device::ALL {
                let raw = ev.iter().filter(|e| e.device == d).count();
                prop_assert_eq!(s.counts[d.index()].iter().sum::<usize>(), raw);
            }
        }
    }
}
