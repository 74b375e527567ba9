//! Ring-road runs and the factorial traffic sweep.

use std::collections::BTreeMap;
use std::path::PathBuf;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use platoon_core::metrics::{box_stats, BoxStats};
use platoon_core::scenarios::{run_ring, Event, RingOutcome, RingSpec};

use crate::spec::{ExperimentSpec, RingCell, Traffic};
use crate::store::Store;

/// What is kept of one ring run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RingRecord {
    pub cell: RingCell,
    pub seed: u64,
    pub n_vehicles: usize,
    pub window_s: f64,
    /// Road throughput per counting window [veh/h].
    pub road_throughput: Vec<f64>,
    /// N, E, S, W throughput per counting window [veh/h].
    pub device_throughput: [Vec<f64>; 4],
    pub mean_throughput: f64,
    pub mean_speed: f64,
    /// Speed volatility of every vehicle.
    pub volatility: Vec<f64>,
    pub lane_changes: usize,
    pub terminated_by_collision: bool,
    pub end_time: f64,
    pub collisions: Vec<Event>,
}

impl RingRecord {
    pub fn from_outcome(cell: RingCell, o: &RingOutcome) -> anyhow::Result<Self> {
        let series = o.throughput()?;
        let device_throughput = platoon_core::scenarios::Device::ALL.map(|d| series.rate(d));
        Ok(Self {
            cell,
            seed: o.spec.seed,
            n_vehicles: o.n_vehicles(),
            window_s: series.window_s,
            road_throughput: series.road(),
            device_throughput,
            mean_throughput: series.mean_road(),
            mean_speed: o.mean_speed(),
            volatility: o.volatilities(),
            lane_changes: o.lane_change_count(),
            terminated_by_collision: o.terminated_by_collision,
            end_time: o.end_time,
            collisions: o.collisions().cloned().collect(),
        })
    }
}

/// Ring spec of `cell` with seed `seed`, built from the spec's `[ring]` section.
pub fn cell_spec(spec: &ExperimentSpec, cell: &RingCell, seed: u64) -> RingSpec {
    cell.ring_spec(&spec.ring, spec.grid.platoon_traffic, seed)
}

pub fn seeds(spec: &ExperimentSpec) -> Vec<u64> {
    (0..spec.grid.repetitions as u64).map(|k| spec.ring.seed + k).collect()
}

pub fn run_cell(spec: &ExperimentSpec, cell: &RingCell, seed: u64) -> anyhow::Result<RingRecord> {
    let o = run_ring(&cell_spec(spec, cell, seed), &spec.dynamics, &spec.controllers)?;
    RingRecord::from_outcome(*cell, &o)
}

fn record_path(cell: &RingCell, seed: u64) -> PathBuf {
    PathBuf::from("ring").join("runs").join(format!("{}_s{seed}.json", cell.key()))
}

#[derive(Debug, Default)]
pub struct RingSweepOutcome {
    pub records: Vec<RingRecord>,
    pub failures: Vec<(String, String)>,
    pub resumed: usize,
}

/// Run every `(cell, seed)` pair not already stored for this spec.
pub fn sweep_ring(spec: &ExperimentSpec, store: &Store, cells: &[RingCell], seeds: &[u64]) -> RingSweepOutcome {
    let jobs: Vec<(RingCell, u64)> = cells.iter().flat_map(|c| seeds.iter().map(move |&s| (*c, s))).collect();
    let done: Vec<_> = jobs
        .par_iter()
        .map(|(cell, seed)| {
            let path = record_path(cell, *seed);
            if let Some(r) = store.load_current::<RingRecord>(&path) {
                return (cell, seed, Ok((r, true)));
            }
            let res = run_cell(spec, cell, *seed).and_then(|r| {
                store.write_json(&path, &r)?;
                Ok(r)
            });
            (cell, seed, res.map(|r| (r, false)).map_err(|e| format!("{e:#}")))
        })
        .collect();
    let mut out = RingSweepOutcome::default();
    for (cell, seed, res) in done {
        match res {
            Ok((r, resumed)) => {
                out.resumed += resumed as usize;
                out.records.push(r);
            }
            Err(e) => out.failures.push((format!("{} seed {seed}", cell.key()), e)),
        }
    }
    out
}

pub fn load_records(store: &Store) -> anyhow::Result<(Vec<RingRecord>, usize)> {
    let all = store.load_all::<RingRecord>(PathBuf::from("ring").join("runs"))?;
    let stale = all.iter().filter(|s| s.spec_hash != store.spec_hash()).count();
    Ok((all.into_iter().filter(|s| s.spec_hash == store.spec_hash()).map(|s| s.body).collect(), stale))
}

/// Mean with a Student-t confidence interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanCi {
    pub n: usize,
    pub mean: f64,
    pub low: f64,
    pub high: f64,
}

pub fn mean_ci(values: &[f64], level: f64) -> Option<MeanCi> {
    let n = values.len();
    if n == 0 {
        return None;
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return Some(MeanCi { n, mean, low: mean, high: mean });
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    let t = StudentsT::new(0.0, 1.0, (n - 1) as f64).ok()?.inverse_cdf(0.5 + level / 2.0);
    let half = t * (var / n as f64).sqrt();
    Some(MeanCi { n, mean, low: mean - half, high: mean + half })
}

/// Aggregate of all seeds of one cell. Collision-terminated runs are
/// counted but left out of the throughput and volatility statistics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellSummary {
    pub cell: RingCell,
    pub runs: usize,
    pub collided: usize,
    pub throughput: Option<MeanCi>,
    pub volatility: Option<BoxStats>,
}

pub fn summarize(records: &[RingRecord]) -> Vec<CellSummary> {
    let mut by_cell: BTreeMap<String, Vec<&RingRecord>> = BTreeMap::new();
    for r in records {
        by_cell.entry(r.cell.key()).or_default().push(r);
    }
    let mut out: Vec<CellSummary> = by_cell
        .into_values()
        .map(|rs| {
            let ok: Vec<&&RingRecord> = rs.iter().filter(|r| !r.terminated_by_collision).collect();
            let thr: Vec<f64> = ok.iter().map(|r| r.mean_throughput).collect();
            let vol: Vec<f64> = ok.iter().flat_map(|r| r.volatility.iter().copied()).collect();
            CellSummary {
                cell: rs[0].cell,
                runs: rs.len(),
                collided: rs.len() - ok.len(),
                throughput: mean_ci(&thr, 0.95),
                volatility: box_stats(&vol),
            }
        })
        .collect();
    out.sort_by(|a, b| cell_order(&a.cell).partial_cmp(&cell_order(&b.cell)).expect("finite grid values"));
    out
}

/// Density first, then baselines before platoon cells.
fn cell_order(c: &RingCell) -> (f64, usize, String, usize, f64) {
    match c.traffic {
        Traffic::Baseline { baseline } => (c.density, 0, baseline.to_string(), 0, 0.0),
        Traffic::Platoons { policy, size, penetration } => (c.density, 1, policy.to_string(), size, penetration),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ci_of_constant_values_is_a_point() {
        let m = mean_ci(&[5.0, 5.0, 5.0], 0.95).unwrap();
        assert_eq!((m.mean, m.low, m.high), (5.0, 5.0, 5.0));
    }

    #[test]
    fn ci_uses_the_t_quantile() {
        // n = 2: t(0.975, 1) = 12.706
        let m = mean_ci(&[0.0, 2.0], 0.95).unwrap();
        let half = m.high - m.mean;
        assert!((half - 12.7062 * 1.0).abs() < 1e-3, "{half}");
    }

    #[test]
    fn short_cell_round_trip() {
        let mut spec = ExperimentSpec::default();
        spec.ring.duration = 30.0;
        spec.ring.warmup = 10.0;
        let dir = tempfile::tempdir().unwrap();
        let store = Store::open(dir.path(), spec.hash()).unwrap();
        let cell = RingCell { density: 20.0, traffic: Traffic::Baseline { baseline: platoon_core::scenarios::BaselinePolicy::Acc } };
        let out = sweep_ring(&spec, &store, &[cell], &[1, 2]);
        assert!(out.failures.is_empty());
        assert_eq!(out.records.len(), 2);
        let again = sweep_ring(&spec, &store, &[cell], &[1, 2]);
        assert_eq!(again.resumed, 2);
        let (loaded, _) = load_records(&store).unwrap();
        let s = summarize(&loaded);
        assert_eq!(s.len(), 1);
        assert_eq!(s[0].runs, 2);
        assert!(s[0].throughput.unwrap().mean > 0.0);
    }

    proptest::proptest! {
        #[test]
        fn ci_brackets_the_mean(values in proptest::collection::vec(0.0f64..1e4, 1..30)) {
            let m = mean_ci(&values, 0.95).unwrap();
            proptest::prop_assert!(m.low <= m.mean && m.mean <= m.high);
            proptest::prop_assert!((m.high - m.mean - (m.mean - m.low)).abs() < 1e-6);
        }
    }
}
