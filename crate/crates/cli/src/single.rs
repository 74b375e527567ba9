//! Single-platoon runs and the exhaustive (or sampled) mix sweep.

use std::path::PathBuf;

use anyhow::Context;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use platoon_core::metrics::{metric_report, Baselines, MetricReport, WindowRule};
use platoon_core::scenarios::{run_single_platoon, ScenarioKind, Trace};
use platoon_core::{Controller, PlatoonConfig};

use crate::spec::ExperimentSpec;
use crate::store::{config_file_stem, Store};

/// One row of the single-platoon result store.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SingleResult {
    #[serde(rename = "N")]
    pub n: usize,
    /// Homogeneous reference platoon rather than a swept mix.
    pub baseline: bool,
    #[serde(flatten)]
    pub report: MetricReport,
}

#[derive(Debug, Default)]
pub struct SweepOutcome {
    pub results: Vec<SingleResult>,
    /// `(config, error)` of every run that could not be evaluated.
    pub failures: Vec<(String, String)>,
    /// Runs reused from an earlier, interrupted invocation.
    pub resumed: usize,
}

pub const BASELINE_CONTROLLERS: [Controller; 4] = [Controller::Acc, Controller::Path, Controller::Ploeg, Controller::Gsbl];

pub fn window_rule(spec: &ExperimentSpec, kind: ScenarioKind, n: usize) -> anyhow::Result<WindowRule> {
    let s = spec.single.scenario_for(kind, PlatoonConfig::homogeneous(Controller::Acc, n)?);
    Ok(WindowRule::for_scenario(kind, s.warmup, s.duration))
}

pub fn simulate_baselines(spec: &ExperimentSpec, kind: ScenarioKind, n: usize) -> anyhow::Result<Baselines> {
    let template = spec.single.scenario_for(kind, PlatoonConfig::homogeneous(Controller::Acc, n)?);
    Ok(Baselines::simulate(&template, &spec.dynamics, &spec.controllers)?)
}

pub fn run_config(spec: &ExperimentSpec, kind: ScenarioKind, cfg: &PlatoonConfig) -> anyhow::Result<Trace> {
    let s = spec.single.scenario_for(kind, cfg.clone());
    Ok(run_single_platoon(&s, &spec.dynamics, &spec.controllers)?)
}

/// Run `cfg` and compare it with freshly simulated baselines.
pub fn evaluate(spec: &ExperimentSpec, kind: ScenarioKind, cfg: &PlatoonConfig) -> anyhow::Result<(MetricReport, Trace)> {
    let n = cfg.len();
    let baselines = simulate_baselines(spec, kind, n)?;
    let trace = run_config(spec, kind, cfg)?;
    let report = metric_report(cfg, kind, &trace, &baselines, window_rule(spec, kind, n)?)?;
    Ok((report, trace))
}

fn result_path(kind: ScenarioKind, n: usize, baseline: bool, cfg: &str) -> PathBuf {
    let group = if baseline { "baselines" } else { "mixes" };
    PathBuf::from("single").join(kind.as_str()).join(format!("N{n}")).join(group).join(format!("{}.json", config_file_stem(cfg)))
}

/// Sweep every mix of every requested size and scenario. Results are
/// persisted one file per configuration; files already produced by the
/// same spec are reused.
pub fn sweep_single(spec: &ExperimentSpec, store: &Store, sizes: &[usize], kinds: &[ScenarioKind]) -> anyhow::Result<SweepOutcome> {
    let mut out = SweepOutcome::default();
    for &kind in kinds {
        for &n in sizes {
            let rule = window_rule(spec, kind, n)?;
            let baselines = simulate_baselines(spec, kind, n).with_context(|| format!("{kind:?} N={n} baselines"))?;
            for ctrl in BASELINE_CONTROLLERS {
                let cfg = PlatoonConfig::homogeneous(ctrl, n)?;
                let report = metric_report(&cfg, kind, &baselines.homogeneous[&ctrl], &baselines, rule)?;
                let r = SingleResult { n, baseline: true, report };
                store.write_json(result_path(kind, n, true, &r.report.config), &r)?;
                out.results.push(r);
            }

            let mixes = spec.single.mixes(n)?;
            let done: Vec<(String, Result<(SingleResult, bool), String>)> = mixes
                .par_iter()
                .map(|cfg| {
                    let name = cfg.to_string();
                    let path = result_path(kind, n, false, &name);
                    if let Some(r) = store.load_current::<SingleResult>(&path) {
                        return (name, Ok((r, true)));
                    }
                    let run = || -> anyhow::Result<SingleResult> {
                        let trace = run_config(spec, kind, cfg)?;
                        let report = metric_report(cfg, kind, &trace, &baselines, rule)?;
                        let r = SingleResult { n, baseline: false, report };
                        store.write_json(&path, &r)?;
                        Ok(r)
                    };
                    (name, run().map(|r| (r, false)).map_err(|e| format!("{e:#}")))
                })
                .collect();
            for (name, res) in done {
                match res {
                    Ok((r, resumed)) => {
                        out.resumed += resumed as usize;
                        out.results.push(r);
                    }
                    Err(e) => out.failures.push((format!("{} N={n} {name}", kind.as_str()), e)),
                }
            }
        }
    }
    Ok(out)
}

/// Load every single-platoon result written by the spec with this hash.
pub fn load_results(store: &Store) -> anyhow::Result<(Vec<SingleResult>, usize)> {
    let mut results = Vec::new();
    let mut stale = 0;
    for kind in ScenarioKind::ALL {
        let base = PathBuf::from("single").join(kind.as_str());
        let Ok(sizes) = std::fs::read_dir(store.path(&base)) else { continue };
        let mut dirs: Vec<PathBuf> = sizes.filter_map(|e| e.ok()).filter(|e| e.path().is_dir()).map(|e| base.join(e.file_name())).collect();
        dirs.sort();
        for d in dirs {
            for group in ["baselines", "mixes"] {
                for s in store.load_all::<SingleResult>(d.join(group))? {
                    if s.spec_hash == store.spec_hash() {
                        results.push(s.body);
                    } else {
                        stale += 1;
                    }
                }
            }
        }
    }
    Ok((results, stale))
}

/// Worst comfort, worst safety and best efficiency among `results`.
#[derive(Debug, Clone, PartialEq)]
pub struct WorstCase<'a> {
    pub delta_a: &'a SingleResult,
    pub delta_d: &'a SingleResult,
    pub eta: &'a SingleResult,
}

pub fn worst_case<'a>(results: impl IntoIterator<Item = &'a SingleResult>) -> Option<WorstCase<'a>> {
    let mut it = results.into_iter();
    let first = it.next()?;
    let mut w = WorstCase { delta_a: first, delta_d: first, eta: first };
    for r in it {
        if r.report.delta_a < w.delta_a.report.delta_a {
            w.delta_a = r;
        }
        if r.report.delta_d < w.delta_d.report.delta_d {
            w.delta_d = r;
        }
        if r.report.eta > w.eta.report.eta {
            w.eta = r;
        }
    }
    Some(w)
}
