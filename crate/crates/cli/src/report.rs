//! Text tables and plot-ready CSVs built from the result store.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::path::PathBuf;

use platoon_core::scenarios::ScenarioKind;

use crate::ring::{load_records, seeds, summarize, CellSummary, RingRecord};
use crate::single::{load_results, worst_case, SingleResult};
use crate::spec::{ExperimentSpec, Traffic};
use crate::store::Store;

fn vehicle(v: usize) -> String {
    format!("(V{v})")
}

/// Worst Δa, worst Δd and best η rows per scenario and platoon size, over
/// the swept mixes accepted by `keep`.
pub fn worst_case_table(results: &[SingleResult], keep: impl Fn(&str) -> bool) -> String {
    let mut groups: BTreeMap<(usize, ScenarioKind), Vec<&SingleResult>> = BTreeMap::new();
    for r in results.iter().filter(|r| !r.baseline && keep(&r.report.config)) {
        groups.entry((r.n, r.report.scenario)).or_default().push(r);
    }
    let mut s = String::new();
    writeln!(s, "{:<3} {:>3}  {:<20} {:>14} {:>14} {:>8}  worst", "sc", "N", "config", "delta_a (veh)", "delta_d (veh)", "eta").unwrap();
    for ((n, kind), rows) in &groups {
        let Some(w) = worst_case(rows.iter().copied()) else { continue };
        for (which, r) in [("delta_a", w.delta_a), ("delta_d", w.delta_d), ("eta", w.eta)] {
            let m = &r.report;
            writeln!(
                s,
                "{:<3} {:>3}  {:<20} {:>8.2} {:<5} {:>8.2} {:<5} {:>8.2}  {}",
                kind.tag(),
                n,
                m.config,
                m.delta_a,
                vehicle(m.delta_a_vehicle),
                m.delta_d,
                vehicle(m.delta_d_vehicle),
                m.eta,
                which
            )
            .unwrap();
        }
    }
    s
}

pub fn single_csv(results: &[SingleResult]) -> String {
    let mut s = String::from("scenario,N,config,baseline,delta_a,delta_a_vehicle,delta_d,delta_d_vehicle,eta,min_gap,collided\n");
    let mut rows: Vec<&SingleResult> = results.iter().collect();
    rows.sort_by(|a, b| {
        (a.report.scenario, a.n, !a.baseline, &a.report.config).cmp(&(b.report.scenario, b.n, !b.baseline, &b.report.config))
    });
    for r in rows {
        let m = &r.report;
        writeln!(
            s,
            "{},{},{},{},{:.6},{},{:.6},{},{:.6},{:.6},{}",
            m.scenario.as_str(),
            r.n,
            m.config,
            r.baseline,
            m.delta_a,
            m.delta_a_vehicle,
            m.delta_d,
            m.delta_d_vehicle,
            m.eta,
            m.min_gap,
            m.collided
        )
        .unwrap();
    }
    s
}

fn grid_columns(c: &CellSummary) -> (String, usize, f64) {
    match c.cell.traffic {
        Traffic::Baseline { baseline } => (baseline.to_string(), 0, 0.0),
        Traffic::Platoons { policy, size, penetration } => (policy.to_string(), size, penetration),
    }
}

/// Throughput per cell with a 95% interval; `free_flow` is density times
/// the mean desired speed.
pub fn throughput_csv(summaries: &[CellSummary], spec: &ExperimentSpec) -> String {
    let mean_class = spec.ring.speed_classes.iter().sum::<f64>() / spec.ring.speed_classes.len() as f64;
    let mut s = String::from("density,policy,N,R,runs,mean_thr,ci_low,ci_high,collided,free_flow\n");
    for c in summaries {
        let (policy, n, r) = grid_columns(c);
        let (mean, lo, hi) = match c.throughput {
            Some(t) => (format!("{:.6}", t.mean), format!("{:.6}", t.low), format!("{:.6}", t.high)),
            None => ("NA".into(), "NA".into(), "NA".into()),
        };
        writeln!(
            s,
            "{:.6},{},{},{:.2},{},{},{},{},{},{:.6}",
            c.cell.density,
            policy,
            n,
            r,
            c.runs,
            mean,
            lo,
            hi,
            c.collided,
            c.cell.density * mean_class * 3.6
        )
        .unwrap();
    }
    s
}

pub fn volatility_csv(summaries: &[CellSummary]) -> String {
    let mut s = String::from("density,label,policy,N,R,count,whisker_low,q1,median,q3,whisker_high,outliers\n");
    for c in summaries {
        let (policy, n, r) = grid_columns(c);
        let head = format!("{:.6},{},{},{},{:.2}", c.cell.density, c.cell.label(), policy, n, r);
        match &c.volatility {
            Some(b) => writeln!(
                s,
                "{head},{},{:.6},{:.6},{:.6},{:.6},{:.6},{}",
                b.n,
                b.whisker_low,
                b.q1,
                b.median,
                b.q3,
                b.whisker_high,
                b.outliers.len()
            )
            .unwrap(),
            None => writeln!(s, "{head},0,NA,NA,NA,NA,NA,0").unwrap(),
        }
    }
    s
}

pub fn collisions_csv(records: &[RingRecord]) -> String {
    let mut s = String::from("cell,seed,t,veh_a,veh_b,detail\n");
    let mut rows: Vec<&RingRecord> = records.iter().filter(|r| r.terminated_by_collision).collect();
    rows.sort_by_key(|r| (r.cell.key(), r.seed));
    for r in rows {
        for e in &r.collisions {
            let b = e.veh_b.map(|b| b.to_string()).unwrap_or_default();
            writeln!(s, "{},{},{:.6},{},{},{}", r.cell.key(), r.seed, e.time, e.veh_a, b, e.detail).unwrap();
        }
    }
    s
}

/// Grid cells with fewer stored runs than requested.
pub fn missing_ring_runs(records: &[RingRecord], spec: &ExperimentSpec) -> Vec<String> {
    let have: BTreeSet<(String, u64)> = records.iter().map(|r| (r.cell.key(), r.seed)).collect();
    let want = seeds(spec);
    spec.grid
        .cells()
        .iter()
        .filter_map(|c| {
            let n = want.iter().filter(|&&s| have.contains(&(c.key(), s))).count();
            (n < want.len()).then(|| format!("{} ({n}/{} runs)", c.key(), want.len()))
        })
        .collect()
}

/// Write every report that the stored results allow; returns the files written.
pub fn emit_reports(store: &Store, spec: &ExperimentSpec) -> anyhow::Result<Vec<PathBuf>> {
    let mut written = Vec::new();
    let (single, stale_single) = load_results(store)?;
    if !single.is_empty() {
        let note = if stale_single > 0 { format!("# {stale_single} results from another spec ignored\n") } else { String::new() };
        let all = worst_case_table(&single, |_| true);
        let no_g = worst_case_table(&single, |c| !c.contains('G'));
        written.push(store.write_text("reports/single_worst_case.txt", &format!("{note}{all}"))?);
        written.push(store.write_text("reports/single_worst_case_no_gsbl.txt", &format!("{note}{no_g}"))?);
        written.push(store.write_text("reports/single_metrics.csv", &single_csv(&single))?);
    }
    let (records, stale_ring) = load_records(store)?;
    if !records.is_empty() {
        let summaries = summarize(&records);
        let mut note = String::new();
        if stale_ring > 0 {
            writeln!(note, "# {stale_ring} runs from another spec ignored").unwrap();
        }
        let missing = missing_ring_runs(&records, spec);
        let mut tail = String::new();
        for m in &missing {
            writeln!(tail, "# missing: {m}").unwrap();
        }
        written.push(store.write_text("reports/ring_throughput.csv", &format!("{note}{}{tail}", throughput_csv(&summaries, spec)))?);
        written.push(store.write_text("reports/ring_volatility.csv", &format!("{note}{}{tail}", volatility_csv(&summaries)))?);
        written.push(store.write_text("reports/ring_collisions.csv", &collisions_csv(&records))?);
    }
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;
    use platoon_core::metrics::MetricReport;

    fn row(cfg: &str, da: f64, dd: f64, eta: f64) -> SingleResult {
        SingleResult {
            n: 4,
            baseline: false,
            report: MetricReport {
                config: cfg.into(),
                scenario: ScenarioKind::Sinusoidal,
                delta_a: da,
                delta_a_vehicle: 3,
                delta_d: dd,
                delta_d_vehicle: 2,
                eta,
                delta_a_per_vehicle: vec![],
                delta_d_per_vehicle: vec![],
                window: [40.0, 90.0],
                window_truncated: false,
                min_gap: 1.0,
                collided: false,
            },
        }
    }

    #[test]
    fn table_picks_the_extremes() {
        let rows = vec![row("-GPG", -1.0, -0.5, 5.7), row("-GLG", -0.9, -1.0, 2.7), row("-PPP", -0.3, 0.0, 7.4)];
        let t = worst_case_table(&rows, |_| true);
        let lines: Vec<&str> = t.lines().skip(1).collect();
        assert_eq!(lines.len(), 3);
        assert!(lines[0].contains("-GPG") && lines[0].ends_with("delta_a"));
        assert!(lines[1].contains("-GLG") && lines[1].ends_with("delta_d"));
        assert!(lines[2].contains("-PPP") && lines[2].ends_with("eta"));
        let t = worst_case_table(&rows, |c| !c.contains('G'));
        assert_eq!(t.lines().filter(|l| l.contains("-PPP")).count(), 3);
    }
}
