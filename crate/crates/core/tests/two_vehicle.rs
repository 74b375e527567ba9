use platoon_core::controllers::{AccParams, PloegParams};
use platoon_core::scenarios::{run_single_platoon, ScenarioKind, SingleScenario, KMH};
use platoon_core::{parse_config, ControllerSet, DynamicsParams, Trace};

fn cruise(cfg: &str, offset: f64, params: &ControllerSet) -> Trace {
    let mut s = SingleScenario::new(ScenarioKind::Sinusoidal, parse_config(cfg).unwrap());
    s.profile.amplitude = 0.0;
    s.duration = 60.0 + 0.01;
    s.gap_offset = offset;
    run_single_platoon(&s, &DynamicsParams::default(), params).unwrap()
}

fn bare_headway() -> ControllerSet {
    ControllerSet {
        acc: AccParams { standstill: 0.0, ..AccParams::default() },
        ploeg: PloegParams { standstill: 0.0, ..PloegParams::default() },
        ..ControllerSet::default()
    }
}

fn final_gap(t: &Trace) -> f64 {
    t.sample(t.n_ticks() - 1, 1).gap.unwrap()
}

#[test]
fn steady_state_gaps_match_the_spacing_policies() {
    let p = bare_headway();
    let v = 100.0 * KMH;
    for (cfg, want) in [("-A", 1.2 * v), ("-L", 0.5 * v), ("-P", 5.0), ("-G", 5.0)] {
        let t = cruise(cfg, 10.0, &p);
        let gap = final_gap(&t);
        assert!((gap - want).abs() <= 0.01 * want, "{cfg}: gap {gap:.3} want {want:.3}");
        assert!(!t.terminated_by_collision);
    }
}

#[test]
fn default_standstill_adds_to_headway_gap() {
    let p = ControllerSet::default();
    let v = 100.0 * KMH;
    for (cfg, want) in [("-A", 2.0 + 1.2 * v), ("-L", 2.0 + 0.5 * v)] {
        let gap = final_gap(&cruise(cfg, 0.0, &p));
        assert!((gap - want).abs() < 1e-6, "{cfg}: {gap}");
    }
}

#[test]
fn converges_from_both_sides_without_collision() {
    let p = ControllerSet::default();
    for cfg in ["-A", "-L", "-P", "-G"] {
        for offset in [10.0, -2.5] {
            let t = cruise(cfg, offset, &p);
            let eq = p.equilibrium_gap(t.labels[1], 100.0 * KMH);
            let err = final_gap(&t) - eq;
            assert!(err.abs() < 0.1, "{cfg} offset {offset}: error {err:.4}");
            assert!(t.min_gap().unwrap() > 0.0);
        }
    }
}
