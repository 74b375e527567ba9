use platoon_core::metrics::{delta_a, delta_d, eta, metric_report, Baselines, WindowRule};
use platoon_core::scenarios::{run_single_platoon, ScenarioKind, SingleScenario, Trace};
use platoon_core::topology::PlatoonConfig;
use platoon_core::{parse_config, Controller, ControllerSet, DynamicsParams};

fn run(kind: ScenarioKind, cfg: &str) -> Trace {
    let s = SingleScenario::new(kind, parse_config(cfg).unwrap());
    run_single_platoon(&s, &DynamicsParams::default(), &ControllerSet::default()).unwrap()
}

fn rule(kind: ScenarioKind) -> WindowRule {
    let s = SingleScenario::new(kind, parse_config("-A").unwrap());
    WindowRule::for_scenario(kind, s.warmup, s.duration)
}

fn peak_to_peak(t: &Trace, vehicle: usize, from: f64) -> f64 {
    let speeds: Vec<f64> = t.series(vehicle).filter(|(time, _)| *time >= from).map(|(_, s)| s.speed).collect();
    speeds.iter().cloned().fold(f64::MIN, f64::max) - speeds.iter().cloned().fold(f64::MAX, f64::min)
}

#[test]
fn identical_inputs_give_identical_csv() {
    for kind in ScenarioKind::ALL {
        let mut a = Vec::new();
        let mut b = Vec::new();
        run(kind, "-PLG").write_csv(&mut a).unwrap();
        run(kind, "-PLG").write_csv(&mut b).unwrap();
        assert_eq!(a, b);
    }
}

#[test]
fn homogeneous_braking_keeps_half_a_metre() {
    for n in [4, 8] {
        for ctrl in [Controller::Ploeg, Controller::Path, Controller::Gsbl] {
            let cfg = PlatoonConfig::homogeneous(ctrl, n).unwrap();
            let t = run(ScenarioKind::Braking, &cfg.to_string());
            assert!(!t.terminated_by_collision, "{cfg}");
            assert!(t.min_gap().unwrap() > 0.5, "{cfg}: {}", t.min_gap().unwrap());
        }
    }
}

#[test]
fn homogeneous_configs_have_zero_safety_delta() {
    for kind in ScenarioKind::ALL {
        let template = SingleScenario::new(kind, parse_config("-AAA").unwrap());
        let b = Baselines::simulate(&template, &DynamicsParams::default(), &ControllerSet::default()).unwrap();
        for (ctrl, trace) in &b.homogeneous {
            let cfg = PlatoonConfig::homogeneous(*ctrl, 4).unwrap();
            let r = metric_report(&cfg, kind, trace, &b, rule(kind)).unwrap();
            assert_eq!(r.delta_d, 0.0, "{kind:?} {cfg}");
            assert!(r.delta_d_per_vehicle.iter().all(|&d| d == 0.0));
        }
        let acc = metric_report(&PlatoonConfig::homogeneous(Controller::Acc, 4).unwrap(), kind, &b.acc, &b, rule(kind)).unwrap();
        assert_eq!(acc.delta_a, 0.0);
        assert_eq!(acc.eta, 1.0);
    }
}

#[test]
fn metrics_ignore_a_common_time_shift() {
    for kind in ScenarioKind::ALL {
        let acc = run(kind, "-AAA");
        let c = run(kind, "-GLP");
        let cfg = parse_config("-GLP").unwrap();
        let hom: std::collections::BTreeMap<_, _> = [Controller::Path, Controller::Ploeg, Controller::Gsbl]
            .into_iter()
            .map(|k| (k, run(kind, &PlatoonConfig::homogeneous(k, 4).unwrap().to_string())))
            .collect();
        let shift = 12.5;
        let hom_shifted = hom.iter().map(|(k, t)| (*k, t.time_shifted(shift))).collect();
        let r = rule(kind);
        let a0 = delta_a(&c, &acc, r).unwrap();
        let a1 = delta_a(&c.time_shifted(shift), &acc.time_shifted(shift), r).unwrap();
        assert_eq!(a0, a1);
        let d0 = delta_d(&c, &cfg, &hom, r).unwrap();
        let d1 = delta_d(&c.time_shifted(shift), &cfg, &hom_shifted, r).unwrap();
        assert_eq!(d0, d1);
        let e0 = eta(&c, &acc, r).unwrap();
        let e1 = eta(&c.time_shifted(shift), &acc.time_shifted(shift), r).unwrap();
        assert_eq!(e0, e1);
    }
}

#[test]
fn efficiency_ignores_a_position_offset() {
    let kind = ScenarioKind::Sinusoidal;
    let acc = run(kind, "-AAA");
    let c = run(kind, "-LPG");
    let mut moved = c.clone();
    moved.samples.iter_mut().for_each(|s| s.position += 1234.5);
    assert_eq!(eta(&c, &acc, rule(kind)).unwrap(), eta(&moved, &acc, rule(kind)).unwrap());
}

#[test]
fn ploeg_and_path_damp_the_sinusoid_along_the_string() {
    for cfg in ["-LLLLLLL", "-PPPPPPP"] {
        let t = run(ScenarioKind::Sinusoidal, cfg);
        let first = peak_to_peak(&t, 1, 40.0);
        let last = peak_to_peak(&t, 7, 40.0);
        assert!(last <= first + 1e-9, "{cfg}: V1 {first:.4} V7 {last:.4}");
    }
}
