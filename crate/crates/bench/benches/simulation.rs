use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};

use platoon_core::scenarios::{run_ring, run_single_platoon, ScenarioKind, SingleScenario};
use platoon_core::topology::connectivity_matrix;
use platoon_core::{parse_config, step_vehicle, ControllerSet, DynamicsParams, RingSpec, VehicleState};

fn vehicle_step(c: &mut Criterion) {
    let p = DynamicsParams::default();
    let s = VehicleState::new(0.0, 27.0, 4.0);
    c.bench_function("step_vehicle", |b| b.iter(|| step_vehicle(black_box(&s), black_box(-1.5), &p).unwrap()));
}

fn topology(c: &mut Criterion) {
    let cfg = parse_config("-PLGPLGPLGPLGPLG").unwrap();
    c.bench_function("connectivity_matrix N=16", |b| b.iter(|| connectivity_matrix(black_box(&cfg))));
}

fn single_platoon(c: &mut Criterion) {
    let mut g = c.benchmark_group("single_platoon");
    g.sample_size(10);
    for kind in ScenarioKind::ALL {
        let s = SingleScenario::new(kind, parse_config("-PLGP").unwrap());
        g.bench_function(kind.as_str(), |b| {
            b.iter(|| run_single_platoon(black_box(&s), &DynamicsParams::default(), &ControllerSet::default()).unwrap())
        });
    }
    g.finish();
}

fn ring(c: &mut Criterion) {
    let mut g = c.benchmark_group("ring");
    g.sample_size(10);
    let spec = RingSpec { density: 40.0, penetration: 0.5, duration: 30.0, warmup: 10.0, ..RingSpec::default() };
    g.bench_function("D40 R0.5 40 s", |b| {
        b.iter(|| run_ring(black_box(&spec), &DynamicsParams::default(), &ControllerSet::default()).unwrap())
    });
    g.finish();
}

criterion_group!(benches, vehicle_step, topology, single_platoon, ring);
criterion_main!(benches);
