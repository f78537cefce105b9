use std::hint::black_box;

use bifstep_core::{GridSpec, ModelParams, PoiseuilleStepper, StepperConfig, Timestepper};
use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

fn stepper(n: usize, dt: f64) -> PoiseuilleStepper {
    PoiseuilleStepper::new(
        ModelParams::default(),
        GridSpec::new(n).unwrap(),
        StepperConfig::default().with_dt(dt),
    )
    .unwrap()
}

fn single_step(c: &mut Criterion) {
    let mut g = c.benchmark_group("step");
    for n in [201, 801] {
        let st = stepper(n, 1e-5);
        let u = st.steady_state(0.449).unwrap();
        g.bench_with_input(BenchmarkId::from_parameter(n), &u, |b, u| {
            b.iter(|| st.step(black_box(u), 0.45).unwrap())
        });
    }
    g.finish();
}

fn horizon(c: &mut Criterion) {
    // one application of the steady-state map: 100 steps
    let mut g = c.benchmark_group("evolve_t_h");
    g.sample_size(20);
    for n in [201, 801] {
        let st = stepper(n, 1e-5);
        let u = st.steady_state(0.449).unwrap().to_vec();
        g.bench_with_input(BenchmarkId::from_parameter(n), &u, |b, u| {
            b.iter(|| Timestepper::evolve(&st, black_box(u), 0.45, 1e-3).unwrap())
        });
    }
    g.finish();
}

criterion_group!(benches, single_step, horizon);
criterion_main!(benches);
