use chinv::invariant::{minimal_set_grid, MinimalSetOptions};
use chinv::julia::{inverse_orbit, SampleOptions};
use chinv::{Complex64, Exec, Operator, Window};
use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

fn cochleoid() -> Operator {
    Operator::from_real(&[-1.0, 1.0], &[0.0, 0.0, 1.0]).unwrap()
}

fn sweep(c: &mut Criterion) {
    let op = cochleoid();
    let w = Window::new(-0.25, 1.25, -0.75, 0.75).unwrap();
    let mut g = c.benchmark_group("minimal_set_grid");
    g.sample_size(10);
    for exec in [Exec::Sequential, Exec::Parallel] {
        let opts = MinimalSetOptions {
            exec,
            ..Default::default()
        };
        g.bench_with_input(BenchmarkId::new(format!("{exec:?}"), 150), &opts, |b, opts| {
            b.iter(|| minimal_set_grid(&op, w, 150, 150, opts).unwrap())
        });
    }
    g.finish();
}

fn julia(c: &mut Criterion) {
    let op = cochleoid();
    let mut g = c.benchmark_group("inverse_orbit");
    for exec in [Exec::Sequential, Exec::Parallel] {
        let opts = SampleOptions {
            chains: 8,
            exec,
            ..Default::default()
        };
        g.bench_with_input(BenchmarkId::new(format!("{exec:?}"), 20_000), &opts, |b, opts| {
            b.iter(|| inverse_orbit(&op, 1.0, Complex64::new(0.2, 0.0), 20_000, 1, opts).unwrap())
        });
    }
    g.finish();
}

criterion_group!(benches, sweep, julia);
criterion_main!(benches);
