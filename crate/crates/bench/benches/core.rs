use criterion::{black_box, criterion_group, criterion_main, BenchmarkId, Criterion};

use crowdmi_core::fixtures::synthetic_crowd;
use crowdmi_core::{crowd_order_parameter, MiConfig, Rect, Scenario, SfmParams, Simulation, Vec2};

fn order_parameter(c: &mut Criterion) {
    let bounds = Rect {
        min: Vec2::new(0.0, 0.0),
        max: Vec2::new(24.0, 18.0),
    };
    let mut group = c.benchmark_group("order_parameter");
    for n in [100usize, 450, 1000] {
        let crowd = synthetic_crowd(7, n, (0.0, 0.0), (24.0, 18.0));
        for bins in [8usize, 16] {
            let cfg = MiConfig::with_bins(bins);
            group.bench_with_input(BenchmarkId::new(format!("{bins}_bins"), n), &crowd, |b, crowd| {
                b.iter(|| crowd_order_parameter(black_box(crowd).iter().copied(), &cfg, &bounds))
            });
        }
    }
    group.finish();
}

fn engine_step(c: &mut Criterion) {
    let scenario = Scenario::bundled("station_realistic").expect("bundled");
    let params = SfmParams::bundled();
    // Step a fresh crowd for a few seconds so the bench sees contacts.
    let mut warm = Simulation::new(&scenario, &params).expect("spawn");
    for _ in 0..500 {
        warm.step().expect("step");
    }
    c.bench_function("engine_step_450", |b| {
        b.iter_batched(
            || warm.clone(),
            |mut sim| {
                sim.step().expect("step");
                sim
            },
            criterion::BatchSize::LargeInput,
        )
    });
}

criterion_group!(benches, order_parameter, engine_step);
criterion_main!(benches);
