use criterion::{black_box, criterion_group, criterion_main, Criterion};

use graze::continuation::{run, ContinuationConfig};
use graze::perturbation::{normalize_frame, respond};
use graze::scenes::{random_context, rng};
use graze::{solve_periodic, BilliardTable, Vec2};

fn constructed_table() -> BilliardTable {
    BilliardTable::new(vec![
        Vec2::new(0.0, 0.0),
        Vec2::new(-0.06929092850639273, -5.979751718620637),
        Vec2::new(-3.4110472487905743, -5.703337158579479),
        Vec2::new(-2.0611662087262643, 6.575628687768444),
    ])
    .unwrap()
}

fn g_recursion(c: &mut Criterion) {
    let mut g = rng(1);
    let ctx = random_context(&mut g, 50..=50);
    c.bench_function("g_row/50", |b| b.iter(|| black_box(ctx.g_row(0, 49))));
    c.bench_function("d/50", |b| b.iter(|| black_box(ctx.d())));
}

fn periodic_solve(c: &mut Criterion) {
    let table = constructed_table();
    let seq = "0-2-3-1".parse().unwrap();
    c.bench_function("solve_periodic/0-2-3-1", |b| {
        b.iter(|| solve_periodic(black_box(&table), &seq).unwrap())
    });
}

fn response_and_continuation(c: &mut Criterion) {
    let table = constructed_table();
    let orbit = solve_periodic(&table, &"0-2-3-1".parse().unwrap()).unwrap();
    let setup = normalize_frame(&table, &orbit, None, None).unwrap();
    c.bench_function("respond/0-2-3-1", |b| {
        b.iter(|| respond(black_box(&setup)).unwrap())
    });
    let cfg = ContinuationConfig::default();
    let mut group = c.benchmark_group("continuation");
    group.sample_size(10);
    group.bench_function("0-2-3-1", |b| b.iter(|| run(&table, &orbit, &cfg).unwrap()));
    group.finish();
}

criterion_group!(
    benches,
    g_recursion,
    periodic_solve,
    response_and_continuation
);
criterion_main!(benches);
