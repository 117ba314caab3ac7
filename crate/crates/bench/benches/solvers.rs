use criterion::{black_box, criterion_group, criterion_main, Criterion};
use homlab_core::{
    solve_cell_grid, solve_cell_laminate, solve_epsilon, Epsilon, Load, MacroProblem,
    MicroGeometry, PhaseParams, SolverSettings, Vec2,
};

fn bench_flux(c: &mut Criterion) {
    let pp = PhaseParams::new(1.0, 3.0, 1.5, 2.0).unwrap();
    let xi = Vec2::new(0.8, -0.3);
    c.bench_function("flux_eval", |b| {
        b.iter(|| pp.flux(homlab_core::Phase::One, black_box(xi)))
    });
}

fn bench_cell_laminate(c: &mut Criterion) {
    let pp = PhaseParams::new(1.0, 3.0, 1.5, 2.0).unwrap();
    c.bench_function("cell_laminate", |b| {
        b.iter(|| solve_cell_laminate(&pp, 0.5, black_box(Vec2::new(1.0, 0.7)), 1e-9).unwrap())
    });
}

fn bench_cell_grid(c: &mut Criterion) {
    let pp = PhaseParams::new(1.0, 3.0, 1.5, 2.0).unwrap();
    let geom = MicroGeometry::disk(0.25).unwrap();
    for n in [16usize, 32] {
        let settings = SolverSettings::default().with_grid_n(n);
        c.bench_function(&format!("cell_grid_n{n}"), |b| {
            b.iter(|| {
                solve_cell_grid(&pp, &geom, black_box(Vec2::new(1.0, 0.0)), &settings).unwrap()
            })
        });
    }
}

fn bench_epsilon_solve(c: &mut Criterion) {
    let pp = PhaseParams::new(1.0, 3.0, 1.5, 2.0).unwrap();
    let geom = MicroGeometry::laminate(0.5).unwrap();
    let problem = MacroProblem::new(32, Load::Constant(1.0)).unwrap();
    let eps = Epsilon::one_over(4).unwrap();
    let settings = SolverSettings::default();
    let mut group = c.benchmark_group("field");
    group.sample_size(10);
    group.bench_function("epsilon_mesh32", |b| {
        b.iter(|| solve_epsilon(&problem, &pp, &geom, eps, &settings).unwrap())
    });
    group.finish();
}

criterion_group!(
    benches,
    bench_flux,
    bench_cell_laminate,
    bench_cell_grid,
    bench_epsilon_solve
);
criterion_main!(benches);
