use criterion::{black_box, criterion_group, criterion_main, BenchmarkId, Criterion};
use multiwell::fluctuation::gy_analysis;
use multiwell::oracle::{default_grid, diagonalize_schrodinger};
use multiwell::potential::{find_wells, WellSearch};
use multiwell::instanton::solve_trajectory;
use multiwell_bench::{double_well, instanton, last_pair, triple_well};

fn trajectory(c: &mut Criterion) {
    let mut group = c.benchmark_group("trajectory");
    for (name, model) in [("double", double_well()), ("triple", triple_well())] {
        let pair = last_pair(&model);
        group.bench_function(name, |b| {
            b.iter(|| solve_trajectory(black_box(&model), &pair, 40.0, 1e-30).unwrap())
        });
    }
    group.finish();
}

fn gy_windows(c: &mut Criterion) {
    let model = double_well();
    let sol = instanton(&model, 30.0);
    let mut group = c.benchmark_group("gy_window");
    group.sample_size(20);
    for window in [20.0, 40.0, 60.0] {
        group.bench_with_input(BenchmarkId::from_parameter(window), &window, |b, &w| {
            b.iter(|| gy_analysis(&sol, w, 1e-30).unwrap())
        });
    }
    group.finish();
}

fn sturm(c: &mut Criterion) {
    let model = double_well();
    let wells = find_wells(&model, &WellSearch::default()).unwrap();
    let mut group = c.benchmark_group("schrodinger");
    group.sample_size(10);
    for n in [2047usize, 8191] {
        let mut grid = default_grid(&model, &wells, 1.0, 2);
        grid.n_points = n;
        group.bench_with_input(BenchmarkId::from_parameter(n), &grid, |b, g| {
            b.iter(|| diagonalize_schrodinger(&model, g, 2).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, trajectory, gy_windows, sturm);
criterion_main!(benches);
