use affine_hjm::pathsim::{path_rng, step_euler};
use affine_hjm::symcone::project_and_sqrt;
use affine_hjm::{
    solve_riccati, uniform_grid, CurveDriver, Matrix, MeasureChange, PsdMatrix, Scheme, Simulator,
};
use affine_hjm_bench::{psd_inputs, Example};
use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use rand_distr::{Distribution, StandardNormal};
use std::hint::black_box;

fn eigen(c: &mut Criterion) {
    let mut group = c.benchmark_group("jacobi_eigen");
    for dim in [2, 3, 4, 6] {
        let inputs = psd_inputs(dim, 64, 1);
        group.bench_with_input(BenchmarkId::from_parameter(dim), &inputs, |b, inputs| {
            b.iter(|| {
                for m in inputs {
                    black_box(m.eigen().unwrap());
                }
            })
        });
    }
    group.finish();

    let mut group = c.benchmark_group("project_and_sqrt");
    for dim in [2, 3, 4] {
        let inputs = psd_inputs(dim, 64, 2);
        group.bench_with_input(BenchmarkId::from_parameter(dim), &inputs, |b, inputs| {
            b.iter(|| {
                for m in inputs {
                    black_box(project_and_sqrt(m).unwrap());
                }
            })
        });
    }
    group.finish();
}

fn riccati(c: &mut Criterion) {
    let ex = Example::new();
    let u = PsdMatrix::identity(2);
    let mut group = c.benchmark_group("riccati_solve");
    for dt in [1e-2, 1e-3] {
        group.bench_with_input(BenchmarkId::new("t_end=1", dt), &dt, |b, &dt| {
            b.iter(|| black_box(solve_riccati(&ex.params, &u, 1.0, dt).unwrap()))
        });
    }
    group.finish();
}

fn paths(c: &mut Criterion) {
    let ex = Example::new();
    let x = ex.x0.as_sym().clone();
    let root = x.clone();
    let dt = 2f64.powi(-8);
    c.bench_function("euler_step", |b| {
        let mut rng = path_rng(3, 0, Scheme::EulerProject);
        b.iter(|| {
            let dw = Matrix::from_fn(2, |_, _| {
                let z: f64 = StandardNormal.sample(&mut rng);
                dt.sqrt() * z
            });
            black_box(step_euler(&ex.params, &x, &root, &dw, dt, &mut rng).unwrap())
        })
    });

    let grid = uniform_grid(1.0, dt).unwrap();
    let mut group = c.benchmark_group("path_t1_dt2^-8");
    for scheme in [Scheme::EulerProject, Scheme::WishartExact] {
        let sim = Simulator::new(&ex.params, &ex.x0, &grid, 4, scheme).unwrap();
        let mut i = 0u64;
        group.bench_function(format!("{scheme:?}"), |b| {
            b.iter(|| {
                i += 1;
                black_box(sim.path(i).unwrap())
            })
        });
    }
    group.finish();

    let sim = Simulator::new(&ex.params, &ex.x0, &grid, 5, Scheme::EulerProject).unwrap();
    let path = sim.path(0).unwrap();
    let mc = MeasureChange::none();
    c.bench_function("curve_driver_and_ladder", |b| {
        b.iter(|| {
            let driver = CurveDriver::new(&ex.params, &ex.vol, &mc, &ex.curve, &path).unwrap();
            let k = driver.index_of(0.5).unwrap();
            for m in affine_hjm::longterm::DEFAULT_LADDER {
                black_box(driver.yield_terms(k, m).unwrap());
            }
        })
    });
}

criterion_group!(benches, eigen, riccati, paths);
criterion_main!(benches);
