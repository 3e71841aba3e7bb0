use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use thinrod_bench::beam_config;
use thinrod_core::beam3d::{self, BeamProblem};
use thinrod_core::cell_problem::q1_matrix;
use thinrod_core::cross_section::unit_disc;
use thinrod_core::rod_model::solve_equilibrium;
use thinrod_core::{AlphaRegime, DeformationField, LoadFn, RodLoads, StoredEnergy};

fn cell(c: &mut Criterion) {
    let l = StoredEnergy::neo_hookean(1.0, 1.0).unwrap().linearized();
    let mut g = c.benchmark_group("cell_solve");
    for rings in [10, 20, 41] {
        let section = unit_disc(rings).unwrap().normalize().unwrap();
        g.bench_with_input(BenchmarkId::from_parameter(section.triangle_count()), &section, |b, s| {
            b.iter(|| q1_matrix(black_box(s), &l).unwrap())
        });
    }
    g.finish();
}

fn rod(c: &mut Criterion) {
    let l = StoredEnergy::neo_hookean(1.0, 1.0).unwrap().linearized();
    let st = q1_matrix(&unit_disc(8).unwrap().normalize().unwrap(), &l).unwrap();
    let regime = AlphaRegime::from_alpha(3.0).unwrap();
    let loads = RodLoads::new(LoadFn::Sin { amp: 0.1, k: 3.0 }, LoadFn::Const(0.02));
    let mut g = c.benchmark_group("rod_solve");
    for nodes in [33, 129, 513] {
        g.bench_with_input(BenchmarkId::from_parameter(nodes), &nodes, |b, &n| {
            b.iter(|| solve_equilibrium(&regime, &st, &loads, 1.0, black_box(n)).unwrap())
        });
    }
    g.finish();
}

fn beam(c: &mut Criterion) {
    let cfg = beam_config(0.1, 4, 32);
    let problem = BeamProblem::new(&cfg).unwrap();
    let field = beam3d::minimize(&cfg).unwrap().field;
    let mut pattern = problem.hessian_pattern();

    c.bench_function("beam_energy_gradient", |b| b.iter(|| problem.energy_and_gradient(black_box(&field))));
    c.bench_function("beam_hessian_assembly", |b| {
        b.iter(|| problem.hessian_into(black_box(&field), &mut pattern).unwrap())
    });

    let mut g = c.benchmark_group("beam_minimize");
    g.sample_size(10);
    for (h, n) in [(0.2, 16), (0.1, 32), (0.05, 64)] {
        let cfg = beam_config(h, 4, n);
        g.bench_with_input(BenchmarkId::from_parameter(h), &cfg, |b, cfg| {
            b.iter(|| {
                let problem = BeamProblem::new(cfg).unwrap();
                let start = DeformationField::reference(&problem.mesh, cfg.alpha);
                beam3d::minimize_from(&problem, start, &cfg.solver).unwrap()
            })
        });
    }
    g.finish();
}

criterion_group!(benches, cell, rod, beam);
criterion_main!(benches);
