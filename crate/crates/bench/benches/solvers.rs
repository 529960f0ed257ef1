use criterion::{black_box, criterion_group, criterion_main, BenchmarkId, Criterion};

use thinlayer::evolve::{evolve, resolvent_solve, Scheme};
use thinlayer::generator2d::{assemble_generator, Flavor};
use thinlayer::harness::default_initial_field;
use thinlayer::limit::{assemble_limit_generator, project, LumpedRate};
use thinlayer::montecarlo::{simulate_membrane_bm, InitialCondition, McConfig, MembraneGeometry};
use thinlayer::{build_reference_grid, Scenario, Side, TransmissionParams};

fn assemble(c: &mut Criterion) {
    let p = TransmissionParams::default();
    let sc = Scenario::two_thin(0.05).unwrap();
    let mut g = c.benchmark_group("assemble");
    for n in [33, 65, 129] {
        let grid = build_reference_grid(&sc, n, n, 64).unwrap();
        g.bench_with_input(BenchmarkId::from_parameter(n), &grid, |b, grid| {
            b.iter(|| assemble_generator(&sc, Flavor::RescaledCr, &p, black_box(grid)).unwrap())
        });
    }
    g.finish();
}

fn resolvent(c: &mut Criterion) {
    let p = TransmissionParams::default();
    let sc = Scenario::two_thin(0.05).unwrap();
    let grid = build_reference_grid(&sc, 65, 65, 64).unwrap();
    let gen = assemble_generator(&sc, Flavor::RescaledCr, &p, &grid).unwrap();
    let u = default_initial_field(grid);
    c.bench_function("resolvent_65x64", |b| b.iter(|| resolvent_solve(&gen, 1.0, black_box(&u)).unwrap()));
}

fn evolution(c: &mut Criterion) {
    let p = TransmissionParams::default();
    let sc = Scenario::two_thin(0.05).unwrap();
    let grid = build_reference_grid(&sc, 65, 65, 64).unwrap();
    let gen = assemble_generator(&sc, Flavor::RescaledCr, &p, &grid).unwrap();
    let lg = assemble_limit_generator(&sc, &p, &grid, LumpedRate::default()).unwrap();
    let u = default_initial_field(grid);
    let s = project(&sc, &u).unwrap();
    let mut g = c.benchmark_group("evolve_100_steps");
    for scheme in [Scheme::ImplicitEuler, Scheme::CrankNicolson] {
        g.bench_function(format!("{scheme:?}"), |b| b.iter(|| evolve(&gen, &u, 0.1, 1e-3, scheme).unwrap()));
    }
    g.bench_function("limit", |b| b.iter(|| evolve(&lg, &s, 0.1, 1e-3, Scheme::ImplicitEuler).unwrap()));
    g.finish();
}

fn particles(c: &mut Criterion) {
    let p = TransmissionParams::default();
    let geom = MembraneGeometry::new(0.5, 1.5).unwrap();
    let init = InitialCondition { side: Side::Upper, rho: 1.25, phi: None };
    let cfg = McConfig {
        n_particles: 1000,
        t_end: 0.1,
        dt: 1e-3,
        record_every: 0.05,
        seed: 1,
        n_bins: 8,
        crossing_multiplier: 1.0,
        mirror: false,
    };
    let mut g = c.benchmark_group("membrane_bm");
    g.sample_size(20);
    g.bench_function("1000x100", |b| b.iter(|| simulate_membrane_bm(&p, geom, init, black_box(&cfg)).unwrap()));
    g.finish();
}

criterion_group!(benches, assemble, resolvent, evolution, particles);
criterion_main!(benches);
