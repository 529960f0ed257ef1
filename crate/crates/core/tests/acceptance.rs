//! Acceptance criteria, one test each. Every test prints a single
//! `criterion N: PASS|FAIL ...` line before asserting.

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use thinlayer::evolve::{evolve, evolve_at, matrix_exponential_2x2, Scheme};
use thinlayer::generator2d::{assemble_generator, ApplyMode, DiscreteGenerator, Flavor};
use thinlayer::harness::{
    default_initial_field, default_kurtz_elements, run_convergence_study, run_oracle, ConvergenceSetup, Reference,
};
use thinlayer::limit::{
    assemble_fast_operator, assemble_limit_generator, kurtz_fast_residual, Corrector, CorrectorVariant, GridPolicy,
    LimitGenerator, LimitState, LumpedRate,
};
use thinlayer::montecarlo::{
    calibrate_crossing, simulate_limit_jump_diffusion, simulate_membrane_bm, InitialCondition, JumpRates, McConfig,
    MembraneGeometry,
};
use thinlayer::{build_reference_grid, LayerField, ReferenceGrid, Scenario, ScenarioKind, Side, TransmissionParams};

fn report(n: u32, ok: bool, detail: String) {
    println!("criterion {n}: {} {detail}", if ok { "PASS" } else { "FAIL" });
}

fn sample_scenario(kind: ScenarioKind) -> Scenario {
    match kind {
        ScenarioKind::TwoThin => Scenario::two_thin(0.2).unwrap(),
        ScenarioKind::ThinOverThick => Scenario::thin_over_thick(0.5, 0.2).unwrap(),
        ScenarioKind::ThinOverFast => Scenario::thin_over_fast(0.5, 25.0).unwrap(),
    }
}

/// Every discrete generator of a scenario: physical, rescaled and fast.
fn generators(kind: ScenarioKind, p: &TransmissionParams, n: usize, m: usize) -> Vec<(String, DiscreteGenerator)> {
    let sc = sample_scenario(kind);
    let grid = build_reference_grid(&sc, n, n, m).unwrap();
    let rescaled = Flavor::rescaled_for(kind);
    vec![
        (format!("{kind}/Physical"), assemble_generator(&sc, Flavor::Physical, p, &grid).unwrap()),
        (format!("{kind}/{rescaled:?}"), assemble_generator(&sc, rescaled, p, &grid).unwrap()),
        (format!("{kind}/Fast"), assemble_fast_operator(&sc, p, &grid).unwrap()),
    ]
}

fn limit_generator(kind: ScenarioKind, p: &TransmissionParams, n: usize, m: usize, lr: LumpedRate) -> LimitGenerator {
    let sc = sample_scenario(kind);
    let grid = build_reference_grid(&sc, n, n, m).unwrap();
    assemble_limit_generator(&sc, p, &grid, lr).unwrap()
}

#[test]
fn criterion_01_resolvent_oracle() {
    let start = Instant::now();
    let p = TransmissionParams::new(1.0, 1.0, 2.0, 1.0).unwrap();
    let rows = run_oracle(1.0, &p, 0.5, 1.5, &[1025, 2049]).unwrap();
    let secs = start.elapsed().as_secs_f64();
    let err = rows[1].rel_error;
    let ratio = rows[1].ratio.unwrap();
    let ok = err <= 1e-4 && (3.5..=4.5).contains(&ratio) && secs < 5.0;
    report(1, ok, format!("rel err {err:.3e} at 2049, doubling ratio {ratio:.3}, {secs:.2} s"));
    assert!(ok);
}

#[test]
fn criterion_02_conservativity() {
    let p = TransmissionParams::new(1.3, 0.7, 1.8, 1.4).unwrap();
    let c = 0.7;
    let mut worst_apply = 0.0f64;
    let mut worst_evolve = 0.0f64;
    for kind in ScenarioKind::ALL {
        for (name, gen) in generators(kind, &p, 17, 16) {
            let u = LayerField::constant(gen.grid, c);
            let au = gen.apply(&u, ApplyMode::Raw).unwrap().sup_norm();
            let ev = evolve(&gen, &u, 1.0, 0.01, Scheme::ImplicitEuler).unwrap();
            let dev = ev.values().iter().fold(0.0f64, |m, v| m.max((v - c).abs()));
            assert!(au <= 1e-10 && dev <= 1e-8, "{name}: |Au| = {au:e}, drift {dev:e}");
            worst_apply = worst_apply.max(au);
            worst_evolve = worst_evolve.max(dev);
        }
        let lumped = if kind == ScenarioKind::ThinOverFast {
            vec![LumpedRate::FluxMatched, LumpedRate::Normalized]
        } else {
            vec![LumpedRate::default()]
        };
        for lr in lumped {
            let lg = limit_generator(kind, &p, 17, 16, lr);
            let s = LimitState::constant(kind, &lg.grid, c);
            let au = lg.apply(&s).unwrap().sup_norm();
            let ev = evolve(&lg, &s, 1.0, 0.01, Scheme::ImplicitEuler).unwrap();
            let dev = ev.to_values().iter().fold(0.0f64, |m, v| m.max((v - c).abs()));
            assert!(au <= 1e-10 && dev <= 1e-8, "{kind} limit {lr:?}: {au:e}, {dev:e}");
            worst_apply = worst_apply.max(au);
            worst_evolve = worst_evolve.max(dev);
        }
    }
    // the literal lumped equation does not annihilate constants
    let lit = limit_generator(ScenarioKind::ThinOverFast, &p, 17, 16, LumpedRate::PaperLiteral);
    let s = LimitState::constant(ScenarioKind::ThinOverFast, &lit.grid, c);
    let lit_au = lit.apply(&s).unwrap().sup_norm();
    let ok = worst_apply <= 1e-10 && worst_evolve <= 1e-8 && lit_au > 1e-10;
    report(
        2,
        ok,
        format!("max |A c| {worst_apply:.2e}, max drift {worst_evolve:.2e}, literal CirclePoint |A c| {lit_au:.3} (expected nonzero)"),
    );
    assert!(ok);
}

fn random_field(grid: ReferenceGrid, rng: &mut ChaCha8Rng) -> LayerField {
    let v = (0..grid.len()).map(|_| rng.gen::<f64>()).collect();
    LayerField::from_values(grid, v).unwrap()
}

#[test]
fn criterion_03_positivity_and_contraction() {
    let p = TransmissionParams::new(1.3, 0.7, 1.8, 1.4).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut min_seen = f64::INFINITY;
    let mut worst_growth = f64::NEG_INFINITY;
    let mut runs = 0;
    for kind in ScenarioKind::ALL {
        for (name, gen) in generators(kind, &p, 17, 16) {
            for _ in 0..50 {
                let u = random_field(gen.grid, &mut rng);
                let v = evolve(&gen, &u, 0.1, 0.01, Scheme::ImplicitEuler).unwrap();
                min_seen = min_seen.min(v.min_value());
                worst_growth = worst_growth.max(v.sup_norm() - u.sup_norm());
                assert!(v.min_value() >= -1e-12 && v.sup_norm() <= u.sup_norm() + 1e-10, "{name}");
                runs += 1;
            }
        }
        let lg = limit_generator(kind, &p, 17, 16, LumpedRate::default());
        for _ in 0..50 {
            let n = LimitState::n_rows(kind, &lg.grid) * lg.grid.n_ang;
            let vals = (0..n).map(|_| rng.gen::<f64>()).collect();
            let s = LimitState::from_values(kind, &lg.grid, vals).unwrap();
            let v = evolve(&lg, &s, 0.1, 0.01, Scheme::ImplicitEuler).unwrap();
            let vmin = v.to_values().iter().copied().fold(f64::INFINITY, f64::min);
            min_seen = min_seen.min(vmin);
            worst_growth = worst_growth.max(v.sup_norm() - s.sup_norm());
            runs += 1;
        }
    }
    let ok = min_seen >= -1e-12 && worst_growth <= 1e-10;
    report(3, ok, format!("{runs} runs, min value {min_seen:.3e}, max sup growth {worst_growth:.3e}"));
    assert!(ok);
}

#[test]
fn criterion_04_kurtz_fast_limits() {
    let start = Instant::now();
    let p = TransmissionParams::default();
    let policy = GridPolicy { n_lower: 65, n_upper: 65, n_ang: 64 };
    let widths: Vec<f64> = (3..=7).map(|k| 0.5f64.powi(k)).collect();
    let mut all_ok = true;
    for kind in ScenarioKind::ALL {
        let el = default_kurtz_elements(kind, &p, 0.5);
        let rows = kurtz_fast_residual(kind, &p, 0.5, policy, &*el.fast, &widths).unwrap();
        let res: Vec<f64> = rows.iter().map(|r| r.residual).collect();
        let dec = res.windows(2).all(|w| w[1] < w[0]);
        let frac = res[4] / res[0];
        let ok = dec && frac <= 0.05;
        println!(
            "  {kind}: residuals {:?}, final/initial {frac:.4} -> {}",
            res.iter().map(|r| format!("{r:.3e}")).collect::<Vec<_>>(),
            if ok { "ok" } else { "short of 0.05" }
        );
        all_ok &= ok;
    }
    let secs = start.elapsed().as_secs_f64();
    let ok = all_ok && secs < 30.0;
    report(4, ok, format!("widths 2^-3..2^-7, {secs:.2} s"));
    assert!(ok);
}

#[test]
fn criterion_05_two_thin_convergence() {
    let start = Instant::now();
    let setup = ConvergenceSetup {
        kind: ScenarioKind::TwoThin,
        params: TransmissionParams::default(),
        r: 0.5,
        policy: GridPolicy { n_lower: 65, n_upper: 65, n_ang: 64 },
        t: 0.5,
        dt: 1e-3,
        scheme: Scheme::ImplicitEuler,
        lumped: LumpedRate::default(),
        reference: Reference::LimitSolver,
    };
    let u0 = default_initial_field(setup.grid().unwrap());
    let table = run_convergence_study(&setup, &u0, &[0.1, 0.05, 0.025, 0.0125]).unwrap();
    let secs = start.elapsed().as_secs_f64();
    let ratio = table.min_ratio().unwrap();
    let ok = table.strictly_decreasing() && ratio >= 1.5 && secs < 60.0;
    report(5, ok, format!("errors {:?}, min ratio {ratio:.3}, {secs:.2} s", table.errors()));
    assert!(ok);
}

#[test]
fn criterion_06_circle_point_two_state() {
    let p = TransmissionParams::default();
    let r = 0.5;
    let sc = Scenario::thin_over_fast(r, 100.0).unwrap();
    let grid = build_reference_grid(&sc, 17, 17, 64).unwrap();
    let lg = assemble_limit_generator(&sc, &p, &grid, LumpedRate::FluxMatched).unwrap();
    let s0 = LimitState::CirclePoint { g_plus: vec![1.0; 64], k_minus: 0.0 };
    let s1 = evolve(&lg, &s0, 1.0, 1e-4, Scheme::CrankNicolson).unwrap();
    let (g, k) = matrix_exponential_2x2(p.alpha, 2.0 * p.beta / (1.0 - r * r), 1.0, (1.0, 0.0)).unwrap();
    let err = s1.max_abs_diff(&LimitState::CirclePoint { g_plus: vec![g; 64], k_minus: k }).unwrap();

    // log-slope decay rates of angular modes
    let times: Vec<f64> = (0..=4).map(|i| 0.1 * i as f64).collect();
    let mut worst_rel = 0.0f64;
    for n in 1..=3 {
        let gp: Vec<f64> = (0..64).map(|j| (n as f64 * grid.phi(j)).cos()).collect();
        let s = LimitState::CirclePoint { g_plus: gp, k_minus: 0.0 };
        let out = evolve_at(&lg, &s, &times, 1e-4, Scheme::CrankNicolson).unwrap();
        let amp: Vec<f64> = out.iter().map(|s| s.g_plus()[0].ln()).collect();
        // least-squares slope
        let tm = times.iter().sum::<f64>() / times.len() as f64;
        let am = amp.iter().sum::<f64>() / amp.len() as f64;
        let num: f64 = times.iter().zip(&amp).map(|(t, a)| (t - tm) * (a - am)).sum();
        let den: f64 = times.iter().map(|t| (t - tm).powi(2)).sum();
        let rate = num / den;
        let want = -((n * n) as f64 + p.alpha);
        worst_rel = worst_rel.max(((rate - want) / want).abs());
    }
    let ok = err <= 1e-8 && worst_rel <= 0.01;
    report(6, ok, format!("2x2 mismatch {err:.3e}, worst mode decay-rate deviation {:.3}%", 100.0 * worst_rel));
    assert!(ok);
}

#[test]
fn criterion_07_circle_annulus_structure() {
    // β = 0: the lower block ignores g⁺
    let p = TransmissionParams::new(1.0, 0.0, 1.0, 1.0).unwrap();
    let sc = Scenario::thin_over_thick(0.5, 0.1).unwrap();
    let grid = build_reference_grid(&sc, 33, 33, 32).unwrap();
    let lg = assemble_limit_generator(&sc, &p, &grid, LumpedRate::default()).unwrap();
    let u_minus: Vec<f64> = (0..33 * 32)
        .map(|k| {
            let (i, j) = (k / 32, k % 32);
            0.2 + 0.1 * grid.varrho(Side::Lower, i) * grid.phi(j).sin()
        })
        .collect();
    let a = LimitState::CircleAnnulus { g_plus: vec![0.0; 32], u_minus: u_minus.clone() };
    let b = LimitState::CircleAnnulus { g_plus: (0..32).map(|j| 1.0 + (3.0 * grid.phi(j)).cos()).collect(), u_minus };
    let ea = evolve(&lg, &a, 0.5, 1e-3, Scheme::ImplicitEuler).unwrap();
    let eb = evolve(&lg, &b, 0.5, 1e-3, Scheme::ImplicitEuler).unwrap();
    let lower = |s: &LimitState| match s {
        LimitState::CircleAnnulus { u_minus, .. } => u_minus.clone(),
        _ => unreachable!(),
    };
    let coupling = lower(&ea).iter().zip(lower(&eb)).fold(0.0f64, |m, (x, y)| m.max((x - y).abs()));

    // α = 0: g⁺ is plain circle diffusion, checked against the heat kernel
    let p0 = TransmissionParams::new(0.0, 1.0, 1.0, 1.0).unwrap();
    let t = 0.5;
    let mut errs = Vec::new();
    for m in [32, 64] {
        let grid = build_reference_grid(&sc, 17, 17, m).unwrap();
        let lg = assemble_limit_generator(&sc, &p0, &grid, LumpedRate::default()).unwrap();
        let f = |phi: f64, t: f64| (-t).exp() * phi.cos() + 0.5 * (-9.0 * t).exp() * (3.0 * phi).cos();
        let s = LimitState::CircleAnnulus {
            g_plus: (0..m).map(|j| f(grid.phi(j), 0.0)).collect(),
            u_minus: vec![0.3; 17 * m],
        };
        let out = evolve(&lg, &s, t, 1e-4, Scheme::CrankNicolson).unwrap();
        let e = out.g_plus().iter().enumerate().fold(0.0f64, |acc, (j, v)| acc.max((v - f(grid.phi(j), t)).abs()));
        errs.push(e);
    }
    let order = (errs[0] / errs[1]).log2();
    let ok = coupling <= 1e-12 && (order - 2.0).abs() < 0.2;
    report(7, ok, format!("beta=0 coupling {coupling:.2e}; alpha=0 heat-kernel errors {errs:?}, order {order:.3}"));
    assert!(ok);
}

#[test]
fn criterion_08_jump_diffusion_stationarity() {
    let start = Instant::now();
    let n = 100_000;
    let rates = JumpRates { down: 1.0, up: 2.0, d_upper: 1.0, d_lower: Some(1.0) };
    let cfg = McConfig {
        n_particles: n,
        t_end: 50.0,
        dt: 1.0,
        record_every: 50.0,
        seed: 8,
        n_bins: 8,
        crossing_multiplier: 1.0,
        mirror: false,
    };
    let s = simulate_limit_jump_diffusion(rates, InitialCondition { side: Side::Upper, rho: 1.0, phi: None }, &cfg)
        .unwrap();
    let secs = start.elapsed().as_secs_f64();
    let want = 2.0 / 3.0;
    let sigma = (want * (1.0 - want) / n as f64).sqrt();
    let got = *s.frac_upper.last().unwrap();
    let ok = (got - want).abs() <= 3.0 * sigma && secs < 60.0;
    report(8, ok, format!("upper occupancy {got:.5} vs 2/3 (3 sigma = {:.5}), {secs:.2} s", 3.0 * sigma));
    assert!(ok);
}

#[test]
fn criterion_09_membrane_mc_against_pde() {
    let start = Instant::now();
    let p = TransmissionParams::default();
    let geom = MembraneGeometry::new(0.5, 1.5).unwrap();
    let init = InitialCondition { side: Side::Upper, rho: 1.25, phi: None };
    let cal_cfg = McConfig {
        n_particles: 4000,
        t_end: 10.0,
        dt: 1e-3,
        record_every: 10.0,
        seed: 7,
        n_bins: 8,
        crossing_multiplier: 1.0,
        mirror: false,
    };
    let cal = calibrate_crossing(&p, geom, init, &cal_cfg, 2.0, 8).unwrap();

    // P(upper at t) from the start radius: backward solve of the upper indicator
    let sc = Scenario::thin_over_thick(0.5, 0.5).unwrap();
    let grid = build_reference_grid(&sc, 65, 65, 4).unwrap();
    let gen = assemble_generator(&sc, Flavor::Physical, &p, &grid).unwrap();
    let row = gen.row_radii().iter().position(|x| (x - 1.25).abs() < 1e-12).unwrap();
    let u0 = LayerField::from_fn(grid, |s, _, _| if s == Side::Upper { 1.0 } else { 0.0 });
    let times: Vec<f64> = (0..=20).map(|k| k as f64 * 0.05).collect();
    let pde = evolve_at(&gen, &u0, &times, 1e-4, Scheme::CrankNicolson).unwrap();

    let cfg = McConfig { n_particles: 100_000, t_end: 1.0, record_every: 0.05, seed: 11, ..cal_cfg };
    let cfg = McConfig { crossing_multiplier: cal.multiplier, ..cfg };
    let s = simulate_membrane_bm(&p, geom, init, &cfg).unwrap();
    assert_eq!(s.times.len(), times.len());
    let sup = pde.iter().zip(&s.frac_upper).fold(0.0f64, |m, (f, mc)| m.max((f.row(row)[0] - mc).abs()));
    let secs = start.elapsed().as_secs_f64();
    let ok = sup <= 0.02;
    report(
        9,
        ok,
        format!(
            "multiplier {:.4} (residual {:.1e}), sup |MC - PDE| {sup:.4} over t in [0,1], {secs:.1} s",
            cal.multiplier, cal.residual
        ),
    );
    assert!(ok);
}

#[test]
fn criterion_10_corrector_identities() {
    let lattice = [0.5, 1.0, 2.0];
    let sc = Scenario::two_thin(0.1).unwrap();
    let mut worst = 0.0f64;
    for &alpha in &lattice {
        for &beta in &lattice {
            for &gamma in &lattice {
                let p = TransmissionParams::new(alpha, beta, 1.0, gamma).unwrap();
                let c = Corrector::new(&sc, &p, CorrectorVariant::Consistent);
                let lower = c.eval(Side::Lower, 1.0)[1] - c.eval(Side::Lower, 0.0)[1];
                let upper = c.eval(Side::Upper, 2.0)[1] - c.eval(Side::Upper, 1.0)[1];
                worst = worst.max((lower + beta).abs()).max((upper - alpha * gamma).abs());
            }
        }
    }
    let ok = worst <= 1e-12;
    report(10, ok, format!("27 parameter sets, worst deviation {worst:.2e}"));
    assert!(ok);
}

#[test]
fn corrector_identities_by_quadrature() {
    // independent check of the analytic endpoint derivatives
    let sc = Scenario::two_thin(0.1).unwrap();
    let p = TransmissionParams::new(2.0, 0.5, 1.0, 0.5).unwrap();
    let c = Corrector::new(&sc, &p, CorrectorVariant::Consistent);
    let simpson = |side: Side, a: f64, b: f64| {
        let n = 2000;
        let h = (b - a) / n as f64;
        (0..=n)
            .map(|i| {
                let w = if i == 0 || i == n { 1.0 } else if i % 2 == 1 { 4.0 } else { 2.0 };
                w * c.eval(side, a + i as f64 * h)[2]
            })
            .sum::<f64>()
            * h
            / 3.0
    };
    assert!((simpson(Side::Lower, 0.0, 1.0) + p.beta).abs() < 1e-10);
    assert!((simpson(Side::Upper, 1.0, 2.0) - p.alpha * p.gamma).abs() < 1e-10);
}
