//! Particle simulations: reflected Brownian motion in the two annuli with a
//! filtering membrane, and the limit jump-diffusions on the circle(s).
//!
//! Every particle owns a ChaCha stream selected by its index, so results do
//! not depend on how particles are split across threads.

use std::f64::consts::{PI, TAU};
use std::io::Write;

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Exp, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::error::{param, Result};
use crate::field::fmt17;
use crate::geometry::{ScenarioKind, Side, TransmissionParams};
use crate::limit::LumpedRate;
use crate::radial1d::{resolvent_closed_form, TwoSidedInterval};

const CHUNK: usize = 512;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MembraneGeometry {
    pub r: f64,
    pub big_r: f64,
}

impl MembraneGeometry {
    pub fn new(r: f64, big_r: f64) -> Result<Self> {
        if !(r > 0.0 && r < 1.0 && big_r > 1.0 && big_r.is_finite()) {
            return param(format!("need 0 < r < 1 < R, got r = {r}, R = {big_r}"));
        }
        Ok(Self { r, big_r })
    }
}

/// Where every particle starts. `phi = None` draws the angle uniformly.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct InitialCondition {
    pub side: Side,
    pub rho: f64,
    pub phi: Option<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct McConfig {
    pub n_particles: usize,
    pub t_end: f64,
    pub dt: f64,
    /// Spacing of the recorded occupancy curve; rounded to whole steps.
    pub record_every: f64,
    pub seed: u64,
    /// Angular bins per side of the final histogram.
    pub n_bins: usize,
    /// Factor on the per-contact crossing probability.
    pub crossing_multiplier: f64,
    /// Negates every angular increment, producing the mirror image path.
    pub mirror: bool,
}

impl McConfig {
    fn validate(&self) -> Result<usize> {
        if self.n_particles == 0 || self.n_bins == 0 {
            return param("need at least one particle and one bin");
        }
        if !(self.dt > 0.0 && self.t_end >= 0.0 && self.record_every > 0.0) {
            return param("dt and record_every must be > 0, t_end >= 0");
        }
        if !(self.crossing_multiplier >= 0.0 && self.crossing_multiplier.is_finite()) {
            return param("crossing multiplier must be >= 0");
        }
        let k = (self.record_every / self.dt).round().max(1.0) as usize;
        Ok(k)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EmpiricalSummary {
    pub seed: u64,
    pub n_particles: usize,
    pub times: Vec<f64>,
    pub frac_upper: Vec<f64>,
    pub frac_lower: Vec<f64>,
    pub n_bins: usize,
    pub hist_upper: Vec<u64>,
    /// One bin when the lower state is a single point.
    pub hist_lower: Vec<u64>,
    pub crossings: u64,
}

impl EmpiricalSummary {
    pub fn lower_is_point(&self) -> bool {
        self.hist_lower.len() == 1 && self.n_bins != 1
    }

    pub fn write_occupancy_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        wr.write_record(["t", "frac_upper", "frac_lower"])?;
        for ((t, u), l) in self
            .times
            .iter()
            .zip(&self.frac_upper)
            .zip(&self.frac_lower)
        {
            wr.write_record([fmt17(*t), fmt17(*u), fmt17(*l)])?;
        }
        wr.flush()?;
        Ok(())
    }

    pub fn write_histogram_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        wr.write_record(["bin_phi", "side", "count"])?;
        let width = TAU / self.n_bins as f64;
        for (j, c) in self.hist_upper.iter().enumerate() {
            wr.write_record([
                fmt17((j as f64 + 0.5) * width),
                "upper".into(),
                c.to_string(),
            ])?;
        }
        if self.lower_is_point() {
            wr.write_record([fmt17(0.0), "point".into(), self.hist_lower[0].to_string()])?;
        } else {
            for (j, c) in self.hist_lower.iter().enumerate() {
                wr.write_record([
                    fmt17((j as f64 + 0.5) * width),
                    "lower".into(),
                    c.to_string(),
                ])?;
            }
        }
        wr.flush()?;
        Ok(())
    }

    /// Normalized `[upper bins.., lower bins..]` histogram.
    pub fn distribution(&self) -> Vec<f64> {
        let n = self.n_particles as f64;
        self.hist_upper
            .iter()
            .chain(&self.hist_lower)
            .map(|c| *c as f64 / n)
            .collect()
    }
}

fn particle_rng(seed: u64, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64);
    rng
}

fn bin_of(phi: f64, n_bins: usize) -> usize {
    let p = phi.rem_euclid(TAU);
    ((p / TAU * n_bins as f64) as usize).min(n_bins - 1)
}

/// Per-chunk tallies, summed in a fixed order.
#[derive(Clone, Debug)]
struct Tally {
    upper_counts: Vec<u64>,
    hist_upper: Vec<u64>,
    hist_lower: Vec<u64>,
    crossings: u64,
    functional: f64,
}

impl Tally {
    fn new(n_records: usize, n_bins: usize, lower_bins: usize) -> Self {
        Self {
            upper_counts: vec![0; n_records],
            hist_upper: vec![0; n_bins],
            hist_lower: vec![0; lower_bins],
            crossings: 0,
            functional: 0.0,
        }
    }

    fn merge(mut self, o: Tally) -> Tally {
        for (a, b) in self.upper_counts.iter_mut().zip(&o.upper_counts) {
            *a += b;
        }
        for (a, b) in self.hist_upper.iter_mut().zip(&o.hist_upper) {
            *a += b;
        }
        for (a, b) in self.hist_lower.iter_mut().zip(&o.hist_lower) {
            *a += b;
        }
        self.crossings += o.crossings;
        self.functional += o.functional;
        self
    }
}

fn run_chunks<F>(cfg: &McConfig, n_records: usize, lower_bins: usize, per_particle: F) -> Tally
where
    F: Fn(usize, &mut Tally) + Sync,
{
    let n_chunks = cfg.n_particles.div_ceil(CHUNK);
    let tallies: Vec<Tally> = (0..n_chunks)
        .into_par_iter()
        .map(|c| {
            let mut t = Tally::new(n_records, cfg.n_bins, lower_bins);
            for i in c * CHUNK..((c + 1) * CHUNK).min(cfg.n_particles) {
                per_particle(i, &mut t);
            }
            t
        })
        .collect();
    tallies
        .into_iter()
        .reduce(Tally::merge)
        .expect("at least one chunk")
}

fn summary(cfg: &McConfig, times: Vec<f64>, t: Tally) -> EmpiricalSummary {
    let n = cfg.n_particles as f64;
    let frac_upper: Vec<f64> = t.upper_counts.iter().map(|c| *c as f64 / n).collect();
    let frac_lower = t
        .upper_counts
        .iter()
        .map(|c| (cfg.n_particles as u64 - c) as f64 / n)
        .collect();
    EmpiricalSummary {
        seed: cfg.seed,
        n_particles: cfg.n_particles,
        times,
        frac_upper,
        frac_lower,
        n_bins: cfg.n_bins,
        hist_upper: t.hist_upper,
        hist_lower: t.hist_lower,
        crossings: t.crossings,
    }
}

/// Step counts: total steps (last one shortened onto `t_end`) and record times.
fn schedule(cfg: &McConfig, every: usize) -> (usize, f64, Vec<f64>) {
    let ratio = cfg.t_end / cfg.dt;
    let mut n = ratio.floor() as usize;
    if ratio - n as f64 > 1e-9 {
        n += 1;
    }
    let last = cfg.t_end - (n.saturating_sub(1)) as f64 * cfg.dt;
    let mut times: Vec<f64> = (0..n).step_by(every).map(|k| k as f64 * cfg.dt).collect();
    if times.last() != Some(&cfg.t_end) {
        times.push(cfg.t_end);
    }
    (n, last, times)
}

struct MembraneWalker {
    geom: MembraneGeometry,
    d_lower: f64,
    p_cross_up: f64,
    p_cross_low: f64,
    mirror: bool,
}

impl MembraneWalker {
    fn new(params: &TransmissionParams, geom: MembraneGeometry, cfg: &McConfig) -> Result<Self> {
        params.validate()?;
        let d_lower = params.kappa;
        let thin = (geom.big_r - 1.0).min(1.0 - geom.r);
        let d_max = d_lower.max(1.0);
        if (2.0 * d_max * cfg.dt).sqrt() >= thin / 4.0 {
            return param(format!(
                "dt = {} too large: sqrt(2 D dt) must stay below a quarter of the thinnest layer ({thin})",
                cfg.dt
            ));
        }
        // Flux coefficients: α from above (D = 1), κβ from below (D = κ).
        let m = cfg.crossing_multiplier;
        let p_cross_up = m * params.alpha * (PI * cfg.dt).sqrt();
        let p_cross_low = m * params.kappa * params.beta * (PI * cfg.dt / d_lower).sqrt();
        if p_cross_up > 1.0 || p_cross_low > 1.0 {
            return param("crossing probability exceeds one; reduce dt");
        }
        Ok(Self {
            geom,
            d_lower,
            p_cross_up,
            p_cross_low,
            mirror: cfg.mirror,
        })
    }

    /// One Euler step of length `h`; returns whether the membrane was crossed.
    fn step(
        &self,
        x: &mut f64,
        y: &mut f64,
        side: &mut Side,
        h: f64,
        rng: &mut ChaCha8Rng,
    ) -> bool {
        let d = if *side == Side::Upper {
            1.0
        } else {
            self.d_lower
        };
        let s = (2.0 * d * h).sqrt();
        let dx: f64 = rng.sample(StandardNormal);
        let dy: f64 = rng.sample(StandardNormal);
        let nx = *x + s * dx;
        let ny = *y + if self.mirror { -s * dy } else { s * dy };
        let rho = nx.hypot(ny);
        let u: f64 = rng.gen();
        let (lo, hi, p) = match side {
            Side::Upper => (1.0, self.geom.big_r, self.p_cross_up),
            Side::Lower => (self.geom.r, 1.0, self.p_cross_low),
        };
        let mut crossed = false;
        let new_rho = if rho > hi {
            if *side == Side::Lower && u < p {
                crossed = true;
                1.0 + (rho - 1.0) / self.d_lower.sqrt()
            } else {
                2.0 * hi - rho
            }
        } else if rho < lo {
            if *side == Side::Upper && u < p {
                crossed = true;
                1.0 - (1.0 - rho) * self.d_lower.sqrt()
            } else {
                2.0 * lo - rho
            }
        } else {
            rho
        };
        if crossed {
            *side = if *side == Side::Upper {
                Side::Lower
            } else {
                Side::Upper
            };
        }
        let (a, b) = match side {
            Side::Upper => (1.0, self.geom.big_r),
            Side::Lower => (self.geom.r, 1.0),
        };
        let new_rho = new_rho.clamp(a, b);
        let f = new_rho / rho;
        *x = nx * f;
        *y = ny * f;
        crossed
    }
}

fn start(init: &InitialCondition, rng: &mut ChaCha8Rng) -> (f64, f64) {
    let phi = init.phi.unwrap_or_else(|| rng.gen::<f64>() * TAU);
    (init.rho * phi.cos(), init.rho * phi.sin())
}

/// Reflected Brownian motion in `r < ρ < 1 < ρ < R` (diffusivity 1 above,
/// κ below) with a membrane crossed on contact with probability
/// `m · K √(π dt / D)`, `K = α` from above and `κβ` from below.
pub fn simulate_membrane_bm(
    params: &TransmissionParams,
    geom: MembraneGeometry,
    init: InitialCondition,
    cfg: &McConfig,
) -> Result<EmpiricalSummary> {
    let every = cfg.validate()?;
    let walker = MembraneWalker::new(params, geom, cfg)?;
    check_start(&init, geom)?;
    let (n_steps, last, times) = schedule(cfg, every);
    let n_rec = times.len();
    let tally = run_chunks(cfg, n_rec, cfg.n_bins, |i, t| {
        let mut rng = particle_rng(cfg.seed, i);
        let (mut x, mut y) = start(&init, &mut rng);
        let mut side = init.side;
        let mut rec = 0;
        for k in 0..n_steps {
            if k % every == 0 && rec < n_rec - 1 {
                if side == Side::Upper {
                    t.upper_counts[rec] += 1;
                }
                rec += 1;
            }
            let h = if k + 1 == n_steps { last } else { cfg.dt };
            if walker.step(&mut x, &mut y, &mut side, h, &mut rng) {
                t.crossings += 1;
            }
        }
        if side == Side::Upper {
            t.upper_counts[n_rec - 1] += 1;
        }
        let b = bin_of(y.atan2(x), cfg.n_bins);
        match side {
            Side::Upper => t.hist_upper[b] += 1,
            Side::Lower => t.hist_lower[b] += 1,
        }
    });
    Ok(summary(cfg, times, tally))
}

fn check_start(init: &InitialCondition, geom: MembraneGeometry) -> Result<()> {
    let (lo, hi) = match init.side {
        Side::Upper => (1.0, geom.big_r),
        Side::Lower => (geom.r, 1.0),
    };
    if !(init.rho >= lo && init.rho <= hi) {
        return param(format!(
            "start radius {} outside the {} layer",
            init.rho,
            init.side.as_str()
        ));
    }
    Ok(())
}

/// Jump rates of a limit process: (upper → lower, lower → upper) and the
/// angular diffusivities (upper, lower).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct JumpRates {
    pub down: f64,
    pub up: f64,
    pub d_upper: f64,
    /// `None` for the lumped point.
    pub d_lower: Option<f64>,
}

impl JumpRates {
    pub fn new(
        kind: ScenarioKind,
        params: &TransmissionParams,
        r: f64,
        lumped: LumpedRate,
    ) -> Result<Self> {
        params.validate()?;
        match kind {
            ScenarioKind::TwoThin => Ok(Self {
                down: params.alpha / params.gamma,
                up: params.kappa * params.beta,
                d_upper: 1.0,
                d_lower: Some(params.kappa),
            }),
            ScenarioKind::ThinOverFast => {
                let up = match lumped {
                    LumpedRate::FluxMatched => 2.0 * params.beta / (1.0 - r * r),
                    LumpedRate::Normalized => params.beta / params.gamma,
                    LumpedRate::PaperLiteral => {
                        return param(
                            "the literal lumped rate does not define a Markov process",
                        )
                    }
                };
                Ok(Self {
                    down: params.alpha,
                    up,
                    d_upper: 1.0,
                    d_lower: None,
                })
            }
            ScenarioKind::ThinOverThick => {
                param("the CircleAnnulus limit has no jump-diffusion simulator")
            }
        }
    }
}

/// Exact simulation of a switching diffusion on one or two circles: Gaussian
/// angular increments over the exponential holding times.
pub fn simulate_limit_jump_diffusion(
    rates: JumpRates,
    init: InitialCondition,
    cfg: &McConfig,
) -> Result<EmpiricalSummary> {
    let every = cfg.validate()?;
    if !(rates.down >= 0.0 && rates.up >= 0.0) {
        return param("jump rates must be nonnegative");
    }
    let (n_steps, _, times) = schedule(cfg, every);
    let _ = n_steps;
    let n_rec = times.len();
    let lower_bins = if rates.d_lower.is_some() {
        cfg.n_bins
    } else {
        1
    };
    let sign = if cfg.mirror { -1.0 } else { 1.0 };
    let tally = run_chunks(cfg, n_rec, lower_bins, |i, t| {
        let mut rng = particle_rng(cfg.seed, i);
        let mut phi = init.phi.unwrap_or_else(|| rng.gen::<f64>() * TAU);
        let mut side = init.side;
        let mut now = 0.0;
        let mut clock = next_jump(&rates, side, &mut rng);
        for (k, &target) in times.iter().enumerate() {
            while clock <= target {
                phi += sign * diffuse(&rates, side, clock - now, &mut rng);
                now = clock;
                side = if side == Side::Upper {
                    Side::Lower
                } else {
                    Side::Upper
                };
                if side == Side::Upper && rates.d_lower.is_none() {
                    phi = rng.gen::<f64>() * TAU;
                }
                t.crossings += 1;
                clock = now + next_jump(&rates, side, &mut rng);
            }
            phi += sign * diffuse(&rates, side, target - now, &mut rng);
            now = target;
            if side == Side::Upper {
                t.upper_counts[k] += 1;
            }
        }
        match (side, rates.d_lower) {
            (Side::Upper, _) => t.hist_upper[bin_of(phi, cfg.n_bins)] += 1,
            (Side::Lower, Some(_)) => t.hist_lower[bin_of(phi, cfg.n_bins)] += 1,
            (Side::Lower, None) => t.hist_lower[0] += 1,
        }
    });
    Ok(summary(cfg, times, tally))
}

fn next_jump(rates: &JumpRates, side: Side, rng: &mut ChaCha8Rng) -> f64 {
    let rate = if side == Side::Upper {
        rates.down
    } else {
        rates.up
    };
    if rate > 0.0 {
        rng.sample(Exp::new(rate).expect("positive rate"))
    } else {
        f64::INFINITY
    }
}

fn diffuse(rates: &JumpRates, side: Side, h: f64, rng: &mut ChaCha8Rng) -> f64 {
    let d = match side {
        Side::Upper => rates.d_upper,
        Side::Lower => rates.d_lower.unwrap_or(0.0),
    };
    if h <= 0.0 || d == 0.0 {
        return 0.0;
    }
    let z: f64 = rng.sample(StandardNormal);
    (2.0 * d * h).sqrt() * z
}

/// Pearson χ² statistic of `counts` against the uniform distribution and
/// whether it stays below the `1 − level` quantile.
pub fn chi_square_uniform(counts: &[u64], level: f64) -> (f64, bool) {
    let n: u64 = counts.iter().sum();
    let e = n as f64 / counts.len() as f64;
    let stat: f64 = counts.iter().map(|c| (*c as f64 - e).powi(2) / e).sum();
    let crit = ChiSquared::new((counts.len() - 1) as f64)
        .expect("dof > 0")
        .inverse_cdf(1.0 - level);
    (stat, stat < crit)
}

pub fn total_variation(p: &[f64], q: &[f64]) -> f64 {
    0.5 * p.iter().zip(q).map(|(a, b)| (a - b).abs()).sum::<f64>()
}

/// Exact `(side, angle-bin)` law at time `t` of the TwoCircles switching
/// diffusion started on the upper circle at angle `phi0`, by Fourier modes.
/// Returned as `[upper bins.., lower bins..]`.
pub fn two_circle_marginal(rates: JumpRates, phi0: f64, t: f64, n_bins: usize) -> Result<Vec<f64>> {
    let d_lower = match rates.d_lower {
        Some(d) => d,
        None => return param("marginal is defined for two circles"),
    };
    let w = TAU / n_bins as f64;
    let mut out = vec![0.0; 2 * n_bins];
    let mut n = 0usize;
    loop {
        let nf = n as f64;
        // Forward equations of mode n: p' = M p with p = (upper, lower).
        let m = [
            [-rates.d_upper * nf * nf - rates.down, rates.up],
            [rates.down, -d_lower * nf * nf - rates.up],
        ];
        let e = expm2(m, t);
        let (pu, pl) = (e[0][0], e[1][0]);
        if n > 0 && pu.abs().max(pl.abs()) < 1e-17 {
            break;
        }
        for j in 0..n_bins {
            let (a, b) = (j as f64 * w, (j + 1) as f64 * w);
            // ∫_a^b of the mode-n angular profile, density (1/2π)(1 + 2Σ cos n(φ−φ0)).
            let integral = if n == 0 {
                (b - a) / TAU
            } else {
                2.0 * (((b - phi0) * nf).sin() - ((a - phi0) * nf).sin()) / (nf * TAU)
            };
            out[j] += pu * integral;
            out[n_bins + j] += pl * integral;
        }
        n += 1;
        if n > 10_000 {
            break;
        }
    }
    Ok(out)
}

/// `exp(t M)` of a real 2×2 matrix with real eigenvalues.
fn expm2(m: [[f64; 2]; 2], t: f64) -> [[f64; 2]; 2] {
    let tr = m[0][0] + m[1][1];
    let det = m[0][0] * m[1][1] - m[0][1] * m[1][0];
    let half = 0.5 * tr;
    let disc = (half * half - det).max(0.0).sqrt();
    // exp(tM) = e^{t·half} [cosh(t·disc) I + sinh(t·disc)/disc (M − half I)]
    let e = (t * half).exp();
    let c = (t * disc).cosh();
    let s = if disc > 1e-300 {
        (t * disc).sinh() / disc
    } else {
        t
    };
    [
        [e * (c + s * (m[0][0] - half)), e * s * m[0][1]],
        [e * s * m[1][0], e * (c + s * (m[1][1] - half))],
    ]
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CalibrationResult {
    pub multiplier: f64,
    /// Relative mismatch of the discounted upper-occupancy functional.
    pub residual: f64,
    pub target: f64,
    pub estimate: f64,
    pub iterations: usize,
    pub lambda: f64,
    pub dt: f64,
}

/// Monte Carlo estimate of `E ∫ e^{−λ S_t} 1{upper}(X_t) dS_t` with the
/// clock `dS = dt/ρ²`; its exact value is the closed-form resolvent of the
/// log-coordinate operator applied to the upper indicator.
fn discounted_occupancy(
    params: &TransmissionParams,
    geom: MembraneGeometry,
    init: InitialCondition,
    cfg: &McConfig,
    lambda: f64,
) -> Result<f64> {
    cfg.validate()?;
    let walker = MembraneWalker::new(params, geom, cfg)?;
    let n_steps = (cfg.t_end / cfg.dt).ceil() as usize;
    let tally = run_chunks(cfg, 1, cfg.n_bins, |i, t| {
        let mut rng = particle_rng(cfg.seed, i);
        let (mut x, mut y) = start(&init, &mut rng);
        let mut side = init.side;
        let mut clock = 0.0;
        let mut acc = 0.0;
        for _ in 0..n_steps {
            let ds = cfg.dt / (x * x + y * y);
            if side == Side::Upper {
                acc += (-lambda * clock).exp() * ds;
            }
            clock += ds;
            walker.step(&mut x, &mut y, &mut side, cfg.dt, &mut rng);
        }
        t.functional += acc;
    });
    Ok(tally.functional / cfg.n_particles as f64)
}

/// Fits the crossing multiplier so the Monte Carlo discounted occupancy of
/// the upper layer matches the closed-form resolvent (secant iterations
/// with common random numbers).
pub fn calibrate_crossing(
    params: &TransmissionParams,
    geom: MembraneGeometry,
    init: InitialCondition,
    cfg: &McConfig,
    lambda: f64,
    max_iter: usize,
) -> Result<CalibrationResult> {
    check_start(&init, geom)?;
    let iv = TwoSidedInterval::from_radii(geom.r, geom.big_r)?;
    let g = |s: Side, _x: f64| if s == Side::Upper { 1.0 } else { 0.0 };
    let cf = resolvent_closed_form(lambda, g, params, iv)?;
    let target = cf.eval(init.side, init.rho.ln());
    let eval = |m: f64| {
        let c = McConfig {
            crossing_multiplier: m,
            ..*cfg
        };
        discounted_occupancy(params, geom, init, &c, lambda)
    };
    let (mut m0, mut m1) = (1.0, 1.2);
    let (mut f0, mut f1) = (eval(m0)? - target, eval(m1)? - target);
    let mut iterations = 2;
    while iterations < max_iter && (f1 - f0).abs() > 0.0 && (f1 / target).abs() > 1e-3 {
        let m2 = (m1 - f1 * (m1 - m0) / (f1 - f0)).clamp(0.25 * m1, 4.0 * m1);
        m0 = m1;
        f0 = f1;
        m1 = m2;
        f1 = eval(m1)? - target;
        iterations += 1;
    }
    if f0.abs() < f1.abs() {
        std::mem::swap(&mut m0, &mut m1);
        std::mem::swap(&mut f0, &mut f1);
    }
    Ok(CalibrationResult {
        multiplier: m1,
        residual: (f1 / target).abs(),
        target,
        estimate: f1 + target,
        iterations,
        lambda,
        dt: cfg.dt,
    })
}
