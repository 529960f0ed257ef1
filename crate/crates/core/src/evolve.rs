//! Resolvents and time stepping for any operator that is block-diagonal in
//! the angular modes. Stepping happens entirely in mode space: one forward
//! transform, independent per-mode recurrences with a factorized matrix,
//! one inverse transform.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{param, Error, Result};
use crate::field::LayerField;
use crate::generator2d::DiscreteGenerator;
use crate::limit::{LimitGenerator, LimitState};
use crate::linalg::{ShiftedFactor, Tridiagonal};
use crate::modes::{ModalField, ModeTransform};

/// An operator given by one tridiagonal matrix per angular mode.
pub trait ModalGenerator: Sync {
    type Field: Clone;

    fn n_rows(&self) -> usize;
    fn n_ang(&self) -> usize;
    fn mode_matrix(&self, n: usize) -> &Tridiagonal;
    fn transform(&self) -> &ModeTransform;
    fn flatten(&self, f: &Self::Field) -> Result<Vec<f64>>;
    fn unflatten(&self, v: Vec<f64>) -> Result<Self::Field>;

    fn n_modes(&self) -> usize {
        self.n_ang() / 2 + 1
    }
}

impl ModalGenerator for DiscreteGenerator {
    type Field = LayerField;

    fn n_rows(&self) -> usize {
        self.grid.n_rows()
    }
    fn n_ang(&self) -> usize {
        self.grid.n_ang
    }
    fn mode_matrix(&self, n: usize) -> &Tridiagonal {
        DiscreteGenerator::mode_matrix(self, n)
    }
    fn transform(&self) -> &ModeTransform {
        DiscreteGenerator::transform(self)
    }
    fn flatten(&self, f: &LayerField) -> Result<Vec<f64>> {
        self.grid.check_same(f.grid())?;
        Ok(f.values().to_vec())
    }
    fn unflatten(&self, v: Vec<f64>) -> Result<LayerField> {
        LayerField::from_values(self.grid, v)
    }
}

impl ModalGenerator for LimitGenerator {
    type Field = LimitState;

    fn n_rows(&self) -> usize {
        LimitGenerator::n_rows(self)
    }
    fn n_ang(&self) -> usize {
        self.grid.n_ang
    }
    fn mode_matrix(&self, n: usize) -> &Tridiagonal {
        LimitGenerator::mode_matrix(self, n)
    }
    fn transform(&self) -> &ModeTransform {
        LimitGenerator::transform(self)
    }
    fn flatten(&self, f: &LimitState) -> Result<Vec<f64>> {
        self.check_state(f)?;
        Ok(f.to_values())
    }
    fn unflatten(&self, v: Vec<f64>) -> Result<LimitState> {
        LimitState::from_values(self.kind, &self.grid, v)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
pub enum Scheme {
    #[default]
    ImplicitEuler,
    CrankNicolson,
}

fn factor(m: &Tridiagonal, lambda: f64, w: Option<&[f64]>) -> Result<ShiftedFactor> {
    m.factor_shifted(lambda, w)
        .ok_or_else(|| Error::Internal(format!("singular shifted system at lambda = {lambda}")))
}

fn to_modes<G: ModalGenerator>(gen: &G, f: &G::Field) -> Result<ModalField> {
    let v = gen.flatten(f)?;
    Ok(gen.transform().forward(&v, gen.n_rows()))
}

fn from_modes<G: ModalGenerator>(gen: &G, m: &ModalField) -> Result<G::Field> {
    gen.unflatten(gen.transform().inverse(m))
}

/// Solves `(λ − L) f = g`.
pub fn resolvent_solve<G: ModalGenerator>(gen: &G, lambda: f64, g: &G::Field) -> Result<G::Field> {
    if !(lambda > 0.0 && lambda.is_finite()) {
        return param(format!("resolvent parameter must be > 0, got {lambda}"));
    }
    let mut mf = to_modes(gen, g)?;
    let nyq = gen.n_ang() / 2;
    mf.cos
        .par_iter_mut()
        .zip(mf.sin.par_iter_mut())
        .enumerate()
        .try_for_each(|(n, (c, s))| -> Result<()> {
            let f = factor(gen.mode_matrix(n), lambda, None)?;
            f.solve_in_place(c);
            if n != 0 && n != nyq {
                f.solve_in_place(s);
            }
            Ok(())
        })?;
    from_modes(gen, &mf)
}

/// Solves `(λ − W·L_n) x = rhs` for a single mode with row weights `W`.
pub fn mode_resolvent<G: ModalGenerator>(
    gen: &G,
    n: usize,
    lambda: f64,
    weights: Option<&[f64]>,
    rhs: &[f64],
) -> Result<Vec<f64>> {
    if n >= gen.n_modes()
        || rhs.len() != gen.n_rows()
        || weights.is_some_and(|w| w.len() != rhs.len())
    {
        return param("mode index or vector length out of range");
    }
    let f = factor(gen.mode_matrix(n), lambda, weights)?;
    let mut x = rhs.to_vec();
    f.solve_in_place(&mut x);
    Ok(x)
}

/// One time step of a single mode.
struct Stepper {
    matrix: Tridiagonal,
    factor: ShiftedFactor,
    lambda: f64,
    scheme: Scheme,
}

impl Stepper {
    fn new(m: &Tridiagonal, dt: f64, scheme: Scheme) -> Result<Self> {
        let lambda = match scheme {
            Scheme::ImplicitEuler => 1.0 / dt,
            Scheme::CrankNicolson => 2.0 / dt,
        };
        Ok(Self {
            matrix: m.clone(),
            factor: factor(m, lambda, None)?,
            lambda,
            scheme,
        })
    }

    fn step(&self, x: &mut [f64], scratch: &mut [f64]) {
        match self.scheme {
            Scheme::ImplicitEuler => x.iter_mut().for_each(|v| *v *= self.lambda),
            Scheme::CrankNicolson => {
                self.matrix.apply(x, scratch);
                x.iter_mut()
                    .zip(scratch.iter())
                    .for_each(|(v, l)| *v = self.lambda * *v + l);
            }
        }
        self.factor.solve_in_place(x);
    }
}

/// Splits `[0, t]` into full steps of `dt` plus a final shorter step.
fn step_plan(t: f64, dt: f64) -> (usize, f64) {
    let ratio = t / dt;
    let mut n = ratio.floor() as usize;
    if (ratio - (n + 1) as f64).abs() <= 1e-9 * ratio.max(1.0) {
        n += 1;
    }
    let rem = t - n as f64 * dt;
    if rem <= 1e-12 * t.max(dt) {
        (n, 0.0)
    } else {
        (n, rem)
    }
}

/// The solution at each of the increasing times `times`, stepping with
/// `dt` and snapping onto every requested time.
pub fn evolve_at<G: ModalGenerator>(
    gen: &G,
    u0: &G::Field,
    times: &[f64],
    dt: f64,
    scheme: Scheme,
) -> Result<Vec<G::Field>> {
    if !(dt > 0.0 && dt.is_finite()) {
        return param(format!("time step must be > 0, got {dt}"));
    }
    if times.iter().any(|t| !(t.is_finite() && *t >= 0.0)) || times.windows(2).any(|w| w[1] < w[0])
    {
        return param("output times must be finite, nonnegative and nondecreasing");
    }
    let mut mf = to_modes(gen, u0)?;
    let n_rows = gen.n_rows();
    let nyq = gen.n_ang() / 2;
    let mut out = Vec::with_capacity(times.len());
    let mut now = 0.0;
    let full: Vec<Stepper> = if times.last().is_some_and(|t| *t > 0.0) {
        (0..gen.n_modes())
            .map(|n| Stepper::new(gen.mode_matrix(n), dt, scheme))
            .collect::<Result<_>>()?
    } else {
        Vec::new()
    };
    for &t in times {
        let (n_full, rem) = step_plan(t - now, dt);
        mf.cos
            .par_iter_mut()
            .zip(mf.sin.par_iter_mut())
            .enumerate()
            .try_for_each(|(n, (c, s))| -> Result<()> {
                if n_full == 0 && rem == 0.0 {
                    return Ok(());
                }
                let last = if rem > 0.0 {
                    Some(Stepper::new(gen.mode_matrix(n), rem, scheme)?)
                } else {
                    None
                };
                let mut scratch = vec![0.0; n_rows];
                let with_sin = n != 0 && n != nyq;
                for _ in 0..n_full {
                    full[n].step(c, &mut scratch);
                    if with_sin {
                        full[n].step(s, &mut scratch);
                    }
                }
                if let Some(st) = last {
                    st.step(c, &mut scratch);
                    if with_sin {
                        st.step(s, &mut scratch);
                    }
                }
                Ok(())
            })?;
        now = t;
        out.push(from_modes(gen, &mf)?);
    }
    Ok(out)
}

/// `u(t)` from `u0` by implicit Euler (or Crank–Nicolson) steps of size `dt`.
pub fn evolve<G: ModalGenerator>(
    gen: &G,
    u0: &G::Field,
    t: f64,
    dt: f64,
    scheme: Scheme,
) -> Result<G::Field> {
    if t > 0.0 && dt > t * (1.0 + 1e-12) {
        return param(format!("time step {dt} exceeds the horizon {t}"));
    }
    Ok(evolve_at(gen, u0, &[t], dt, scheme)?
        .pop()
        .expect("one output time"))
}

/// `exp(t [[−a, a], [b, −b]]) v0`.
pub fn matrix_exponential_2x2(a: f64, b: f64, t: f64, v0: (f64, f64)) -> Result<(f64, f64)> {
    if !(a >= 0.0 && b >= 0.0 && t >= 0.0) || !(a + b).is_finite() {
        return param("rates and time must be nonnegative");
    }
    if a + b == 0.0 {
        return Ok(v0);
    }
    let inf = (b * v0.0 + a * v0.1) / (a + b);
    let decay = (-(a + b) * t).exp();
    Ok((inf + decay * (v0.0 - inf), inf + decay * (v0.1 - inf)))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct OrderReport {
    pub dt: f64,
    /// `‖u_dt − u_{dt/2}‖∞` and `‖u_{dt/2} − u_{dt/4}‖∞`.
    pub diffs: [f64; 2],
    /// `log2` of the ratio of the differences; `None` when both vanish.
    pub order: Option<f64>,
}

/// Observed temporal order from runs at `dt`, `dt/2` and `dt/4`.
pub fn step_order_check<G, D>(
    gen: &G,
    u0: &G::Field,
    t: f64,
    dt: f64,
    scheme: Scheme,
    dist: D,
) -> Result<OrderReport>
where
    G: ModalGenerator,
    D: Fn(&G::Field, &G::Field) -> Result<f64>,
{
    let runs = [dt, dt / 2.0, dt / 4.0]
        .iter()
        .map(|&h| evolve(gen, u0, t, h, scheme))
        .collect::<Result<Vec<_>>>()?;
    let diffs = [dist(&runs[0], &runs[1])?, dist(&runs[1], &runs[2])?];
    let order = if diffs[0] <= 1e-10 && diffs[1] <= 1e-10 {
        None
    } else {
        Some((diffs[0] / diffs[1]).log2())
    };
    Ok(OrderReport { dt, diffs, order })
}
