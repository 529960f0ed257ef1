//! One-dimensional two-sided operators and their closed-form resolvents.
//!
//! Log coordinates: the interval `U = [a,0−] ∪ [0+,b]` carries
//! `A f = f''` on the upper piece and `κ f''` on the lower one, with
//! `f'(a) = f'(b) = 0`, `f'(0+) = α[f(0+) − f(0−)]`, `f'(0−) = β[f(0+) − f(0−)]`.
//! The map `x = ln ρ` carries it to `A^I f = ρ² f'' + ρ f'` on
//! `V = [r,1−] ∪ [1+,R]` with the same conditions in ρ.

use crate::error::{param, Error, Result};
use crate::geometry::{Side, TransmissionParams};
use crate::linalg::Tridiagonal;
use crate::quadrature::romberg;

const QUAD_TOL: f64 = 1e-13;

/// `U = [a, 0−] ∪ [0+, b]` in log coordinates.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TwoSidedInterval {
    pub a: f64,
    pub b: f64,
}

impl TwoSidedInterval {
    pub fn new(a: f64, b: f64) -> Result<Self> {
        if !(a < 0.0 && b > 0.0 && a.is_finite() && b.is_finite()) {
            return param(format!("need a < 0 < b, got a={a}, b={b}"));
        }
        Ok(Self { a, b })
    }

    /// Image of `V = [r,1]∪[1,R]` under `ρ ↦ ln ρ`.
    pub fn from_radii(r: f64, big_r: f64) -> Result<Self> {
        Self::new(r.ln(), big_r.ln())
    }
}

/// Samples on a two-sided grid; node vectors carry the coordinate of each
/// sample (x in U, or ρ in V), membrane node last on the lower side and
/// first on the upper side.
#[derive(Clone, Debug, PartialEq)]
pub struct RadialProfile {
    pub lower_nodes: Vec<f64>,
    pub lower: Vec<f64>,
    pub upper_nodes: Vec<f64>,
    pub upper: Vec<f64>,
}

impl RadialProfile {
    pub fn sample(
        lower_nodes: Vec<f64>,
        upper_nodes: Vec<f64>,
        f: impl Fn(Side, f64) -> f64,
    ) -> Self {
        let lower = lower_nodes.iter().map(|&x| f(Side::Lower, x)).collect();
        let upper = upper_nodes.iter().map(|&x| f(Side::Upper, x)).collect();
        Self {
            lower_nodes,
            lower,
            upper_nodes,
            upper,
        }
    }

    /// Uniform V-grid with `n` points per layer on `[r,1]` and `[1,R]`.
    pub fn uniform_v(r: f64, big_r: f64, n: usize) -> (Vec<f64>, Vec<f64>) {
        (linspace(r, 1.0, n), linspace(1.0, big_r, n))
    }

    pub fn sup_norm(&self) -> f64 {
        self.lower
            .iter()
            .chain(&self.upper)
            .fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn min_value(&self) -> f64 {
        self.lower
            .iter()
            .chain(&self.upper)
            .copied()
            .fold(f64::INFINITY, f64::min)
    }

    pub fn values(&self) -> Vec<f64> {
        self.lower.iter().chain(&self.upper).copied().collect()
    }

    pub fn max_abs_diff(&self, other: &RadialProfile) -> f64 {
        self.values()
            .iter()
            .zip(other.values())
            .fold(0.0, |m, (a, b)| m.max((a - b).abs()))
    }
}

pub fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| {
            if i + 1 == n {
                hi
            } else {
                lo + (hi - lo) * i as f64 / (n - 1) as f64
            }
        })
        .collect()
}

/// `x ↦ (1/(2 c s)) ∫_lo^hi e^{-s|x-y|} g(y) dy`, the free-space resolvent of
/// `c f''` at `λ = c s²`, split at `x` so both pieces are smooth.
struct ExpKernel {
    s: f64,
    lo: f64,
    hi: f64,
    diffusivity: f64,
}

impl ExpKernel {
    fn pieces(&self, g: &dyn Fn(f64) -> f64, x: f64) -> (f64, f64) {
        let s = self.s;
        let left = romberg(|y| (-s * (x - y)).exp() * g(y), self.lo, x, QUAD_TOL);
        let right = romberg(|y| (-s * (y - x)).exp() * g(y), x, self.hi, QUAD_TOL);
        (left, right)
    }

    fn h(&self, g: &dyn Fn(f64) -> f64, x: f64) -> f64 {
        let (l, r) = self.pieces(g, x);
        (l + r) / (2.0 * self.diffusivity * self.s)
    }

    fn dh(&self, g: &dyn Fn(f64) -> f64, x: f64) -> f64 {
        let (l, r) = self.pieces(g, x);
        (r - l) / (2.0 * self.diffusivity)
    }
}

/// Closed-form solution of `λ f − A f = g` on `U`.
pub struct ClosedFormResolvent<G: Fn(Side, f64) -> f64> {
    g: G,
    iv: TwoSidedInterval,
    s: f64,
    t: f64,
    upper_k: ExpKernel,
    lower_k: ExpKernel,
    c1: f64,
    c2: f64,
    h_a: f64,
    h_b: f64,
}

impl<G: Fn(Side, f64) -> f64> ClosedFormResolvent<G> {
    /// f(x) on `side`.
    pub fn eval(&self, side: Side, x: f64) -> f64 {
        match side {
            Side::Upper => {
                let z = self.s * (self.iv.b - x);
                let gu = |y: f64| (self.g)(Side::Upper, y);
                self.c2 * z.cosh() - self.h_b * z.sinh() + self.upper_k.h(&gu, x)
            }
            Side::Lower => {
                let z = self.t * (x - self.iv.a);
                let gl = |y: f64| (self.g)(Side::Lower, y);
                self.c1 * z.cosh() - self.h_a * z.sinh() + self.lower_k.h(&gl, x)
            }
        }
    }

    /// f'(x) on `side`.
    pub fn eval_derivative(&self, side: Side, x: f64) -> f64 {
        match side {
            Side::Upper => {
                let z = self.s * (self.iv.b - x);
                let gu = |y: f64| (self.g)(Side::Upper, y);
                -self.s * self.c2 * z.sinh()
                    + self.s * self.h_b * z.cosh()
                    + self.upper_k.dh(&gu, x)
            }
            Side::Lower => {
                let z = self.t * (x - self.iv.a);
                let gl = |y: f64| (self.g)(Side::Lower, y);
                self.t * self.c1 * z.sinh() - self.t * self.h_a * z.cosh() + self.lower_k.dh(&gl, x)
            }
        }
    }

    /// Samples f on U-nodes.
    pub fn sample_u(&self, lower_x: &[f64], upper_x: &[f64]) -> RadialProfile {
        RadialProfile::sample(lower_x.to_vec(), upper_x.to_vec(), |s, x| self.eval(s, x))
    }

    /// Samples `f ∘ ln` on V-nodes (ρ coordinates), i.e. the resolvent of `A^I`.
    pub fn sample_v(&self, lower_rho: &[f64], upper_rho: &[f64]) -> RadialProfile {
        RadialProfile::sample(lower_rho.to_vec(), upper_rho.to_vec(), |s, rho| {
            let x = match (s, rho) {
                (_, r) if r == 1.0 => 0.0,
                _ => rho.ln(),
            };
            self.eval(s, x)
        })
    }
}

/// Solves `λ f − A f = g` on `U` in closed form. The general solution on
/// each piece is a cosh/sinh pair plus the free-space kernel integral `h`;
/// the sinh coefficients are fixed by the outer Neumann conditions and
/// `C₁, C₂` by the two membrane conditions.
pub fn resolvent_closed_form<G: Fn(Side, f64) -> f64>(
    lambda: f64,
    g: G,
    p: &TransmissionParams,
    iv: TwoSidedInterval,
) -> Result<ClosedFormResolvent<G>> {
    if !(lambda > 0.0 && lambda.is_finite()) {
        return param(format!("lambda must be > 0, got {lambda}"));
    }
    let (alpha, beta, kappa) = (p.alpha, p.beta, p.kappa);
    let s = lambda.sqrt();
    let t = (lambda / kappa).sqrt();
    let upper_k = ExpKernel {
        s,
        lo: 0.0,
        hi: iv.b,
        diffusivity: 1.0,
    };
    let lower_k = ExpKernel {
        s: t,
        lo: iv.a,
        hi: 0.0,
        diffusivity: kappa,
    };
    let gu = |y: f64| g(Side::Upper, y);
    let gl = |y: f64| g(Side::Lower, y);
    let h_b = upper_k.h(&gu, iv.b);
    let h_u0 = upper_k.h(&gu, 0.0);
    let h_a = lower_k.h(&gl, iv.a);
    let h_l0 = lower_k.h(&gl, 0.0);

    let (ca, sa) = ((-t * iv.a).cosh(), (-t * iv.a).sinh());
    let (cb, sb) = ((s * iv.b).cosh(), (s * iv.b).sinh());
    // Traces at the membrane: f(0±) = X·C + Y, f'(0±) = X'·C + Y'.
    let fu_y = -h_b * sb + h_u0;
    let fl_y = -h_a * sa + h_l0;
    let m11 = t * sa + beta * ca;
    let m12 = -beta * cb;
    let m21 = -alpha * ca;
    let m22 = s * sb + alpha * cb;
    let r1 = t * h_a * ca + t * h_l0 + beta * (fu_y - fl_y);
    let r2 = s * h_b * cb + s * h_u0 - alpha * (fu_y - fl_y);
    let det = m11 * m22 - m12 * m21;
    if !(det > 0.0 && det.is_finite()) {
        return Err(Error::Internal(format!(
            "transmission determinant {det} is not positive"
        )));
    }
    let c1 = (r1 * m22 - m12 * r2) / det;
    let c2 = (m11 * r2 - m21 * r1) / det;
    Ok(ClosedFormResolvent {
        g,
        iv,
        s,
        t,
        upper_k,
        lower_k,
        c1,
        c2,
        h_a,
        h_b,
    })
}

/// Determinant of the 2×2 system for `C₁, C₂`.
pub fn transmission_determinant(
    lambda: f64,
    p: &TransmissionParams,
    iv: TwoSidedInterval,
) -> Result<f64> {
    if !(lambda > 0.0) {
        return param(format!("lambda must be > 0, got {lambda}"));
    }
    let s = lambda.sqrt();
    let t = (lambda / p.kappa).sqrt();
    let (ca, sa) = ((-t * iv.a).cosh(), (-t * iv.a).sinh());
    let (cb, sb) = ((s * iv.b).cosh(), (s * iv.b).sinh());
    Ok((t * sa + p.beta * ca) * (s * sb + p.alpha * cb) - p.alpha * p.beta * ca * cb)
}

/// Tolerance for the one-sided boundary-condition check. A sampled smooth
/// admissible profile has an O(h²) one-sided residual, so the allowance is
/// `‖f‖∞ (relative + per_h · h)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BcTolerance {
    pub relative: f64,
    pub per_h: f64,
}

impl Default for BcTolerance {
    fn default() -> Self {
        Self {
            relative: 1e-8,
            per_h: 1.0,
        }
    }
}

impl BcTolerance {
    pub fn allowed(&self, norm: f64, h: f64) -> f64 {
        norm * (self.relative + self.per_h * h)
    }
}

/// `(−3u₀ + 4u₁ − u₂)/(2h)`.
pub fn one_sided_left(u0: f64, u1: f64, u2: f64, h: f64) -> f64 {
    (-3.0 * u0 + 4.0 * u1 - u2) / (2.0 * h)
}

/// `(3u_N − 4u_{N−1} + u_{N−2})/(2h)`.
pub fn one_sided_right(un: f64, un1: f64, un2: f64, h: f64) -> f64 {
    (3.0 * un - 4.0 * un1 + un2) / (2.0 * h)
}

fn uniform_spacing(nodes: &[f64]) -> Result<f64> {
    if nodes.len() < 3 {
        return param("need at least 3 nodes per layer");
    }
    let h = (nodes[nodes.len() - 1] - nodes[0]) / (nodes.len() - 1) as f64;
    for w in nodes.windows(2) {
        if ((w[1] - w[0]) - h).abs() > 1e-9 * h {
            return param("nodes must be uniformly spaced");
        }
    }
    Ok(h)
}

/// Discrete `A^I` on uniform V-nodes: centered stencils inside, and at the
/// four end nodes a ghost value eliminated through the boundary or
/// transmission condition, so every row annihilates constants.
pub fn log_conjugate_matrix(
    lower_rho: &[f64],
    upper_rho: &[f64],
    p: &TransmissionParams,
) -> Result<Tridiagonal> {
    let hl = uniform_spacing(lower_rho)?;
    let hu = uniform_spacing(upper_rho)?;
    let nl = lower_rho.len();
    let n = nl + upper_rho.len();
    let mut m = Tridiagonal::zeros(n);
    let mut fill = |off: usize, nodes: &[f64], h: f64, k: f64| {
        let last = nodes.len() - 1;
        for (i, &rho) in nodes.iter().enumerate() {
            let a2 = k * rho * rho;
            let a1 = k * rho;
            let row = off + i;
            if i == 0 {
                m.diag[row] = -2.0 * a2 / (h * h);
                m.sup[row] = 2.0 * a2 / (h * h);
            } else if i == last {
                m.diag[row] = -2.0 * a2 / (h * h);
                m.sub[row] = 2.0 * a2 / (h * h);
            } else {
                m.sub[row] = a2 / (h * h) - a1 / (2.0 * h);
                m.diag[row] = -2.0 * a2 / (h * h);
                m.sup[row] = a2 / (h * h) + a1 / (2.0 * h);
            }
        }
    };
    fill(0, lower_rho, hl, p.kappa);
    fill(nl, upper_rho, hu, 1.0);
    // Membrane slopes: f'(1−) = β·jump enters through the ghost value to
    // the right of 1−, f'(1+) = α·jump through the ghost to the left of 1+.
    let (r_m, r_p) = (lower_rho[nl - 1], upper_rho[0]);
    let cl = p.kappa * (2.0 * r_m * r_m / hl + r_m) * p.beta;
    m.diag[nl - 1] -= cl;
    m.sup[nl - 1] = cl;
    let cu = (2.0 * r_p * r_p / hu - r_p) * p.alpha;
    m.diag[nl] -= cu;
    m.sub[nl] = cu;
    Ok(m)
}

/// The four one-sided condition residuals `[r, 1−, 1+, R]` of a V-profile.
pub fn boundary_residuals(f: &RadialProfile, p: &TransmissionParams) -> Result<[f64; 4]> {
    let hl = uniform_spacing(&f.lower_nodes)?;
    let hu = uniform_spacing(&f.upper_nodes)?;
    let (l, u) = (&f.lower, &f.upper);
    let nl = l.len();
    let nu = u.len();
    let jump = u[0] - l[nl - 1];
    Ok([
        one_sided_left(l[0], l[1], l[2], hl),
        one_sided_right(l[nl - 1], l[nl - 2], l[nl - 3], hl) - p.beta * jump,
        one_sided_left(u[0], u[1], u[2], hu) - p.alpha * jump,
        one_sided_right(u[nu - 1], u[nu - 2], u[nu - 3], hu),
    ])
}

/// Applies `A^I` to a V-profile after checking its boundary and
/// transmission conditions with one-sided stencils.
pub fn log_conjugate_apply(
    f: &RadialProfile,
    p: &TransmissionParams,
    tol: BcTolerance,
) -> Result<RadialProfile> {
    let res = boundary_residuals(f, p)?;
    let hl = uniform_spacing(&f.lower_nodes)?;
    let hu = uniform_spacing(&f.upper_nodes)?;
    let allowed = tol.allowed(f.sup_norm(), hl.max(hu));
    if let Some((k, r)) = res.iter().enumerate().find(|(_, r)| r.abs() > allowed) {
        let at = ["r", "1-", "1+", "R"][k];
        return Err(Error::Precondition(format!(
            "condition at {at} violated: residual {r:e} exceeds {allowed:e}"
        )));
    }
    let m = log_conjugate_matrix(&f.lower_nodes, &f.upper_nodes, p)?;
    let x = f.values();
    let mut y = vec![0.0; x.len()];
    m.apply(&x, &mut y);
    let nl = f.lower.len();
    Ok(RadialProfile {
        lower_nodes: f.lower_nodes.clone(),
        lower: y[..nl].to_vec(),
        upper_nodes: f.upper_nodes.clone(),
        upper: y[nl..].to_vec(),
    })
}

/// Solution of `λ f − A f = g` on `[a,0−] ∪ {0+}`, where
/// `A f(0+) = α(f(0−) − f(0+))`, `κ f''` acts on the interval,
/// `f'(a) = 0` and `f'(0−) = β(f(0+) − f(0−))`.
pub struct CirclePointResolvent<G: Fn(f64) -> f64> {
    g: G,
    a: f64,
    t: f64,
    kernel: ExpKernel,
    c: f64,
    h_a: f64,
    pub point: f64,
    /// Number of perturbation sweeps used (0 for a direct solve).
    pub iterations: usize,
}

impl<G: Fn(f64) -> f64> CirclePointResolvent<G> {
    pub fn eval_lower(&self, x: f64) -> f64 {
        let z = self.t * (x - self.a);
        self.c * z.cosh() - self.h_a * z.sinh() + self.kernel.h(&self.g, x)
    }

    pub fn eval_lower_derivative(&self, x: f64) -> f64 {
        let z = self.t * (x - self.a);
        self.t * self.c * z.sinh() - self.t * self.h_a * z.cosh() + self.kernel.dh(&self.g, x)
    }
}

/// Lower traces as affine functions of the constant C:
/// `f(0−) = c·C + d`, `f'(0−) = e·C + q`.
struct LowerTraces {
    c: f64,
    d: f64,
    e: f64,
    q: f64,
}

/// Solves the circle+point resolvent problem in log coordinates
/// (`a = ln r`, lower data `g_lower` on `[a, 0]`, point datum `g_point`).
///
/// With `α = 0` the point decouples: `f(0+) = g(0+)/λ`. Writing the lower
/// piece as `C cosh t(x−a) − h(a) sinh t(x−a) + h(x)` with `t = √(λ/κ)`,
/// the membrane condition `f'(0−) = β(f(0+) − f(0−))` reads
///
/// `C (t sinh(−ta) + β cosh(ta)) = F_β(g)` with
/// `F_β(g) = t (h(a) cosh(ta) + h(0)) + β (g(0+)/λ + h(a) sinh(−ta) − h(0))`,
///
/// using `h'(0−) = −t h(0)`. For `α > 0` and `λ > 2α` the point coupling
/// is a perturbation of norm `2α/λ < 1` and is resolved by iterating the
/// `α = 0` solve; otherwise the two traces are eliminated directly.
pub fn circle_point_resolvent<G: Fn(f64) -> f64>(
    lambda: f64,
    g_lower: G,
    g_point: f64,
    p: &TransmissionParams,
    a: f64,
) -> Result<CirclePointResolvent<G>> {
    if !(lambda > 0.0 && lambda.is_finite()) {
        return param(format!("lambda must be > 0, got {lambda}"));
    }
    if !(a < 0.0) {
        return param(format!("need a = ln r < 0, got {a}"));
    }
    let (alpha, beta) = (p.alpha, p.beta);
    let t = (lambda / p.kappa).sqrt();
    let kernel = ExpKernel {
        s: t,
        lo: a,
        hi: 0.0,
        diffusivity: p.kappa,
    };
    let h_a = kernel.h(&g_lower, a);
    let h_0 = kernel.h(&g_lower, 0.0);
    let (ca, sa) = ((-t * a).cosh(), (-t * a).sinh());
    let tr = LowerTraces {
        c: ca,
        d: -h_a * sa + h_0,
        e: t * sa,
        q: -t * (h_a * ca + h_0),
    };
    // C for a prescribed point value `pt` with the α = 0 operator.
    let c_given_point = |pt: f64| (beta * pt - beta * tr.d - tr.q) / (tr.e + beta * tr.c);

    let (c, point, iterations) = if alpha == 0.0 {
        let pt = g_point / lambda;
        (c_given_point(pt), pt, 0)
    } else if lambda > 2.0 * alpha {
        let mut pt = g_point / lambda;
        let mut c = c_given_point(pt);
        let mut iters = 0;
        loop {
            iters += 1;
            let m = tr.c * c + tr.d;
            let next_pt = (g_point + alpha * (m - pt)) / lambda;
            let next_c = c_given_point(next_pt);
            let delta = (next_pt - pt).abs() + (next_c - c).abs() * tr.c;
            pt = next_pt;
            c = next_c;
            if delta <= 1e-14 * (1.0 + pt.abs()) || iters >= 10_000 {
                break;
            }
        }
        if iters >= 10_000 {
            return Err(Error::Internal(
                "perturbation series did not converge".into(),
            ));
        }
        (c, pt, iters)
    } else {
        // (λ+α) p − α c C = g0 + α d ;  (e + β c) C − β p = −q − β d
        let (a11, a12, b1) = (-alpha * tr.c, lambda + alpha, g_point + alpha * tr.d);
        let (a21, a22, b2) = (tr.e + beta * tr.c, -beta, -tr.q - beta * tr.d);
        let det = a11 * a22 - a12 * a21;
        if det == 0.0 {
            return Err(Error::Internal("singular circle+point system".into()));
        }
        ((b1 * a22 - a12 * b2) / det, (a11 * b2 - a21 * b1) / det, 0)
    };
    Ok(CirclePointResolvent {
        g: g_lower,
        a,
        t,
        kernel,
        c,
        h_a,
        point,
        iterations,
    })
}
