//! Projections onto the slow states, corrector lifts, the fast operators
//! and the three limit generators.
//!
//! A [`LimitState`] is stored in the same row-major layout the solvers use:
//! one row per radial unknown, `n_ang` columns. TwoCircles uses rows
//! `[g⁻, g⁺]`, CircleAnnulus the lower block followed by `g⁺`, CirclePoint
//! `[k⁻, g⁺]` with the `k⁻` row constant.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{mismatch, param, Result};
use crate::field::LayerField;
use crate::generator2d::{
    assemble_generator, ApplyMode, DiscreteGenerator, Flavor, LayerCoefficients,
};
use crate::geometry::{
    build_reference_grid, ReferenceGrid, Scenario, ScenarioKind, Side, TransmissionParams,
};
use crate::linalg::Tridiagonal;
use crate::modes::{angular_symbol, ModalField, ModeTransform};
use crate::quadrature::trapezoid_weights;
use crate::radial1d::one_sided_right;

#[derive(Clone, Debug, PartialEq)]
pub enum LimitState {
    TwoCircles {
        g_plus: Vec<f64>,
        g_minus: Vec<f64>,
    },
    /// `u_minus` holds the lower block of a [`ReferenceGrid`], row-major.
    CircleAnnulus {
        g_plus: Vec<f64>,
        u_minus: Vec<f64>,
    },
    CirclePoint {
        g_plus: Vec<f64>,
        k_minus: f64,
    },
}

impl LimitState {
    pub fn kind(&self) -> ScenarioKind {
        match self {
            LimitState::TwoCircles { .. } => ScenarioKind::TwoThin,
            LimitState::CircleAnnulus { .. } => ScenarioKind::ThinOverThick,
            LimitState::CirclePoint { .. } => ScenarioKind::ThinOverFast,
        }
    }

    pub fn g_plus(&self) -> &[f64] {
        match self {
            LimitState::TwoCircles { g_plus, .. }
            | LimitState::CircleAnnulus { g_plus, .. }
            | LimitState::CirclePoint { g_plus, .. } => g_plus,
        }
    }

    pub fn constant(kind: ScenarioKind, grid: &ReferenceGrid, c: f64) -> Self {
        let n = grid.n_ang;
        match kind {
            ScenarioKind::TwoThin => LimitState::TwoCircles {
                g_plus: vec![c; n],
                g_minus: vec![c; n],
            },
            ScenarioKind::ThinOverThick => LimitState::CircleAnnulus {
                g_plus: vec![c; n],
                u_minus: vec![c; n * grid.n_lower],
            },
            ScenarioKind::ThinOverFast => LimitState::CirclePoint {
                g_plus: vec![c; n],
                k_minus: c,
            },
        }
    }

    /// Number of storage rows for a scenario kind on `grid`.
    pub fn n_rows(kind: ScenarioKind, grid: &ReferenceGrid) -> usize {
        match kind {
            ScenarioKind::ThinOverThick => grid.n_lower + 1,
            _ => 2,
        }
    }

    pub fn to_values(&self) -> Vec<f64> {
        match self {
            LimitState::TwoCircles { g_plus, g_minus } => [g_minus.as_slice(), g_plus].concat(),
            LimitState::CircleAnnulus { g_plus, u_minus } => [u_minus.as_slice(), g_plus].concat(),
            LimitState::CirclePoint { g_plus, k_minus } => {
                let mut v = vec![*k_minus; g_plus.len()];
                v.extend_from_slice(g_plus);
                v
            }
        }
    }

    /// Inverse of [`LimitState::to_values`]; the `k⁻` row is averaged.
    pub fn from_values(kind: ScenarioKind, grid: &ReferenceGrid, v: Vec<f64>) -> Result<Self> {
        let n = grid.n_ang;
        let rows = Self::n_rows(kind, grid);
        if v.len() != rows * n {
            return mismatch(format!(
                "expected {} values for {kind:?}, got {}",
                rows * n,
                v.len()
            ));
        }
        let split = (rows - 1) * n;
        let g_plus = v[split..].to_vec();
        Ok(match kind {
            ScenarioKind::TwoThin => LimitState::TwoCircles {
                g_plus,
                g_minus: v[..split].to_vec(),
            },
            ScenarioKind::ThinOverThick => {
                let mut u = v;
                u.truncate(split);
                LimitState::CircleAnnulus { g_plus, u_minus: u }
            }
            ScenarioKind::ThinOverFast => LimitState::CirclePoint {
                g_plus,
                k_minus: v[..n].iter().sum::<f64>() / n as f64,
            },
        })
    }

    pub fn max_abs_diff(&self, other: &LimitState) -> Result<f64> {
        if self.kind() != other.kind() {
            return mismatch("limit states of different scenarios");
        }
        let (a, b) = (self.to_values(), other.to_values());
        if a.len() != b.len() {
            return mismatch("limit states of different sizes");
        }
        Ok(a.iter()
            .zip(&b)
            .fold(0.0f64, |m, (x, y)| m.max((x - y).abs())))
    }

    pub fn sup_norm(&self) -> f64 {
        self.to_values().iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }
}

/// Per-angle trapezoid average over one layer's reference interval.
fn radial_average(u: &LayerField, side: Side) -> Vec<f64> {
    let g = u.grid();
    let n = g.n_side(side);
    let (lo, hi) = match side {
        Side::Lower => (g.lower_left, 1.0),
        Side::Upper => (1.0, 2.0),
    };
    let w = trapezoid_weights(n, g.h(side));
    let mut out = vec![0.0; g.n_ang];
    for (i, wi) in w.iter().enumerate() {
        for (o, v) in out.iter_mut().zip(u.row(g.row(side, i))) {
            *o += wi * v;
        }
    }
    out.iter_mut().for_each(|o| *o /= hi - lo);
    out
}

pub fn project(scenario: &Scenario, u: &LayerField) -> Result<LimitState> {
    let g = u.grid();
    g.check_scenario(scenario)?;
    let g_plus = radial_average(u, Side::Upper);
    Ok(match scenario.kind() {
        ScenarioKind::TwoThin => LimitState::TwoCircles {
            g_plus,
            g_minus: radial_average(u, Side::Lower),
        },
        ScenarioKind::ThinOverThick => LimitState::CircleAnnulus {
            g_plus,
            u_minus: u.values()[..g.n_lower * g.n_ang].to_vec(),
        },
        ScenarioKind::ThinOverFast => {
            let m = radial_average(u, Side::Lower);
            LimitState::CirclePoint {
                g_plus,
                k_minus: m.iter().sum::<f64>() / m.len() as f64,
            }
        }
    })
}

/// The slow state as a field: constant in ϱ on every radially averaged layer.
pub fn lift_limit_state(state: &LimitState, grid: &ReferenceGrid) -> Result<LayerField> {
    if LimitState::n_rows(state.kind(), grid) * grid.n_ang != state.to_values().len() {
        return mismatch("limit state does not fit the grid");
    }
    let n = grid.n_ang;
    let mut v = vec![0.0; grid.len()];
    let upper = state.g_plus();
    for i in 0..grid.n_upper {
        let row = grid.row(Side::Upper, i);
        v[row * n..(row + 1) * n].copy_from_slice(upper);
    }
    let lower_block = &mut v[..grid.n_lower * n];
    match state {
        LimitState::TwoCircles { g_minus, .. } => {
            for row in lower_block.chunks_mut(n) {
                row.copy_from_slice(g_minus);
            }
        }
        LimitState::CircleAnnulus { u_minus, .. } => lower_block.copy_from_slice(u_minus),
        LimitState::CirclePoint { k_minus, .. } => lower_block.fill(*k_minus),
    }
    LayerField::from_values(*grid, v)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
pub enum CorrectorVariant {
    /// Slopes exactly `−αγ` at 1+ and `−β` at 1− in every scenario.
    #[default]
    Consistent,
    /// The ThinOverFast lower profile carrying the extra factor `1 − r`,
    /// whose slope at 1− is `−β(1−r)`.
    PaperLiteral,
}

/// `A (2 − ϱ) sin πϱ` on [1, 2]: value 0 at both ends, slope `−A` at 1 and 0 at 2.
#[derive(Clone, Copy, Debug)]
struct UpperBump {
    amp: f64,
}

impl UpperBump {
    fn eval(&self, v: f64) -> [f64; 3] {
        let (s, c) = (PI * v).sin_cos();
        let a = self.amp / PI;
        [
            a * (2.0 - v) * s,
            a * (-s + PI * (2.0 - v) * c),
            a * (-2.0 * PI * c - PI * PI * (2.0 - v) * s),
        ]
    }
}

/// `B x sin(kx)`, `x = ϱ − left`.
#[derive(Clone, Copy, Debug)]
struct LowerBump {
    amp: f64,
    left: f64,
    k: f64,
}

impl LowerBump {
    fn eval(&self, v: f64) -> [f64; 3] {
        let x = v - self.left;
        let (s, c) = (self.k * x).sin_cos();
        let b = self.amp;
        [
            b * x * s,
            b * (s + self.k * x * c),
            b * (2.0 * self.k * c - self.k * self.k * x * s),
        ]
    }
}

/// Boundary-layer profile `−(1−ϱ) e^{−(1−ϱ)/ε} χ(ϱ)`: zero at 1, slope 1 at 1,
/// and a C³ cutoff χ that vanishes on the inner half of [r, 1].
#[derive(Clone, Copy, Debug)]
struct BoundaryLayer {
    eps: f64,
    cut_lo: f64,
    cut_hi: f64,
}

impl BoundaryLayer {
    fn new(r: f64, eps: f64) -> Self {
        Self {
            eps,
            cut_lo: r + 0.25 * (1.0 - r),
            cut_hi: r + 0.5 * (1.0 - r),
        }
    }

    fn cutoff(&self, v: f64) -> [f64; 3] {
        let w = self.cut_hi - self.cut_lo;
        let x = (v - self.cut_lo) / w;
        if x <= 0.0 {
            return [0.0, 0.0, 0.0];
        }
        if x >= 1.0 {
            return [1.0, 0.0, 0.0];
        }
        let y = 1.0 - x;
        [
            x.powi(4) * (35.0 - 84.0 * x + 70.0 * x * x - 20.0 * x.powi(3)),
            140.0 * x.powi(3) * y.powi(3) / w,
            420.0 * x * x * y * y * (1.0 - 2.0 * x) / (w * w),
        ]
    }

    fn eval(&self, v: f64) -> [f64; 3] {
        let y = 1.0 - v;
        let e = (-y / self.eps).exp();
        let p = [
            -y * e,
            e * (1.0 - y / self.eps),
            e / self.eps * (2.0 - y / self.eps),
        ];
        let c = self.cutoff(v);
        [
            p[0] * c[0],
            p[1] * c[0] + p[0] * c[1],
            p[2] * c[0] + 2.0 * p[1] * c[1] + p[0] * c[2],
        ]
    }
}

#[derive(Clone, Copy, Debug)]
enum LowerProfile {
    Bump(LowerBump),
    Layer(BoundaryLayer),
}

/// Analytic corrector of one scenario: value, slope and curvature per layer.
#[derive(Clone, Copy, Debug)]
pub struct Corrector {
    kind: ScenarioKind,
    upper: UpperBump,
    lower: LowerProfile,
}

impl Corrector {
    pub fn new(
        scenario: &Scenario,
        params: &TransmissionParams,
        variant: CorrectorVariant,
    ) -> Self {
        let (a, b, g) = (params.alpha, params.beta, params.gamma);
        let r = scenario.inner_radius();
        let kind = scenario.kind();
        let (upper, lower) = match kind {
            ScenarioKind::TwoThin => (
                UpperBump { amp: a * g },
                LowerProfile::Bump(LowerBump {
                    amp: b / PI,
                    left: 0.0,
                    k: PI,
                }),
            ),
            ScenarioKind::ThinOverThick => (
                UpperBump { amp: a },
                LowerProfile::Layer(BoundaryLayer::new(r, scenario.thickness().sqrt())),
            ),
            ScenarioKind::ThinOverFast => {
                let f = if variant == CorrectorVariant::PaperLiteral {
                    1.0 - r
                } else {
                    1.0
                };
                (
                    UpperBump { amp: a * g },
                    LowerProfile::Bump(LowerBump {
                        amp: f * b / PI,
                        left: r,
                        k: PI / (1.0 - r),
                    }),
                )
            }
        };
        Self { kind, upper, lower }
    }

    pub fn kind(&self) -> ScenarioKind {
        self.kind
    }

    /// `[ψ, ψ', ψ'']` at reference radius ϱ on `side`.
    pub fn eval(&self, side: Side, v: f64) -> [f64; 3] {
        match (side, &self.lower) {
            (Side::Upper, _) => self.upper.eval(v),
            (Side::Lower, LowerProfile::Bump(b)) => b.eval(v),
            (Side::Lower, LowerProfile::Layer(l)) => l.eval(v),
        }
    }
}

/// Samples of a [`Corrector`] on a grid.
#[derive(Clone, Debug, PartialEq)]
pub struct CorrectorProfile {
    pub kind: ScenarioKind,
    pub lower: Vec<[f64; 3]>,
    pub upper: Vec<[f64; 3]>,
}

pub fn build_corrector(
    scenario: &Scenario,
    params: &TransmissionParams,
    grid: &ReferenceGrid,
    variant: CorrectorVariant,
) -> Result<CorrectorProfile> {
    grid.check_scenario(scenario)?;
    let c = Corrector::new(scenario, params, variant);
    let sample = |side| grid.nodes(side).iter().map(|&v| c.eval(side, v)).collect();
    Ok(CorrectorProfile {
        kind: scenario.kind(),
        lower: sample(Side::Lower),
        upper: sample(Side::Upper),
    })
}

/// Multiplier of ψ in the lift: `(1−r)²`, `(R−1)²` or `κ⁻¹`.
pub fn fast_scale(scenario: &Scenario) -> f64 {
    match scenario.kind() {
        ScenarioKind::ThinOverFast => 1.0 / scenario.thickness(),
        _ => scenario.thickness().powi(2),
    }
}

/// Lifts `u` (an element of the fast operator's domain, or an extended
/// slow state) into the domain of the rescaled operator of `scenario`.
/// For ThinOverThick the lower slope at 1− is taken from `lower_slope`
/// when given, else from the one-sided difference of `u`.
pub fn corrector_lift(
    scenario: &Scenario,
    params: &TransmissionParams,
    u: &LayerField,
    variant: CorrectorVariant,
    lower_slope: Option<&[f64]>,
) -> Result<LayerField> {
    let g = *u.grid();
    g.check_scenario(scenario)?;
    let (nl, n) = (g.n_lower, g.n_ang);
    if let Some(s) = lower_slope {
        if s.len() != n {
            return mismatch("lower slope must have one value per angle");
        }
    }
    let c = Corrector::new(scenario, params, variant);
    let scale = fast_scale(scenario);
    let jump: Vec<f64> = (0..n)
        .map(|j| u.get(Side::Upper, 0, j) - u.get(Side::Lower, nl - 1, j))
        .collect();
    let mut out = u.clone();
    for i in 0..g.n_upper {
        let psi = c.eval(Side::Upper, g.varrho(Side::Upper, i))[0];
        for (o, jv) in out.row_mut(g.row(Side::Upper, i)).iter_mut().zip(&jump) {
            *o -= scale * psi * jv;
        }
    }
    if scenario.kind() == ScenarioKind::ThinOverThick {
        let h = g.h(Side::Lower);
        let amp: Vec<f64> = (0..n)
            .map(|j| {
                let s = match lower_slope {
                    Some(s) => s[j],
                    None => one_sided_right(
                        u.get(Side::Lower, nl - 1, j),
                        u.get(Side::Lower, nl - 2, j),
                        u.get(Side::Lower, nl - 3, j),
                        h,
                    ),
                };
                params.beta * jump[j] - s
            })
            .collect();
        for i in 0..nl {
            let z = c.eval(Side::Lower, g.varrho(Side::Lower, i))[0];
            for (o, a) in out.row_mut(i).iter_mut().zip(&amp) {
                *o += z * a;
            }
        }
    } else {
        for i in 0..nl {
            let psi = c.eval(Side::Lower, g.varrho(Side::Lower, i))[0];
            for (o, jv) in out.row_mut(i).iter_mut().zip(&jump) {
                *o -= scale * psi * jv;
            }
        }
    }
    Ok(out)
}

/// The fast operator with Neumann conditions at all four radial ends.
pub fn assemble_fast_operator(
    scenario: &Scenario,
    params: &TransmissionParams,
    grid: &ReferenceGrid,
) -> Result<DiscreteGenerator> {
    params.validate()?;
    grid.check_scenario(scenario)?;
    let (kappa, gamma) = (params.kappa, params.gamma);
    let kind = scenario.kind();
    let a2 = |side: Side, _v: f64| match (kind, side) {
        (ScenarioKind::TwoThin, Side::Upper) => 1.0 / (gamma * gamma),
        (ScenarioKind::TwoThin, Side::Lower) => kappa,
        (ScenarioKind::ThinOverThick, Side::Upper) => 1.0,
        (ScenarioKind::ThinOverThick, Side::Lower) => 0.0,
        (ScenarioKind::ThinOverFast, Side::Upper) => 1.0 / gamma,
        (ScenarioKind::ThinOverFast, Side::Lower) => 1.0,
    };
    let full = |side: Side| kind == ScenarioKind::ThinOverFast && side == Side::Lower;
    let a1 = |side: Side, v: f64| if full(side) { 1.0 / v } else { 0.0 };
    let a0 = |side: Side, v: f64| if full(side) { 1.0 / (v * v) } else { 0.0 };
    let coeffs = LayerCoefficients {
        a2: &a2,
        a1: &a1,
        a0: &a0,
    };
    Ok(DiscreteGenerator::from_coefficients(
        *scenario,
        *params,
        *grid,
        Flavor::Fast,
        &coeffs,
        0.0,
        0.0,
    ))
}

/// One row of a fast-scale residual table.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct KurtzRow {
    pub thickness: f64,
    pub residual: f64,
}

/// Grid resolution shared by every thickness of a sweep.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GridPolicy {
    pub n_lower: usize,
    pub n_upper: usize,
    pub n_ang: usize,
}

impl GridPolicy {
    pub fn build(&self, scenario: &Scenario) -> Result<ReferenceGrid> {
        build_reference_grid(scenario, self.n_lower, self.n_upper, self.n_ang)
    }
}

pub(crate) fn check_decreasing(seq: &[f64]) -> Result<()> {
    if seq.is_empty() {
        return param("thickness sequence is empty");
    }
    if seq.iter().any(|t| !(t.is_finite() && *t > 0.0)) {
        return param("thicknesses must be positive");
    }
    if seq.windows(2).any(|w| w[1] >= w[0]) {
        return param("thickness sequence must be strictly decreasing");
    }
    Ok(())
}

/// `‖scale(θ)·C_θ(lift_θ u) − Q u‖∞` for each layer width θ. `u` is given in
/// reference coordinates and must lie in the fast operator's domain.
pub fn kurtz_fast_residual(
    kind: ScenarioKind,
    params: &TransmissionParams,
    r: f64,
    policy: GridPolicy,
    u: &dyn Fn(Side, f64, f64) -> f64,
    widths: &[f64],
) -> Result<Vec<KurtzRow>> {
    check_decreasing(widths)?;
    let mut rows = Vec::with_capacity(widths.len());
    for &w in widths {
        let sc = Scenario::from_layer_width(kind, w, r, params.gamma)?;
        let grid = policy.build(&sc)?;
        let field = LayerField::from_fn(grid, u);
        let q = assemble_fast_operator(&sc, params, &grid)?;
        let qu = q.apply(&field, ApplyMode::Raw)?;
        let lifted = corrector_lift(&sc, params, &field, CorrectorVariant::Consistent, None)?;
        let gen = assemble_generator(&sc, Flavor::rescaled_for(kind), params, &grid)?;
        let mut cu = gen.apply(&lifted, ApplyMode::Raw)?;
        let s = fast_scale(&sc);
        cu.values_mut().iter_mut().for_each(|v| *v *= s);
        rows.push(KurtzRow {
            thickness: w,
            residual: cu.max_abs_diff(&qu)?,
        });
    }
    Ok(rows)
}

/// Rate of the lumped lower state in the CirclePoint limit.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
pub enum LumpedRate {
    /// `dk⁻/dt = γ⁻¹β (mean g⁺ − k⁻)`.
    Normalized,
    /// `dk⁻/dt = γ⁻¹β ∫₀^{2π} g⁺ − γ⁻¹β k⁻`; does not annihilate constants.
    PaperLiteral,
    /// `dk⁻/dt = 2β/(1−r²) (mean g⁺ − k⁻)`, the membrane flux divided by the
    /// area of the lower annulus. This is the rate the rescaled fast-layer
    /// solutions converge to.
    #[default]
    FluxMatched,
}

/// A limit generator, block-diagonal in the angular modes.
#[derive(Clone, Debug)]
pub struct LimitGenerator {
    pub kind: ScenarioKind,
    pub params: TransmissionParams,
    pub grid: ReferenceGrid,
    pub lumped: LumpedRate,
    n_rows: usize,
    mode_mats: Vec<Tridiagonal>,
    transform: ModeTransform,
}

pub fn assemble_limit_generator(
    scenario: &Scenario,
    params: &TransmissionParams,
    grid: &ReferenceGrid,
    lumped: LumpedRate,
) -> Result<LimitGenerator> {
    params.validate()?;
    grid.check_scenario(scenario)?;
    let (alpha, beta, kappa, gamma) = (params.alpha, params.beta, params.kappa, params.gamma);
    let kind = scenario.kind();
    let n_modes = grid.n_ang / 2 + 1;
    let sigma: Vec<f64> = (0..n_modes)
        .map(|n| angular_symbol(grid.n_ang, n))
        .collect();
    let mode_mats: Vec<Tridiagonal> = match kind {
        ScenarioKind::TwoThin => {
            let (a, b) = (alpha / gamma, kappa * beta);
            sigma
                .iter()
                .map(|s| Tridiagonal {
                    sub: vec![0.0, a],
                    diag: vec![-b - kappa * s, -a - s],
                    sup: vec![b, 0.0],
                })
                .collect()
        }
        ScenarioKind::ThinOverThick => {
            // Lower rows of the physical operator; its 1− row already couples
            // to the first upper node, which becomes g⁺.
            let phys = assemble_generator(scenario, Flavor::Physical, params, grid)?;
            let nl = grid.n_lower;
            (0..n_modes)
                .map(|n| {
                    let m = phys.mode_matrix(n);
                    let mut t = Tridiagonal {
                        sub: m.sub[..=nl].to_vec(),
                        diag: m.diag[..=nl].to_vec(),
                        sup: m.sup[..=nl].to_vec(),
                    };
                    t.sub[nl] = alpha;
                    t.diag[nl] = -alpha - sigma[n];
                    t.sup[nl] = 0.0;
                    t
                })
                .collect()
        }
        ScenarioKind::ThinOverFast => {
            let r = scenario.inner_radius();
            let (c_diag, c_sup) = match lumped {
                LumpedRate::Normalized => (beta / gamma, beta / gamma),
                LumpedRate::PaperLiteral => (beta / gamma, 2.0 * PI * beta / gamma),
                LumpedRate::FluxMatched => {
                    let c = 2.0 * beta / (1.0 - r * r);
                    (c, c)
                }
            };
            sigma
                .iter()
                .enumerate()
                .map(|(n, s)| {
                    if n == 0 {
                        Tridiagonal {
                            sub: vec![0.0, alpha],
                            diag: vec![-c_diag, -alpha],
                            sup: vec![c_sup, 0.0],
                        }
                    } else {
                        Tridiagonal {
                            sub: vec![0.0, 0.0],
                            diag: vec![0.0, -alpha - s],
                            sup: vec![0.0, 0.0],
                        }
                    }
                })
                .collect()
        }
    };
    Ok(LimitGenerator {
        kind,
        params: *params,
        grid: *grid,
        lumped,
        n_rows: LimitState::n_rows(kind, grid),
        mode_mats,
        transform: ModeTransform::new(grid.n_ang),
    })
}

impl LimitGenerator {
    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_modes(&self) -> usize {
        self.mode_mats.len()
    }

    pub fn mode_matrix(&self, n: usize) -> &Tridiagonal {
        &self.mode_mats[n]
    }

    pub fn transform(&self) -> &ModeTransform {
        &self.transform
    }

    pub fn check_state(&self, s: &LimitState) -> Result<()> {
        if s.kind() != self.kind || s.to_values().len() != self.n_rows * self.grid.n_ang {
            return mismatch(format!(
                "state does not match the {:?} limit generator",
                self.kind
            ));
        }
        Ok(())
    }

    pub fn apply(&self, s: &LimitState) -> Result<LimitState> {
        self.check_state(s)?;
        let mf = self.transform.forward(&s.to_values(), self.n_rows);
        let mut out = ModalField::zeros(self.n_rows, self.grid.n_ang);
        for (n, m) in self.mode_mats.iter().enumerate() {
            m.apply(&mf.cos[n], &mut out.cos[n]);
            m.apply(&mf.sin[n], &mut out.sin[n]);
        }
        LimitState::from_values(self.kind, &self.grid, self.transform.inverse(&out))
    }
}

/// Periodic second difference of a circle function.
pub fn circle_laplacian(g: &[f64]) -> Vec<f64> {
    let n = g.len();
    let h = 2.0 * PI / n as f64;
    (0..n)
        .map(|j| (g[(j + n - 1) % n] - 2.0 * g[j] + g[(j + 1) % n]) / (h * h))
        .collect()
}

/// The slow operator applied to an element of the slow space, returned as
/// a field: the target of `C_θ(lift_θ u)` as the layer shrinks.
pub fn slow_operator(
    scenario: &Scenario,
    params: &TransmissionParams,
    grid: &ReferenceGrid,
    s: &LimitState,
) -> Result<LayerField> {
    grid.check_scenario(scenario)?;
    if s.kind() != scenario.kind() {
        return mismatch("limit state belongs to another scenario");
    }
    let c = Corrector::new(scenario, params, CorrectorVariant::Consistent);
    let (n, nl) = (grid.n_ang, grid.n_lower);
    let g_plus = s.g_plus();
    let lap_plus = circle_laplacian(g_plus);
    let (kappa, gamma) = (params.kappa, params.gamma);
    let mut out = LayerField::zeros(*grid);
    let (jump, upper_w): (Vec<f64>, f64) = match s {
        LimitState::TwoCircles { g_minus, .. } => (
            g_plus.iter().zip(g_minus).map(|(p, m)| p - m).collect(),
            1.0 / (gamma * gamma),
        ),
        LimitState::CircleAnnulus { u_minus, .. } => (
            g_plus
                .iter()
                .zip(&u_minus[(nl - 1) * n..])
                .map(|(p, m)| p - m)
                .collect(),
            1.0,
        ),
        LimitState::CirclePoint { k_minus, .. } => {
            (g_plus.iter().map(|p| p - k_minus).collect(), 1.0 / gamma)
        }
    };
    for i in 0..grid.n_upper {
        let d2 = c.eval(Side::Upper, grid.varrho(Side::Upper, i))[2];
        for (j, o) in out.row_mut(grid.row(Side::Upper, i)).iter_mut().enumerate() {
            *o = lap_plus[j] - upper_w * d2 * jump[j];
        }
    }
    match s {
        LimitState::TwoCircles { g_minus, .. } => {
            let lap = circle_laplacian(g_minus);
            for i in 0..nl {
                let d2 = c.eval(Side::Lower, grid.varrho(Side::Lower, i))[2];
                for (j, o) in out.row_mut(i).iter_mut().enumerate() {
                    *o = kappa * (lap[j] - d2 * jump[j]);
                }
            }
        }
        LimitState::CircleAnnulus { .. } => {
            let lg = assemble_limit_generator(scenario, params, grid, LumpedRate::Normalized)?;
            let v = lg.apply(s)?.to_values();
            out.values_mut()[..nl * n].copy_from_slice(&v[..nl * n]);
        }
        LimitState::CirclePoint { .. } => {
            // the fast lower layer keeps its full polar operator on the corrector
            let lap_jump = circle_laplacian(&jump);
            for i in 0..nl {
                let rho = grid.varrho(Side::Lower, i);
                let [psi, d1, d2] = c.eval(Side::Lower, rho);
                for (j, o) in out.row_mut(i).iter_mut().enumerate() {
                    *o = -(d2 + d1 / rho) * jump[j] - psi * lap_jump[j] / (rho * rho);
                }
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn p() -> TransmissionParams {
        TransmissionParams::new(1.3, 0.7, 1.8, 1.4).unwrap()
    }

    fn scenarios() -> Vec<Scenario> {
        vec![
            Scenario::two_thin(0.1).unwrap(),
            Scenario::thin_over_thick(0.5, 0.1).unwrap(),
            Scenario::thin_over_fast(0.5, 100.0).unwrap(),
        ]
    }

    fn grid(s: &Scenario) -> ReferenceGrid {
        build_reference_grid(s, 33, 33, 16).unwrap()
    }

    #[test]
    fn constants_project_to_constants() {
        for s in scenarios() {
            let g = grid(&s);
            let st = project(&s, &LayerField::constant(g, 1.0)).unwrap();
            assert!(
                st.max_abs_diff(&LimitState::constant(s.kind(), &g, 1.0))
                    .unwrap()
                    < 1e-14
            );
        }
    }

    #[test]
    fn upper_linear_profile_averages_to_midpoint() {
        let s = Scenario::two_thin(0.2).unwrap();
        let g = grid(&s);
        let u = LayerField::from_fn(g, |side, v, _| if side == Side::Upper { v } else { 0.0 });
        match project(&s, &u).unwrap() {
            LimitState::TwoCircles { g_plus, g_minus } => {
                assert!(g_plus.iter().all(|v| (v - 1.5).abs() < 1e-14));
                assert!(g_minus.iter().all(|v| *v == 0.0));
            }
            _ => panic!("wrong kind"),
        }
    }

    #[test]
    fn circle_point_uses_flat_lower_average() {
        let s = Scenario::thin_over_fast(0.5, 10.0).unwrap();
        let g = grid(&s);
        let u = LayerField::from_fn(g, |side, v, phi| {
            if side == Side::Lower {
                v + phi.cos()
            } else {
                0.0
            }
        });
        match project(&s, &u).unwrap() {
            LimitState::CirclePoint { k_minus, .. } => assert!((k_minus - 0.75).abs() < 1e-14),
            _ => panic!("wrong kind"),
        }
    }

    #[test]
    fn project_rejects_foreign_grid() {
        let s = Scenario::two_thin(0.2).unwrap();
        let g = grid(&Scenario::thin_over_thick(0.5, 0.2).unwrap());
        assert!(matches!(
            project(&s, &LayerField::zeros(g)),
            Err(crate::Error::Mismatch(_))
        ));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]
        #[test]
        fn projection_is_idempotent(k in 0usize..3, seed in any::<u64>()) {
            use rand::{Rng, SeedableRng};
            let s = scenarios()[k];
            let g = build_reference_grid(&s, 9, 7, 8).unwrap();
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let v: Vec<f64> = (0..g.len()).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let u = LayerField::from_values(g, v).unwrap();
            let once = project(&s, &u).unwrap();
            let twice = project(&s, &lift_limit_state(&once, &g).unwrap()).unwrap();
            prop_assert!(once.max_abs_diff(&twice).unwrap() <= 1e-12);
        }
    }

    #[test]
    fn two_thin_corrector_identities() {
        for (a, b, g) in [(1.0, 1.0, 1.0), (0.3, 2.0, 0.5), (2.5, 0.1, 2.0)] {
            let pp = TransmissionParams::new(a, b, 1.0, g).unwrap();
            let c = Corrector::new(
                &Scenario::two_thin(0.1).unwrap(),
                &pp,
                CorrectorVariant::Consistent,
            );
            let lo0 = c.eval(Side::Lower, 0.0);
            let lo1 = c.eval(Side::Lower, 1.0);
            let up1 = c.eval(Side::Upper, 1.0);
            let up2 = c.eval(Side::Upper, 2.0);
            assert!(lo0[1].abs() < 1e-12 && lo1[0].abs() < 1e-12);
            assert!(up1[0].abs() < 1e-12 && up2[1].abs() < 1e-12);
            assert!((up1[1] + a * g).abs() < 1e-12);
            assert!((lo1[1] + b).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_alpha_kills_upper_corrector() {
        let pp = TransmissionParams::new(0.0, 1.0, 1.0, 1.0).unwrap();
        let s = Scenario::two_thin(0.1).unwrap();
        let prof = build_corrector(&s, &pp, &grid(&s), CorrectorVariant::Consistent).unwrap();
        assert!(prof.upper.iter().all(|d| d.iter().all(|v| *v == 0.0)));
    }

    #[test]
    fn thin_over_fast_paper_profile_slope() {
        let (r, beta) = (0.4, 1.7);
        let pp = TransmissionParams::new(1.0, beta, 1.0, 1.0).unwrap();
        let s = Scenario::thin_over_fast(r, 50.0).unwrap();
        let lit = Corrector::new(&s, &pp, CorrectorVariant::PaperLiteral);
        let fixed = Corrector::new(&s, &pp, CorrectorVariant::Consistent);
        assert!((lit.eval(Side::Lower, 1.0)[1] + beta * (1.0 - r)).abs() < 1e-12);
        assert!((fixed.eval(Side::Lower, 1.0)[1] + beta).abs() < 1e-12);
        assert!(fixed.eval(Side::Lower, r)[1].abs() < 1e-12);
    }

    #[test]
    fn boundary_layer_profile() {
        let pp = p();
        let s = Scenario::thin_over_thick(0.5, 0.04).unwrap();
        let c = Corrector::new(&s, &pp, CorrectorVariant::Consistent);
        let at1 = c.eval(Side::Lower, 1.0);
        assert!(at1[0].abs() < 1e-15 && (at1[1] - 1.0).abs() < 1e-15);
        assert_eq!(c.eval(Side::Lower, 0.5), [0.0, 0.0, 0.0]);
        // sup |ζ| = ε/e is attained at distance ε from the membrane
        let peak = c.eval(Side::Lower, 0.8)[0].abs();
        assert!((peak - 0.2 / std::f64::consts::E).abs() < 1e-12);
        // derivatives against central differences
        for v in [0.6, 0.65, 0.7, 0.9, 0.99] {
            let h = 1e-5;
            let d = c.eval(Side::Lower, v);
            let fd1 = (c.eval(Side::Lower, v + h)[0] - c.eval(Side::Lower, v - h)[0]) / (2.0 * h);
            let fd2 = (c.eval(Side::Lower, v + h)[1] - c.eval(Side::Lower, v - h)[1]) / (2.0 * h);
            assert!(
                (d[1] - fd1).abs() < 1e-6 && (d[2] - fd2).abs() < 1e-4,
                "{v}"
            );
        }
    }

    #[test]
    fn two_thin_lift() {
        let s = Scenario::two_thin(0.1).unwrap();
        let pp = p();
        let g = grid(&s);
        let ext = lift_limit_state(
            &LimitState::TwoCircles {
                g_plus: vec![0.3; 16],
                g_minus: vec![0.3; 16],
            },
            &g,
        )
        .unwrap();
        let l = corrector_lift(&s, &pp, &ext, CorrectorVariant::Consistent, None).unwrap();
        assert_eq!(l, ext);

        let st = LimitState::TwoCircles {
            g_plus: vec![1.0; 16],
            g_minus: vec![0.0; 16],
        };
        let ext = lift_limit_state(&st, &g).unwrap();
        let l = corrector_lift(&s, &pp, &ext, CorrectorVariant::Consistent, None).unwrap();
        let c = Corrector::new(&s, &pp, CorrectorVariant::Consistent);
        for side in [Side::Lower, Side::Upper] {
            for i in 0..g.n_side(side) {
                let v = g.varrho(side, i);
                let want = ext.get(side, i, 3) - 0.01 * c.eval(side, v)[0];
                assert!((l.get(side, i, 3) - want).abs() < 1e-15);
            }
        }
        // slopes of the lifted profile at the membrane: −θ²ψ'(1±)·jump
        let gen = assemble_generator(&s, Flavor::RescaledCr, &pp, &g).unwrap();
        let (tl, tu) = gen.transmission_coefficients();
        let jump = 1.0;
        assert!((-0.01 * c.eval(Side::Upper, 1.0)[1] * jump - tu * jump).abs() < 1e-12);
        assert!((-0.01 * c.eval(Side::Lower, 1.0)[1] * jump - tl * jump).abs() < 1e-12);
        // and the discrete one-sided rows agree to O(h²)
        let res = gen.boundary_residuals(&l).unwrap();
        let h = g.h(Side::Upper);
        assert!(res.iter().all(|r| *r < 0.5 * h * h), "{res:?}");
    }

    #[test]
    fn thin_over_fast_lift_of_balanced_field_is_identity() {
        let s = Scenario::thin_over_fast(0.5, 40.0).unwrap();
        let g = grid(&s);
        let u = LayerField::from_fn(g, |side, v, phi| match side {
            Side::Upper => phi.cos(),
            Side::Lower => phi.cos() * (1.0 + (v - 1.0).powi(3)),
        });
        let l = corrector_lift(&s, &p(), &u, CorrectorVariant::Consistent, None).unwrap();
        assert!(l.max_abs_diff(&u).unwrap() < 1e-15);
    }

    #[test]
    fn thin_over_thick_lift_slopes() {
        let pp = p();
        let s = Scenario::thin_over_thick(0.5, 0.09).unwrap();
        let g = build_reference_grid(&s, 201, 33, 8).unwrap();
        let u = LayerField::from_fn(g, |side, v, phi| match side {
            Side::Upper => 1.0 + phi.sin(),
            Side::Lower => (v - 0.5).powi(2),
        });
        let slope = vec![1.0; g.n_ang];
        let l = corrector_lift(&s, &pp, &u, CorrectorVariant::Consistent, Some(&slope)).unwrap();
        let gen = assemble_generator(&s, Flavor::RescaledCR, &pp, &g).unwrap();
        let res = gen.boundary_residuals(&l).unwrap();
        // boundary layer width 0.3 resolved by 60 cells
        assert!(res.iter().all(|r| *r < 5e-3), "{res:?}");
        let n = g.n_lower;
        for j in 0..g.n_ang {
            assert!((l.get(Side::Lower, n - 1, j) - 0.25).abs() < 1e-15);
        }
    }

    #[test]
    fn fast_operators() {
        let pp = TransmissionParams::new(1.0, 1.0, 1.7, 1.0).unwrap();
        for s in scenarios() {
            let g = grid(&s);
            let q = assemble_fast_operator(&s, &pp, &g).unwrap();
            let out = q
                .apply(&LayerField::constant(g, 2.0), ApplyMode::Raw)
                .unwrap();
            assert!(out.sup_norm() < 1e-10);
        }
        let s = Scenario::two_thin(0.1).unwrap();
        let mut errs = Vec::new();
        for n in [33, 65] {
            let g = build_reference_grid(&s, n, n, 8).unwrap();
            let q = assemble_fast_operator(&s, &pp, &g).unwrap();
            let u = LayerField::from_fn(g, |side, v, _| {
                if side == Side::Lower {
                    (PI * v).cos()
                } else {
                    0.0
                }
            });
            let out = q.apply(&u, ApplyMode::Strict(Default::default())).unwrap();
            let mut e = 0.0f64;
            for i in 1..n - 1 {
                let v = g.varrho(Side::Lower, i);
                e = e.max((out.get(Side::Lower, i, 0) + 1.7 * PI * PI * (PI * v).cos()).abs());
            }
            errs.push(e);
        }
        assert!(
            errs[0] / errs[1] > 3.9 && errs[0] / errs[1] < 4.1,
            "{errs:?}"
        );

        let s = Scenario::thin_over_thick(0.5, 0.1).unwrap();
        let g = grid(&s);
        let q = assemble_fast_operator(&s, &pp, &g).unwrap();
        let u = LayerField::from_fn(g, |side, v, phi| {
            if side == Side::Lower {
                v.exp() * phi.cos()
            } else {
                0.0
            }
        });
        assert_eq!(q.apply(&u, ApplyMode::Raw).unwrap().sup_norm(), 0.0);
    }

    #[test]
    fn kurtz_constant_residual_vanishes() {
        let pol = GridPolicy {
            n_lower: 17,
            n_upper: 17,
            n_ang: 8,
        };
        for kind in ScenarioKind::ALL {
            let rows =
                kurtz_fast_residual(kind, &p(), 0.5, pol, &|_, _, _| 1.0, &[0.1, 0.05]).unwrap();
            assert!(rows.iter().all(|r| r.residual <= 1e-10));
        }
        assert!(kurtz_fast_residual(
            ScenarioKind::TwoThin,
            &p(),
            0.5,
            pol,
            &|_, _, _| 1.0,
            &[0.1, 0.1]
        )
        .is_err());
    }

    #[test]
    fn limit_generators_annihilate_constants() {
        for s in scenarios() {
            let g = grid(&s);
            for lr in [LumpedRate::Normalized, LumpedRate::FluxMatched] {
                let lg = assemble_limit_generator(&s, &p(), &g, lr).unwrap();
                let out = lg.apply(&LimitState::constant(s.kind(), &g, 1.0)).unwrap();
                assert!(out.sup_norm() <= 1e-10, "{:?}", s.kind());
            }
        }
        let s = scenarios()[2];
        let g = grid(&s);
        let lg = assemble_limit_generator(&s, &p(), &g, LumpedRate::PaperLiteral).unwrap();
        let out = lg.apply(&LimitState::constant(s.kind(), &g, 1.0)).unwrap();
        assert!(out.sup_norm() > 1.0);
    }

    #[test]
    fn two_circles_uniform_reduces_to_two_state_matrix() {
        let pp = p();
        let s = scenarios()[0];
        let g = grid(&s);
        let lg = assemble_limit_generator(&s, &pp, &g, LumpedRate::Normalized).unwrap();
        let st = LimitState::TwoCircles {
            g_plus: vec![0.9; 16],
            g_minus: vec![-0.4; 16],
        };
        let (a, b) = (pp.alpha / pp.gamma, pp.kappa * pp.beta);
        match lg.apply(&st).unwrap() {
            LimitState::TwoCircles { g_plus, g_minus } => {
                assert!(g_plus
                    .iter()
                    .all(|v| (v - (-a * 0.9 + a * -0.4)).abs() < 1e-12));
                assert!(g_minus
                    .iter()
                    .all(|v| (v - (b * 0.9 - b * -0.4)).abs() < 1e-12));
            }
            _ => panic!(),
        }
    }

    #[test]
    fn circle_point_higher_modes_decouple() {
        let pp = p();
        let s = scenarios()[2];
        let g = grid(&s);
        let lg = assemble_limit_generator(&s, &pp, &g, LumpedRate::Normalized).unwrap();
        let gp: Vec<f64> = (0..16).map(|j| (3.0 * g.phi(j)).cos()).collect();
        let out = lg
            .apply(&LimitState::CirclePoint {
                g_plus: gp.clone(),
                k_minus: 0.0,
            })
            .unwrap();
        let rate = -(angular_symbol(16, 3) + pp.alpha);
        match out {
            LimitState::CirclePoint { g_plus, k_minus } => {
                assert!(k_minus.abs() < 1e-12);
                for (o, v) in g_plus.iter().zip(&gp) {
                    assert!((o - rate * v).abs() < 1e-12);
                }
            }
            _ => panic!(),
        }
    }

    #[test]
    fn circle_annulus_one_way_coupling() {
        let pp = TransmissionParams::new(1.2, 0.0, 1.5, 1.0).unwrap();
        let s = scenarios()[1];
        let g = grid(&s);
        let lg = assemble_limit_generator(&s, &pp, &g, LumpedRate::Normalized).unwrap();
        let u_minus: Vec<f64> = (0..g.n_lower * 16)
            .map(|k| (k as f64 * 0.37).sin())
            .collect();
        let a = LimitState::CircleAnnulus {
            g_plus: vec![0.0; 16],
            u_minus: u_minus.clone(),
        };
        let b = LimitState::CircleAnnulus {
            g_plus: vec![5.0; 16],
            u_minus,
        };
        let (va, vb) = (
            lg.apply(&a).unwrap().to_values(),
            lg.apply(&b).unwrap().to_values(),
        );
        let nl = g.n_lower * 16;
        assert!(va[..nl]
            .iter()
            .zip(&vb[..nl])
            .all(|(x, y)| (x - y).abs() < 1e-12));
        assert!(va[nl..]
            .iter()
            .zip(&vb[nl..])
            .any(|(x, y)| (x - y).abs() > 1.0));
    }

    #[test]
    fn slow_operator_projects_to_limit_generator() {
        // project of the slow operator against the two-circle matrix form
        let pp = p();
        let s = Scenario::two_thin(0.1).unwrap();
        let mut errs = Vec::new();
        for n in [33, 65] {
            let g = build_reference_grid(&s, n, n, 32).unwrap();
            let gp: Vec<f64> = (0..32).map(|j| 1.0 + g.phi(j).cos()).collect();
            let gm: Vec<f64> = (0..32).map(|j| (2.0 * g.phi(j)).sin()).collect();
            let st = LimitState::TwoCircles {
                g_plus: gp,
                g_minus: gm,
            };
            let lg = assemble_limit_generator(&s, &pp, &g, LumpedRate::Normalized).unwrap();
            let want = lg.apply(&st).unwrap();
            let got = project(&s, &slow_operator(&s, &pp, &g, &st).unwrap()).unwrap();
            errs.push(got.max_abs_diff(&want).unwrap());
        }
        assert!(errs[1] < 1e-3 && errs[0] / errs[1] > 3.8, "{errs:?}");
    }
}
