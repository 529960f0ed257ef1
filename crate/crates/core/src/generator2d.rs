//! Finite-difference generators on the reference rectangles.
//!
//! Every operator here has the form
//! `a2(ϱ) ∂ϱϱ + a1(ϱ) ∂ϱ + a0(ϱ) ∂φφ` per layer, with derivative
//! conditions at the four radial ends: Neumann at the outer ends and
//! `∂ϱu(1±) = τ± [u(1+) − u(1−)]` at the membrane. Radial derivatives use
//! centered three-point stencils; at an end node the ghost value outside the
//! layer is eliminated through the end condition, which keeps each row
//! conservative with nonnegative off-diagonals. The angular part is the
//! periodic second difference, so angular Fourier modes decouple exactly and
//! each mode is one tridiagonal system over the stacked radial nodes (the
//! two membrane nodes are adjacent in that ordering).

use crate::error::{param, Error, Result};
use crate::field::LayerField;
use crate::geometry::{
    CoordinateMap, ReferenceGrid, Scenario, ScenarioKind, Side, TransmissionParams,
};
use crate::linalg::Tridiagonal;
use crate::modes::{angular_symbol, ModalField, ModeTransform};
use crate::radial1d::{one_sided_left, one_sided_right, BcTolerance};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Flavor {
    /// The physical operator with unscaled permeabilities, pulled back to
    /// the reference rectangles.
    Physical,
    /// TwoThin rescaling; membrane slopes `(1−r)²αγ` and `(1−r)²β`.
    RescaledCr,
    /// ThinOverThick rescaling; membrane slopes `(R−1)²α` and `β`.
    RescaledCR,
    /// ThinOverFast rescaling; membrane slopes `αγ/κ` and `β/κ`.
    RescaledCKappa,
    /// The fast operator of the scenario (Neumann at all four ends).
    Fast,
}

impl Flavor {
    /// The rescaled flavor belonging to a scenario.
    pub fn rescaled_for(kind: ScenarioKind) -> Self {
        match kind {
            ScenarioKind::TwoThin => Flavor::RescaledCr,
            ScenarioKind::ThinOverThick => Flavor::RescaledCR,
            ScenarioKind::ThinOverFast => Flavor::RescaledCKappa,
        }
    }
}

/// One angular mode: the radial operator including `−σ_n a0` on the diagonal.
#[derive(Clone, Debug, PartialEq)]
pub struct ModeSystem {
    pub mode_n: usize,
    pub n_lower: usize,
    pub matrix: Tridiagonal,
}

impl ModeSystem {
    /// Entry of the 1− row on the 1+ unknown and of the 1+ row on the 1− unknown.
    pub fn membrane_coupling(&self) -> (f64, f64) {
        (
            self.matrix.sup[self.n_lower - 1],
            self.matrix.sub[self.n_lower],
        )
    }
}

/// Whether the apply step first checks the end conditions.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum ApplyMode {
    Strict(BcTolerance),
    Raw,
}

#[derive(Clone, Debug)]
pub struct DiscreteGenerator {
    pub scenario: Scenario,
    pub params: TransmissionParams,
    pub grid: ReferenceGrid,
    pub flavor: Flavor,
    a2: Vec<f64>,
    a1: Vec<f64>,
    a0: Vec<f64>,
    tau_lower: f64,
    tau_upper: f64,
    lower_active: bool,
    upper_active: bool,
    radial: Tridiagonal,
    sigma: Vec<f64>,
    mode_mats: Vec<Tridiagonal>,
    transform: ModeTransform,
}

/// Per-layer coefficient functions of ϱ (physical radius already applied).
pub(crate) struct LayerCoefficients<'a> {
    pub a2: &'a dyn Fn(Side, f64) -> f64,
    pub a1: &'a dyn Fn(Side, f64) -> f64,
    pub a0: &'a dyn Fn(Side, f64) -> f64,
}

pub fn assemble_generator(
    scenario: &Scenario,
    flavor: Flavor,
    params: &TransmissionParams,
    grid: &ReferenceGrid,
) -> Result<DiscreteGenerator> {
    params.validate()?;
    grid.check_scenario(scenario)?;
    let kind = scenario.kind();
    let ok = match flavor {
        Flavor::Physical => true,
        Flavor::RescaledCr => kind == ScenarioKind::TwoThin,
        Flavor::RescaledCR => kind == ScenarioKind::ThinOverThick,
        Flavor::RescaledCKappa => kind == ScenarioKind::ThinOverFast,
        Flavor::Fast => false,
    };
    if !ok {
        return param(format!(
            "flavor {flavor:?} is not defined for scenario {kind:?}"
        ));
    }
    let map = CoordinateMap::new(scenario, params.gamma);
    let kappa = scenario.effective_kappa(params);
    let theta = scenario.thickness();
    let (alpha, beta, gamma) = (params.alpha, params.beta, params.gamma);
    let (tau_lower, tau_upper) = match flavor {
        Flavor::Physical => (
            map.scale(Side::Lower) * beta,
            map.scale(Side::Upper) * alpha,
        ),
        Flavor::RescaledCr => (theta * theta * beta, theta * theta * alpha * gamma),
        Flavor::RescaledCR => (beta, theta * theta * alpha),
        Flavor::RescaledCKappa => (beta / theta, alpha * gamma / theta),
        Flavor::Fast => unreachable!(),
    };
    let k = |side: Side| if side == Side::Lower { kappa } else { 1.0 };
    let rho = |side: Side, v: f64| map.rho_unchecked(side, v);
    let a2 = |side: Side, _v: f64| k(side) / map.scale(side).powi(2);
    let a1 = |side: Side, v: f64| k(side) / (map.scale(side) * rho(side, v));
    let a0 = |side: Side, v: f64| k(side) / rho(side, v).powi(2);
    let coeffs = LayerCoefficients {
        a2: &a2,
        a1: &a1,
        a0: &a0,
    };
    Ok(DiscreteGenerator::from_coefficients(
        *scenario, *params, *grid, flavor, &coeffs, tau_lower, tau_upper,
    ))
}

impl DiscreteGenerator {
    pub(crate) fn from_coefficients(
        scenario: Scenario,
        params: TransmissionParams,
        grid: ReferenceGrid,
        flavor: Flavor,
        c: &LayerCoefficients<'_>,
        tau_lower: f64,
        tau_upper: f64,
    ) -> Self {
        let n = grid.n_rows();
        let (mut a2, mut a1, mut a0) = (vec![0.0; n], vec![0.0; n], vec![0.0; n]);
        for row in 0..n {
            let (side, i) = grid.row_side(row);
            let v = grid.varrho(side, i);
            a2[row] = (c.a2)(side, v);
            a1[row] = (c.a1)(side, v);
            a0[row] = (c.a0)(side, v);
        }
        let lower_active = a2[..grid.n_lower].iter().any(|&v| v != 0.0);
        let upper_active = a2[grid.n_lower..].iter().any(|&v| v != 0.0);
        let radial = radial_matrix(&grid, &a2, &a1, tau_lower, tau_upper);
        let sigma: Vec<f64> = (0..=grid.n_ang / 2)
            .map(|m| angular_symbol(grid.n_ang, m))
            .collect();
        let mode_mats = sigma
            .iter()
            .map(|s| {
                let mut m = radial.clone();
                for (d, a0) in m.diag.iter_mut().zip(&a0) {
                    *d -= s * a0;
                }
                m
            })
            .collect();
        Self {
            scenario,
            params,
            grid,
            flavor,
            a2,
            a1,
            a0,
            tau_lower,
            tau_upper,
            lower_active,
            upper_active,
            radial,
            sigma,
            mode_mats,
            transform: ModeTransform::new(grid.n_ang),
        }
    }

    /// Membrane slope coefficients `(τ−, τ+)` in
    /// `∂ϱu(1−) = τ−·jump`, `∂ϱu(1+) = τ+·jump`.
    pub fn transmission_coefficients(&self) -> (f64, f64) {
        (self.tau_lower, self.tau_upper)
    }

    /// Per-row coefficients `(a2, a1, a0)`.
    pub fn coefficients(&self) -> (&[f64], &[f64], &[f64]) {
        (&self.a2, &self.a1, &self.a0)
    }

    pub fn n_modes(&self) -> usize {
        self.sigma.len()
    }

    pub fn angular_symbol(&self, n: usize) -> f64 {
        self.sigma[n]
    }

    pub fn transform(&self) -> &ModeTransform {
        &self.transform
    }

    pub fn mode_matrix(&self, n: usize) -> &Tridiagonal {
        &self.mode_mats[n]
    }

    pub fn mode_system(&self, n: usize) -> ModeSystem {
        ModeSystem {
            mode_n: n,
            n_lower: self.grid.n_lower,
            matrix: self.mode_mats[n].clone(),
        }
    }

    pub fn modes(&self) -> Vec<ModeSystem> {
        (0..self.n_modes()).map(|n| self.mode_system(n)).collect()
    }

    /// One-sided residuals of the four end conditions, maximized over φ:
    /// `[lower end, 1−, 1+, upper end]`. Layers on which the operator
    /// vanishes impose no conditions and report zero.
    pub fn boundary_residuals(&self, u: &LayerField) -> Result<[f64; 4]> {
        self.grid.check_same(u.grid())?;
        let g = &self.grid;
        let (hl, hu) = (g.h(Side::Lower), g.h(Side::Upper));
        let (nl, nu) = (g.n_lower, g.n_upper);
        let mut out = [0.0f64; 4];
        for j in 0..g.n_ang {
            let l = |i: usize| u.get(Side::Lower, i, j);
            let up = |i: usize| u.get(Side::Upper, i, j);
            let jump = up(0) - l(nl - 1);
            let r = [
                one_sided_left(l(0), l(1), l(2), hl),
                one_sided_right(l(nl - 1), l(nl - 2), l(nl - 3), hl) - self.tau_lower * jump,
                one_sided_left(up(0), up(1), up(2), hu) - self.tau_upper * jump,
                one_sided_right(up(nu - 1), up(nu - 2), up(nu - 3), hu),
            ];
            let active = [
                self.lower_active,
                self.lower_active,
                self.upper_active,
                self.upper_active,
            ];
            for k in 0..4 {
                if active[k] {
                    out[k] = out[k].max(r[k].abs());
                }
            }
        }
        Ok(out)
    }

    /// Applies the operator node by node.
    pub fn apply(&self, u: &LayerField, mode: ApplyMode) -> Result<LayerField> {
        self.grid.check_same(u.grid())?;
        if let ApplyMode::Strict(tol) = mode {
            let res = self.boundary_residuals(u)?;
            let h = self.grid.h(Side::Lower).max(self.grid.h(Side::Upper));
            let allowed = tol.allowed(u.sup_norm(), h);
            if let Some((k, r)) = res.iter().enumerate().find(|(_, r)| **r > allowed) {
                let at = ["lower end", "1-", "1+", "upper end"][k];
                return Err(Error::Precondition(format!(
                    "end condition at {at} violated: residual {r:e} exceeds {allowed:e}"
                )));
            }
        }
        let g = &self.grid;
        let (n_rows, n_ang) = (g.n_rows(), g.n_ang);
        let hp2 = g.h_phi() * g.h_phi();
        let m = &self.radial;
        let v = u.values();
        let mut out = vec![0.0; v.len()];
        for row in 0..n_rows {
            for j in 0..n_ang {
                let k = row * n_ang + j;
                let mut s = m.diag[row] * v[k];
                if row > 0 {
                    s += m.sub[row] * v[k - n_ang];
                }
                if row + 1 < n_rows {
                    s += m.sup[row] * v[k + n_ang];
                }
                let jl = if j == 0 { n_ang - 1 } else { j - 1 };
                let jr = if j + 1 == n_ang { 0 } else { j + 1 };
                let base = row * n_ang;
                s += self.a0[row] * (v[base + jl] - 2.0 * v[k] + v[base + jr]) / hp2;
                out[k] = s;
            }
        }
        LayerField::from_values(*g, out)
    }

    /// Applies the operator mode by mode (used to check the decoupling).
    pub fn apply_modal(&self, u: &LayerField) -> Result<LayerField> {
        self.grid.check_same(u.grid())?;
        let n_rows = self.grid.n_rows();
        let mf = self.transform.forward(u.values(), n_rows);
        let mut out = ModalField::zeros(n_rows, self.grid.n_ang);
        for (n, m) in self.mode_mats.iter().enumerate() {
            m.apply(&mf.cos[n], &mut out.cos[n]);
            m.apply(&mf.sin[n], &mut out.sin[n]);
        }
        LayerField::from_values(self.grid, self.transform.inverse(&out))
    }

    /// Physical radius of each storage row.
    pub fn row_radii(&self) -> Vec<f64> {
        let map = CoordinateMap::new(&self.scenario, self.params.gamma);
        (0..self.grid.n_rows())
            .map(|row| {
                let (s, i) = self.grid.row_side(row);
                map.rho_unchecked(s, self.grid.varrho(s, i))
            })
            .collect()
    }
}

/// Mode-independent radial part with ghost-point end rows.
fn radial_matrix(
    grid: &ReferenceGrid,
    a2: &[f64],
    a1: &[f64],
    tau_lower: f64,
    tau_upper: f64,
) -> Tridiagonal {
    let n = grid.n_rows();
    let nl = grid.n_lower;
    let mut m = Tridiagonal::zeros(n);
    for (side, off, len) in [(Side::Lower, 0, nl), (Side::Upper, nl, grid.n_upper)] {
        let h = grid.h(side);
        let h2 = h * h;
        for i in 0..len {
            let row = off + i;
            let (c2, c1) = (a2[row], a1[row]);
            if i == 0 {
                m.diag[row] = -2.0 * c2 / h2;
                m.sup[row] = 2.0 * c2 / h2;
            } else if i + 1 == len {
                m.diag[row] = -2.0 * c2 / h2;
                m.sub[row] = 2.0 * c2 / h2;
            } else {
                m.sub[row] = c2 / h2 - c1 / (2.0 * h);
                m.diag[row] = -2.0 * c2 / h2;
                m.sup[row] = c2 / h2 + c1 / (2.0 * h);
            }
        }
    }
    // 1−: ghost right of the node carries slope τ−·jump; 1+: ghost left of it carries τ+·jump.
    let (hl, hu) = (grid.h(Side::Lower), grid.h(Side::Upper));
    let cl = (2.0 * a2[nl - 1] / hl + a1[nl - 1]) * tau_lower;
    m.diag[nl - 1] -= cl;
    m.sup[nl - 1] = cl;
    let cu = (2.0 * a2[nl] / hu - a1[nl]) * tau_upper;
    m.diag[nl] -= cu;
    m.sub[nl] = cu;
    m
}
