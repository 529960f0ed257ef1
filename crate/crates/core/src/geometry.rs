//! Parameters, scenarios, reference grids and the affine radial maps.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{mismatch, param, Error, Result};

/// Membrane permeabilities, diffusivity ratio and thickness/coupling ratio.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TransmissionParams {
    pub alpha: f64,
    pub beta: f64,
    pub kappa: f64,
    pub gamma: f64,
}

impl TransmissionParams {
    pub fn new(alpha: f64, beta: f64, kappa: f64, gamma: f64) -> Result<Self> {
        let p = Self {
            alpha,
            beta,
            kappa,
            gamma,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        let all = [self.alpha, self.beta, self.kappa, self.gamma];
        if all.iter().any(|v| !v.is_finite()) {
            return param("transmission parameters must be finite");
        }
        if self.alpha < 0.0 || self.beta < 0.0 {
            return param(format!(
                "alpha, beta must be >= 0 (got {}, {})",
                self.alpha, self.beta
            ));
        }
        if self.kappa <= 0.0 || self.gamma <= 0.0 {
            return param(format!(
                "kappa, gamma must be > 0 (got {}, {})",
                self.kappa, self.gamma
            ));
        }
        Ok(())
    }
}

impl Default for TransmissionParams {
    fn default() -> Self {
        Self {
            alpha: 1.0,
            beta: 1.0,
            kappa: 1.0,
            gamma: 1.0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ScenarioKind {
    /// Both annuli shrink onto the unit circle, thickness ratio gamma.
    #[serde(alias = "a", alias = "two-thin")]
    TwoThin,
    /// Only the upper annulus shrinks; the lower one keeps radius r.
    #[serde(alias = "b", alias = "thin-over-thick")]
    ThinOverThick,
    /// Upper annulus shrinks while diffusion in the lower one speeds up.
    #[serde(alias = "c", alias = "thin-over-fast")]
    ThinOverFast,
}

impl ScenarioKind {
    pub const ALL: [ScenarioKind; 3] = [Self::TwoThin, Self::ThinOverThick, Self::ThinOverFast];

    /// Single-letter tag used on the command line.
    pub fn letter(self) -> char {
        match self {
            Self::TwoThin => 'a',
            Self::ThinOverThick => 'b',
            Self::ThinOverFast => 'c',
        }
    }
}

impl FromStr for ScenarioKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "a" | "two-thin" | "TwoThin" => Ok(Self::TwoThin),
            "b" | "thin-over-thick" | "ThinOverThick" => Ok(Self::ThinOverThick),
            "c" | "thin-over-fast" | "ThinOverFast" => Ok(Self::ThinOverFast),
            _ => param(format!("unknown scenario '{s}' (expected a, b or c)")),
        }
    }
}

impl fmt::Display for ScenarioKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self:?}")
    }
}

/// A scenario together with its scale parameter.
///
/// `thickness` is `1 - r` for [`ScenarioKind::TwoThin`], `R - 1` for
/// [`ScenarioKind::ThinOverThick`] and the lower diffusivity `kappa` for
/// [`ScenarioKind::ThinOverFast`].
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    kind: ScenarioKind,
    thickness: f64,
    inner_radius: f64,
}

impl Scenario {
    pub fn two_thin(thickness: f64) -> Result<Self> {
        if !(thickness > 0.0 && thickness < 1.0) {
            return param(format!(
                "TwoThin thickness must lie in (0,1), got {thickness}"
            ));
        }
        Ok(Self {
            kind: ScenarioKind::TwoThin,
            thickness,
            inner_radius: 1.0 - thickness,
        })
    }

    pub fn thin_over_thick(r: f64, thickness: f64) -> Result<Self> {
        check_inner(r)?;
        if !(thickness > 0.0 && thickness.is_finite()) {
            return param(format!(
                "ThinOverThick thickness must be > 0, got {thickness}"
            ));
        }
        Ok(Self {
            kind: ScenarioKind::ThinOverThick,
            thickness,
            inner_radius: r,
        })
    }

    pub fn thin_over_fast(r: f64, kappa: f64) -> Result<Self> {
        check_inner(r)?;
        if !(kappa > 0.0 && kappa.is_finite()) {
            return param(format!("ThinOverFast kappa must be > 0, got {kappa}"));
        }
        Ok(Self {
            kind: ScenarioKind::ThinOverFast,
            thickness: kappa,
            inner_radius: r,
        })
    }

    /// Builds a scenario from the physical width of the shrinking upper
    /// layer (`1 - r` for TwoThin, `R - 1` otherwise). For ThinOverFast the
    /// diffusivity follows from `kappa (R-1)^2 = gamma`.
    pub fn from_layer_width(kind: ScenarioKind, width: f64, r: f64, gamma: f64) -> Result<Self> {
        match kind {
            ScenarioKind::TwoThin => Self::two_thin(width),
            ScenarioKind::ThinOverThick => Self::thin_over_thick(r, width),
            ScenarioKind::ThinOverFast => {
                if !(width > 0.0) {
                    return param(format!("layer width must be > 0, got {width}"));
                }
                Self::thin_over_fast(r, gamma / (width * width))
            }
        }
    }

    pub fn kind(&self) -> ScenarioKind {
        self.kind
    }

    pub fn thickness(&self) -> f64 {
        self.thickness
    }

    /// Physical inner radius r.
    pub fn inner_radius(&self) -> f64 {
        self.inner_radius
    }

    /// Physical outer radius R.
    pub fn outer_radius(&self, gamma: f64) -> f64 {
        1.0 + self.upper_scale(gamma)
    }

    /// Width of the shrinking layer, the inverse of [`Scenario::from_layer_width`].
    pub fn layer_width(&self, gamma: f64) -> f64 {
        match self.kind {
            ScenarioKind::TwoThin => self.thickness,
            _ => self.upper_scale(gamma),
        }
    }

    /// Left end l of the lower reference interval [l, 1].
    pub fn lower_left(&self) -> f64 {
        match self.kind {
            ScenarioKind::TwoThin => 0.0,
            _ => self.inner_radius,
        }
    }

    /// Lower-layer diffusivity actually used by the physical operator.
    pub fn effective_kappa(&self, p: &TransmissionParams) -> f64 {
        match self.kind {
            ScenarioKind::ThinOverFast => self.thickness,
            _ => p.kappa,
        }
    }

    /// dρ/dϱ on the upper layer.
    pub fn upper_scale(&self, gamma: f64) -> f64 {
        match self.kind {
            ScenarioKind::TwoThin => gamma * self.thickness,
            ScenarioKind::ThinOverThick => self.thickness,
            ScenarioKind::ThinOverFast => (gamma / self.thickness).sqrt(),
        }
    }

    /// dρ/dϱ on the lower layer.
    pub fn lower_scale(&self) -> f64 {
        match self.kind {
            ScenarioKind::TwoThin => self.thickness,
            _ => 1.0,
        }
    }
}

fn check_inner(r: f64) -> Result<()> {
    if !(r > 0.0 && r < 1.0) {
        return param(format!("inner radius r must lie in (0,1), got {r}"));
    }
    Ok(())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Lower,
    Upper,
}

impl Side {
    pub fn as_str(self) -> &'static str {
        match self {
            Side::Lower => "lower",
            Side::Upper => "upper",
        }
    }
}

impl FromStr for Side {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "lower" => Ok(Side::Lower),
            "upper" => Ok(Side::Upper),
            _ => Err(Error::Domain(format!("unknown side '{s}'"))),
        }
    }
}

/// Affine per-layer map between reference radius ϱ and physical radius ρ.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CoordinateMap {
    lower_left: f64,
    lower_offset: f64,
    lower_scale: f64,
    upper_scale: f64,
}

impl CoordinateMap {
    pub fn new(scenario: &Scenario, gamma: f64) -> Self {
        let lower_scale = scenario.lower_scale();
        let lower_offset = match scenario.kind() {
            ScenarioKind::TwoThin => scenario.inner_radius(),
            _ => 0.0,
        };
        Self {
            lower_left: scenario.lower_left(),
            lower_offset,
            lower_scale,
            upper_scale: scenario.upper_scale(gamma),
        }
    }

    pub fn scale(&self, side: Side) -> f64 {
        match side {
            Side::Lower => self.lower_scale,
            Side::Upper => self.upper_scale,
        }
    }

    /// ρ(ϱ); errors if ϱ lies outside the reference interval of `side`.
    pub fn to_physical(&self, side: Side, varrho: f64) -> Result<f64> {
        let (lo, hi) = self.reference_interval(side);
        let slack = 1e-12;
        if !(varrho >= lo - slack && varrho <= hi + slack) {
            return Err(Error::Domain(format!(
                "reference radius {varrho} outside [{lo}, {hi}] on the {} layer",
                side.as_str()
            )));
        }
        Ok(self.rho_unchecked(side, varrho))
    }

    /// ϱ(ρ), the inverse map.
    pub fn to_reference(&self, side: Side, rho: f64) -> f64 {
        match side {
            Side::Lower => (rho - self.lower_offset) / self.lower_scale,
            Side::Upper => 1.0 + (rho - 1.0) / self.upper_scale,
        }
    }

    pub(crate) fn rho_unchecked(&self, side: Side, varrho: f64) -> f64 {
        match side {
            Side::Lower => self.lower_offset + self.lower_scale * varrho,
            Side::Upper => 1.0 + self.upper_scale * (varrho - 1.0),
        }
    }

    pub fn reference_interval(&self, side: Side) -> (f64, f64) {
        match side {
            Side::Lower => (self.lower_left, 1.0),
            Side::Upper => (1.0, 2.0),
        }
    }
}

/// ρ(ϱ) for a scenario; `gamma` enters the TwoThin and ThinOverFast maps.
pub fn physical_radius(scenario: &Scenario, gamma: f64, side: Side, varrho: f64) -> Result<f64> {
    CoordinateMap::new(scenario, gamma).to_physical(side, varrho)
}

/// Uniform per-layer radial nodes on [l,1] and [1,2] and a periodic
/// angular grid. The membrane is two nodes: the last lower node (1−) and
/// the first upper node (1+).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReferenceGrid {
    pub kind: ScenarioKind,
    pub lower_left: f64,
    pub n_lower: usize,
    pub n_upper: usize,
    pub n_ang: usize,
}

pub fn build_reference_grid(
    scenario: &Scenario,
    n_lower: usize,
    n_upper: usize,
    n_ang: usize,
) -> Result<ReferenceGrid> {
    ReferenceGrid::new(
        scenario.kind(),
        scenario.lower_left(),
        n_lower,
        n_upper,
        n_ang,
    )
}

impl ReferenceGrid {
    pub fn new(
        kind: ScenarioKind,
        lower_left: f64,
        n_lower: usize,
        n_upper: usize,
        n_ang: usize,
    ) -> Result<Self> {
        if n_lower < 4 || n_upper < 4 {
            return param(format!(
                "need at least 4 radial points per layer (got {n_lower}, {n_upper})"
            ));
        }
        if n_ang < 4 || n_ang % 2 != 0 {
            return param(format!("angular count must be even and >= 4 (got {n_ang})"));
        }
        if !(0.0..1.0).contains(&lower_left) {
            return param(format!(
                "lower reference endpoint must lie in [0,1), got {lower_left}"
            ));
        }
        Ok(Self {
            kind,
            lower_left,
            n_lower,
            n_upper,
            n_ang,
        })
    }

    pub fn n_rows(&self) -> usize {
        self.n_lower + self.n_upper
    }

    pub fn len(&self) -> usize {
        self.n_rows() * self.n_ang
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn h(&self, side: Side) -> f64 {
        match side {
            Side::Lower => (1.0 - self.lower_left) / (self.n_lower - 1) as f64,
            Side::Upper => 1.0 / (self.n_upper - 1) as f64,
        }
    }

    pub fn h_phi(&self) -> f64 {
        2.0 * PI / self.n_ang as f64
    }

    pub fn n_side(&self, side: Side) -> usize {
        match side {
            Side::Lower => self.n_lower,
            Side::Upper => self.n_upper,
        }
    }

    /// Reference radius of node `i` on `side`; endpoints are exact.
    pub fn varrho(&self, side: Side, i: usize) -> f64 {
        let n = self.n_side(side);
        let (lo, hi) = match side {
            Side::Lower => (self.lower_left, 1.0),
            Side::Upper => (1.0, 2.0),
        };
        if i + 1 == n {
            hi
        } else {
            lo + (hi - lo) * i as f64 / (n - 1) as f64
        }
    }

    pub fn nodes(&self, side: Side) -> Vec<f64> {
        (0..self.n_side(side))
            .map(|i| self.varrho(side, i))
            .collect()
    }

    pub fn phi(&self, j: usize) -> f64 {
        2.0 * PI * j as f64 / self.n_ang as f64
    }

    /// Storage row of radial node `i` on `side` (lower block first).
    pub fn row(&self, side: Side, i: usize) -> usize {
        match side {
            Side::Lower => i,
            Side::Upper => self.n_lower + i,
        }
    }

    pub fn row_side(&self, row: usize) -> (Side, usize) {
        if row < self.n_lower {
            (Side::Lower, row)
        } else {
            (Side::Upper, row - self.n_lower)
        }
    }

    /// Reference radius of every storage row.
    pub fn row_varrho(&self) -> Vec<f64> {
        (0..self.n_rows())
            .map(|row| {
                let (s, i) = self.row_side(row);
                self.varrho(s, i)
            })
            .collect()
    }

    pub fn check_same(&self, other: &ReferenceGrid) -> Result<()> {
        if self != other {
            return mismatch(format!("grid mismatch: {self:?} vs {other:?}"));
        }
        Ok(())
    }

    pub fn check_scenario(&self, scenario: &Scenario) -> Result<()> {
        if self.kind != scenario.kind() || (self.lower_left - scenario.lower_left()).abs() > 1e-15 {
            return mismatch(format!(
                "grid built for {:?} on [{}, 1] does not match scenario {:?} on [{}, 1]",
                self.kind,
                self.lower_left,
                scenario.kind(),
                scenario.lower_left()
            ));
        }
        Ok(())
    }
}
