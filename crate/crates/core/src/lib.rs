//! Diffusion in two concentric annuli coupled across a membrane, the
//! thin-layer rescalings of that problem, and their limits.

pub mod error;
pub mod evolve;
pub mod field;
pub mod generator2d;
pub mod geometry;
pub mod harness;
pub mod limit;
mod linalg;
pub mod modes;
pub mod montecarlo;
mod quadrature;
pub mod radial1d;

pub use error::{Error, Result};
pub use field::LayerField;
pub use geometry::{
    build_reference_grid, physical_radius, CoordinateMap, ReferenceGrid, Scenario, ScenarioKind,
    Side, TransmissionParams,
};
pub use linalg::{ShiftedFactor, Tridiagonal};
