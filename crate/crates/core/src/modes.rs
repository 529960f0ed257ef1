//! Real angular DFT: cosine/sine coefficients per radial row.
//!
//! `u_j = a_0 + Σ_{n=1}^{N/2−1} (a_n cos nφ_j + b_n sin nφ_j) + a_{N/2} cos(N/2 φ_j)`.

use std::f64::consts::PI;
use std::sync::Arc;

use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::field::LayerField;
use crate::geometry::ReferenceGrid;

/// Coefficients indexed `[mode][row]`; `sin[0]` and `sin[N/2]` stay zero.
#[derive(Clone, Debug, PartialEq)]
pub struct ModalField {
    pub n_rows: usize,
    pub n_ang: usize,
    pub cos: Vec<Vec<f64>>,
    pub sin: Vec<Vec<f64>>,
}

impl ModalField {
    pub fn n_modes(&self) -> usize {
        self.n_ang / 2 + 1
    }

    pub fn zeros(n_rows: usize, n_ang: usize) -> Self {
        let m = n_ang / 2 + 1;
        Self {
            n_rows,
            n_ang,
            cos: vec![vec![0.0; n_rows]; m],
            sin: vec![vec![0.0; n_rows]; m],
        }
    }
}

#[derive(Clone)]
pub struct ModeTransform {
    n_ang: usize,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for ModeTransform {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "ModeTransform({})", self.n_ang)
    }
}

impl ModeTransform {
    pub fn new(n_ang: usize) -> Self {
        let mut planner = FftPlanner::new();
        Self {
            n_ang,
            forward: planner.plan_fft_forward(n_ang),
            inverse: planner.plan_fft_inverse(n_ang),
        }
    }

    pub fn n_ang(&self) -> usize {
        self.n_ang
    }

    /// Forward transform of `n_rows` consecutive rows of length `n_ang`.
    pub fn forward(&self, values: &[f64], n_rows: usize) -> ModalField {
        let n = self.n_ang;
        let half = n / 2;
        let mut out = ModalField::zeros(n_rows, n);
        let mut buf = vec![Complex64::new(0.0, 0.0); n];
        let nf = n as f64;
        for row in 0..n_rows {
            for (b, &v) in buf.iter_mut().zip(&values[row * n..(row + 1) * n]) {
                *b = Complex64::new(v, 0.0);
            }
            self.forward.process(&mut buf);
            out.cos[0][row] = buf[0].re / nf;
            for k in 1..half {
                out.cos[k][row] = 2.0 * buf[k].re / nf;
                out.sin[k][row] = -2.0 * buf[k].im / nf;
            }
            out.cos[half][row] = buf[half].re / nf;
        }
        out
    }

    pub fn inverse(&self, m: &ModalField) -> Vec<f64> {
        let n = self.n_ang;
        let half = n / 2;
        let nf = n as f64;
        let mut values = vec![0.0; m.n_rows * n];
        let mut buf = vec![Complex64::new(0.0, 0.0); n];
        for row in 0..m.n_rows {
            buf[0] = Complex64::new(m.cos[0][row] * nf, 0.0);
            for k in 1..half {
                let c = Complex64::new(m.cos[k][row], -m.sin[k][row]) * (nf / 2.0);
                buf[k] = c;
                buf[n - k] = c.conj();
            }
            buf[half] = Complex64::new(m.cos[half][row] * nf, 0.0);
            self.inverse.process(&mut buf);
            for (v, b) in values[row * n..(row + 1) * n].iter_mut().zip(&buf) {
                *v = b.re / nf;
            }
        }
        values
    }
}

pub fn mode_transform(u: &LayerField) -> ModalField {
    let g = u.grid();
    ModeTransform::new(g.n_ang).forward(u.values(), g.n_rows())
}

pub fn inverse_mode_transform(m: &ModalField, grid: ReferenceGrid) -> LayerField {
    let values = ModeTransform::new(grid.n_ang).inverse(m);
    LayerField::from_values(grid, values).expect("inverse transform preserves shape")
}

/// Eigenvalue magnitude of the periodic second difference on mode `n`:
/// `(4/h²) sin²(n h / 2)`, `h = 2π/N`.
pub fn angular_symbol(n_ang: usize, n: usize) -> f64 {
    let h = 2.0 * PI / n_ang as f64;
    let s = (0.5 * n as f64 * h).sin();
    4.0 * s * s / (h * h)
}
