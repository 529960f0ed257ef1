//! Tridiagonal storage and the Thomas solve.

#[derive(Clone, Debug, PartialEq)]
pub struct Tridiagonal {
    /// `sub[i]` multiplies x[i-1] in row i (sub[0] unused).
    pub sub: Vec<f64>,
    pub diag: Vec<f64>,
    /// `sup[i]` multiplies x[i+1] in row i (last entry unused).
    pub sup: Vec<f64>,
}

impl Tridiagonal {
    pub fn zeros(n: usize) -> Self {
        Self {
            sub: vec![0.0; n],
            diag: vec![0.0; n],
            sup: vec![0.0; n],
        }
    }

    pub fn len(&self) -> usize {
        self.diag.len()
    }

    pub fn is_empty(&self) -> bool {
        self.diag.is_empty()
    }

    pub fn apply(&self, x: &[f64], y: &mut [f64]) {
        let n = self.len();
        for i in 0..n {
            let mut v = self.diag[i] * x[i];
            if i > 0 {
                v += self.sub[i] * x[i - 1];
            }
            if i + 1 < n {
                v += self.sup[i] * x[i + 1];
            }
            y[i] = v;
        }
    }

    /// Solves `(shift·I − W·L) x = rhs` with `W = diag(weights)` (identity
    /// when `None`). Returns `None` on a vanishing pivot.
    pub fn solve_shifted(
        &self,
        shift: f64,
        weights: Option<&[f64]>,
        rhs: &[f64],
    ) -> Option<Vec<f64>> {
        let f = self.factor_shifted(shift, weights)?;
        let mut x = rhs.to_vec();
        f.solve_in_place(&mut x);
        Some(x)
    }

    /// Thomas factorization of `shift·I − W·L`, reusable across right-hand sides.
    pub fn factor_shifted(&self, shift: f64, weights: Option<&[f64]>) -> Option<ShiftedFactor> {
        let n = self.len();
        let w = |i: usize| weights.map_or(1.0, |w| w[i]);
        let mut lower = vec![0.0; n];
        let mut upper = vec![0.0; n];
        let mut inv_pivot = vec![0.0; n];
        let mut prev_c = 0.0;
        for i in 0..n {
            let a = if i > 0 { -w(i) * self.sub[i] } else { 0.0 };
            let b = shift - w(i) * self.diag[i];
            let cc = if i + 1 < n { -w(i) * self.sup[i] } else { 0.0 };
            let m = b - a * prev_c;
            if m == 0.0 || !m.is_finite() {
                return None;
            }
            lower[i] = a;
            inv_pivot[i] = 1.0 / m;
            upper[i] = cc / m;
            prev_c = upper[i];
        }
        Some(ShiftedFactor {
            lower,
            upper,
            inv_pivot,
        })
    }
}

#[derive(Clone, Debug)]
pub struct ShiftedFactor {
    lower: Vec<f64>,
    upper: Vec<f64>,
    inv_pivot: Vec<f64>,
}

impl ShiftedFactor {
    pub fn solve_in_place(&self, x: &mut [f64]) {
        let n = x.len();
        let mut prev = 0.0;
        for i in 0..n {
            x[i] = (x[i] - self.lower[i] * prev) * self.inv_pivot[i];
            prev = x[i];
        }
        for i in (0..n.saturating_sub(1)).rev() {
            x[i] -= self.upper[i] * x[i + 1];
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn solves_small_system() {
        let t = Tridiagonal {
            sub: vec![0.0, 1.0, 1.0],
            diag: vec![-2.0, -2.0, -2.0],
            sup: vec![1.0, 1.0, 0.0],
        };
        let rhs = [1.0, 2.0, 3.0];
        let x = t.solve_shifted(1.0, None, &rhs).unwrap();
        let mut y = vec![0.0; 3];
        t.apply(&x, &mut y);
        for i in 0..3 {
            assert!((x[i] - y[i] - rhs[i]).abs() < 1e-14);
        }
    }

    #[test]
    fn weighted_rows() {
        let t = Tridiagonal {
            sub: vec![0.0, 1.0],
            diag: vec![-1.0, -1.0],
            sup: vec![1.0, 0.0],
        };
        let w = [2.0, 3.0];
        let rhs = [1.0, 1.0];
        let x = t.solve_shifted(1.0, Some(&w), &rhs).unwrap();
        let mut y = vec![0.0; 2];
        t.apply(&x, &mut y);
        for i in 0..2 {
            assert!((x[i] - w[i] * y[i] - rhs[i]).abs() < 1e-14);
        }
    }
}
