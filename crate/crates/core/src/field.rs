//! Scalar fields on a [`ReferenceGrid`] and their CSV form.

use std::io::{Read, Write};

use crate::error::{Error, Result};
use crate::geometry::{ReferenceGrid, Side};

/// Values on the grid, row-major: row = radial node (lower block first),
/// column = angular index.
#[derive(Clone, Debug, PartialEq)]
pub struct LayerField {
    grid: ReferenceGrid,
    values: Vec<f64>,
}

impl LayerField {
    pub fn zeros(grid: ReferenceGrid) -> Self {
        Self {
            values: vec![0.0; grid.len()],
            grid,
        }
    }

    pub fn constant(grid: ReferenceGrid, c: f64) -> Self {
        Self {
            values: vec![c; grid.len()],
            grid,
        }
    }

    pub fn from_values(grid: ReferenceGrid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::Mismatch(format!(
                "field has {} values, grid needs {}",
                values.len(),
                grid.len()
            )));
        }
        if let Some(v) = values.iter().find(|v| !v.is_finite()) {
            return Err(Error::Domain(format!("non-finite field value {v}")));
        }
        Ok(Self { grid, values })
    }

    /// Samples `f(side, varrho, phi)` at every node.
    pub fn from_fn(grid: ReferenceGrid, f: impl Fn(Side, f64, f64) -> f64) -> Self {
        let mut values = Vec::with_capacity(grid.len());
        for row in 0..grid.n_rows() {
            let (side, i) = grid.row_side(row);
            let r = grid.varrho(side, i);
            for j in 0..grid.n_ang {
                values.push(f(side, r, grid.phi(j)));
            }
        }
        Self { grid, values }
    }

    pub fn grid(&self) -> &ReferenceGrid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn get(&self, side: Side, i: usize, j: usize) -> f64 {
        self.values[self.grid.row(side, i) * self.grid.n_ang + j]
    }

    pub fn set(&mut self, side: Side, i: usize, j: usize, v: f64) {
        let k = self.grid.row(side, i) * self.grid.n_ang + j;
        self.values[k] = v;
    }

    pub fn row(&self, row: usize) -> &[f64] {
        let n = self.grid.n_ang;
        &self.values[row * n..(row + 1) * n]
    }

    pub fn row_mut(&mut self, row: usize) -> &mut [f64] {
        let n = self.grid.n_ang;
        &mut self.values[row * n..(row + 1) * n]
    }

    pub fn sup_norm(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn min_value(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max_abs_diff(&self, other: &LayerField) -> Result<f64> {
        self.grid.check_same(&other.grid)?;
        Ok(self
            .values
            .iter()
            .zip(&other.values)
            .fold(0.0, |m, (a, b)| m.max((a - b).abs())))
    }

    /// Writes `varrho,phi,side,value` rows, lower block first, radial-major,
    /// with 17 significant digits.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        wr.write_record(["varrho", "phi", "side", "value"])?;
        for row in 0..self.grid.n_rows() {
            let (side, i) = self.grid.row_side(row);
            let r = self.grid.varrho(side, i);
            for j in 0..self.grid.n_ang {
                wr.write_record([
                    fmt17(r),
                    fmt17(self.grid.phi(j)),
                    side.as_str().to_string(),
                    fmt17(self.values[row * self.grid.n_ang + j]),
                ])?;
            }
        }
        wr.flush()?;
        Ok(())
    }

    /// Reads a field written by [`LayerField::write_csv`] onto `grid`.
    pub fn read_csv<R: Read>(grid: ReferenceGrid, r: R) -> Result<Self> {
        let mut rd = csv::Reader::from_reader(r);
        let headers = rd.headers()?.clone();
        if headers.iter().collect::<Vec<_>>() != ["varrho", "phi", "side", "value"] {
            return Err(Error::Domain(format!("unexpected CSV header {headers:?}")));
        }
        let mut values = Vec::with_capacity(grid.len());
        for (k, rec) in rd.records().enumerate() {
            let rec = rec?;
            let row = k / grid.n_ang;
            if row >= grid.n_rows() {
                return Err(Error::Mismatch("CSV has more rows than the grid".into()));
            }
            let (side, _) = grid.row_side(row);
            let got: Side = rec.get(2).unwrap_or_default().parse()?;
            if got != side {
                return Err(Error::Mismatch(format!(
                    "CSV record {k}: expected side {}",
                    side.as_str()
                )));
            }
            let v: f64 = rec
                .get(3)
                .unwrap_or_default()
                .parse()
                .map_err(|e| Error::Domain(format!("CSV record {k}: {e}")))?;
            values.push(v);
        }
        Self::from_values(grid, values)
    }
}

/// 17 significant digits, enough to round-trip any f64.
pub fn fmt17(v: f64) -> String {
    format!("{v:.16e}")
}
