//! Periodic scalar fields sampled on uniform grids.
//!
//! A [`GridField`] stores samples of a function on the `n1 x n2` lattice
//! grid `(i/n1, j/n2)` in row-major order, together with the torus it
//! lives on. The module provides exact group averaging (bitwise
//! idempotent, so averaging twice returns the identical buffer),
//! projection onto the invariant mean-zero subspace, bilinear sampling,
//! and binary plus CSV serialization.

use std::fmt::Write as _;
use std::io::{Read, Write};
use std::path::Path;

use crate::error::{MeanFieldError, Result};
use crate::torus::{Point, TorusLattice, TranslationGroup};

/// Magic bytes opening the binary grid format.
const GRID_MAGIC: &[u8; 8] = b"MFGRID1\n";

/// A real scalar field on an `n1 x n2` periodic grid.
///
/// Node `(i, j)` samples the field at lattice coordinates `(i/n1, j/n2)`
/// and lives at buffer index `i * n2 + j`.
#[derive(Debug, Clone, PartialEq)]
pub struct GridField {
    n1: usize,
    n2: usize,
    values: Vec<f64>,
    lattice: TorusLattice,
}

impl GridField {
    /// The zero field.
    ///
    /// # Errors
    ///
    /// Returns a configuration error for zero or odd grid dimensions.
    pub fn zeros(n1: usize, n2: usize, lattice: TorusLattice) -> Result<Self> {
        Self::constant(n1, n2, lattice, 0.0)
    }

    /// A constant field.
    ///
    /// # Errors
    ///
    /// Returns a configuration error for zero or odd grid dimensions.
    pub fn constant(n1: usize, n2: usize, lattice: TorusLattice, value: f64) -> Result<Self> {
        Self::check_dims(n1, n2)?;
        Ok(Self {
            n1,
            n2,
            values: vec![value; n1 * n2],
            lattice,
        })
    }

    /// Samples `f` at every grid node `(i/n1, j/n2)`.
    ///
    /// # Errors
    ///
    /// Returns a configuration error for zero or odd grid dimensions.
    pub fn from_fn(
        n1: usize,
        n2: usize,
        lattice: TorusLattice,
        mut f: impl FnMut(f64, f64) -> f64,
    ) -> Result<Self> {
        Self::check_dims(n1, n2)?;
        let mut values = Vec::with_capacity(n1 * n2);
        for i in 0..n1 {
            let s1 = i as f64 / n1 as f64;
            for j in 0..n2 {
                let s2 = j as f64 / n2 as f64;
                values.push(f(s1, s2));
            }
        }
        Ok(Self {
            n1,
            n2,
            values,
            lattice,
        })
    }

    /// Wraps an existing row-major buffer.
    ///
    /// # Errors
    ///
    /// Returns a configuration error for bad dimensions, a length
    /// mismatch, or non-finite entries.
    pub fn from_values(
        n1: usize,
        n2: usize,
        lattice: TorusLattice,
        values: Vec<f64>,
    ) -> Result<Self> {
        Self::check_dims(n1, n2)?;
        if values.len() != n1 * n2 {
            return Err(MeanFieldError::Config(format!(
                "value buffer has {} entries, grid needs {}",
                values.len(),
                n1 * n2
            )));
        }
        if let Some(bad) = values.iter().find(|v| !v.is_finite()) {
            return Err(MeanFieldError::Config(format!(
                "value buffer contains non-finite entry {bad}"
            )));
        }
        Ok(Self {
            n1,
            n2,
            values,
            lattice,
        })
    }

    fn check_dims(n1: usize, n2: usize) -> Result<()> {
        if n1 == 0 || n2 == 0 {
            return Err(MeanFieldError::Config(format!(
                "grid dimensions must be positive, got {n1} x {n2}"
            )));
        }
        if n1 % 2 != 0 || n2 % 2 != 0 {
            return Err(MeanFieldError::Config(format!(
                "grid dimensions must be even for spectral round-trips, got {n1} x {n2}"
            )));
        }
        Ok(())
    }

    /// First grid dimension.
    pub fn n1(&self) -> usize {
        self.n1
    }

    /// Second grid dimension.
    pub fn n2(&self) -> usize {
        self.n2
    }

    /// The torus the field lives on.
    pub fn lattice(&self) -> &TorusLattice {
        &self.lattice
    }

    /// Read access to the row-major sample buffer.
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Write access to the row-major sample buffer.
    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    /// Buffer index of node `(i, j)`.
    #[inline]
    pub fn idx(&self, i: usize, j: usize) -> usize {
        i * self.n2 + j
    }

    /// Lattice coordinates of node `(i, j)`.
    pub fn node_point(&self, i: usize, j: usize) -> Point {
        Point::new(i as f64 / self.n1 as f64, j as f64 / self.n2 as f64)
    }

    /// Quadrature weight of one cell, `V / (n1 n2)`.
    pub fn cell_weight(&self) -> f64 {
        self.lattice.volume() / (self.n1 * self.n2) as f64
    }

    /// Largest node spacing along either lattice direction.
    pub fn cell_extent(&self) -> f64 {
        let a = self.lattice.basis_a();
        let b = self.lattice.basis_b();
        (a[0].hypot(a[1]) / self.n1 as f64).max(b[0].hypot(b[1]) / self.n2 as f64)
    }

    /// Mean value over the torus.
    pub fn mean(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.values.len() as f64
    }

    /// Integral over the torus by the rectangle rule, exact in the mean
    /// for trigonometric polynomials below the grid bandwidth.
    pub fn integrate(&self) -> f64 {
        self.cell_weight() * self.values.iter().sum::<f64>()
    }

    /// Minimum sample value.
    pub fn min_value(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// Maximum sample value.
    pub fn max_value(&self) -> f64 {
        self.values
            .iter()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// Node of the first maximum in row-major order.
    pub fn argmax(&self) -> (usize, usize) {
        let mut best = f64::NEG_INFINITY;
        let mut at = 0usize;
        for (k, v) in self.values.iter().enumerate() {
            if *v > best {
                best = *v;
                at = k;
            }
        }
        (at / self.n2, at % self.n2)
    }

    /// `L^2` inner product with cell weights, `w * sum(a_k b_k)`.
    pub fn l2_inner(&self, other: &GridField) -> Result<f64> {
        self.check_same_grid(other)?;
        let dot: f64 = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| a * b)
            .sum();
        Ok(self.cell_weight() * dot)
    }

    /// `L^2` norm with cell weights.
    pub fn l2_norm(&self) -> f64 {
        let dot: f64 = self.values.iter().map(|v| v * v).sum();
        (self.cell_weight() * dot).sqrt()
    }

    fn check_same_grid(&self, other: &GridField) -> Result<()> {
        if self.n1 != other.n1 || self.n2 != other.n2 {
            return Err(MeanFieldError::Config(format!(
                "grid mismatch: {} x {} vs {} x {}",
                self.n1, self.n2, other.n1, other.n2
            )));
        }
        Ok(())
    }

    /// Bilinear interpolation at lattice coordinates, periodic in both
    /// directions.
    pub fn sample_bilinear(&self, s1: f64, s2: f64) -> f64 {
        let f1 = s1.rem_euclid(1.0) * self.n1 as f64;
        let f2 = s2.rem_euclid(1.0) * self.n2 as f64;
        let i0 = (f1.floor() as usize).min(self.n1 - 1);
        let j0 = (f2.floor() as usize).min(self.n2 - 1);
        let t1 = f1 - i0 as f64;
        let t2 = f2 - j0 as f64;
        let i1 = (i0 + 1) % self.n1;
        let j1 = (j0 + 1) % self.n2;
        let v00 = self.values[self.idx(i0, j0)];
        let v01 = self.values[self.idx(i0, j1)];
        let v10 = self.values[self.idx(i1, j0)];
        let v11 = self.values[self.idx(i1, j1)];
        v00 * (1.0 - t1) * (1.0 - t2)
            + v01 * (1.0 - t1) * t2
            + v10 * t1 * (1.0 - t2)
            + v11 * t1 * t2
    }

    /// Group average: replaces the field by the mean of its translates
    /// under every group shift.
    ///
    /// The orbit values at each node are sorted before summation, so the
    /// result is independent of shift order, exactly invariant under the
    /// group, and bitwise idempotent. Nodes whose orbit values are already
    /// bitwise equal are passed through unchanged.
    ///
    /// # Errors
    ///
    /// Returns a configuration error when some shift does not map grid
    /// nodes to grid nodes.
    pub fn symmetrize(&self, group: &TranslationGroup) -> Result<GridField> {
        let offsets = group.grid_shift_indices(self.n1, self.n2)?;
        if offsets.len() == 1 {
            return Ok(self.clone());
        }
        let mut out = vec![0.0f64; self.values.len()];
        let mut orbit = vec![0.0f64; offsets.len()];
        let inv = 1.0 / offsets.len() as f64;
        for i in 0..self.n1 {
            for j in 0..self.n2 {
                for (k, (di, dj)) in offsets.iter().enumerate() {
                    let ii = (i + di) % self.n1;
                    let jj = (j + dj) % self.n2;
                    orbit[k] = self.values[ii * self.n2 + jj];
                }
                let first = orbit[0];
                if orbit.iter().all(|v| v.to_bits() == first.to_bits()) {
                    out[i * self.n2 + j] = first;
                } else {
                    orbit.sort_by(f64::total_cmp);
                    out[i * self.n2 + j] = orbit.iter().sum::<f64>() * inv;
                }
            }
        }
        Ok(GridField {
            n1: self.n1,
            n2: self.n2,
            values: out,
            lattice: self.lattice,
        })
    }

    /// Projection onto the group-invariant mean-zero subspace: group
    /// average followed by mean subtraction.
    ///
    /// # Errors
    ///
    /// Returns a configuration error when the grid is incompatible with
    /// the group.
    pub fn project_invariant_mean_zero(&self, group: &TranslationGroup) -> Result<GridField> {
        let mut sym = self.symmetrize(group)?;
        let m = sym.mean();
        for v in &mut sym.values {
            *v -= m;
        }
        Ok(sym)
    }

    /// Largest deviation from group invariance,
    /// `max |u(x + t) - u(x)|` over nodes and shifts.
    ///
    /// # Errors
    ///
    /// Returns a configuration error when the grid is incompatible with
    /// the group.
    pub fn invariance_defect(&self, group: &TranslationGroup) -> Result<f64> {
        let offsets = group.grid_shift_indices(self.n1, self.n2)?;
        let mut worst = 0.0f64;
        for (di, dj) in offsets {
            for i in 0..self.n1 {
                for j in 0..self.n2 {
                    let ii = (i + di) % self.n1;
                    let jj = (j + dj) % self.n2;
                    let d = (self.values[ii * self.n2 + jj] - self.values[i * self.n2 + j]).abs();
                    worst = worst.max(d);
                }
            }
        }
        Ok(worst)
    }

    /// Writes the binary grid format: magic, dimensions, lattice basis,
    /// then the row-major samples, all little-endian.
    pub fn write_binary(&self, w: &mut impl Write) -> Result<()> {
        w.write_all(GRID_MAGIC)?;
        w.write_all(&(self.n1 as u32).to_le_bytes())?;
        w.write_all(&(self.n2 as u32).to_le_bytes())?;
        for v in self
            .lattice
            .basis_a()
            .iter()
            .chain(self.lattice.basis_b().iter())
        {
            w.write_all(&v.to_le_bytes())?;
        }
        for v in &self.values {
            w.write_all(&v.to_le_bytes())?;
        }
        Ok(())
    }

    /// Reads the binary grid format written by [`GridField::write_binary`].
    ///
    /// # Errors
    ///
    /// Returns a configuration error on a bad magic header and an IO
    /// error on truncation.
    pub fn read_binary(r: &mut impl Read) -> Result<GridField> {
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)?;
        if &magic != GRID_MAGIC {
            return Err(MeanFieldError::Config(
                "not a grid file: bad magic header".into(),
            ));
        }
        let mut u32buf = [0u8; 4];
        r.read_exact(&mut u32buf)?;
        let n1 = u32::from_le_bytes(u32buf) as usize;
        r.read_exact(&mut u32buf)?;
        let n2 = u32::from_le_bytes(u32buf) as usize;
        let mut f64buf = [0u8; 8];
        let mut basis = [0.0f64; 4];
        for b in &mut basis {
            r.read_exact(&mut f64buf)?;
            *b = f64::from_le_bytes(f64buf);
        }
        let lattice = TorusLattice::new([basis[0], basis[1]], [basis[2], basis[3]])?;
        let count = n1
            .checked_mul(n2)
            .ok_or_else(|| MeanFieldError::Config("grid dimensions overflow".into()))?;
        let mut values = Vec::with_capacity(count);
        for _ in 0..count {
            r.read_exact(&mut f64buf)?;
            values.push(f64::from_le_bytes(f64buf));
        }
        Self::from_values(n1, n2, lattice, values)
    }

    /// Writes the field to a file in the binary grid format.
    pub fn save_binary(&self, path: &Path) -> Result<()> {
        let mut file = std::io::BufWriter::new(std::fs::File::create(path)?);
        self.write_binary(&mut file)?;
        file.flush()?;
        Ok(())
    }

    /// Reads a field from a file in the binary grid format.
    pub fn load_binary(path: &Path) -> Result<GridField> {
        let mut file = std::io::BufReader::new(std::fs::File::open(path)?);
        Self::read_binary(&mut file)
    }

    /// Renders the field as CSV with header `x1,x2,value`, one row per
    /// node in row-major order, full round-trip precision.
    pub fn to_csv(&self) -> String {
        let mut out = String::with_capacity(self.values.len() * 32);
        out.push_str("x1,x2,value\n");
        for i in 0..self.n1 {
            let s1 = i as f64 / self.n1 as f64;
            for j in 0..self.n2 {
                let s2 = j as f64 / self.n2 as f64;
                let _ = writeln!(out, "{s1},{s2},{}", self.values[self.idx(i, j)]);
            }
        }
        out
    }
}
