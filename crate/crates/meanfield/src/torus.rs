//! Flat-torus geometry and finite translation groups.
//!
//! A flat torus is the quotient of the plane by a lattice spanned by two
//! basis vectors. Points are stored in lattice coordinates reduced to the
//! fundamental domain `[0,1)^2`; metric quantities convert to Cartesian
//! coordinates through the basis. A [`TranslationGroup`] is a finite set of
//! lattice-fraction shifts acting by addition modulo the lattice; every
//! orbit of such a group has exactly `order` points, so the orbit count
//! used by the symmetric existence theory is the group order itself.

use crate::error::{MeanFieldError, Result};

/// Tolerance for recognizing that a shift lands exactly on a grid node or
/// that two reduced points coincide.
const COINCIDENCE_TOL: f64 = 1e-9;

/// Reduce a lattice coordinate to the fundamental interval `[0,1)`.
fn reduce_unit(x: f64) -> f64 {
    let r = x.rem_euclid(1.0);
    if r >= 1.0 {
        0.0
    } else {
        r
    }
}

/// A flat torus given by two lattice basis vectors in the plane.
///
/// The default instance is the unit square torus with basis `(1,0)`,
/// `(0,1)` and volume 1.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TorusLattice {
    basis_a: [f64; 2],
    basis_b: [f64; 2],
    volume: f64,
}

impl TorusLattice {
    /// Builds a lattice from two basis vectors.
    ///
    /// # Errors
    ///
    /// Returns a configuration error when the vectors are linearly
    /// dependent (zero determinant) or not finite.
    pub fn new(basis_a: [f64; 2], basis_b: [f64; 2]) -> Result<Self> {
        if !(basis_a.iter().chain(basis_b.iter()).all(|v| v.is_finite())) {
            return Err(MeanFieldError::Config(
                "lattice basis vectors must be finite".into(),
            ));
        }
        let det = basis_a[0] * basis_b[1] - basis_a[1] * basis_b[0];
        let volume = det.abs();
        if volume <= f64::EPSILON {
            return Err(MeanFieldError::Config(format!(
                "lattice basis is degenerate: |det| = {volume:e}"
            )));
        }
        Ok(Self {
            basis_a,
            basis_b,
            volume,
        })
    }

    /// The unit square torus.
    pub fn unit_square() -> Self {
        Self {
            basis_a: [1.0, 0.0],
            basis_b: [0.0, 1.0],
            volume: 1.0,
        }
    }

    /// Whether this is the unit square lattice (basis `(1,0)`, `(0,1)`).
    pub fn is_unit_square(&self) -> bool {
        self.basis_a == [1.0, 0.0] && self.basis_b == [0.0, 1.0]
    }

    /// First basis vector.
    pub fn basis_a(&self) -> [f64; 2] {
        self.basis_a
    }

    /// Second basis vector.
    pub fn basis_b(&self) -> [f64; 2] {
        self.basis_b
    }

    /// Area of the fundamental domain.
    pub fn volume(&self) -> f64 {
        self.volume
    }

    /// Maps lattice coordinates to Cartesian coordinates.
    pub fn to_cartesian(&self, s: [f64; 2]) -> [f64; 2] {
        [
            s[0] * self.basis_a[0] + s[1] * self.basis_b[0],
            s[0] * self.basis_a[1] + s[1] * self.basis_b[1],
        ]
    }

    /// Gram matrix of the basis, `[[a.a, a.b], [a.b, b.b]]`.
    pub fn gram(&self) -> [[f64; 2]; 2] {
        let aa = self.basis_a[0] * self.basis_a[0] + self.basis_a[1] * self.basis_a[1];
        let ab = self.basis_a[0] * self.basis_b[0] + self.basis_a[1] * self.basis_b[1];
        let bb = self.basis_b[0] * self.basis_b[0] + self.basis_b[1] * self.basis_b[1];
        [[aa, ab], [ab, bb]]
    }

    /// Length of the shortest nonzero lattice vector.
    pub fn shortest_vector(&self) -> f64 {
        let mut best = f64::INFINITY;
        for m in -2i32..=2 {
            for k in -2i32..=2 {
                if m == 0 && k == 0 {
                    continue;
                }
                let v = self.to_cartesian([m as f64, k as f64]);
                best = best.min(v[0].hypot(v[1]));
            }
        }
        best
    }

    /// Injectivity radius of the torus, half the shortest lattice vector.
    pub fn injectivity_radius(&self) -> f64 {
        0.5 * self.shortest_vector()
    }

    /// Geodesic distance between two points, the minimum of the Euclidean
    /// distance over nearby lattice translates of the difference.
    pub fn distance(&self, x: &Point, y: &Point) -> f64 {
        let d0 = x.coords[0] - y.coords[0];
        let d1 = x.coords[1] - y.coords[1];
        let mut best = f64::INFINITY;
        for m in -2i32..=2 {
            for k in -2i32..=2 {
                let v = self.to_cartesian([d0 + m as f64, d1 + k as f64]);
                best = best.min(v[0].hypot(v[1]));
            }
        }
        best
    }
}

impl Default for TorusLattice {
    fn default() -> Self {
        Self::unit_square()
    }
}

/// A point on the torus in lattice coordinates, reduced to `[0,1)^2`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Point {
    coords: [f64; 2],
}

impl Point {
    /// Builds a point, reducing each coordinate modulo 1.
    pub fn new(s1: f64, s2: f64) -> Self {
        Self {
            coords: [reduce_unit(s1), reduce_unit(s2)],
        }
    }

    /// Lattice coordinates in `[0,1)^2`.
    pub fn coords(&self) -> [f64; 2] {
        self.coords
    }

    /// First lattice coordinate.
    pub fn x1(&self) -> f64 {
        self.coords[0]
    }

    /// Second lattice coordinate.
    pub fn x2(&self) -> f64 {
        self.coords[1]
    }

    /// The point shifted by `t` (lattice coordinates), reduced.
    pub fn shifted(&self, t: [f64; 2]) -> Self {
        Self::new(self.coords[0] + t[0], self.coords[1] + t[1])
    }

    /// Whether this point coincides with `other` modulo the lattice,
    /// within the internal coincidence tolerance.
    pub fn coincides(&self, other: &Point) -> bool {
        let d0 = self.coords[0] - other.coords[0];
        let d1 = self.coords[1] - other.coords[1];
        let w0 = d0 - d0.round();
        let w1 = d1 - d1.round();
        w0.hypot(w1) < COINCIDENCE_TOL
    }
}

/// A finite group of lattice-fraction translations of the torus.
///
/// The shift set always contains the zero shift as its first entry, is
/// closed under addition modulo the lattice, and has no duplicates. Every
/// orbit of such a group has exactly [`TranslationGroup::order`] points.
#[derive(Debug, Clone, PartialEq)]
pub struct TranslationGroup {
    shifts: Vec<[f64; 2]>,
}

impl TranslationGroup {
    /// Builds a group from a list of shifts (lattice coordinates).
    ///
    /// The shifts are reduced modulo 1. The zero shift is required and is
    /// moved to the front if present elsewhere.
    ///
    /// # Errors
    ///
    /// Returns a configuration error when the set is empty, contains
    /// duplicates modulo the lattice, lacks the zero shift, or is not
    /// closed under addition modulo the lattice.
    pub fn new(shifts: &[[f64; 2]]) -> Result<Self> {
        if shifts.is_empty() {
            return Err(MeanFieldError::Config("translation group is empty".into()));
        }
        let mut reduced: Vec<[f64; 2]> = shifts
            .iter()
            .map(|t| [reduce_unit(t[0]), reduce_unit(t[1])])
            .collect();
        let near = |a: [f64; 2], b: [f64; 2]| {
            let d0 = a[0] - b[0];
            let d1 = a[1] - b[1];
            (d0 - d0.round()).hypot(d1 - d1.round()) < COINCIDENCE_TOL
        };
        for i in 0..reduced.len() {
            for j in (i + 1)..reduced.len() {
                if near(reduced[i], reduced[j]) {
                    return Err(MeanFieldError::Config(format!(
                        "duplicate shift ({}, {}) in translation group",
                        reduced[j][0], reduced[j][1]
                    )));
                }
            }
        }
        let zero_pos = reduced.iter().position(|t| near(*t, [0.0, 0.0]));
        match zero_pos {
            Some(k) => reduced.swap(0, k),
            None => {
                return Err(MeanFieldError::Config(
                    "translation group must contain the zero shift".into(),
                ))
            }
        }
        for a in &reduced {
            for b in &reduced {
                let sum = [reduce_unit(a[0] + b[0]), reduce_unit(a[1] + b[1])];
                if !reduced.iter().any(|t| near(*t, sum)) {
                    return Err(MeanFieldError::Config(format!(
                        "translation group is not closed: ({}, {}) + ({}, {}) is missing",
                        a[0], a[1], b[0], b[1]
                    )));
                }
            }
        }
        Ok(Self { shifts: reduced })
    }

    /// The identity-only group.
    pub fn identity() -> Self {
        Self {
            shifts: vec![[0.0, 0.0]],
        }
    }

    /// The cyclic group of order `n` generated by the shift
    /// `(p1/n, p2/n)`, i.e. the shifts `k*(p1/n, p2/n)` for `k = 0..n`.
    ///
    /// # Errors
    ///
    /// Returns a configuration error when `n == 0` or the generated shifts
    /// collide (the generator has order smaller than `n`).
    pub fn cyclic(n: u32, p: [u32; 2]) -> Result<Self> {
        if n == 0 {
            return Err(MeanFieldError::Config("cyclic group order is zero".into()));
        }
        let shifts: Vec<[f64; 2]> = (0..n)
            .map(|k| {
                [
                    reduce_unit(k as f64 * p[0] as f64 / n as f64),
                    reduce_unit(k as f64 * p[1] as f64 / n as f64),
                ]
            })
            .collect();
        Self::new(&shifts)
    }

    /// Number of group elements; equals the orbit size of every point.
    pub fn order(&self) -> usize {
        self.shifts.len()
    }

    /// Orbit count entering the critical coupling `8*pi*ell`; for a
    /// translation group this is the group order.
    pub fn ell(&self) -> usize {
        self.shifts.len()
    }

    /// The shift list; the first entry is the zero shift.
    pub fn shifts(&self) -> &[[f64; 2]] {
        &self.shifts
    }

    /// The orbit of `x`: the images of `x` under every group element,
    /// reduced to the fundamental domain. The first element is `x` itself.
    pub fn orbit(&self, x: &Point) -> Vec<Point> {
        self.shifts.iter().map(|t| x.shifted(*t)).collect()
    }

    /// Smallest pairwise geodesic distance among the orbit points of `x`,
    /// infinite for the identity group.
    pub fn min_orbit_separation(&self, x: &Point, lattice: &TorusLattice) -> f64 {
        let orbit = self.orbit(x);
        let mut best = f64::INFINITY;
        for i in 0..orbit.len() {
            for j in (i + 1)..orbit.len() {
                best = best.min(lattice.distance(&orbit[i], &orbit[j]));
            }
        }
        best
    }

    /// Quarter of the smaller of the injectivity radius and the minimal
    /// orbit separation at `x`; the exclusion radius used by the local
    /// expansion machinery.
    pub fn exclusion_radius(&self, x: &Point, lattice: &TorusLattice) -> f64 {
        0.25 * lattice
            .injectivity_radius()
            .min(self.min_orbit_separation(x, lattice))
    }

    /// Index offsets of every shift on an `n1 x n2` grid.
    ///
    /// # Errors
    ///
    /// Returns a configuration error naming the first shift that does not
    /// map grid nodes to grid nodes.
    pub fn grid_shift_indices(&self, n1: usize, n2: usize) -> Result<Vec<(usize, usize)>> {
        self.shifts
            .iter()
            .map(|t| {
                let f1 = t[0] * n1 as f64;
                let f2 = t[1] * n2 as f64;
                let i = f1.round();
                let j = f2.round();
                if (f1 - i).abs() > COINCIDENCE_TOL || (f2 - j).abs() > COINCIDENCE_TOL {
                    return Err(MeanFieldError::Config(format!(
                        "shift ({}, {}) does not land on nodes of a {n1} x {n2} grid",
                        t[0], t[1]
                    )));
                }
                Ok((
                    (i as i64).rem_euclid(n1 as i64) as usize,
                    (j as i64).rem_euclid(n2 as i64) as usize,
                ))
            })
            .collect()
    }
}
