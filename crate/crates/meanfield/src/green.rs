//! Green functions of the torus Laplacian from product expansions.
//!
//! On the unit square torus the Green function of the positive Laplacian
//! with source strength `8 pi`, in the normalization of Ding, Jost, Li
//! and Wang, is `G(P, Q) = lambda(Q - P)` for an explicit function
//! `lambda` built from a rapidly converging product expansion in the
//! nome `e^{-2 pi}`. The module evaluates `lambda`, its Robin constant,
//! the symmetrized Green function of a translation-group orbit, local
//! quadratic expansions of its regular part, and a singularity-aware
//! mean that integrates the logarithmic poles in closed form.

use std::f64::consts::{PI, TAU};

use crate::error::{MeanFieldError, Result};
use crate::field::GridField;
use crate::torus::{Point, TorusLattice, TranslationGroup};

/// Number of retained terms in each product expansion; the tail is below
/// `e^{-48 pi}`, far under machine precision.
const SERIES_TERMS: usize = 24;

/// Distance to the pole below which evaluation refuses to proceed.
const POLE_TOL: f64 = 1e-14;

/// Quintic smoothstep: `0` for `t <= 0`, `1` for `t >= 1`, twice
/// continuously differentiable across both ends, slope at most `15/8`.
pub fn smoothstep_quintic(t: f64) -> f64 {
    let t = t.clamp(0.0, 1.0);
    t * t * t * (10.0 - 15.0 * t + 6.0 * t * t)
}

/// Evaluator for the Green kernel `lambda` on the unit square torus.
///
/// `lambda` is even, doubly periodic, mean-zero, and behaves like
/// `-4 log r + A_P + O(r^2)` near its pole at the lattice points, where
/// `A_P` is the Robin constant.
#[derive(Debug, Clone)]
pub struct LambdaSeries {
    /// Powers of the nome, `q_pow[n] = e^{-2 pi n}`.
    q_pow: Vec<f64>,
}

impl LambdaSeries {
    /// Tabulates the nome powers.
    pub fn new() -> Self {
        let q_pow = (0..=SERIES_TERMS)
            .map(|n| (-TAU * n as f64).exp())
            .collect();
        Self { q_pow }
    }

    /// Evaluates `lambda` at the lattice-coordinate offset `(x1, x2)`.
    ///
    /// The offset is reduced to the representative nearest the origin
    /// and reflected to `x2 >= 0` by evenness before summing the
    /// expansion.
    ///
    /// # Errors
    ///
    /// Returns a singularity error when the reduced offset is within
    /// `1e-14` of a lattice point.
    pub fn eval(&self, x1: f64, x2: f64) -> Result<f64> {
        let mut r1 = x1 - x1.round();
        let mut r2 = x2 - x2.round();
        if r2 < 0.0 {
            r1 = -r1;
            r2 = -r2;
        }
        if r1.hypot(r2) < POLE_TOL {
            return Err(MeanFieldError::Singularity(format!(
                "Green kernel evaluated at its pole, offset ({x1}, {x2})"
            )));
        }
        let c = (TAU * r1).cos();
        let mut value = 4.0 * PI * (r2 * r2 - r2 + 1.0 / 6.0);
        // Leading factor, written as (1-e)^2 + 2e(1-cos) to survive the
        // cancellation near the pole.
        let one_minus_e = -(-TAU * r2).exp_m1();
        let e2 = 1.0 - one_minus_e;
        let one_minus_c = 2.0 * (PI * r1).sin().powi(2);
        value -= 2.0 * (one_minus_e * one_minus_e + 2.0 * e2 * one_minus_c).ln();
        for n in 1..=SERIES_TERMS {
            let qm = self.q_pow[n] * e2;
            let qp = self.q_pow[n] / e2;
            value -= 2.0 * (qm * qm - 2.0 * qm * c).ln_1p();
            value -= 2.0 * (qp * qp - 2.0 * qp * c).ln_1p();
        }
        Ok(value)
    }

    /// The Robin constant `A_P` of the kernel: the finite part of
    /// `lambda` at its pole,
    /// `-4 log(2 pi) + 2 pi / 3 - 8 sum_n log(1 - e^{-2 pi n})`.
    pub fn robin_constant(&self) -> f64 {
        let series: f64 = (1..=SERIES_TERMS)
            .map(|n| (-self.q_pow[n]).ln_1p())
            .sum();
        -4.0 * TAU.ln() + TAU / 3.0 - 8.0 * series
    }

    /// Closed form of `lambda(1/2, 0)`,
    /// `2 pi / 3 - 4 log 2 - 8 sum_n log(1 + e^{-2 pi n})`, used to
    /// cross-check the expansion.
    pub fn half_period_value(&self) -> f64 {
        let series: f64 = (1..=SERIES_TERMS)
            .map(|n| self.q_pow[n].ln_1p())
            .sum();
        TAU / 3.0 - 4.0 * 2.0f64.ln() - 8.0 * series
    }

    /// Pairwise Green function `G(P, Q) = lambda(Q - P)`.
    ///
    /// # Errors
    ///
    /// Returns a configuration error on any lattice other than the unit
    /// square, for which the expansion is derived, and a singularity
    /// error when `P` and `Q` coincide.
    pub fn green_pair(&self, lattice: &TorusLattice, p: &Point, q: &Point) -> Result<f64> {
        if !lattice.is_unit_square() {
            return Err(MeanFieldError::Config(
                "Green kernel product expansion requires the unit square lattice".into(),
            ));
        }
        self.eval(q.x1() - p.x1(), q.x2() - p.x2())
    }
}

impl Default for LambdaSeries {
    fn default() -> Self {
        Self::new()
    }
}

/// Quadratic expansion of the regular part of a symmetrized Green
/// function around its center:
/// `G(center + y) = -4 log |y| + a_tilde + b1 y1 + b2 y2
///  + c1 y1^2 + 2 c2 y1 y2 + c3 y2^2 + O(|y|^3)`.
#[derive(Debug, Clone, Copy)]
pub struct GreenExpansion {
    /// Expansion center.
    pub center: Point,
    /// Constant term: the orbit Robin constant.
    pub a_tilde: f64,
    /// Linear coefficient in `y1`.
    pub b1: f64,
    /// Linear coefficient in `y2`.
    pub b2: f64,
    /// Coefficient of `y1^2`.
    pub c1: f64,
    /// Half the coefficient of `y1 y2`.
    pub c2: f64,
    /// Coefficient of `y2^2`.
    pub c3: f64,
    /// Root-mean-square residual of the least-squares fit.
    pub fit_residual: f64,
    /// Sampling annulus `(inner, outer)` used by the fit.
    pub annulus: (f64, f64),
}

impl GreenExpansion {
    /// Trace of the quadratic part. On a flat torus it must equal
    /// `4 pi ell / V` for orbit size `ell` and volume `V`.
    pub fn quadratic_trace(&self) -> f64 {
        self.c1 + self.c3
    }
}

/// Symmetrized Green function of a translation-group orbit:
/// `G_orbit(y) = sum_i lambda(y - x_i)` over the orbit points `x_i` of
/// the center, with poles of strength `-4 log r` at every orbit point.
#[derive(Debug, Clone)]
pub struct GreenFunction {
    series: LambdaSeries,
    lattice: TorusLattice,
    group: TranslationGroup,
    center: Point,
    orbit: Vec<Point>,
}

impl GreenFunction {
    /// Builds the symmetrized Green function centered at `center`.
    ///
    /// # Errors
    ///
    /// Returns a configuration error on any lattice other than the unit
    /// square.
    pub fn new(lattice: TorusLattice, group: TranslationGroup, center: Point) -> Result<Self> {
        if !lattice.is_unit_square() {
            return Err(MeanFieldError::Config(
                "Green kernel product expansion requires the unit square lattice".into(),
            ));
        }
        let orbit = group.orbit(&center);
        Ok(Self {
            series: LambdaSeries::new(),
            lattice,
            group,
            center,
            orbit,
        })
    }

    /// Expansion center.
    pub fn center(&self) -> &Point {
        &self.center
    }

    /// Orbit points carrying the poles; the first is the center.
    pub fn orbit(&self) -> &[Point] {
        &self.orbit
    }

    /// Orbit size.
    pub fn ell(&self) -> usize {
        self.orbit.len()
    }

    /// The underlying torus.
    pub fn lattice(&self) -> &TorusLattice {
        &self.lattice
    }

    /// The acting group.
    pub fn group(&self) -> &TranslationGroup {
        &self.group
    }

    /// The kernel evaluator.
    pub fn series(&self) -> &LambdaSeries {
        &self.series
    }

    /// Evaluates the symmetrized Green function at `q`.
    ///
    /// # Errors
    ///
    /// Returns a singularity error when `q` lies on the orbit.
    pub fn eval(&self, q: &Point) -> Result<f64> {
        let mut sum = 0.0;
        for x in &self.orbit {
            sum += self.series.eval(q.x1() - x.x1(), q.x2() - x.x2())?;
        }
        Ok(sum)
    }

    /// Orbit Robin constant: the finite part at the center,
    /// `A_P + sum_{k >= 2} lambda(x_k - x_1)` over the other orbit
    /// points.
    ///
    /// # Errors
    ///
    /// Returns a singularity error when two orbit points collide, which
    /// happens only for a center fixed by a nontrivial shift.
    pub fn tilde_robin(&self) -> Result<f64> {
        let mut value = self.series.robin_constant();
        for x in &self.orbit[1..] {
            value += self
                .series
                .eval(x.x1() - self.center.x1(), x.x2() - self.center.x2())?;
        }
        Ok(value)
    }

    /// Samples the function on an `n1 x n2` node grid.
    ///
    /// # Errors
    ///
    /// Returns a singularity error naming the first grid node that lies
    /// on the orbit; use [`GreenFunction::sample_grid_regularized`] when
    /// the orbit sits on grid nodes.
    pub fn sample_grid(&self, n1: usize, n2: usize) -> Result<GridField> {
        self.sample_grid_impl(n1, n2, false)
    }

    /// Samples the function on a grid, storing at each node that lies on
    /// the orbit the regularized limit `lim (G_orbit + 4 log r)`, which
    /// is the orbit Robin constant.
    ///
    /// # Errors
    ///
    /// Returns a configuration error for bad grid dimensions.
    pub fn sample_grid_regularized(&self, n1: usize, n2: usize) -> Result<GridField> {
        self.sample_grid_impl(n1, n2, true)
    }

    fn sample_grid_impl(&self, n1: usize, n2: usize, regularized: bool) -> Result<GridField> {
        let a_tilde = if regularized {
            self.tilde_robin()?
        } else {
            f64::NAN
        };
        let mut values = vec![0.0f64; n1 * n2];
        for i in 0..n1 {
            let s1 = i as f64 / n1 as f64;
            for j in 0..n2 {
                let s2 = j as f64 / n2 as f64;
                let mut sum = 0.0;
                let mut singular = false;
                for x in &self.orbit {
                    match self.series.eval(s1 - x.x1(), s2 - x.x2()) {
                        Ok(v) => sum += v,
                        Err(MeanFieldError::Singularity(_)) if regularized => {
                            singular = true;
                            break;
                        }
                        Err(MeanFieldError::Singularity(_)) => {
                            return Err(MeanFieldError::Singularity(format!(
                                "grid node ({s1}, {s2}) lies on the orbit; \
                                 sample the regularized grid instead"
                            )));
                        }
                        Err(e) => return Err(e),
                    }
                }
                values[i * n2 + j] = if singular { a_tilde } else { sum };
            }
        }
        GridField::from_values(n1, n2, self.lattice, values)
    }

    /// Default fit annulus: `(0.16, 0.64)` times the exclusion radius of
    /// the center, well inside the region where the quadratic expansion
    /// dominates and clear of the pole.
    pub fn default_fit_annulus(&self) -> (f64, f64) {
        let delta = self.group.exclusion_radius(&self.center, &self.lattice);
        (0.16 * delta, 0.64 * delta)
    }

    /// Fits the quadratic expansion of the regular part on an annulus
    /// around the center by least squares over 12 radii and 24 angles.
    ///
    /// Pass `None` to use [`GreenFunction::default_fit_annulus`].
    ///
    /// # Errors
    ///
    /// Returns a configuration error when the annulus is degenerate or
    /// reaches past the exclusion radius of the center.
    pub fn fit_expansion(&self, annulus: Option<(f64, f64)>) -> Result<GreenExpansion> {
        let (r_in, r_out) = annulus.unwrap_or_else(|| self.default_fit_annulus());
        if !(r_in > 0.0 && r_in < r_out) {
            return Err(MeanFieldError::Config(format!(
                "fit annulus ({r_in}, {r_out}) is degenerate"
            )));
        }
        let delta = self.group.exclusion_radius(&self.center, &self.lattice);
        if r_out > delta {
            return Err(MeanFieldError::Config(format!(
                "fit annulus outer radius {r_out} exceeds the exclusion radius {delta}"
            )));
        }
        const N_RADII: usize = 12;
        const N_ANGLES: usize = 24;
        // The basis is evaluated in y / r_out so the normal equations
        // stay well conditioned; coefficients are unscaled afterwards.
        let mut ata = [[0.0f64; 6]; 6];
        let mut atf = [0.0f64; 6];
        let mut f_sq = 0.0f64;
        let mut count = 0usize;
        for ir in 0..N_RADII {
            let r = r_in + (r_out - r_in) * ir as f64 / (N_RADII - 1) as f64;
            for ia in 0..N_ANGLES {
                let theta = TAU * ia as f64 / N_ANGLES as f64;
                let y1 = r * theta.cos();
                let y2 = r * theta.sin();
                let q = Point::new(self.center.x1() + y1, self.center.x2() + y2);
                let f = self.eval(&q)? + 4.0 * r.ln();
                let z1 = y1 / r_out;
                let z2 = y2 / r_out;
                let basis = [1.0, z1, z2, z1 * z1, z1 * z2, z2 * z2];
                for a in 0..6 {
                    for b in 0..6 {
                        ata[a][b] += basis[a] * basis[b];
                    }
                    atf[a] += basis[a] * f;
                }
                f_sq += f * f;
                count += 1;
            }
        }
        let coef = solve_6x6(ata, atf)?;
        // Residual RMS from the normal equations:
        // |f - A x|^2 = |f|^2 - x . (A^T f)  at the minimizer.
        let resid_sq = (f_sq - coef.iter().zip(&atf).map(|(x, y)| x * y).sum::<f64>())
            .max(0.0);
        let s = 1.0 / r_out;
        Ok(GreenExpansion {
            center: self.center,
            a_tilde: coef[0],
            b1: coef[1] * s,
            b2: coef[2] * s,
            c1: coef[3] * s * s,
            c2: coef[4] * s * s / 2.0,
            c3: coef[5] * s * s,
            fit_residual: (resid_sq / count as f64).sqrt(),
            annulus: (r_in, r_out),
        })
    }

    /// Integral of the symmetrized Green function over the torus,
    /// splitting off the logarithmic poles.
    ///
    /// Each pole contributes `-4 log(d_i) W(d_i)` with a quintic cutoff
    /// `W` supported inside the radius `0.45 min(separation,
    /// injectivity)`; that part integrates in closed form in geodesic
    /// polar coordinates, exact on a flat torus. The smooth remainder is
    /// summed by the rectangle rule on an `n1 x n2` node grid, taking
    /// the orbit Robin constant at nodes that lie on the orbit. The
    /// exact value of the integral is zero; the return measures
    /// quadrature error.
    ///
    /// # Errors
    ///
    /// Returns a singularity error when orbit points collide and a
    /// configuration error for bad grid dimensions.
    pub fn mean_singularity_aware(&self, n1: usize, n2: usize) -> Result<f64> {
        let sep = self
            .group
            .min_orbit_separation(&self.center, &self.lattice);
        let rho = 0.45 * self.lattice.injectivity_radius().min(sep);
        let a_tilde = self.tilde_robin()?;
        let cell = self.lattice.volume() / (n1 * n2) as f64;

        let mut remainder_sum = 0.0f64;
        for i in 0..n1 {
            let s1 = i as f64 / n1 as f64;
            for j in 0..n2 {
                let s2 = j as f64 / n2 as f64;
                let q = Point::new(s1, s2);
                let mut singular = false;
                let mut value = 0.0f64;
                let mut correction = 0.0f64;
                for x in &self.orbit {
                    let d = self.lattice.distance(&q, x);
                    if d < POLE_TOL.max(1e-9) {
                        singular = true;
                        break;
                    }
                    value += self.series.eval(s1 - x.x1(), s2 - x.x2())?;
                    if d < rho {
                        let w = 1.0 - smoothstep_quintic(d / rho);
                        correction += 4.0 * d.ln() * w;
                    }
                }
                // At an orbit node every other pole is farther than the
                // cutoff radius, so the remainder limit is the orbit
                // Robin constant.
                remainder_sum += if singular {
                    a_tilde
                } else {
                    value + correction
                };
            }
        }

        // Closed form of integral of (-4 log r) W(r) over one pole:
        // W(r) r = r - 10 r^4 / rho^3 + 15 r^5 / rho^4 - 6 r^6 / rho^5,
        // and integral of r^m log r over (0, rho) is
        // rho^{m+1} (log rho / (m+1) - 1/(m+1)^2).
        let power_log = |m: f64| rho.powf(m + 1.0) * (rho.ln() / (m + 1.0) - 1.0 / ((m + 1.0) * (m + 1.0)));
        let radial = power_log(1.0) - 10.0 / rho.powi(3) * power_log(4.0)
            + 15.0 / rho.powi(4) * power_log(5.0)
            - 6.0 / rho.powi(5) * power_log(6.0);
        let closed_per_pole = -8.0 * PI * radial;

        Ok(cell * remainder_sum + self.orbit.len() as f64 * closed_per_pole)
    }
}

/// Solves a symmetric positive definite 6x6 system by Gaussian
/// elimination with partial pivoting.
pub(crate) fn solve_6x6(mut a: [[f64; 6]; 6], mut b: [f64; 6]) -> Result<[f64; 6]> {
    for col in 0..6 {
        let mut pivot = col;
        for row in (col + 1)..6 {
            if a[row][col].abs() > a[pivot][col].abs() {
                pivot = row;
            }
        }
        if a[pivot][col].abs() < 1e-300 {
            return Err(MeanFieldError::Numerical(
                "singular normal equations in expansion fit".into(),
            ));
        }
        a.swap(col, pivot);
        b.swap(col, pivot);
        for row in (col + 1)..6 {
            let factor = a[row][col] / a[col][col];
            for k in col..6 {
                a[row][k] -= factor * a[col][k];
            }
            b[row] -= factor * b[col];
        }
    }
    let mut x = [0.0f64; 6];
    for col in (0..6).rev() {
        let mut s = b[col];
        for k in (col + 1)..6 {
            s -= a[col][k] * x[k];
        }
        x[col] = s / a[col][col];
    }
    Ok(x)
}
