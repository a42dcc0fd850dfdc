//! Machine-checkable existence certificates for the critical coupling.
//!
//! Two sufficient conditions are evaluated numerically and reported with
//! every input that enters them. The first compares the logarithm of the
//! total weight mass against a Robin-constant threshold; the second checks
//! positivity of the coefficient that drives the energy of a concentrating
//! test-function family strictly below the critical level. The family
//! itself is built here as well, so the asymptotic prediction can be
//! compared against a direct finite-difference energy evaluation.

use std::f64::consts::PI;

use serde::Serialize;

use crate::error::{MeanFieldError, Result};
use crate::field::GridField;
use crate::green::{smoothstep_quintic, solve_6x6, GreenFunction, LambdaSeries};
use crate::spectral::{dirichlet_energy_fd, weighted_exp_integral};
use crate::torus::{Point, TranslationGroup};

/// Relative tolerance for accepting a requested certificate center as a
/// maximizer of the weight score.
const MAXIMIZER_TOL: f64 = 1e-8;

/// Upper end of the domain of the concentration radius rule. Beyond this
/// the iterated logarithm in the rule is no longer positive.
const RULE_MAX_EPS: f64 = 0.36;

/// Fraction of the exclusion radius that the cap radius may occupy. Keeps
/// the annuli of distinct orbit points disjoint with a safety margin.
const CAP_SAFETY: f64 = 0.995;

/// Minimum number of grid cells the cap radius must span.
const MIN_CAP_CELLS: f64 = 8.0;

/// Relative invariance tolerance for certificate weights.
const WEIGHT_INVARIANCE_TOL: f64 = 1e-10;

/// Closed-form constants around the half-shift pair orbit on the unit
/// torus, together with the elementary bound chain that certifies its
/// orbit Robin constant stays below the concentration threshold.
#[derive(Debug, Clone, Serialize)]
pub struct SeriesBounds {
    /// Robin constant of the doubly periodic kernel.
    pub a_p: f64,
    /// Kernel value at the half period `(1/2, 0)`.
    pub lambda_half: f64,
    /// Orbit Robin constant of the half-shift pair.
    pub a_tilde: f64,
    /// Threshold `-2 - 2 log pi - 2 log 2` the orbit Robin constant
    /// must stay below.
    pub maxim_threshold: f64,
    /// Elementary upper bound for `a_p + 2 + 2 log pi`.
    pub bound_approx1: f64,
    /// Elementary upper bound for `lambda_half + 2 log 2`.
    pub bound_approx2: f64,
    /// The bounded quantity `a_p + 2 + 2 log pi`.
    pub lhs1: f64,
    /// The bounded quantity `lambda_half + 2 log 2`.
    pub lhs2: f64,
}

/// Evaluates the closed-form constants and the bound chain. The chain
/// certifies `a_tilde < maxim_threshold` because
/// `lhs1 <= bound_approx1`, `lhs2 <= bound_approx2`, and
/// `bound_approx1 + bound_approx2 < 0`.
pub fn series_bounds() -> SeriesBounds {
    let series = LambdaSeries::new();
    let a_p = series.robin_constant();
    let lambda_half = series.half_period_value();
    let ln2 = 2.0f64.ln();
    let ln_pi = PI.ln();
    let q = (-2.0 * PI).exp();
    SeriesBounds {
        a_p,
        lambda_half,
        a_tilde: a_p + lambda_half,
        maxim_threshold: -2.0 - 2.0 * ln_pi - 2.0 * ln2,
        bound_approx1: 2.0 - 4.0 * ln2 - 2.0 * ln_pi + 2.0 * PI / 3.0
            + 8.0 * q / ((1.0 - q) * (1.0 - q)),
        bound_approx2: 2.0 * PI / 3.0 - 2.0 * ln2 - 8.0 * q / (1.0 - q * q),
        lhs1: a_p + 2.0 + 2.0 * ln_pi,
        lhs2: lambda_half + 2.0 * ln2,
    }
}

/// Inputs that enter a certificate, echoed back for auditability.
#[derive(Debug, Clone, Serialize)]
pub struct CertificateInputs {
    /// Orbit size of the translation group.
    pub ell: usize,
    /// Volume of the torus.
    pub volume: f64,
    /// Gaussian curvature at the center. Identically zero on a flat torus.
    pub curvature: f64,
    /// Minimum of the weight over the grid.
    pub h_min: f64,
    /// Maximum of the weight over the grid.
    pub h_max: f64,
    /// Orbit Robin constant of the symmetrized Green function.
    pub a_tilde: f64,
    /// Linear Green expansion coefficient in the first coordinate, when
    /// the certificate required a local expansion.
    pub b1: Option<f64>,
    /// Linear Green expansion coefficient in the second coordinate.
    pub b2: Option<f64>,
    /// Quadratic weight expansion coefficients `k1..k5`, when fitted.
    pub k: Option<[f64; 5]>,
}

/// Outcome of a numerical existence certificate.
#[derive(Debug, Clone, Serialize)]
pub struct CertificateReport {
    /// Universal lower bound for the critical functional.
    pub lower_bound_value: f64,
    /// Left-hand side of the mass condition: `log` of the total weight.
    pub cond_lhs: f64,
    /// Right-hand side of the mass condition.
    pub cond_rhs: f64,
    /// Whether the mass condition holds strictly.
    pub cond_holds: bool,
    /// Energy-gap coefficient, when the certificate evaluated it.
    pub hy2_value: Option<f64>,
    /// Whether the energy-gap coefficient is strictly positive.
    pub hy2_holds: Option<bool>,
    /// Echo of the inputs that produced the verdicts.
    pub inputs: CertificateInputs,
}

/// One row of the test-function energy table.
#[derive(Debug, Clone, Serialize)]
pub struct TestEnergyRow {
    /// Concentration parameter.
    pub eps: f64,
    /// Cap radius multiplier actually used after resolution capping.
    pub r_used: f64,
    /// Critical functional evaluated on the built test function.
    pub j_numeric: f64,
    /// Critical level the family concentrates towards.
    pub c_star: f64,
    /// `j_numeric - c_star`.
    pub gap_numeric: f64,
    /// Closed-form prediction for the same gap.
    pub gap_asymptotic: f64,
}

/// Validates that a certificate weight is strictly positive and invariant
/// under the group.
fn check_weight(h: &GridField, group: &TranslationGroup) -> Result<()> {
    let min = h.min_value();
    if !(min > 0.0) {
        return Err(MeanFieldError::Config(format!(
            "weight must be strictly positive, found minimum {min}"
        )));
    }
    let scale = h.max_value().abs().max(1.0);
    let defect = h.invariance_defect(group)?;
    if defect > WEIGHT_INVARIANCE_TOL * scale {
        return Err(MeanFieldError::Config(format!(
            "weight is not invariant under the group, defect {defect:.3e}"
        )));
    }
    Ok(())
}

/// Orbit Robin constant of the group, independent of the center for
/// translation groups.
fn group_robin_constant(h: &GridField, group: &TranslationGroup) -> Result<f64> {
    let green = GreenFunction::new(
        h.lattice().clone(),
        group.clone(),
        Point::new(0.0, 0.0),
    )?;
    green.tilde_robin()
}

/// Maximum of the weight score `2 log(pi ell h) + a_tilde` over the grid
/// together with the first row-major node attaining it.
fn score_max(h: &GridField, group: &TranslationGroup, a_tilde: f64) -> (f64, Point) {
    let ell = group.ell() as f64;
    let (i, j) = h.argmax();
    let h_max = h.max_value();
    let score = 2.0 * (PI * ell * h_max).ln() + a_tilde;
    (score, h.node_point(i, j))
}

/// Universal lower bound for the critical mean field functional:
/// `-4 pi ell max_x (2 log(pi ell h(x)) + a_tilde) - 8 pi ell`.
///
/// # Errors
///
/// Returns a configuration error when the weight is not strictly positive
/// or not invariant, or when the lattice is not the unit square.
pub fn energy_lower_bound(h: &GridField, group: &TranslationGroup) -> Result<f64> {
    check_weight(h, group)?;
    let a_tilde = group_robin_constant(h, group)?;
    let ell = group.ell() as f64;
    let (score, _) = score_max(h, group, a_tilde);
    Ok(-4.0 * PI * ell * score - 8.0 * PI * ell)
}

/// Evaluates the mass condition: existence at the critical coupling is
/// certified when `log` of the total weight exceeds
/// `1 + max_x (2 log(pi ell h(x)) + a_tilde) / 2`.
///
/// The returned report leaves the energy-gap fields unset.
///
/// # Errors
///
/// Returns a configuration error on an invalid weight or lattice.
pub fn mass_condition_certificate(
    h: &GridField,
    group: &TranslationGroup,
) -> Result<CertificateReport> {
    check_weight(h, group)?;
    let a_tilde = group_robin_constant(h, group)?;
    let ell = group.ell() as f64;
    let (score, _) = score_max(h, group, a_tilde);
    let lower_bound_value = -4.0 * PI * ell * score - 8.0 * PI * ell;
    let cond_lhs = h.integrate().ln();
    let cond_rhs = 1.0 + 0.5 * score;
    Ok(CertificateReport {
        lower_bound_value,
        cond_lhs,
        cond_rhs,
        cond_holds: cond_lhs > cond_rhs,
        hy2_value: None,
        hy2_holds: None,
        inputs: CertificateInputs {
            ell: group.ell(),
            volume: h.lattice().volume(),
            curvature: 0.0,
            h_min: h.min_value(),
            h_max: h.max_value(),
            a_tilde,
            b1: None,
            b2: None,
            k: None,
        },
    })
}

/// Fits the quadratic expansion
/// `h(p + y) - h(p) = k1 y1 + k2 y2 + k3 y1^2 + 2 k4 y1 y2 + k5 y2^2`
/// by least squares over the grid nodes within `radius` of `p`.
fn fit_weight_quadratic(h: &GridField, p: &Point, radius: f64) -> Result<[f64; 5]> {
    if !(radius > 0.0) || radius < 4.0 * h.cell_extent() {
        return Err(MeanFieldError::Config(format!(
            "weight fit radius {radius:.3e} spans fewer than four grid cells"
        )));
    }
    let h_at_p = h.sample_bilinear(p.x1(), p.x2());
    let mut normal = [[0.0f64; 6]; 6];
    let mut rhs = [0.0f64; 6];
    let mut count = 0usize;
    for i in 0..h.n1() {
        for j in 0..h.n2() {
            let node = h.node_point(i, j);
            let d1 = wrap_coord(node.x1() - p.x1());
            let d2 = wrap_coord(node.x2() - p.x2());
            let d = d1.hypot(d2);
            if d > radius {
                continue;
            }
            let z1 = d1 / radius;
            let z2 = d2 / radius;
            let basis = [1.0, z1, z2, z1 * z1, z1 * z2, z2 * z2];
            let f = h.values()[h.idx(i, j)] - h_at_p;
            for a in 0..6 {
                for b in 0..6 {
                    normal[a][b] += basis[a] * basis[b];
                }
                rhs[a] += basis[a] * f;
            }
            count += 1;
        }
    }
    if count < 12 {
        return Err(MeanFieldError::Config(format!(
            "weight fit disk contains only {count} grid nodes"
        )));
    }
    let x = solve_6x6(normal, rhs)?;
    let s = 1.0 / radius;
    Ok([
        x[1] * s,
        x[2] * s,
        x[3] * s * s,
        x[4] * s * s / 2.0,
        x[5] * s * s,
    ])
}

/// Reduces a coordinate difference to the symmetric interval `[-1/2, 1/2)`.
fn wrap_coord(d: f64) -> f64 {
    d - d.round()
}

/// Evaluates the energy-gap condition at the center `p`: existence at the
/// critical coupling is certified when
/// `8 pi ell / V - 2 K(p) + b1^2 + b2^2 - lap_g h(p) / h(p)
///  + 2 (k1 b1 + k2 b2) / h(p)` is strictly positive, where the Laplacian
/// of the weight is read off the quadratic fit as `-2 (k3 + k5)` and the
/// curvature vanishes on a flat torus.
///
/// The returned report also carries the mass condition fields.
///
/// # Errors
///
/// Returns a precondition error when `p` does not attain the maximum of
/// the weight score within tolerance, and a configuration error on an
/// invalid weight or lattice.
pub fn energy_gap_certificate(
    h: &GridField,
    group: &TranslationGroup,
    p: &Point,
) -> Result<CertificateReport> {
    let mut report = mass_condition_certificate(h, group)?;
    let a_tilde = report.inputs.a_tilde;
    let ell = group.ell() as f64;
    let (max_score, _) = score_max(h, group, a_tilde);
    let h_at_p = h.sample_bilinear(p.x1(), p.x2());
    let score_at_p = 2.0 * (PI * ell * h_at_p).ln() + a_tilde;
    if score_at_p < max_score - MAXIMIZER_TOL * max_score.abs().max(1.0) {
        return Err(MeanFieldError::Precondition(format!(
            "certificate center ({}, {}) does not attain the weight score \
             maximum: {score_at_p:.12} < {max_score:.12}",
            p.x1(),
            p.x2()
        )));
    }
    let green = GreenFunction::new(h.lattice().clone(), group.clone(), *p)?;
    let expansion = green.fit_expansion(None)?;
    let exclusion = group.exclusion_radius(p, h.lattice());
    let fit_radius = (6.0 * h.cell_extent()).max(0.15 * exclusion);
    let k = fit_weight_quadratic(h, p, fit_radius)?;
    let volume = h.lattice().volume();
    let laplacian_h = -2.0 * (k[2] + k[4]);
    let hy2 = 8.0 * PI * ell / volume + expansion.b1 * expansion.b1
        + expansion.b2 * expansion.b2
        - laplacian_h / h_at_p
        + 2.0 * (k[0] * expansion.b1 + k[1] * expansion.b2) / h_at_p;
    report.hy2_value = Some(hy2);
    report.hy2_holds = Some(hy2 > 0.0);
    report.inputs.b1 = Some(expansion.b1);
    report.inputs.b2 = Some(expansion.b2);
    report.inputs.k = Some(k);
    Ok(report)
}

/// Height of the concentration cap: `2 log(1 + R^2 / 8) - 4 log(R eps)`,
/// chosen so the cap meets the Green branch continuously at radius
/// `R eps`.
pub fn cap_height(radius: f64, eps: f64) -> f64 {
    2.0 * (1.0 + radius * radius / 8.0).ln() - 4.0 * (radius * eps).ln()
}

/// Cap radius multiplier `R(eps) = (eps^2 log(-log eps))^(-1/4)`, tuned so
/// the neglected terms in the energy expansion stay below the leading gap.
///
/// # Errors
///
/// Returns a configuration error unless `0 < eps < 0.36`, the domain on
/// which the iterated logarithm is positive.
pub fn concentration_radius_rule(eps: f64) -> Result<f64> {
    if !(eps > 0.0 && eps < RULE_MAX_EPS) {
        return Err(MeanFieldError::Config(format!(
            "concentration parameter {eps} outside the radius rule domain \
             (0, {RULE_MAX_EPS})"
        )));
    }
    Ok((1.0 / (eps * eps * (-eps.ln()).ln())).powf(0.25))
}

/// Concentrating test-function family for the critical coupling.
///
/// The family is anchored at the first row-major grid maximizer of the
/// weight score. Each member equals a logarithmic cap near every orbit
/// point of the center, a quintic blend onto the symmetrized Green
/// function across an annulus, and the Green function itself outside.
#[derive(Debug, Clone)]
pub struct TestFunctionFamily {
    green: GreenFunction,
    h: GridField,
    gtilde: GridField,
    a_tilde: f64,
    b1: f64,
    b2: f64,
    h_at_center: f64,
    exclusion: f64,
    report: CertificateReport,
}

impl TestFunctionFamily {
    /// Builds the family for the weight `h`, anchored at the grid
    /// maximizer of the weight score. Samples the symmetrized Green
    /// function once on the weight's grid and caches it.
    ///
    /// # Errors
    ///
    /// Returns a configuration error on an invalid weight, a lattice
    /// other than the unit square, or a grid incompatible with the group
    /// shifts.
    pub fn new(h: &GridField, group: &TranslationGroup) -> Result<Self> {
        check_weight(h, group)?;
        group.grid_shift_indices(h.n1(), h.n2())?;
        let a_tilde = group_robin_constant(h, group)?;
        let (_, center) = score_max(h, group, a_tilde);
        let report = energy_gap_certificate(h, group, &center)?;
        let green = GreenFunction::new(h.lattice().clone(), group.clone(), center)?;
        let gtilde = green.sample_grid_regularized(h.n1(), h.n2())?;
        let exclusion = group.exclusion_radius(&center, h.lattice());
        let (b1, b2) = (
            report.inputs.b1.unwrap_or(0.0),
            report.inputs.b2.unwrap_or(0.0),
        );
        let h_at_center = h.sample_bilinear(center.x1(), center.x2());
        Ok(Self {
            green,
            h: h.clone(),
            gtilde,
            a_tilde,
            b1,
            b2,
            h_at_center,
            exclusion,
            report,
        })
    }

    /// Concentration center of the family.
    pub fn center(&self) -> &Point {
        self.green.center()
    }

    /// Orbit Robin constant at the center.
    pub fn a_tilde(&self) -> f64 {
        self.a_tilde
    }

    /// Certificate report evaluated at the center during construction.
    pub fn report(&self) -> &CertificateReport {
        &self.report
    }

    /// Cached grid samples of the symmetrized Green function.
    pub fn green_samples(&self) -> &GridField {
        &self.gtilde
    }

    /// Critical level the family concentrates towards:
    /// `-8 pi ell - 4 pi ell a_tilde - 8 pi ell log(pi ell h(p))`.
    pub fn c_star(&self) -> f64 {
        let ell = self.green.ell() as f64;
        -8.0 * PI * ell
            - 4.0 * PI * ell * self.a_tilde
            - 8.0 * PI * ell * (PI * ell * self.h_at_center).ln()
    }

    /// Cap radius multiplier actually used at `eps`: the radius rule
    /// capped so the cap stays inside the exclusion radius of the orbit.
    ///
    /// # Errors
    ///
    /// Returns a configuration error when `eps` is outside the radius
    /// rule domain.
    pub fn radius_used(&self, eps: f64) -> Result<f64> {
        let rule = concentration_radius_rule(eps)?;
        Ok(rule.min(CAP_SAFETY * self.exclusion / eps))
    }

    /// Builds the family member at concentration parameter `eps` on the
    /// weight's grid and symmetrizes it, so the result is exactly
    /// invariant under the group.
    ///
    /// # Errors
    ///
    /// Returns a configuration error when `eps` is outside the radius
    /// rule domain or the cap radius spans fewer than eight grid cells.
    pub fn build(&self, eps: f64) -> Result<GridField> {
        let r_used = self.radius_used(eps)?;
        let cap_radius = r_used * eps;
        let min_radius = MIN_CAP_CELLS * self.gtilde.cell_extent();
        if cap_radius < min_radius {
            return Err(MeanFieldError::Config(format!(
                "cap radius {cap_radius:.3e} spans fewer than eight grid \
                 cells at eps {eps}; refine the grid or increase eps"
            )));
        }
        let c = cap_height(r_used, eps);
        let mut phi = self.gtilde.clone();
        let orbit: Vec<Point> = self.green.orbit().to_vec();
        let (n1, n2) = (phi.n1(), phi.n2());
        for i in 0..n1 {
            for j in 0..n2 {
                let node = self.gtilde.node_point(i, j);
                let mut best = f64::INFINITY;
                let mut disp = [0.0f64; 2];
                for q in &orbit {
                    let d1 = wrap_coord(node.x1() - q.x1());
                    let d2 = wrap_coord(node.x2() - q.x2());
                    let d = d1.hypot(d2);
                    if d < best {
                        best = d;
                        disp = [d1, d2];
                    }
                }
                if best >= 2.0 * cap_radius {
                    continue;
                }
                let idx = phi.idx(i, j);
                let alpha = self.b1 * disp[0] + self.b2 * disp[1];
                if best <= cap_radius {
                    let bubble = (best * best / (8.0 * eps * eps)).ln_1p();
                    phi.values_mut()[idx] = c - 2.0 * bubble + self.a_tilde + alpha;
                } else {
                    let g = self.gtilde.values()[idx];
                    let beta = g + 4.0 * best.ln() - self.a_tilde - alpha;
                    let eta =
                        1.0 - smoothstep_quintic((best - cap_radius) / cap_radius);
                    phi.values_mut()[idx] = g - eta * beta;
                }
            }
        }
        phi.symmetrize(self.green.group())
    }

    /// Evaluates the critical functional on built family members:
    /// `J = dirichlet_energy / 2 - rho log(int h e^phi) + rho mean(phi)`
    /// with `rho = 8 pi ell`, using the finite-difference energy.
    ///
    /// # Errors
    ///
    /// Propagates build errors and numerical overflow in the exponential
    /// integral.
    pub fn energy_numeric(&self, eps_list: &[f64]) -> Result<Vec<TestEnergyRow>> {
        let ell = self.green.ell() as f64;
        let rho = 8.0 * PI * ell;
        let c_star = self.c_star();
        let mut rows = Vec::with_capacity(eps_list.len());
        for &eps in eps_list {
            let phi = self.build(eps)?;
            let mass = weighted_exp_integral(&self.h, &phi)?;
            let j_numeric =
                0.5 * dirichlet_energy_fd(&phi) - rho * mass.ln() + rho * phi.mean();
            rows.push(TestEnergyRow {
                eps,
                r_used: self.radius_used(eps)?,
                j_numeric,
                c_star,
                gap_numeric: j_numeric - c_star,
                gap_asymptotic: self.energy_asymptotic(eps)? - c_star,
            });
        }
        Ok(rows)
    }

    /// Closed-form energy prediction
    /// `c_star - 32 pi ell hy2 eps^2 log(1 / eps)` with the energy-gap
    /// coefficient fitted at construction.
    ///
    /// # Errors
    ///
    /// Returns a configuration error unless `0 < eps < 1`.
    pub fn energy_asymptotic(&self, eps: f64) -> Result<f64> {
        if !(eps > 0.0 && eps < 1.0) {
            return Err(MeanFieldError::Config(format!(
                "concentration parameter {eps} outside (0, 1)"
            )));
        }
        let ell = self.green.ell() as f64;
        let hy2 = self.report.hy2_value.unwrap_or(f64::NAN);
        Ok(self.c_star() - 32.0 * PI * ell * hy2 * eps * eps * (1.0 / eps).ln())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::torus::TorusLattice;
    use approx::{assert_abs_diff_eq, assert_relative_eq};

    fn pair_group() -> TranslationGroup {
        TranslationGroup::new(&[[0.0, 0.0], [0.5, 0.0]]).unwrap()
    }

    fn uniform(n: usize) -> GridField {
        GridField::constant(n, n, TorusLattice::unit_square(), 1.0).unwrap()
    }

    fn cosine_weight(n: usize, amplitude: f64) -> GridField {
        GridField::from_fn(n, n, TorusLattice::unit_square(), |s1, _| {
            1.0 + amplitude * (4.0 * PI * s1).cos()
        })
        .unwrap()
    }

    #[test]
    fn series_bound_chain_is_tight_and_certifies_the_threshold() {
        let bounds = series_bounds();
        assert_relative_eq!(bounds.a_p, -5.242131703646037, epsilon = 1e-12);
        assert_relative_eq!(bounds.lambda_half, -(2.0f64.ln()), epsilon = 1e-12);
        assert_relative_eq!(bounds.a_tilde, -5.935278884205982, epsilon = 1e-11);
        assert_relative_eq!(
            bounds.maxim_threshold,
            -5.675754132818691,
            epsilon = 1e-12
        );
        assert_relative_eq!(
            bounds.bound_approx1,
            -0.952657895526051,
            epsilon = 1e-12
        );
        assert_relative_eq!(bounds.bound_approx2, 0.693161147320162, epsilon = 1e-12);
        assert!(bounds.lhs1 <= bounds.bound_approx1);
        assert!(bounds.lhs2 <= bounds.bound_approx2);
        assert!((bounds.lhs1 - bounds.bound_approx1).abs() < 1e-3);
        assert!((bounds.lhs2 - bounds.bound_approx2).abs() < 1e-3);
        assert!(bounds.bound_approx1 + bounds.bound_approx2 < 0.0);
        assert!(bounds.a_tilde < bounds.maxim_threshold);
    }

    #[test]
    fn lower_bound_matches_closed_forms() {
        let lb2 = energy_lower_bound(&uniform(64), &pair_group()).unwrap();
        assert_relative_eq!(lb2, 6.522568419064264, epsilon = 1e-9);
        let identity = TranslationGroup::identity();
        let lb1 = energy_lower_bound(&uniform(64), &identity).unwrap();
        assert_relative_eq!(lb1, 11.971628570746539, epsilon = 1e-9);
    }

    #[test]
    fn lower_bound_shifts_exactly_under_weight_scaling() {
        let group = pair_group();
        let h = uniform(64);
        let scaled =
            GridField::constant(64, 64, TorusLattice::unit_square(), 2.5).unwrap();
        let lb = energy_lower_bound(&h, &group).unwrap();
        let lb_scaled = energy_lower_bound(&scaled, &group).unwrap();
        assert_relative_eq!(
            lb_scaled - lb,
            -16.0 * PI * 2.5f64.ln(),
            epsilon = 1e-9
        );
    }

    #[test]
    fn mass_condition_holds_for_uniform_weight() {
        let report = mass_condition_certificate(&uniform(64), &pair_group()).unwrap();
        assert_relative_eq!(report.cond_lhs, 0.0, epsilon = 1e-12);
        assert_relative_eq!(report.cond_rhs, -0.1297623756936459, epsilon = 1e-9);
        assert!(report.cond_holds);
        assert!(report.hy2_value.is_none());
        assert_eq!(report.inputs.ell, 2);
    }

    #[test]
    fn mass_condition_agrees_with_trivial_competitor() {
        let group = pair_group();
        let lattice = TorusLattice::unit_square();
        let bump = GridField::from_fn(128, 128, lattice, |s1, s2| {
            let x = Point::new(s1, s2);
            let mut v = 1.0;
            for q in [Point::new(0.0, 0.0), Point::new(0.5, 0.0)] {
                let d = TorusLattice::unit_square().distance(&x, &q);
                v += 50.0 * (-d * d / (2.0 * 0.05 * 0.05)).exp();
            }
            v
        })
        .unwrap()
        .symmetrize(&group)
        .unwrap();
        for h in [uniform(128), bump] {
            let report = mass_condition_certificate(&h, &group).unwrap();
            let trivial = -16.0 * PI * report.cond_lhs;
            assert_eq!(report.cond_holds, trivial < report.lower_bound_value);
        }
    }

    #[test]
    fn bump_weight_fails_the_mass_condition() {
        let group = pair_group();
        let lattice = TorusLattice::unit_square();
        let bump = GridField::from_fn(128, 128, lattice, |s1, s2| {
            let x = Point::new(s1, s2);
            let mut v = 1.0;
            for q in [Point::new(0.0, 0.0), Point::new(0.5, 0.0)] {
                let d = TorusLattice::unit_square().distance(&x, &q);
                v += 50.0 * (-d * d / (2.0 * 0.05 * 0.05)).exp();
            }
            v
        })
        .unwrap()
        .symmetrize(&group)
        .unwrap();
        let report = mass_condition_certificate(&bump, &group).unwrap();
        assert!(!report.cond_holds);
    }

    #[test]
    fn energy_gap_coefficient_for_uniform_weight_is_the_volume_term() {
        let h = uniform(128);
        let report =
            energy_gap_certificate(&h, &pair_group(), &Point::new(0.0, 0.0)).unwrap();
        let hy2 = report.hy2_value.unwrap();
        assert_abs_diff_eq!(hy2, 16.0 * PI, epsilon = 1e-6);
        assert_eq!(report.hy2_holds, Some(true));
        let k = report.inputs.k.unwrap();
        for coef in k {
            assert!(coef.abs() < 1e-9, "spurious weight coefficient {coef}");
        }
    }

    #[test]
    fn energy_gap_coefficient_matches_cosine_weight_expansion() {
        let h = cosine_weight(256, 0.01);
        let report =
            energy_gap_certificate(&h, &pair_group(), &Point::new(0.0, 0.0)).unwrap();
        let hy2 = report.hy2_value.unwrap();
        assert_abs_diff_eq!(hy2, 48.70198077013541, epsilon = 2e-2);
        let k = report.inputs.k.unwrap();
        assert_relative_eq!(k[2], -0.08 * PI * PI, max_relative = 2e-2);
        assert!(k[0].abs() < 1e-6);
        assert!(k[1].abs() < 1e-6);
    }

    #[test]
    fn energy_gap_certificate_rejects_off_maximum_center() {
        let h = cosine_weight(128, 0.01);
        let err = energy_gap_certificate(&h, &pair_group(), &Point::new(0.25, 0.25))
            .unwrap_err();
        assert!(matches!(err, MeanFieldError::Precondition(_)));
    }

    #[test]
    fn radius_rule_matches_pinned_value_and_domain() {
        assert_relative_eq!(
            concentration_radius_rule(0.01).unwrap(),
            8.995544775972203,
            epsilon = 1e-9
        );
        assert!(concentration_radius_rule(0.36).is_err());
        assert!(concentration_radius_rule(0.0).is_err());
        assert!(concentration_radius_rule(1.0).is_err());
    }

    #[test]
    fn cap_height_matches_pinned_value() {
        assert_relative_eq!(
            cap_height(2.0, 0.1),
            7.2486818659527295,
            epsilon = 1e-12
        );
    }

    #[test]
    fn test_function_is_continuous_across_the_cap_interface() {
        let family = TestFunctionFamily::new(&uniform(128), &pair_group()).unwrap();
        let eps = 0.05;
        let r_used = family.radius_used(eps).unwrap();
        let cap_radius = r_used * eps;
        let c = cap_height(r_used, eps);
        let p = *family.center();
        for step in 0..12 {
            let theta = 2.0 * PI * step as f64 / 12.0;
            let y = [cap_radius * theta.cos(), cap_radius * theta.sin()];
            let x = p.shifted(y);
            let alpha = family.b1 * y[0] + family.b2 * y[1];
            let cap = c - 2.0 * (cap_radius * cap_radius / (8.0 * eps * eps)).ln_1p()
                + family.a_tilde
                + alpha;
            let g = family.green.eval(&x).unwrap();
            let beta = g + 4.0 * cap_radius.ln() - family.a_tilde - alpha;
            let outside = g - beta;
            assert_abs_diff_eq!(cap, outside, epsilon = 1e-8);
        }
    }

    #[test]
    fn test_function_is_exactly_invariant_and_matches_green_far_field() {
        let group = pair_group();
        let family = TestFunctionFamily::new(&uniform(128), &group).unwrap();
        let eps = 0.05;
        let phi = family.build(eps).unwrap();
        assert_eq!(phi.invariance_defect(&group).unwrap(), 0.0);
        let cap_radius = family.radius_used(eps).unwrap() * eps;
        let mut checked = 0usize;
        for i in 0..phi.n1() {
            for j in 0..phi.n2() {
                let node = phi.node_point(i, j);
                let far = family.green.orbit().iter().all(|q| {
                    TorusLattice::unit_square().distance(&node, q)
                        >= 2.0 * cap_radius + 1e-9
                });
                if far {
                    let idx = phi.idx(i, j);
                    let diff =
                        (phi.values()[idx] - family.gtilde.values()[idx]).abs();
                    assert!(diff < 1e-12, "far-field drift {diff}");
                    checked += 1;
                }
            }
        }
        assert!(checked > 0);
        let at_center = phi.values()[phi.idx(0, 0)];
        let expected = cap_height(family.radius_used(eps).unwrap(), eps) + family.a_tilde;
        assert_abs_diff_eq!(at_center, expected, epsilon = 1e-6);
    }

    #[test]
    fn test_function_build_rejects_under_resolved_grids() {
        let family = TestFunctionFamily::new(&uniform(64), &pair_group()).unwrap();
        let err = family.build(0.05).unwrap_err();
        assert!(matches!(err, MeanFieldError::Config(_)));
    }

    #[test]
    fn test_energy_gap_is_invariant_under_weight_scaling() {
        let group = pair_group();
        let h = uniform(128);
        let scaled =
            GridField::constant(128, 128, TorusLattice::unit_square(), 3.0).unwrap();
        let rows = TestFunctionFamily::new(&h, &group)
            .unwrap()
            .energy_numeric(&[0.05])
            .unwrap();
        let rows_scaled = TestFunctionFamily::new(&scaled, &group)
            .unwrap()
            .energy_numeric(&[0.05])
            .unwrap();
        assert_abs_diff_eq!(
            rows[0].gap_numeric,
            rows_scaled[0].gap_numeric,
            epsilon = 1e-8
        );
    }

    #[test]
    fn asymptotic_energy_matches_closed_form() {
        let family = TestFunctionFamily::new(&uniform(128), &pair_group()).unwrap();
        assert_abs_diff_eq!(
            family.energy_asymptotic(0.05).unwrap(),
            -69.16816420571371,
            epsilon = 1e-6
        );
        let rows = family.energy_numeric(&[0.05]).unwrap();
        assert_abs_diff_eq!(
            rows[0].gap_asymptotic,
            -75.69073262477798,
            epsilon = 1e-6
        );
        assert_relative_eq!(
            rows[0].gap_numeric,
            rows[0].j_numeric - rows[0].c_star,
            epsilon = 1e-12
        );
    }

    #[test]
    fn energy_rows_echo_the_radius_cap() {
        let family = TestFunctionFamily::new(&uniform(128), &pair_group()).unwrap();
        let rows = family.energy_numeric(&[0.08, 0.05]).unwrap();
        assert_eq!(rows.len(), 2);
        for row in &rows {
            assert!(row.j_numeric.is_finite());
            assert_relative_eq!(
                row.r_used,
                family.radius_used(row.eps).unwrap(),
                epsilon = 1e-15
            );
            assert!(row.r_used * row.eps <= CAP_SAFETY * family.exclusion + 1e-12);
        }
    }
}
