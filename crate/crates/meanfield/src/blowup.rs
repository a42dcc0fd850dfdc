//! Bubble profile and concentration diagnostics.
//!
//! When minimizers concentrate as the coupling approaches the
//! threshold, zooming into the maximum at the scale
//! `r_eps = sqrt(lambda_eps / (rho h(x_eps))) e^{-c_eps/2}` must
//! reproduce the entire-plane bubble `phi(y) = -2 log(1 + |y|^2 / 8)`,
//! the Chen-Li classified solution of `-Delta phi = e^phi` with total
//! integral `8 pi`. The module evaluates the bubble, the concentration
//! scale, rescaled radial profiles of a state, and the fraction of the
//! weighted mass captured by balls around each orbit point of the
//! maximum, which tends to `1/ell` per point under symmetric blow-up.

use std::f64::consts::{PI, TAU};

use crate::error::{MeanFieldError, Result};
use crate::solve::{MinimizerState, ProblemSpec};

/// Number of radii in a sampled radial profile.
const PROFILE_RADII: usize = 81;

/// Number of angles averaged per radius.
const PROFILE_ANGLES: usize = 16;

/// Minimum number of grid cells a diagnostic radius must span.
const MIN_CELLS: f64 = 4.0;

/// The entire bubble `phi(y) = -2 log(1 + |y|^2 / 8)`.
pub fn bubble_profile(y: [f64; 2]) -> f64 {
    bubble_radial(y[0].hypot(y[1]))
}

/// The bubble as a function of the radius.
pub fn bubble_radial(r: f64) -> f64 {
    -2.0 * (r * r / 8.0).ln_1p()
}

/// Closed form of `integral over B_R of e^phi`, equal to
/// `8 pi R^2 / (R^2 + 8)`; tends to `8 pi` as `R` grows.
pub fn bubble_mass(r: f64) -> f64 {
    8.0 * PI * r * r / (r * r + 8.0)
}

/// Concentration scale
/// `r_eps = sqrt(lambda_eps / (rho h(x_eps))) e^{-c_eps / 2}` of a
/// state; invariant under shifting the state by a constant.
///
/// # Errors
///
/// Returns a precondition error unless `lambda_eps > 0`.
pub fn r_epsilon(state: &MinimizerState, spec: &ProblemSpec) -> Result<f64> {
    if !(state.lambda_eps > 0.0) {
        return Err(MeanFieldError::Precondition(format!(
            "concentration scale needs lambda_eps > 0, got {}",
            state.lambda_eps
        )));
    }
    let h_at_max = spec.h().sample_bilinear(state.x_eps.x1(), state.x_eps.x2());
    Ok((state.lambda_eps / (spec.rho() * h_at_max)).sqrt() * (-state.c_eps / 2.0).exp())
}

/// Radial table of a rescaled state around its maximum.
#[derive(Debug, Clone)]
pub struct RadialProfile {
    /// Sampled radii in bubble coordinates, from 0 to the requested
    /// radius.
    pub radii: Vec<f64>,
    /// Angular mean of `phi_eps(y) = u(x_eps + r_eps y) - c_eps` per
    /// radius.
    pub values: Vec<f64>,
    /// The bubble at the same radii.
    pub bubble: Vec<f64>,
    /// Largest deviation from the bubble over every sampled radius and
    /// angle, not just the angular means.
    pub sup_distance: f64,
}

/// Samples `phi_eps(y) = u(x_eps + r_eps y) - c_eps` by bilinear
/// interpolation for `|y| <= r_max` over 81 radii and 16 angles.
///
/// # Errors
///
/// Returns a configuration error when the sampled ball reaches half
/// the minimal orbit separation of the maximum, and a resolution error
/// when it spans fewer than 4 grid cells.
pub fn rescaled_profile(
    state: &MinimizerState,
    spec: &ProblemSpec,
    r_max: f64,
) -> Result<RadialProfile> {
    if !(r_max > 0.0) {
        return Err(MeanFieldError::Config(format!(
            "profile radius must be positive, got {r_max}"
        )));
    }
    let r_eps = r_epsilon(state, spec)?;
    let reach = r_max * r_eps;
    check_reach(state, spec, reach)?;
    if reach < MIN_CELLS * state.u.cell_extent() {
        return Err(MeanFieldError::Resolution(format!(
            "profile ball radius {reach:e} spans fewer than {MIN_CELLS} grid cells"
        )));
    }

    let mut radii = Vec::with_capacity(PROFILE_RADII);
    let mut values = Vec::with_capacity(PROFILE_RADII);
    let mut bubble = Vec::with_capacity(PROFILE_RADII);
    let mut sup = 0.0f64;
    for k in 0..PROFILE_RADII {
        let r = r_max * k as f64 / (PROFILE_RADII - 1) as f64;
        let reference = bubble_radial(r);
        let mut mean = 0.0f64;
        for a in 0..PROFILE_ANGLES {
            let theta = TAU * a as f64 / PROFILE_ANGLES as f64;
            let s1 = state.x_eps.x1() + r_eps * r * theta.cos();
            let s2 = state.x_eps.x2() + r_eps * r * theta.sin();
            let value = state.u.sample_bilinear(s1, s2) - state.c_eps;
            sup = sup.max((value - reference).abs());
            mean += value;
        }
        radii.push(r);
        values.push(mean / PROFILE_ANGLES as f64);
        bubble.push(reference);
    }
    Ok(RadialProfile {
        radii,
        values,
        bubble,
        sup_distance: sup,
    })
}

/// Fraction of the weighted mass `h e^u / lambda_eps` captured by the
/// ball of radius `r_max * r_eps` around each orbit point of the
/// maximum; returned in orbit order. Under symmetric concentration
/// each fraction approaches `1 / ell`.
///
/// # Errors
///
/// Returns a configuration error when the balls overlap (radius at or
/// past half the orbit separation) and a resolution error when a ball
/// spans fewer than 4 grid cells.
pub fn mass_fractions(
    state: &MinimizerState,
    spec: &ProblemSpec,
    r_max: f64,
) -> Result<Vec<f64>> {
    if !(r_max > 0.0) {
        return Err(MeanFieldError::Config(format!(
            "mass fraction radius must be positive, got {r_max}"
        )));
    }
    let r_eps = r_epsilon(state, spec)?;
    let reach = r_max * r_eps;
    check_reach(state, spec, reach)?;
    if reach < MIN_CELLS * state.u.cell_extent() {
        return Err(MeanFieldError::Resolution(format!(
            "mass fraction ball radius {reach:e} spans fewer than {MIN_CELLS} grid cells"
        )));
    }

    let u = &state.u;
    let h = spec.h();
    let lattice = spec.lattice();
    let weight = u.cell_weight() / state.lambda_eps;
    let orbit = spec.group().orbit(&state.x_eps);
    let mut fractions = vec![0.0f64; orbit.len()];
    for i in 0..u.n1() {
        for j in 0..u.n2() {
            let node = u.node_point(i, j);
            let density = weight * h.values()[u.idx(i, j)] * u.values()[u.idx(i, j)].exp();
            for (frac, q) in fractions.iter_mut().zip(&orbit) {
                if lattice.distance(&node, q) <= reach {
                    *frac += density;
                }
            }
        }
    }
    Ok(fractions)
}

fn check_reach(state: &MinimizerState, spec: &ProblemSpec, reach: f64) -> Result<()> {
    let sep = spec
        .group()
        .min_orbit_separation(&state.x_eps, spec.lattice());
    if reach >= 0.5 * sep {
        return Err(MeanFieldError::Config(format!(
            "ball radius {reach:e} reaches half the orbit separation {sep:e}; \
             balls around orbit points would overlap"
        )));
    }
    Ok(())
}

/// Aggregated concentration diagnostics of one state.
#[derive(Debug, Clone)]
pub struct BubbleDiagnostics {
    /// Concentration scale.
    pub r_eps: f64,
    /// Rescaled radial profile out to radius `min(4, R_used)`.
    pub profile: RadialProfile,
    /// Sup-norm distance of the sampled profile from the bubble.
    pub profile_error: f64,
    /// Captured mass fraction per orbit point at radius `R_used`.
    pub mass_fractions: Vec<f64>,
    /// Mass-fraction radius actually used, after capping against the
    /// orbit separation.
    pub r_used: f64,
    /// The monitored ratio `r_eps^2 e^{c_eps / 2}`, bounded along
    /// blow-up sequences.
    pub scale_height_ratio: f64,
}

impl BubbleDiagnostics {
    /// Runs the full diagnostic at a requested mass-fraction radius,
    /// capping it at `0.99 (sep / 2) / r_eps` so the orbit balls stay
    /// disjoint.
    ///
    /// # Errors
    ///
    /// Returns a configuration error when even the capped radius falls
    /// below 4, and the profile and fraction errors otherwise.
    pub fn diagnose(
        state: &MinimizerState,
        spec: &ProblemSpec,
        r_requested: f64,
    ) -> Result<Self> {
        let r_eps = r_epsilon(state, spec)?;
        let sep = spec
            .group()
            .min_orbit_separation(&state.x_eps, spec.lattice());
        let cap = 0.99 * (0.5 * sep) / r_eps;
        let r_used = r_requested.min(cap);
        if r_used < 4.0 {
            return Err(MeanFieldError::Config(format!(
                "orbit separation {sep:e} caps the mass-fraction radius at {cap:.3}, \
                 below the minimum useful radius 4"
            )));
        }
        let fractions = mass_fractions(state, spec, r_used)?;
        let profile = rescaled_profile(state, spec, r_used.min(4.0))?;
        Ok(Self {
            r_eps,
            profile_error: profile.sup_distance,
            profile,
            mass_fractions: fractions,
            r_used,
            scale_height_ratio: r_eps * r_eps * (state.c_eps / 2.0).exp(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::GridField;
    use crate::spectral::weighted_exp_integral;
    use crate::torus::{TorusLattice, TranslationGroup};
    use approx::assert_relative_eq;
    use std::f64::consts::TAU;

    /// Builds a state around an explicit field without running the
    /// minimizer.
    fn synthetic_state(u: GridField, h: &GridField) -> MinimizerState {
        let (i, j) = u.argmax();
        let x_eps = u.node_point(i, j);
        let lambda_eps = weighted_exp_integral(h, &u).unwrap();
        MinimizerState {
            x_eps,
            c_eps: u.max_value(),
            lambda_eps,
            j_value: f64::NAN,
            grad_norm: f64::NAN,
            residual: f64::NAN,
            iterations: 0,
            converged: true,
            history: Vec::new(),
            u,
        }
    }

    #[test]
    fn bubble_closed_forms() {
        assert_eq!(bubble_profile([0.0, 0.0]), 0.0);
        assert_relative_eq!(
            bubble_profile([3.0, 4.0]),
            -2.0 * (1.0 + 25.0 / 8.0f64).ln(),
            epsilon = 1e-15
        );
        assert_relative_eq!(bubble_mass(2.0), 8.377580409572781, epsilon = 1e-12);
        assert_relative_eq!(bubble_mass(10.0), 23.271056693257727, epsilon = 1e-12);
        assert!((bubble_mass(1e6) - 8.0 * PI).abs() < 1e-9);
    }

    #[test]
    fn bubble_solves_its_equation() {
        // Central finite differences of -Delta phi against e^phi.
        let step = 1e-4;
        for y in [[0.3, 0.1], [1.0, -2.0], [0.0, 2.5]] {
            let lap = (bubble_profile([y[0] + step, y[1]])
                + bubble_profile([y[0] - step, y[1]])
                + bubble_profile([y[0], y[1] + step])
                + bubble_profile([y[0], y[1] - step])
                - 4.0 * bubble_profile(y))
                / (step * step);
            let residual = -lap - bubble_profile(y).exp();
            assert!(residual.abs() < 1e-6, "residual {residual} at {y:?}");
        }
    }

    #[test]
    fn r_epsilon_formula_and_shift_invariance() {
        let n = 32;
        let lattice = TorusLattice::unit_square();
        let group = TranslationGroup::cyclic(2, [1, 0]).unwrap();
        let h = GridField::constant(n, n, lattice, 1.0).unwrap();
        let spec = ProblemSpec::subcritical(group, h.clone(), 0.3).unwrap();

        let zero = GridField::zeros(n, n, lattice).unwrap();
        let state = synthetic_state(zero, &h);
        let r = r_epsilon(&state, &spec).unwrap();
        assert_relative_eq!(r, 0.168583882836184, epsilon = 1e-12);

        let shifted = GridField::constant(n, n, lattice, 0.7).unwrap();
        let state_shifted = synthetic_state(shifted, &h);
        assert_relative_eq!(
            r_epsilon(&state_shifted, &spec).unwrap(),
            r,
            epsilon = 1e-12
        );
    }

    #[test]
    fn profile_recovers_injected_bubble() {
        let n = 256;
        let lattice = TorusLattice::unit_square();
        let group = TranslationGroup::identity();
        let h = GridField::constant(n, n, lattice, 1.0).unwrap();
        let scale = 0.02;
        let center = [0.5, 0.5];
        let u = GridField::from_fn(n, n, lattice, |s1, s2| {
            let d1 = s1 - center[0] - (s1 - center[0]).round();
            let d2 = s2 - center[1] - (s2 - center[1]).round();
            bubble_profile([d1 / scale, d2 / scale])
        })
        .unwrap();
        let state = synthetic_state(u, &h);
        // Pick the coupling that makes the concentration scale come out
        // at the injection scale.
        let rho = state.lambda_eps / (scale * scale);
        let spec = ProblemSpec::with_rho(group, h, rho).unwrap();
        assert_relative_eq!(r_epsilon(&state, &spec).unwrap(), scale, epsilon = 1e-12);

        let profile = rescaled_profile(&state, &spec, 4.0).unwrap();
        assert!(
            profile.sup_distance < 0.05,
            "sup distance {}",
            profile.sup_distance
        );
        assert_eq!(profile.values[0], 0.0);
        // The recovered table decreases radially, within tolerance.
        for pair in profile.values.windows(2) {
            assert!(pair[1] <= pair[0] + 0.05);
        }
    }

    #[test]
    fn uniform_density_fraction_matches_ball_area() {
        let n = 256;
        let lattice = TorusLattice::unit_square();
        let group = TranslationGroup::identity();
        let h = GridField::constant(n, n, lattice, 1.0).unwrap();
        let zero = GridField::zeros(n, n, lattice).unwrap();
        let state = synthetic_state(zero, &h);
        let spec = ProblemSpec::subcritical(group, h, 0.3).unwrap();
        let r_eps = r_epsilon(&state, &spec).unwrap();
        let fractions = mass_fractions(&state, &spec, 1.0).unwrap();
        assert_eq!(fractions.len(), 1);
        let want = PI * r_eps * r_eps / lattice.volume();
        assert_relative_eq!(fractions[0], want, max_relative = 0.02);
    }

    #[test]
    fn orbit_fractions_equal_for_invariant_states() {
        let n = 128;
        let lattice = TorusLattice::unit_square();
        let group = TranslationGroup::cyclic(2, [1, 0]).unwrap();
        let h = GridField::constant(n, n, lattice, 1.0).unwrap();
        let u = GridField::from_fn(n, n, lattice, |s1, s2| {
            (2.0 * TAU * s1).cos() + 0.5 * (TAU * s2).cos()
        })
        .unwrap()
        .project_invariant_mean_zero(&group)
        .unwrap();
        let state = synthetic_state(u, &h);
        let spec = ProblemSpec::subcritical(group, h, 0.3).unwrap();
        let fractions = mass_fractions(&state, &spec, 1.0).unwrap();
        assert_eq!(fractions.len(), 2);
        assert!((fractions[0] - fractions[1]).abs() < 1e-10);
        assert!(fractions.iter().sum::<f64>() <= 1.0 + 1e-8);
    }

    #[test]
    fn overlapping_balls_are_rejected() {
        let n = 64;
        let lattice = TorusLattice::unit_square();
        let group = TranslationGroup::cyclic(2, [1, 0]).unwrap();
        let h = GridField::constant(n, n, lattice, 1.0).unwrap();
        let zero = GridField::zeros(n, n, lattice).unwrap();
        let state = synthetic_state(zero, &h);
        let spec = ProblemSpec::subcritical(group, h, 0.3).unwrap();
        // r_eps is about 0.17, so radius 2 reaches past separation 0.5.
        let err = mass_fractions(&state, &spec, 2.0).unwrap_err();
        assert!(matches!(err, MeanFieldError::Config(_)));
    }

    #[test]
    fn under_resolved_profile_is_rejected() {
        let n = 16;
        let lattice = TorusLattice::unit_square();
        let group = TranslationGroup::identity();
        let h = GridField::constant(n, n, lattice, 1.0).unwrap();
        let mut u = GridField::zeros(n, n, lattice).unwrap();
        // A sharp spike: lambda stays near 1 while c_eps is large, so
        // r_eps shrinks far below the 16-cell grid.
        u.values_mut()[0] = 12.0;
        let state = synthetic_state(u, &h);
        let spec = ProblemSpec::subcritical(group, h, 0.3).unwrap();
        let err = rescaled_profile(&state, &spec, 4.0).unwrap_err();
        assert!(matches!(err, MeanFieldError::Resolution(_)));
    }
}
