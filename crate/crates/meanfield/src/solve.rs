//! Minimization of the mean field functional on the invariant subspace.
//!
//! For a coupling `rho` below the coercivity threshold `8 pi ell`, the
//! functional `J(u) = 1/2 integral |grad u|^2 - rho log integral h e^u`
//! attains its minimum on the invariant mean-zero subspace, and the
//! minimizer solves the mean field equation
//! `laplacian(u) = rho (h e^u / Lambda - 1/V)` with
//! `Lambda = integral h e^u`. The solver is projected Sobolev-gradient
//! descent: the L2 gradient is preconditioned by the inverse Laplacian,
//! which makes step sizes mesh independent, and an Armijo backtracking
//! line search keeps `J` monotone along accepted steps. A continuation
//! driver walks a decreasing subcriticality schedule toward the
//! threshold, warm starting each stage and watching the maximum of `u`
//! for concentration.

use std::f64::consts::PI;

use serde::Serialize;

use crate::error::{MeanFieldError, Result};
use crate::field::GridField;
use crate::spectral::{weighted_exp_integral, SpectralPlan};
use crate::torus::{Point, TorusLattice, TranslationGroup};

/// Default convergence tolerance on the gradient norm and the residual.
pub const DEFAULT_TOL: f64 = 1e-6;

/// Default cap on minimization iterations.
pub const DEFAULT_MAX_ITER: usize = 2000;

/// Default threshold on `c_eps = max u` above which a continuation
/// stage is flagged as blowing up.
pub const DEFAULT_BLOWUP_THRESHOLD: f64 = 12.0;

/// Armijo sufficient-decrease constant.
const ARMIJO_C: f64 = 1e-4;

/// Maximum step halvings in one line search.
const MAX_BACKTRACKS: usize = 40;

/// Relative rise of J a polish step may incur; covers the rounding
/// noise of the energy evaluation on large grids.
const J_NOISE_ALLOWANCE: f64 = 1e-11;

/// Required relative shrink of the strong residual per polish step.
const POLISH_SHRINK: f64 = 0.999;

/// Relative tolerance for the invariance and mean-zero preconditions.
const PROJECTION_TOL: f64 = 1e-10;

/// A minimization problem: the torus, the acting group, the positive
/// invariant weight `h`, and the coupling.
#[derive(Debug, Clone)]
pub struct ProblemSpec {
    group: TranslationGroup,
    h: GridField,
    rho: f64,
    epsilon: Option<f64>,
    /// Convergence tolerance on both the gradient norm and the residual.
    pub tol: f64,
    /// Iteration cap for one minimize run.
    pub max_iter: usize,
    /// Permit couplings at or above the coercivity threshold
    /// `8 pi ell`; minimization refuses them otherwise.
    pub allow_critical: bool,
    /// Threshold on `c_eps` for the continuation blow-up flag.
    pub blowup_threshold: f64,
}

impl ProblemSpec {
    /// Builds a problem at the subcritical coupling
    /// `rho = 8 pi ell (1 - epsilon)`.
    ///
    /// # Errors
    ///
    /// Returns a configuration error unless `0 < epsilon < 1`, `h` is
    /// positive and invariant, and the grid of `h` is compatible with
    /// the group.
    pub fn subcritical(group: TranslationGroup, h: GridField, epsilon: f64) -> Result<Self> {
        if !(epsilon > 0.0 && epsilon < 1.0) {
            return Err(MeanFieldError::Config(format!(
                "subcriticality parameter must lie in (0, 1), got {epsilon}"
            )));
        }
        let rho = 8.0 * PI * group.ell() as f64 * (1.0 - epsilon);
        Self::build(group, h, rho, Some(epsilon))
    }

    /// Builds a problem at an explicit coupling `rho`.
    ///
    /// # Errors
    ///
    /// Returns a configuration error unless `rho` is positive and
    /// finite, `h` is positive and invariant, and the grid of `h` is
    /// compatible with the group.
    pub fn with_rho(group: TranslationGroup, h: GridField, rho: f64) -> Result<Self> {
        Self::build(group, h, rho, None)
    }

    fn build(
        group: TranslationGroup,
        h: GridField,
        rho: f64,
        epsilon: Option<f64>,
    ) -> Result<Self> {
        if !(rho.is_finite() && rho > 0.0) {
            return Err(MeanFieldError::Config(format!(
                "coupling must be positive and finite, got {rho}"
            )));
        }
        let h_min = h.min_value();
        if !(h_min > 0.0) {
            return Err(MeanFieldError::Config(format!(
                "weight h must be strictly positive, min value {h_min}"
            )));
        }
        let scale = h.max_value().abs().max(1.0);
        let defect = h.invariance_defect(&group)?;
        if defect > PROJECTION_TOL * scale {
            return Err(MeanFieldError::Config(format!(
                "weight h must be group invariant, defect {defect:e}"
            )));
        }
        Ok(Self {
            group,
            h,
            rho,
            epsilon,
            tol: DEFAULT_TOL,
            max_iter: DEFAULT_MAX_ITER,
            allow_critical: false,
            blowup_threshold: DEFAULT_BLOWUP_THRESHOLD,
        })
    }

    /// The acting group.
    pub fn group(&self) -> &TranslationGroup {
        &self.group
    }

    /// The weight field.
    pub fn h(&self) -> &GridField {
        &self.h
    }

    /// The torus the problem lives on.
    pub fn lattice(&self) -> &TorusLattice {
        self.h.lattice()
    }

    /// The coupling.
    pub fn rho(&self) -> f64 {
        self.rho
    }

    /// The subcriticality parameter, when the problem was built from
    /// one.
    pub fn epsilon(&self) -> Option<f64> {
        self.epsilon
    }

    /// Orbit size of the group.
    pub fn ell(&self) -> usize {
        self.group.ell()
    }

    /// The coercivity threshold `8 pi ell`.
    pub fn critical_rho(&self) -> f64 {
        8.0 * PI * self.group.ell() as f64
    }
}

/// One recorded minimization iterate.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct IterationRecord {
    /// Iteration index; 0 is the start state.
    pub iter: usize,
    /// Functional value.
    pub j: f64,
    /// Invariant-subspace norm of the Sobolev gradient.
    pub grad_norm: f64,
    /// L2 residual of the mean field equation.
    pub residual: f64,
    /// Maximum of the iterate.
    pub c_eps: f64,
    /// `integral h e^u`.
    pub lambda_eps: f64,
}

/// Result of one minimization run.
#[derive(Debug, Clone)]
pub struct MinimizerState {
    /// Final iterate, invariant and mean-zero.
    pub u: GridField,
    /// Functional value at the final iterate.
    pub j_value: f64,
    /// Invariant-subspace norm of the Sobolev gradient.
    pub grad_norm: f64,
    /// L2 residual of the mean field equation.
    pub residual: f64,
    /// `integral h e^u` at the final iterate.
    pub lambda_eps: f64,
    /// Maximum of the final iterate.
    pub c_eps: f64,
    /// First argmax node of the final iterate in row-major order.
    pub x_eps: Point,
    /// Number of accepted descent steps.
    pub iterations: usize,
    /// Whether a tolerance was met before the iteration cap.
    pub converged: bool,
    /// Per-iteration log, including the start state.
    pub history: Vec<IterationRecord>,
}

/// The functional `J(u) = 1/2 dirichlet_energy(u)
/// - rho log integral h e^u` on the invariant mean-zero subspace.
///
/// # Errors
///
/// Returns a precondition error when `u` is not invariant and mean-zero
/// to relative tolerance `1e-10`, and a numerical error when the
/// exponential overflows.
pub fn functional_j(plan: &SpectralPlan, spec: &ProblemSpec, u: &GridField) -> Result<f64> {
    check_projected(spec, u)?;
    j_unchecked(plan, spec, u)
}

fn check_projected(spec: &ProblemSpec, u: &GridField) -> Result<()> {
    let scale = u.max_value().abs().max(u.min_value().abs()).max(1.0);
    let defect = u.invariance_defect(&spec.group)?;
    if defect > PROJECTION_TOL * scale {
        return Err(MeanFieldError::Precondition(format!(
            "field is not group invariant, defect {defect:e}"
        )));
    }
    let mean = u.mean();
    if mean.abs() > PROJECTION_TOL * scale {
        return Err(MeanFieldError::Precondition(format!(
            "field is not mean-zero, mean {mean:e}"
        )));
    }
    Ok(())
}

fn j_unchecked(plan: &SpectralPlan, spec: &ProblemSpec, u: &GridField) -> Result<f64> {
    let energy = plan.dirichlet_energy(u)?;
    let lambda = weighted_exp_integral(&spec.h, u)?;
    Ok(0.5 * energy - spec.rho * lambda.ln())
}

/// L2 norm of the mean field equation residual
/// `laplacian(u) - rho (h e^u / Lambda - 1/V)`; zero for exact
/// solutions.
///
/// # Errors
///
/// As [`functional_j`].
pub fn el_residual(plan: &SpectralPlan, spec: &ProblemSpec, u: &GridField) -> Result<f64> {
    check_projected(spec, u)?;
    Ok(l2_gradient(plan, spec, u)?.l2_norm())
}

/// The L2 gradient of `J` at `u`, which is also the strong form of the
/// mean field equation residual.
///
/// # Errors
///
/// Returns a configuration error on grid mismatch and a numerical error
/// when the exponential integral overflows.
pub fn l2_gradient(plan: &SpectralPlan, spec: &ProblemSpec, u: &GridField) -> Result<GridField> {
    let lambda = weighted_exp_integral(&spec.h, u)?;
    let inv_vol = 1.0 / spec.lattice().volume();
    let mut grad = plan.laplacian(u)?;
    for ((g, hv), uv) in grad
        .values_mut()
        .iter_mut()
        .zip(spec.h.values())
        .zip(u.values())
    {
        *g -= spec.rho * (hv * uv.exp() / lambda - inv_vol);
    }
    Ok(grad)
}

/// Minimizes the functional over the invariant mean-zero subspace by
/// projected Sobolev-gradient descent with Armijo backtracking.
///
/// The start iterate is the better (lower `J`) of the zero field and
/// the projection of `u0`; the zero field is always a candidate, so a
/// bad warm start cannot end above `J(0)`. Each iteration takes the
/// full preconditioned step when it shrinks the strong residual
/// within the energy noise allowance, and falls back to Armijo
/// backtracking on `J` otherwise. Iteration stops when the gradient
/// norm or the residual drops below `spec.tol`; when neither step
/// rule can make progress (or the iteration cap runs out), the last
/// state returns with `converged` unset.
///
/// # Errors
///
/// Returns a precondition error when `rho >= 8 pi ell` and
/// `allow_critical` is unset, a configuration error for grid or
/// tolerance problems, and a numerical error when the exponential
/// overflows at the start state.
pub fn minimize(spec: &ProblemSpec, u0: Option<&GridField>) -> Result<MinimizerState> {
    if spec.rho >= spec.critical_rho() && !spec.allow_critical {
        return Err(MeanFieldError::Precondition(format!(
            "coupling {} is at or above the coercivity threshold {}; \
             set allow_critical to proceed",
            spec.rho,
            spec.critical_rho()
        )));
    }
    if !(spec.tol > 0.0) {
        return Err(MeanFieldError::Config(format!(
            "tolerance must be positive, got {}",
            spec.tol
        )));
    }
    if spec.max_iter == 0 {
        return Err(MeanFieldError::Config("iteration cap is zero".into()));
    }
    let plan = SpectralPlan::new(spec.h.n1(), spec.h.n2(), *spec.lattice())?;

    let zero = GridField::zeros(spec.h.n1(), spec.h.n2(), *spec.lattice())?;
    let j_zero = j_unchecked(&plan, spec, &zero)?;
    let mut u = zero;
    let mut j_u = j_zero;
    if let Some(start) = u0 {
        let projected = start.project_invariant_mean_zero(&spec.group)?;
        let j_start = j_unchecked(&plan, spec, &projected)?;
        if j_start < j_zero {
            u = projected;
            j_u = j_start;
        }
    }

    let mut history = Vec::new();
    let mut iterations = 0usize;
    let mut converged = false;
    let mut grad_norm = f64::INFINITY;
    let mut residual = f64::INFINITY;

    for iter in 0..=spec.max_iter {
        let raw_grad = l2_gradient(&plan, spec, &u)?;
        residual = raw_grad.l2_norm();
        let grad = raw_grad.project_invariant_mean_zero(&spec.group)?;
        let g = plan.inverse_laplacian(&grad)?;
        let slope = grad.l2_inner(&g)?.max(0.0);
        grad_norm = slope.sqrt();
        history.push(IterationRecord {
            iter,
            j: j_u,
            grad_norm,
            residual,
            c_eps: u.max_value(),
            lambda_eps: weighted_exp_integral(&spec.h, &u)?,
        });
        if grad_norm < spec.tol || residual < spec.tol {
            converged = true;
            break;
        }
        if iter == spec.max_iter {
            break;
        }

        // The full preconditioned step is the fixed-point map of the
        // equation; near the minimum it keeps shrinking the strong
        // residual geometrically long after rounding noise in the
        // energy has blinded any sufficient-decrease test. Take it
        // whenever it shrinks the residual without pushing J above
        // the noise allowance.
        let noise = J_NOISE_ALLOWANCE * j_u.abs().max(1.0);
        let mut next = None;
        let mut full = u.clone();
        for (t, d) in full.values_mut().iter_mut().zip(g.values()) {
            *t -= d;
        }
        let full = full.project_invariant_mean_zero(&spec.group)?;
        match j_unchecked(&plan, spec, &full) {
            Ok(j_full) if j_full <= j_u + noise => {
                let full_residual = l2_gradient(&plan, spec, &full)?.l2_norm();
                if full_residual < POLISH_SHRINK * residual {
                    next = Some((full, j_full));
                }
            }
            // Overflow of the exponential just means the full step is
            // too long; the line search below shortens it.
            Ok(_) | Err(MeanFieldError::Numerical(_)) => {}
            Err(e) => return Err(e),
        }
        // A sufficient-decrease certificate below the noise floor of
        // the energy evaluation is vacuous; stopping beats wandering.
        if next.is_none() && ARMIJO_C * slope > noise {
            let mut step = 1.0f64;
            for _ in 0..MAX_BACKTRACKS {
                let mut trial = u.clone();
                for (t, d) in trial.values_mut().iter_mut().zip(g.values()) {
                    *t -= step * d;
                }
                match j_unchecked(&plan, spec, &trial) {
                    Ok(j_trial) if j_trial <= j_u - ARMIJO_C * step * slope => {
                        let trial = trial.project_invariant_mean_zero(&spec.group)?;
                        let j_trial = j_unchecked(&plan, spec, &trial)?;
                        next = Some((trial, j_trial));
                        break;
                    }
                    Ok(_) | Err(MeanFieldError::Numerical(_)) => step *= 0.5,
                    Err(e) => return Err(e),
                }
            }
        }
        match next {
            Some((v, j_v)) => {
                u = v;
                j_u = j_v;
                iterations = iter + 1;
            }
            None => break,
        }
    }

    let (i_max, j_max) = u.argmax();
    Ok(MinimizerState {
        x_eps: u.node_point(i_max, j_max),
        c_eps: u.max_value(),
        lambda_eps: weighted_exp_integral(&spec.h, &u)?,
        j_value: j_u,
        grad_norm,
        residual,
        iterations,
        converged,
        history,
        u,
    })
}

/// One stage of a continuation run.
#[derive(Debug, Clone, Serialize)]
pub struct ContinuationStage {
    /// Subcriticality parameter of the stage.
    pub epsilon: f64,
    /// Coupling `8 pi ell (1 - epsilon)`.
    pub rho: f64,
    /// Whether the stage minimization converged.
    pub converged: bool,
    /// Accepted descent steps.
    pub iterations: usize,
    /// Functional value.
    pub j_value: f64,
    /// Invariant-subspace gradient norm.
    pub grad_norm: f64,
    /// Mean field equation residual.
    pub residual: f64,
    /// Maximum of the iterate.
    pub c_eps: f64,
    /// `integral h e^u`.
    pub lambda_eps: f64,
    /// First coordinate of the argmax node.
    pub x_eps_1: f64,
    /// Second coordinate of the argmax node.
    pub x_eps_2: f64,
    /// Concentration scale of the stage.
    pub r_eps: f64,
    /// The monitored ratio `r_eps^2 e^{c_eps / 2}`.
    pub scale_height_ratio: f64,
    /// Whether `c_eps` crossed the blow-up threshold (or its growth
    /// tripped) with the scale still resolved.
    pub blow_up: bool,
    /// Whether the blow-up signal tripped while `r_eps` spans fewer
    /// than 4 grid cells, so the stage cannot distinguish blow-up from
    /// discretization error.
    pub under_resolved: bool,
    /// Error that aborted the stage, when one did.
    pub error: Option<String>,
}

/// Result of a continuation run: per-stage records and the final
/// successfully minimized state.
#[derive(Debug, Clone)]
pub struct ContinuationRun {
    /// One record per schedule entry, in order.
    pub stages: Vec<ContinuationStage>,
    /// State of the last stage that produced one.
    pub final_state: Option<MinimizerState>,
}

/// Runs warm-started minimization along a strictly decreasing schedule
/// of subcriticality parameters.
///
/// Each stage inherits tolerances from `spec` but replaces the
/// coupling by `8 pi ell (1 - epsilon)`. A stage that fails records
/// its error and the next stage continues from the last good state.
/// Blow-up is flagged when `c_eps` exceeds `spec.blowup_threshold`, or
/// when it more than doubles from the previous stage past half the
/// threshold; the flag demotes to `under_resolved` when the
/// concentration scale spans fewer than 4 grid cells.
///
/// # Errors
///
/// Returns a configuration error when the schedule is empty, leaves
/// `(0, 1)`, or is not strictly decreasing.
pub fn continuation(
    spec: &ProblemSpec,
    schedule: &[f64],
    u0: Option<&GridField>,
) -> Result<ContinuationRun> {
    if schedule.is_empty() {
        return Err(MeanFieldError::Config(
            "continuation schedule is empty".into(),
        ));
    }
    for pair in schedule.windows(2) {
        if pair[1] >= pair[0] {
            return Err(MeanFieldError::Config(format!(
                "continuation schedule must be strictly decreasing, got {} then {}",
                pair[0], pair[1]
            )));
        }
    }
    if schedule.iter().any(|e| !(*e > 0.0 && *e < 1.0)) {
        return Err(MeanFieldError::Config(
            "continuation schedule must lie in (0, 1)".into(),
        ));
    }

    let cell_extent = spec.h.cell_extent();

    let mut stages = Vec::with_capacity(schedule.len());
    let mut warm: Option<GridField> = u0.cloned();
    let mut final_state: Option<MinimizerState> = None;
    let mut prev_c: Option<f64> = None;

    for &epsilon in schedule {
        let mut stage_spec =
            ProblemSpec::subcritical(spec.group.clone(), spec.h.clone(), epsilon)?;
        stage_spec.tol = spec.tol;
        stage_spec.max_iter = spec.max_iter;
        stage_spec.allow_critical = spec.allow_critical;
        stage_spec.blowup_threshold = spec.blowup_threshold;

        match minimize(&stage_spec, warm.as_ref()) {
            Ok(state) => {
                let h_at_max = spec.h.sample_bilinear(state.x_eps.x1(), state.x_eps.x2());
                let r_eps = (state.lambda_eps / (stage_spec.rho * h_at_max)).sqrt()
                    * (-state.c_eps / 2.0).exp();
                let tripped = state.c_eps > spec.blowup_threshold
                    || prev_c.is_some_and(|p| {
                        state.c_eps > 2.0 * p && state.c_eps > 0.5 * spec.blowup_threshold
                    });
                let resolved = r_eps >= 4.0 * cell_extent;
                stages.push(ContinuationStage {
                    epsilon,
                    rho: stage_spec.rho,
                    converged: state.converged,
                    iterations: state.iterations,
                    j_value: state.j_value,
                    grad_norm: state.grad_norm,
                    residual: state.residual,
                    c_eps: state.c_eps,
                    lambda_eps: state.lambda_eps,
                    x_eps_1: state.x_eps.x1(),
                    x_eps_2: state.x_eps.x2(),
                    r_eps,
                    scale_height_ratio: r_eps * r_eps * (state.c_eps / 2.0).exp(),
                    blow_up: tripped && resolved,
                    under_resolved: tripped && !resolved,
                    error: None,
                });
                prev_c = Some(state.c_eps);
                if state.converged {
                    warm = Some(state.u.clone());
                }
                final_state = Some(state);
            }
            Err(e) => {
                stages.push(ContinuationStage {
                    epsilon,
                    rho: stage_spec.rho,
                    converged: false,
                    iterations: 0,
                    j_value: f64::NAN,
                    grad_norm: f64::NAN,
                    residual: f64::NAN,
                    c_eps: f64::NAN,
                    lambda_eps: f64::NAN,
                    x_eps_1: f64::NAN,
                    x_eps_2: f64::NAN,
                    r_eps: f64::NAN,
                    scale_height_ratio: f64::NAN,
                    blow_up: false,
                    under_resolved: false,
                    error: Some(e.to_string()),
                });
            }
        }
    }

    Ok(ContinuationRun {
        stages,
        final_state,
    })
}
