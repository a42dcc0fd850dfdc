//! Subcommand pipelines: each builds its domain objects, writes the
//! run artifacts, and finishes the manifest.

use std::fs;

use anyhow::Result;
use meanfield::solve::{continuation, minimize, MinimizerState};
use meanfield::{
    series_bounds, BubbleDiagnostics, GreenFunction, GridField, MeanFieldError,
    ProblemSpec, TestFunctionFamily,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::cli::{Cli, Command};
use crate::config::{load_config, resolve, Resolved, RunConfig, StartKind};
use crate::output::{sha256_hex, OutputWriter};

/// Loads, resolves, and dispatches one invocation.
pub fn run(cli: &Cli) -> Result<()> {
    let (config, config_digest) = match &cli.config {
        Some(path) => {
            let bytes = fs::read(path).map_err(|e| {
                MeanFieldError::Config(format!(
                    "cannot read config {}: {e}",
                    path.display()
                ))
            })?;
            (load_config(path)?, sha256_hex(&bytes))
        }
        None if matches!(cli.command, Command::Constants) => {
            (RunConfig::default(), "none".to_string())
        }
        None => {
            return Err(MeanFieldError::Config(format!(
                "{} requires --config PATH",
                cli.command.name()
            ))
            .into());
        }
    };
    let resolved = resolve(config, cli)?;
    let input_hash = sha256_hex(&serde_json::to_vec(&resolved.config)?);
    let writer = OutputWriter::new(
        resolved.out_dir.clone(),
        resolved.format,
        cli.command.name(),
        config_digest,
        input_hash,
    )?;
    match cli.command {
        Command::Green => green(&resolved, writer),
        Command::Solve => solve(&resolved, writer),
        Command::Continue => continue_run(&resolved, writer),
        Command::Bubble => bubble(&resolved, writer),
        Command::Certify => certify(&resolved, writer),
        Command::Testfn => testfn(&resolved, writer),
        Command::Constants => constants(writer),
    }
}

#[derive(Serialize)]
struct SampleRow {
    x1: f64,
    x2: f64,
    value: f64,
}

fn sample_rows(field: &GridField) -> Vec<SampleRow> {
    let mut rows = Vec::with_capacity(field.n1() * field.n2());
    for i in 0..field.n1() {
        for j in 0..field.n2() {
            let p = field.node_point(i, j);
            rows.push(SampleRow {
                x1: p.x1(),
                x2: p.x2(),
                value: field.values()[field.idx(i, j)],
            });
        }
    }
    rows
}

#[derive(Serialize)]
struct GreenSummary {
    grid: usize,
    ell: usize,
    center: [f64; 2],
    orbit: Vec<[f64; 2]>,
    a_p: f64,
    a_tilde: f64,
    b1: f64,
    b2: f64,
    c1: f64,
    c2: f64,
    c3: f64,
    fit_residual: f64,
    quadratic_trace: f64,
    expected_trace: f64,
    mean_singularity_aware: f64,
}

fn green(resolved: &Resolved, mut writer: OutputWriter) -> Result<()> {
    let green = GreenFunction::new(
        resolved.lattice.clone(),
        resolved.group.clone(),
        resolved.green_center(),
    )?;
    let n = resolved.grid;
    let field = green.sample_grid_regularized(n, n)?;
    let mean = green.mean_singularity_aware(n, n)?;
    let fit = green.fit_expansion(None)?;
    let ell = green.ell();
    writer.write_table("gtilde", &sample_rows(&field))?;
    writer.write_json(
        "green.json",
        &GreenSummary {
            grid: n,
            ell,
            center: green.center().coords(),
            orbit: green.orbit().iter().map(|p| p.coords()).collect(),
            a_p: green.series().robin_constant(),
            a_tilde: green.tilde_robin()?,
            b1: fit.b1,
            b2: fit.b2,
            c1: fit.c1,
            c2: fit.c2,
            c3: fit.c3,
            fit_residual: fit.fit_residual,
            quadratic_trace: fit.quadratic_trace(),
            expected_trace: 4.0 * std::f64::consts::PI * ell as f64
                / resolved.lattice.volume(),
            mean_singularity_aware: mean,
        },
    )?;
    writer.finish()
}

#[derive(Serialize)]
struct SolveSummary {
    converged: bool,
    iterations: usize,
    j_value: f64,
    grad_norm: f64,
    residual: f64,
    c_eps: f64,
    lambda_eps: f64,
    x_eps: [f64; 2],
    rho: f64,
    epsilon: Option<f64>,
    ell: usize,
    grid: usize,
    seed: u64,
}

fn solve_summary(resolved: &Resolved, spec: &ProblemSpec, state: &MinimizerState) -> SolveSummary {
    SolveSummary {
        converged: state.converged,
        iterations: state.iterations,
        j_value: state.j_value,
        grad_norm: state.grad_norm,
        residual: state.residual,
        c_eps: state.c_eps,
        lambda_eps: state.lambda_eps,
        x_eps: state.x_eps.coords(),
        rho: spec.rho(),
        epsilon: spec.epsilon(),
        ell: spec.ell(),
        grid: resolved.grid,
        seed: resolved.seed,
    }
}

/// Seeded random invariant mean-zero start field, or none for the zero
/// start.
fn start_field(resolved: &Resolved) -> Result<Option<GridField>> {
    match resolved.config.solver.start {
        StartKind::Zero => Ok(None),
        StartKind::Random => {
            let mut rng = ChaCha8Rng::seed_from_u64(resolved.seed);
            let modes: Vec<(f64, f64, f64, f64)> = (0..4)
                .map(|_| {
                    (
                        rng.gen_range(1..4) as f64,
                        rng.gen_range(0..4) as f64,
                        rng.gen_range(-1.0..1.0),
                        rng.gen_range(-1.0..1.0),
                    )
                })
                .collect();
            let n = resolved.grid;
            let raw = GridField::from_fn(n, n, resolved.lattice.clone(), |s1, s2| {
                modes
                    .iter()
                    .map(|&(k1, k2, a, b)| {
                        let phase =
                            2.0 * std::f64::consts::PI * (k1 * s1 + k2 * s2);
                        a * phase.cos() + b * phase.sin()
                    })
                    .sum()
            })?;
            let projected = raw.project_invariant_mean_zero(&resolved.group)?;
            let sup = projected
                .values()
                .iter()
                .fold(0.0f64, |m, v| m.max(v.abs()));
            if sup == 0.0 {
                return Ok(Some(projected));
            }
            let scale = resolved.config.solver.start_amplitude / sup;
            let scaled = GridField::from_values(
                n,
                n,
                resolved.lattice.clone(),
                projected.values().iter().map(|v| v * scale).collect(),
            )?;
            Ok(Some(scaled))
        }
    }
}

fn write_state(
    writer: &mut OutputWriter,
    resolved: &Resolved,
    spec: &ProblemSpec,
    state: &MinimizerState,
) -> Result<()> {
    writer.write_table("iterations", &state.history)?;
    let mut bin = Vec::new();
    state.u.write_binary(&mut bin)?;
    writer.write_bytes("u.bin", &bin)?;
    writer.write_json("summary.json", &solve_summary(resolved, spec, state))?;
    Ok(())
}

fn convergence_gate(state: &MinimizerState) -> Result<()> {
    if state.converged {
        Ok(())
    } else {
        Err(MeanFieldError::Numerical(format!(
            "minimization did not reach tolerance: gradient norm {:.3e}, \
             residual {:.3e} after {} iterations",
            state.grad_norm, state.residual, state.iterations
        ))
        .into())
    }
}

fn solve(resolved: &Resolved, mut writer: OutputWriter) -> Result<()> {
    let spec = resolved.problem_spec()?;
    let start = start_field(resolved)?;
    let state = minimize(&spec, start.as_ref())?;
    write_state(&mut writer, resolved, &spec, &state)?;
    writer.finish()?;
    convergence_gate(&state)
}

#[derive(Serialize)]
struct ContinueSummary {
    stages: usize,
    converged_stages: usize,
    blow_up_stages: usize,
    under_resolved_stages: usize,
    errored_stages: usize,
    final_state: Option<SolveSummary>,
}

fn continue_run(resolved: &Resolved, mut writer: OutputWriter) -> Result<()> {
    let schedule = &resolved.config.schedule.eps;
    if schedule.is_empty() {
        return Err(MeanFieldError::Config(
            "continue requires a non-empty schedule.eps list".into(),
        )
        .into());
    }
    let spec = resolved.problem_spec()?;
    let start = start_field(resolved)?;
    let run = continuation(&spec, schedule, start.as_ref())?;
    writer.write_table("stages", &run.stages)?;
    let final_summary = match &run.final_state {
        Some(state) => {
            let mut bin = Vec::new();
            state.u.write_binary(&mut bin)?;
            writer.write_bytes("u.bin", &bin)?;
            Some(solve_summary(resolved, &spec, state))
        }
        None => None,
    };
    writer.write_json(
        "summary.json",
        &ContinueSummary {
            stages: run.stages.len(),
            converged_stages: run.stages.iter().filter(|s| s.converged).count(),
            blow_up_stages: run.stages.iter().filter(|s| s.blow_up).count(),
            under_resolved_stages: run
                .stages
                .iter()
                .filter(|s| s.under_resolved)
                .count(),
            errored_stages: run.stages.iter().filter(|s| s.error.is_some()).count(),
            final_state: final_summary,
        },
    )?;
    writer.finish()?;
    let troubled = run
        .stages
        .iter()
        .filter(|s| s.error.is_some() || !s.converged)
        .count();
    if troubled > 0 {
        return Err(MeanFieldError::Numerical(format!(
            "{troubled} of {} continuation stages failed to converge",
            run.stages.len()
        ))
        .into());
    }
    Ok(())
}

#[derive(Serialize)]
struct ProfileRow {
    radius: f64,
    value: f64,
    bubble: f64,
    difference: f64,
}

#[derive(Serialize)]
struct BubbleSummary {
    r_eps: f64,
    r_used: f64,
    profile_error: f64,
    fractions: Vec<f64>,
}

fn bubble(resolved: &Resolved, mut writer: OutputWriter) -> Result<()> {
    let spec = resolved.problem_spec()?;
    let start = start_field(resolved)?;
    let state = minimize(&spec, start.as_ref())?;
    let diagnostics =
        BubbleDiagnostics::diagnose(&state, &spec, resolved.config.bubble.reach)?;
    let profile = &diagnostics.profile;
    let rows: Vec<ProfileRow> = profile
        .radii
        .iter()
        .zip(&profile.values)
        .zip(&profile.bubble)
        .map(|((&radius, &value), &bubble)| ProfileRow {
            radius,
            value,
            bubble,
            difference: value - bubble,
        })
        .collect();
    writer.write_table("profile", &rows)?;
    writer.write_json(
        "fractions.json",
        &BubbleSummary {
            r_eps: diagnostics.r_eps,
            r_used: diagnostics.r_used,
            profile_error: diagnostics.profile_error,
            fractions: diagnostics.mass_fractions.clone(),
        },
    )?;
    write_state(&mut writer, resolved, &spec, &state)?;
    writer.finish()?;
    convergence_gate(&state)
}

fn certify(resolved: &Resolved, mut writer: OutputWriter) -> Result<()> {
    let (i, j) = resolved.h.argmax();
    let center = resolved.h.node_point(i, j);
    let report =
        meanfield::certify::energy_gap_certificate(&resolved.h, &resolved.group, &center)?;
    writer.write_json("certificate.json", &report)?;
    writer.finish()
}

#[derive(Serialize)]
struct TestfnSummary {
    center: [f64; 2],
    ell: usize,
    a_tilde: f64,
    c_star: f64,
    hy2: Option<f64>,
}

fn testfn(resolved: &Resolved, mut writer: OutputWriter) -> Result<()> {
    let family = TestFunctionFamily::new(&resolved.h, &resolved.group)?;
    let eps_list: Vec<f64> = match resolved.eps_flag {
        Some(eps) => vec![eps],
        None if !resolved.config.schedule.eps.is_empty() => {
            resolved.config.schedule.eps.clone()
        }
        None => vec![0.08, 0.04, 0.02],
    };
    let rows = family.energy_numeric(&eps_list)?;
    writer.write_table("testfn", &rows)?;
    writer.write_json(
        "testfn.json",
        &TestfnSummary {
            center: family.center().coords(),
            ell: resolved.group.ell(),
            a_tilde: family.a_tilde(),
            c_star: family.c_star(),
            hy2: family.report().hy2_value,
        },
    )?;
    writer.finish()
}

#[derive(Serialize)]
struct ConstantsOut {
    #[serde(rename = "A_P")]
    a_p: f64,
    lambda_half: f64,
    #[serde(rename = "A_tilde")]
    a_tilde: f64,
    maxim_threshold: f64,
    bound_approx1: f64,
    bound_approx2: f64,
}

fn constants(mut writer: OutputWriter) -> Result<()> {
    let bounds = series_bounds();
    let out = ConstantsOut {
        a_p: bounds.a_p,
        lambda_half: bounds.lambda_half,
        a_tilde: bounds.a_tilde,
        maxim_threshold: bounds.maxim_threshold,
        bound_approx1: bounds.bound_approx1,
        bound_approx2: bounds.bound_approx2,
    };
    println!("{}", serde_json::to_string_pretty(&out)?);
    writer.write_json("constants.json", &out)?;
    writer.finish()
}
