//! Run configuration: TOML parsing, flag overrides, validation, and
//! conversion to domain objects.

use std::f64::consts::PI;
use std::fs;
use std::path::Path;

use meanfield::{
    GridField, MeanFieldError, Point, ProblemSpec, TorusLattice, TranslationGroup,
};
use serde::{Deserialize, Serialize};

use crate::cli::{Cli, OutputFormat};

/// Parsed run configuration with defaults filled in.
#[derive(Debug, Clone, Default, Deserialize, Serialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub lattice: LatticeSection,
    pub group: GroupSection,
    pub h: WeightSection,
    pub solver: SolverSection,
    pub schedule: ScheduleSection,
    pub bubble: BubbleSection,
    pub green: GreenSection,
    pub output: OutputSection,
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields, default)]
pub struct LatticeSection {
    pub basis_a: [f64; 2],
    pub basis_b: [f64; 2],
}

impl Default for LatticeSection {
    fn default() -> Self {
        Self {
            basis_a: [1.0, 0.0],
            basis_b: [0.0, 1.0],
        }
    }
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields, default)]
pub struct GroupSection {
    pub shifts: Vec<[f64; 2]>,
}

impl Default for GroupSection {
    fn default() -> Self {
        Self {
            shifts: vec![[0.0, 0.0]],
        }
    }
}

/// Weight description: a positive constant or an invariant Fourier sum.
#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum WeightSection {
    Constant {
        #[serde(default = "default_one")]
        value: f64,
    },
    Fourier {
        #[serde(default = "default_one")]
        constant: f64,
        #[serde(default)]
        modes: Vec<FourierMode>,
    },
}

impl Default for WeightSection {
    fn default() -> Self {
        WeightSection::Constant { value: 1.0 }
    }
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct FourierMode {
    pub k1: i64,
    pub k2: i64,
    #[serde(default)]
    pub cos: f64,
    #[serde(default)]
    pub sin: f64,
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverSection {
    pub grid: usize,
    pub eps: Option<f64>,
    pub rho: Option<f64>,
    pub tol: f64,
    pub max_iter: usize,
    pub seed: u64,
    pub allow_critical: bool,
    pub blowup_threshold: f64,
    pub start: StartKind,
    pub start_amplitude: f64,
}

impl Default for SolverSection {
    fn default() -> Self {
        Self {
            grid: 256,
            eps: None,
            rho: None,
            tol: 1e-6,
            max_iter: 2000,
            seed: 0,
            allow_critical: false,
            blowup_threshold: 12.0,
            start: StartKind::Zero,
            start_amplitude: 0.1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum StartKind {
    Zero,
    Random,
}

#[derive(Debug, Clone, Default, Deserialize, Serialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScheduleSection {
    pub eps: Vec<f64>,
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields, default)]
pub struct BubbleSection {
    /// Requested mass-fraction radius in rescaled units.
    pub reach: f64,
}

impl Default for BubbleSection {
    fn default() -> Self {
        Self { reach: 20.0 }
    }
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields, default)]
pub struct GreenSection {
    /// Expansion center for the green subcommand.
    pub center: [f64; 2],
}

impl Default for GreenSection {
    fn default() -> Self {
        Self { center: [0.0, 0.0] }
    }
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputSection {
    pub dir: String,
    pub format: FormatKey,
}

impl Default for OutputSection {
    fn default() -> Self {
        Self {
            dir: "out".into(),
            format: FormatKey::Csv,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum FormatKey {
    Csv,
    Json,
}

fn default_one() -> f64 {
    1.0
}

/// Loads and parses a configuration file.
pub fn load_config(path: &Path) -> Result<RunConfig, MeanFieldError> {
    let text = fs::read_to_string(path).map_err(|e| {
        MeanFieldError::Config(format!("cannot read config {}: {e}", path.display()))
    })?;
    toml::from_str(&text).map_err(|e| {
        MeanFieldError::Config(format!("config {}: {e}", path.display()))
    })
}

/// Fully validated domain objects resolved from a config and CLI flags.
#[derive(Debug, Clone)]
pub struct Resolved {
    pub config: RunConfig,
    pub lattice: TorusLattice,
    pub group: TranslationGroup,
    pub h: GridField,
    pub grid: usize,
    pub seed: u64,
    pub format: OutputFormat,
    pub out_dir: std::path::PathBuf,
    pub eps_flag: Option<f64>,
}

/// Applies flag overrides, validates every section, and builds the
/// lattice, group, and weight.
pub fn resolve(mut config: RunConfig, cli: &Cli) -> Result<Resolved, MeanFieldError> {
    if let Some(grid) = cli.grid {
        config.solver.grid = grid;
    }
    if let Some(seed) = cli.seed {
        config.solver.seed = seed;
    }
    if let Some(eps) = cli.eps {
        config.solver.eps = Some(eps);
    }
    if let Some(format) = cli.format {
        config.output.format = match format {
            OutputFormat::Csv => FormatKey::Csv,
            OutputFormat::Json => FormatKey::Json,
        };
    }
    if let Some(dir) = &cli.out {
        config.output.dir = dir.display().to_string();
    }

    let lattice = TorusLattice::new(config.lattice.basis_a, config.lattice.basis_b)?;
    let has_zero = config.group.shifts.iter().any(|t| {
        let d1 = t[0] - t[0].round();
        let d2 = t[1] - t[1].round();
        d1.hypot(d2) < 1e-9
    });
    let mut shifts = config.group.shifts.clone();
    if !has_zero {
        shifts.insert(0, [0.0, 0.0]);
    }
    let group = TranslationGroup::new(&shifts)?;
    let grid = config.solver.grid;
    if grid == 0 || grid % 2 != 0 {
        return Err(MeanFieldError::Config(format!(
            "solver.grid must be positive and even, got {grid}"
        )));
    }
    group.grid_shift_indices(grid, grid)?;
    if config.solver.eps.is_some() && config.solver.rho.is_some() {
        return Err(MeanFieldError::Config(
            "solver.eps and solver.rho are mutually exclusive".into(),
        ));
    }
    if !(config.solver.tol > 0.0) {
        return Err(MeanFieldError::Config(format!(
            "solver.tol must be positive, got {}",
            config.solver.tol
        )));
    }
    let h = build_weight(&config.h, &group, grid, lattice.clone())?;
    let format = match config.output.format {
        FormatKey::Csv => OutputFormat::Csv,
        FormatKey::Json => OutputFormat::Json,
    };
    Ok(Resolved {
        out_dir: std::path::PathBuf::from(&config.output.dir),
        eps_flag: cli.eps,
        seed: config.solver.seed,
        grid,
        format,
        lattice,
        group,
        h,
        config,
    })
}

/// Samples the weight on the grid after checking positivity and mode
/// invariance, and symmetrizes it so downstream invariance checks are
/// exact.
fn build_weight(
    section: &WeightSection,
    group: &TranslationGroup,
    grid: usize,
    lattice: TorusLattice,
) -> Result<GridField, MeanFieldError> {
    let field = match section {
        WeightSection::Constant { value } => {
            if !(*value > 0.0) {
                return Err(MeanFieldError::Config(format!(
                    "h.value must be strictly positive, got {value}"
                )));
            }
            GridField::constant(grid, grid, lattice, *value)?
        }
        WeightSection::Fourier { constant, modes } => {
            for mode in modes {
                for shift in group.shifts() {
                    let phase = mode.k1 as f64 * shift[0] + mode.k2 as f64 * shift[1];
                    if (phase - phase.round()).abs() > 1e-9 {
                        return Err(MeanFieldError::Config(format!(
                            "h mode (k1 = {}, k2 = {}) is not invariant under \
                             shift ({}, {})",
                            mode.k1, mode.k2, shift[0], shift[1]
                        )));
                    }
                }
            }
            let modes = modes.clone();
            let constant = *constant;
            let field = GridField::from_fn(grid, grid, lattice, |s1, s2| {
                let mut v = constant;
                for mode in &modes {
                    let phase =
                        2.0 * PI * (mode.k1 as f64 * s1 + mode.k2 as f64 * s2);
                    v += mode.cos * phase.cos() + mode.sin * phase.sin();
                }
                v
            })?;
            let min = field.min_value();
            if !(min > 0.0) {
                return Err(MeanFieldError::Config(format!(
                    "h is not strictly positive on the grid; minimum {min}"
                )));
            }
            field
        }
    };
    field.symmetrize(group)
}

impl Resolved {
    /// Builds the variational problem from the solver section: `eps`
    /// when given (default 0.3), otherwise an explicit `rho`.
    pub fn problem_spec(&self) -> Result<ProblemSpec, MeanFieldError> {
        let solver = &self.config.solver;
        let mut spec = match (solver.eps, solver.rho) {
            (None, Some(rho)) => {
                ProblemSpec::with_rho(self.group.clone(), self.h.clone(), rho)?
            }
            (eps, None) => ProblemSpec::subcritical(
                self.group.clone(),
                self.h.clone(),
                eps.unwrap_or(0.3),
            )?,
            (Some(_), Some(_)) => unreachable!("rejected during resolve"),
        };
        spec.tol = solver.tol;
        spec.max_iter = solver.max_iter;
        spec.allow_critical = solver.allow_critical;
        spec.blowup_threshold = solver.blowup_threshold;
        Ok(spec)
    }

    /// Center for the green subcommand.
    pub fn green_center(&self) -> Point {
        Point::new(self.config.green.center[0], self.config.green.center[1])
    }
}
