use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, ValueEnum};
use diamond::harness::{ErrorSampling, InitMode};
use diamond::nonlinear::{SolverConfig, SolverMethod};
use diamond::system::{make_linear_system, MultiHamiltonianSystem};
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "snake_case")]
#[value(rename_all = "snake_case")]
pub enum SystemKind {
    SineGordon,
    LinearWave,
    /// `K z_t + L z_x = S z` with matrices read from `system_file`.
    CustomFile,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    Simple,
    Rk,
}

/// Everything a simulation needs. Missing keys in a config file take the
/// defaults below; unknown keys are rejected.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub system: SystemKind,
    pub system_file: Option<PathBuf>,
    pub scheme: Scheme,
    pub r: usize,
    #[serde(rename = "N")]
    pub n: usize,
    pub a: f64,
    pub b: f64,
    pub lambda: f64,
    /// Full steps; exclusive with `T`.
    pub steps: Option<usize>,
    #[serde(rename = "T")]
    pub t_final: Option<f64>,
    pub init: InitMode,
    pub solver: SolverConfig,
    pub threads: Option<usize>,
    pub seed: u64,
    pub output: Option<PathBuf>,
    /// Rungs of a convergence ladder, starting from `N`.
    pub levels: usize,
    pub sampling: ErrorSampling,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            system: SystemKind::SineGordon,
            system_file: None,
            scheme: Scheme::Simple,
            r: 1,
            n: 40,
            a: -30.0,
            b: 30.0,
            lambda: 0.5,
            steps: None,
            t_final: None,
            init: InitMode::Exact,
            solver: SolverConfig::default(),
            threads: None,
            seed: 0,
            output: None,
            levels: 6,
            sampling: ErrorSampling::Corners,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
#[value(rename_all = "snake_case")]
pub enum InitArg {
    Exact,
    Euler,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
#[value(rename_all = "snake_case")]
pub enum SamplingArg {
    EdgeNodes,
    Corners,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
#[value(rename_all = "snake_case")]
pub enum MethodArg {
    Newton,
    FixedPoint,
    Auto,
}

/// Flags mirroring [`RunConfig`]; any flag given overrides the file.
#[derive(Debug, Clone, Default, Args)]
pub struct ConfigArgs {
    /// JSON config file.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub system: Option<SystemKind>,
    /// JSON file with matrices `k`, `l`, `s` for `--system custom_file`.
    #[arg(long)]
    pub system_file: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub scheme: Option<Scheme>,
    #[arg(long)]
    pub r: Option<usize>,
    /// Diamonds per level (the first rung for `converge`).
    #[arg(long = "N", visible_alias = "N0", alias = "n")]
    pub n: Option<usize>,
    #[arg(long, allow_negative_numbers = true)]
    pub a: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    pub b: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    pub lambda: Option<f64>,
    #[arg(long)]
    pub steps: Option<usize>,
    #[arg(long = "T", allow_negative_numbers = true)]
    pub t_final: Option<f64>,
    #[arg(long, value_enum)]
    pub init: Option<InitArg>,
    #[arg(long, value_enum)]
    pub method: Option<MethodArg>,
    #[arg(long)]
    pub tol: Option<f64>,
    #[arg(long)]
    pub max_iter: Option<usize>,
    /// Worker threads; defaults to `DIAMOND_THREADS`, then all cores.
    #[arg(long)]
    pub threads: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output path; standard output when absent.
    #[arg(long, short)]
    pub output: Option<PathBuf>,
    #[arg(long)]
    pub levels: Option<usize>,
    #[arg(long, value_enum)]
    pub sampling: Option<SamplingArg>,
}

pub fn bad_config(msg: impl Into<String>) -> CliError {
    CliError::Config(msg.into())
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T, CliError> {
    let text = fs::read_to_string(path)
        .map_err(|e| bad_config(format!("cannot read {}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| bad_config(format!("{}: {e}", path.display())))
}

impl ConfigArgs {
    /// File (if any) overlaid with the flags, then validated.
    pub fn resolve(&self) -> Result<RunConfig, CliError> {
        let mut c: RunConfig = match &self.config {
            Some(p) => read_json(p)?,
            None => RunConfig::default(),
        };
        macro_rules! set {
            ($($flag:ident => $field:ident),*) => {
                $(if let Some(v) = self.$flag.clone() { c.$field = v.into(); })*
            };
        }
        set!(system => system, scheme => scheme, r => r, n => n, a => a, b => b,
             lambda => lambda, seed => seed, levels => levels);
        if let Some(p) = &self.system_file {
            c.system_file = Some(p.clone());
        }
        if self.steps.is_some() && self.t_final.is_some() {
            return Err(bad_config("give --steps or --T, not both"));
        }
        if let Some(s) = self.steps {
            c.steps = Some(s);
            c.t_final = None;
        }
        if let Some(t) = self.t_final {
            c.t_final = Some(t);
            c.steps = None;
        }
        if let Some(i) = self.init {
            c.init = match i {
                InitArg::Exact => InitMode::Exact,
                InitArg::Euler => InitMode::Euler,
            };
        }
        if let Some(s) = self.sampling {
            c.sampling = match s {
                SamplingArg::EdgeNodes => ErrorSampling::EdgeNodes,
                SamplingArg::Corners => ErrorSampling::Corners,
            };
        }
        if let Some(m) = self.method {
            c.solver.method = match m {
                MethodArg::Newton => SolverMethod::Newton,
                MethodArg::FixedPoint => SolverMethod::FixedPoint,
                MethodArg::Auto => SolverMethod::Auto,
            };
        }
        if let Some(t) = self.tol {
            c.solver.tol = t;
        }
        if let Some(m) = self.max_iter {
            c.solver.max_iter = m;
        }
        if self.threads.is_some() {
            c.threads = self.threads;
        }
        if self.output.is_some() {
            c.output = self.output.clone();
        }
        c.validate()?;
        Ok(c)
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<(), CliError> {
        if self.n == 0 {
            return Err(bad_config("N must be at least 1"));
        }
        if !(self.lambda > 0.0 && self.lambda.is_finite()) {
            return Err(bad_config(format!(
                "lambda must be positive, got {}",
                self.lambda
            )));
        }
        if !(self.a < self.b) {
            return Err(bad_config(format!(
                "need a < b, got [{}, {}]",
                self.a, self.b
            )));
        }
        if self.r == 0 || self.r > diamond::tableau::MAX_STAGES {
            return Err(bad_config(format!(
                "r must be in 1..={}, got {}",
                diamond::tableau::MAX_STAGES,
                self.r
            )));
        }
        if self.steps.is_some() && self.t_final.is_some() {
            return Err(bad_config("give steps or T, not both"));
        }
        if let Some(t) = self.t_final {
            if !(t >= 0.0) {
                return Err(bad_config(format!("T must be nonnegative, got {t}")));
            }
        }
        if self.threads == Some(0) {
            return Err(bad_config("threads must be at least 1"));
        }
        if self.levels == 0 {
            return Err(bad_config("levels must be at least 1"));
        }
        if self.system == SystemKind::CustomFile && self.system_file.is_none() {
            return Err(bad_config("custom_file system needs system_file"));
        }
        self.solver
            .validate()
            .map_err(|e| bad_config(e.to_string()))
    }

    /// `T` in full steps of size `dt`, rounded to the nearest whole step.
    pub fn step_count(&self, dt: f64) -> usize {
        match (self.steps, self.t_final) {
            (Some(s), _) => s,
            (None, Some(t)) => (t / dt).round() as usize,
            (None, None) => 2,
        }
    }

    pub fn linear_system(&self) -> Result<MultiHamiltonianSystem, CliError> {
        let path = self
            .system_file
            .as_ref()
            .ok_or_else(|| bad_config("custom_file system needs system_file"))?;
        let m = load_matrices(path)?;
        make_linear_system(m.k, m.l, m.s).map_err(|e| bad_config(e.to_string()))
    }
}

/// `{"k": [[..]], "l": [[..]], "s": [[..]]}`, rows as arrays.
#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct MatrixFile {
    k: Vec<Vec<f64>>,
    l: Vec<Vec<f64>>,
    s: Vec<Vec<f64>>,
}

pub struct Matrices {
    pub k: DMatrix<f64>,
    pub l: DMatrix<f64>,
    pub s: DMatrix<f64>,
}

fn to_matrix(name: &str, rows: &[Vec<f64>]) -> Result<DMatrix<f64>, CliError> {
    let n = rows.len();
    if n == 0 || rows.iter().any(|r| r.len() != n) {
        return Err(bad_config(format!(
            "matrix {name} must be square and nonempty"
        )));
    }
    Ok(DMatrix::from_fn(n, n, |i, j| rows[i][j]))
}

pub fn load_matrices(path: &Path) -> Result<Matrices, CliError> {
    let f: MatrixFile = read_json(path)?;
    Ok(Matrices {
        k: to_matrix("k", &f.k)?,
        l: to_matrix("l", &f.l)?,
        s: to_matrix("s", &f.s)?,
    })
}
