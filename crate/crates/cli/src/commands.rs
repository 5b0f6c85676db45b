use std::io::Write;
use std::path::Path;
use std::sync::Arc;

use diamond::conservation::{
    random_rk_tangent, random_simple_tangent, rk_conservation_run, simple_conservation_run,
    DiamondResidual, RkTangentState, SimpleTangentState,
};
use diamond::dispersion::{
    emit_dispersion_curves, CurveOptions, DispersionProblem, CUBIC_FIGURE_LAMBDAS,
    LINEAR_FIGURE_LAMBDAS,
};
use diamond::harness::{
    breather_state, breather_state_t, converge_rk, converge_simple, ConvergenceSetup, InitMode,
};
use diamond::mesh::{slot_coords, MeshParams, ZigzagState};
use diamond::rk_scheme::{rk_init_euler, rk_init_exact, rk_run};
use diamond::simple_scheme::{
    simple_init, simple_init_exact, simple_run, SimpleSolver, SimpleState,
};
use diamond::system::{
    linear_wave, sine_gordon, validate_system, MultiHamiltonianSystem, StateVector, WaveSystem,
};
use diamond::tableau::{gauss_tableau, solvability_table, GaussTableau};
use serde::Serialize;

use crate::config::{bad_config, load_matrices, RunConfig, Scheme, SystemKind};
use crate::output::{header, num, sink, CsvOut};
use crate::{CliError, DispersionArgs, DispersionSystem, SolvabilityArgs};

type Solution = Arc<dyn Fn(f64, f64) -> StateVector + Send + Sync>;

enum Model {
    Wave(WaveSystem),
    General(MultiHamiltonianSystem),
}

impl Model {
    fn system(&self) -> &MultiHamiltonianSystem {
        match self {
            Model::Wave(w) => w.system(),
            Model::General(s) => s,
        }
    }

    fn simple_solver(&self) -> SimpleSolver<'_> {
        match self {
            Model::Wave(w) => SimpleSolver::Wave(w),
            Model::General(s) => SimpleSolver::General(s),
        }
    }
}

/// A right-moving Gaussian pulse, exact for `u_tt = u_xx`.
fn gaussian_pulse(x: f64, t: f64) -> StateVector {
    let s = x - t;
    let g = (-s * s).exp();
    let dg = -2.0 * s * g;
    StateVector::from_column_slice(&[g, -dg, dg])
}

fn gaussian_pulse_t(x: f64) -> StateVector {
    let g = (-x * x).exp();
    let dg = -2.0 * x * g;
    let ddg = (4.0 * x * x - 2.0) * g;
    StateVector::from_column_slice(&[-dg, ddg, -ddg])
}

type Profile = Arc<dyn Fn(f64) -> StateVector + Send + Sync>;

struct Problem {
    model: Model,
    /// Known solution used for exact initialization, when there is one.
    exact: Option<Solution>,
    z0: Profile,
    z0_t: Profile,
}

impl Problem {
    fn from_config(cfg: &RunConfig) -> Result<Self, CliError> {
        Ok(match cfg.system {
            SystemKind::SineGordon => Problem {
                model: Model::Wave(sine_gordon()),
                exact: Some(Arc::new(breather_state)),
                z0: Arc::new(|x| breather_state(x, 0.0)),
                z0_t: Arc::new(|x| breather_state_t(x, 0.0)),
            },
            SystemKind::LinearWave => Problem {
                model: Model::Wave(linear_wave()),
                exact: Some(Arc::new(gaussian_pulse)),
                z0: Arc::new(|x| gaussian_pulse(x, 0.0)),
                z0_t: Arc::new(gaussian_pulse_t),
            },
            SystemKind::CustomFile => {
                let sys = cfg.linear_system()?;
                let n = sys.n();
                Problem {
                    model: Model::General(sys),
                    exact: None,
                    z0: Arc::new(move |x| StateVector::from_element(n, (-x * x).exp())),
                    z0_t: Arc::new(move |_| StateVector::zeros(n)),
                }
            }
        })
    }

    fn sys(&self) -> &MultiHamiltonianSystem {
        self.model.system()
    }

    fn exact_or_config_error(&self) -> Result<&Solution, CliError> {
        self.exact
            .as_ref()
            .ok_or_else(|| bad_config("exact initialization needs a system with a known solution"))
    }

    fn simple_init(&self, cfg: &RunConfig, p: &MeshParams) -> Result<SimpleState, CliError> {
        Ok(match cfg.init {
            InitMode::Exact => {
                let z = self.exact_or_config_error()?;
                simple_init_exact(|x, t| z(x, t), p)
            }
            InitMode::Euler => simple_init(|x| (self.z0)(x), |x| (self.z0_t)(x), p),
        })
    }

    fn rk_init(
        &self,
        cfg: &RunConfig,
        tab: &GaussTableau,
        p: &MeshParams,
    ) -> Result<ZigzagState, CliError> {
        Ok(match cfg.init {
            InitMode::Exact => {
                let z = self.exact_or_config_error()?;
                rk_init_exact(|x, t| z(x, t), tab, p)?
            }
            InitMode::Euler => rk_init_euler(|x| (self.z0)(x), |x| (self.z0_t)(x), tab, p)?,
        })
    }
}

fn state_header(n: usize) -> Vec<String> {
    let mut h = header(&["level", "diamond", "slot", "x", "t"]);
    h.extend((0..n).map(|i| format!("z{i}")));
    h
}

fn state_row(level: usize, d: usize, slot: usize, x: f64, t: f64, z: &StateVector) -> Vec<String> {
    let mut row = vec![
        level.to_string(),
        d.to_string(),
        slot.to_string(),
        num(x),
        num(t),
    ];
    row.extend(z.iter().map(|&v| num(v)));
    row
}

pub fn run(cfg: &RunConfig) -> Result<(), CliError> {
    let prob = Problem::from_config(cfg)?;
    let n = prob.sys().n();
    match cfg.scheme {
        Scheme::Simple => {
            let p = MeshParams::new(cfg.n, cfg.a, cfg.b, cfg.lambda, 1)?;
            let init = prob.simple_init(cfg, &p)?;
            let steps = cfg.step_count(p.dt);
            let out = simple_run(prob.model.simple_solver(), &p, init, steps, &cfg.solver)?;
            let mut csv = CsvOut::create(cfg.output.as_deref(), &state_header(n))?;
            for grid in [&out.lower, &out.upper] {
                for k in 0..grid.len() {
                    csv.row(&state_row(
                        grid.level,
                        k,
                        0,
                        grid.x(&p, k),
                        grid.t(&p),
                        &grid.values[k],
                    ))?;
                }
            }
            csv.finish()
        }
        Scheme::Rk => {
            let tab = gauss_tableau(cfg.r)?;
            let p = MeshParams::new(cfg.n, cfg.a, cfg.b, cfg.lambda, cfg.r)?;
            let init = prob.rk_init(cfg, &tab, &p)?;
            let steps = cfg.step_count(p.dt);
            let out = rk_run(prob.sys(), &tab, &p, init, steps, &cfg.solver)?;
            let mut csv = CsvOut::create(cfg.output.as_deref(), &state_header(n))?;
            for d in 0..out.n_diamonds() {
                for s in 0..=2 * tab.r {
                    let (x, t) = slot_coords(&p, &tab, out.level, d, s)?;
                    csv.row(&state_row(out.level, d, s, p.wrap(x), t, out.get(d, s)))?;
                }
            }
            csv.finish()
        }
    }
}

#[derive(Serialize)]
struct ConvergeSummary<'a> {
    config: &'a RunConfig,
    fitted_slope: f64,
    rows: &'a [diamond::harness::ConvergenceRow],
}

pub fn converge(cfg: &RunConfig, summary: Option<&Path>) -> Result<(), CliError> {
    if cfg.system != SystemKind::SineGordon {
        return Err(bad_config(
            "converge measures errors against the sine–Gordon breather",
        ));
    }
    let dt0 = cfg.lambda * (cfg.b - cfg.a) / cfg.n as f64;
    let setup = ConvergenceSetup {
        n0: cfg.n,
        levels: cfg.levels,
        a: cfg.a,
        b: cfg.b,
        lambda: cfg.lambda,
        t_final: cfg.t_final.or(cfg.steps.map(|s| s as f64 * dt0)),
        init: cfg.init,
        sampling: cfg.sampling,
        solver: cfg.solver,
    };
    let table = match cfg.scheme {
        Scheme::Simple => converge_simple(&setup)?,
        Scheme::Rk => converge_rk(&setup, cfg.r)?,
    };
    let mut csv = CsvOut::create(cfg.output.as_deref(), &header(&["N", "dt", "error"]))?;
    for row in &table.rows {
        csv.row(&[row.n.to_string(), num(row.dt), num(row.error)])?;
    }
    csv.finish()?;

    let json = serde_json::to_string_pretty(&ConvergeSummary {
        config: cfg,
        fitted_slope: table.fitted_slope,
        rows: &table.rows,
    })
    .map_err(|e| CliError::Io(e.to_string()))?;
    let target = summary
        .map(Path::to_path_buf)
        .or_else(|| cfg.output.as_ref().map(|p| p.with_extension("json")));
    match target {
        Some(p) => {
            let mut w = sink(Some(&p))?;
            writeln!(w, "{json}")?;
            w.flush()?;
        }
        None => eprintln!("{json}"),
    }
    Ok(())
}

pub fn dispersion(args: &DispersionArgs) -> Result<(), CliError> {
    let prob = match args.system {
        DispersionSystem::Wave => DispersionProblem::wave(),
        DispersionSystem::Cubic => DispersionProblem::cubic(),
        DispersionSystem::LinearMatrixFile => {
            let path = args
                .matrix_file
                .as_ref()
                .ok_or_else(|| bad_config("linear-matrix-file needs --matrix-file"))?;
            let m = load_matrices(path)?;
            DispersionProblem::matrix(m.k, m.l, m.s)?
        }
    };
    let lambdas: Vec<f64> = if !args.lambda.is_empty() {
        args.lambda.clone()
    } else if args.system == DispersionSystem::Cubic {
        CUBIC_FIGURE_LAMBDAS.to_vec()
    } else {
        LINEAR_FIGURE_LAMBDAS.to_vec()
    };
    if args.resolution == 0 || !(args.window > 0.0) {
        return Err(bad_config("resolution and window must be positive"));
    }
    let opts = CurveOptions {
        resolution: args.resolution,
        window: args.window,
    };
    let rows = emit_dispersion_curves(&prob, &lambdas, &opts)?;
    let mut csv = CsvOut::create(
        args.output.as_deref(),
        &header(&["curve_id", "xi", "omega", "x", "y"]),
    )?;
    for r in rows {
        csv.row(&[r.curve_id, num(r.xi), num(r.omega), num(r.x), num(r.y)])?;
    }
    csv.finish()
}

pub fn solvability(args: &SolvabilityArgs) -> Result<(), CliError> {
    if args.rmax == 0 || args.lambda_grid == 0 {
        return Err(bad_config("rmax and lambda-grid must be positive"));
    }
    let rows = solvability_table(args.rmax, args.lambda_grid)?;
    let mut csv = CsvOut::create(
        args.output.as_deref(),
        &header(&["r", "lambda", "min_singular_value"]),
    )?;
    for r in rows {
        csv.row(&[r.r.to_string(), num(r.lambda), num(r.min_singular_value)])?;
    }
    csv.finish()
}

pub fn conservation(cfg: &RunConfig) -> Result<(), CliError> {
    let prob = Problem::from_config(cfg)?;
    let residuals: Vec<DiamondResidual> = match cfg.scheme {
        Scheme::Simple => {
            let p = MeshParams::new(cfg.n, cfg.a, cfg.b, cfg.lambda, 1)?;
            let primal = prob.simple_init(cfg, &p)?;
            let init = SimpleTangentState {
                xi: random_simple_tangent(&primal, cfg.seed),
                eta: random_simple_tangent(&primal, cfg.seed.wrapping_add(1)),
                primal,
            };
            let steps = cfg.step_count(p.dt);
            simple_conservation_run(prob.model.simple_solver(), &p, init, steps, &cfg.solver)?.1
        }
        Scheme::Rk => {
            let tab = gauss_tableau(cfg.r)?;
            let p = MeshParams::new(cfg.n, cfg.a, cfg.b, cfg.lambda, cfg.r)?;
            let primal = prob.rk_init(cfg, &tab, &p)?;
            let init = RkTangentState {
                xi: random_rk_tangent(&primal, cfg.seed)?,
                eta: random_rk_tangent(&primal, cfg.seed.wrapping_add(1))?,
                primal,
            };
            let steps = cfg.step_count(p.dt);
            rk_conservation_run(prob.sys(), &tab, &p, init, steps, &cfg.solver)?.1
        }
    };
    let mut csv = CsvOut::create(
        cfg.output.as_deref(),
        &header(&["level", "diamond", "residual"]),
    )?;
    let mut worst = 0.0f64;
    for r in &residuals {
        worst = worst.max(r.residual);
        csv.row(&[r.level.to_string(), r.diamond.to_string(), num(r.residual)])?;
    }
    csv.finish()?;
    eprintln!("{} diamonds, max residual {worst:e}", residuals.len());
    Ok(())
}

pub fn check(cfg: &RunConfig, rmax: Option<usize>) -> Result<(), CliError> {
    let prob = Problem::from_config(cfg)?;
    let mut problems: Vec<String> = validate_system(prob.sys())
        .iter()
        .map(|d| d.to_string())
        .collect();
    let rs = match rmax {
        Some(m) => 1..=m,
        None => cfg.r..=cfg.r,
    };
    for r in rs {
        problems.extend(gauss_tableau(r)?.defects(1e-12));
    }
    if problems.is_empty() {
        println!("ok");
        Ok(())
    } else {
        for p in &problems {
            println!("{p}");
        }
        Err(CliError::Check(format!("{} problem(s)", problems.len())))
    }
}
