//! The sine–Gordon breather benchmark and convergence studies.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mesh::{slot_coords, MeshParams, ZigzagState};
use crate::nonlinear::SolverConfig;
use crate::rk_scheme::{rk_init_euler, rk_init_exact, rk_run};
use crate::simple_scheme::{simple_init, simple_init_exact, simple_run, SimpleSolver, SimpleState};
use crate::system::{sine_gordon, StateVector};
use crate::tableau::gauss_tableau;

const SQRT2: f64 = std::f64::consts::SQRT_2;

/// Breather `u = 4 atan(sin(t/√2) / cosh(x/√2))` with `(u, u_t, u_x)`.
pub fn breather(x: f64, t: f64) -> (f64, f64, f64) {
    let (s, ct) = (t / SQRT2).sin_cos();
    let c = (x / SQRT2).cosh();
    let sh = (x / SQRT2).sinh();
    let q = s / c;
    let d = 1.0 + q * q;
    let q_t = ct / (SQRT2 * c);
    let q_x = -s * sh / (SQRT2 * c * c);
    (4.0 * q.atan(), 4.0 * q_t / d, 4.0 * q_x / d)
}

/// The breather as a state `z = (u, u_t, u_x)`.
pub fn breather_state(x: f64, t: f64) -> StateVector {
    let (u, ut, ux) = breather(x, t);
    StateVector::from_vec(vec![u, ut, ux])
}

/// `z_t = (u_t, u_tt, u_xt)` of the breather.
pub fn breather_state_t(x: f64, t: f64) -> StateVector {
    let (s, ct) = (t / SQRT2).sin_cos();
    let c = (x / SQRT2).cosh();
    let sh = (x / SQRT2).sinh();
    let q = s / c;
    let d = 1.0 + q * q;
    let q_t = ct / (SQRT2 * c);
    let q_x = -s * sh / (SQRT2 * c * c);
    let q_tt = -0.5 * q;
    let q_xt = -ct * sh / (2.0 * c * c);
    let u_t = 4.0 * q_t / d;
    let u_tt = 4.0 * (q_tt / d - 2.0 * q * q_t * q_t / (d * d));
    let u_xt = 4.0 * (q_xt / d - 2.0 * q * q_x * q_t / (d * d));
    StateVector::from_vec(vec![u_t, u_tt, u_xt])
}

/// Discrete 2-norm `√((b − a)/N Σ (ũ_i − u(x_i, t_i))²)` over samples `(x, t, ũ)`.
pub fn error_norm(
    samples: &[(f64, f64, f64)],
    exact: impl Fn(f64, f64) -> f64,
    a: f64,
    b: f64,
) -> f64 {
    if samples.is_empty() {
        return 0.0;
    }
    let sum: f64 = samples
        .iter()
        .map(|&(x, t, u)| (u - exact(x, t)).powi(2))
        .sum();
    ((b - a) / samples.len() as f64 * sum).sqrt()
}

/// Least-squares slope of `log y` against `log x`.
pub fn log_log_slope(points: &[(f64, f64)]) -> f64 {
    let n = points.len() as f64;
    let (lx, ly): (Vec<f64>, Vec<f64>) = points.iter().map(|&(x, y)| (x.ln(), y.ln())).unzip();
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxy: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = lx.iter().map(|x| (x - mx).powi(2)).sum();
    sxy / sxx
}

/// Errors below this are treated as round-off and left out of the fit.
pub const ERROR_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceRow {
    pub n: usize,
    pub dt: f64,
    pub error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceTable {
    pub rows: Vec<ConvergenceRow>,
    pub fitted_slope: f64,
}

impl ConvergenceTable {
    /// Sorts by decreasing `Δt` and fits the rows above [`ERROR_FLOOR`].
    pub fn new(mut rows: Vec<ConvergenceRow>) -> Result<Self> {
        rows.sort_by(|a, b| b.dt.total_cmp(&a.dt));
        let pts: Vec<(f64, f64)> = rows
            .iter()
            .filter(|r| r.error >= ERROR_FLOOR)
            .map(|r| (r.dt, r.error))
            .collect();
        if pts.len() < 2 {
            return Err(Error::InvalidInput(
                "need at least two errors above the floor to fit a slope".into(),
            ));
        }
        Ok(Self {
            fitted_slope: log_log_slope(&pts),
            rows,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitMode {
    Exact,
    Euler,
}

/// Which nodes of the final rk zig-zag enter the error norm.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorSampling {
    /// The `2rN` edge nodes, each at its own `(x, t)`.
    EdgeNodes,
    /// The `N` corners of the zig-zag, which share a single time.
    Corners,
}

/// A ladder `N = n0, 2 n0, …` of breather runs over a fixed time.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceSetup {
    pub n0: usize,
    pub levels: usize,
    pub a: f64,
    pub b: f64,
    pub lambda: f64,
    /// Final time; defaults to two steps of the coarsest mesh.
    pub t_final: Option<f64>,
    pub init: InitMode,
    pub sampling: ErrorSampling,
    pub solver: SolverConfig,
}

impl Default for ConvergenceSetup {
    fn default() -> Self {
        Self {
            n0: 40,
            levels: 6,
            a: -30.0,
            b: 30.0,
            lambda: 0.5,
            t_final: None,
            init: InitMode::Exact,
            sampling: ErrorSampling::Corners,
            solver: SolverConfig::default(),
        }
    }
}

impl ConvergenceSetup {
    fn t_final(&self) -> f64 {
        self.t_final
            .unwrap_or(2.0 * self.lambda * (self.b - self.a) / self.n0 as f64)
    }

    /// Mesh and whole number of full steps for rung `k`.
    fn rung(&self, k: usize, r: usize) -> Result<(MeshParams, usize)> {
        let p = MeshParams::new(self.n0 << k, self.a, self.b, self.lambda, r)?;
        let steps = (self.t_final() / p.dt).round() as usize;
        Ok((p, steps))
    }
}

/// Breather corner error of a simple-scheme state at its lower level.
pub fn simple_error(state: &SimpleState, p: &MeshParams) -> f64 {
    let g = &state.lower;
    let t = g.t(p);
    let samples: Vec<_> = (0..g.len())
        .map(|k| (g.x(p, k), t, g.values[k][0]))
        .collect();
    error_norm(&samples, |x, t| breather(x, t).0, p.a, p.b)
}

/// Breather error of an rk zig-zag.
pub fn rk_error(state: &ZigzagState, p: &MeshParams, sampling: ErrorSampling) -> Result<f64> {
    let tab = gauss_tableau(state.stages())?;
    let slots: Vec<usize> = match sampling {
        ErrorSampling::EdgeNodes => (1..=2 * tab.r).collect(),
        ErrorSampling::Corners => vec![0],
    };
    let mut samples = Vec::with_capacity(state.n_diamonds() * slots.len());
    for d in 0..state.n_diamonds() {
        for &s in &slots {
            let (x, t) = slot_coords(p, &tab, state.level, d, s)?;
            samples.push((p.wrap(x), t, state.get(d, s)[0]));
        }
    }
    Ok(error_norm(&samples, |x, t| breather(x, t).0, p.a, p.b))
}

/// Simple-scheme convergence on the breather.
pub fn converge_simple(setup: &ConvergenceSetup) -> Result<ConvergenceTable> {
    let sg = sine_gordon();
    let mut rows = Vec::with_capacity(setup.levels);
    for k in 0..setup.levels {
        let (p, steps) = setup.rung(k, 1)?;
        let init = match setup.init {
            InitMode::Euler => {
                simple_init(|x| breather_state(x, 0.0), |x| breather_state_t(x, 0.0), &p)
            }
            InitMode::Exact => simple_init_exact(breather_state, &p),
        };
        let out = simple_run(SimpleSolver::Wave(&sg), &p, init, steps, &setup.solver)?;
        rows.push(ConvergenceRow {
            n: p.n_diamonds,
            dt: p.dt,
            error: simple_error(&out, &p),
        });
    }
    ConvergenceTable::new(rows)
}

/// Convergence of the `r`-stage scheme on the breather.
pub fn converge_rk(setup: &ConvergenceSetup, r: usize) -> Result<ConvergenceTable> {
    let sg = sine_gordon();
    let tab = gauss_tableau(r)?;
    let mut rows = Vec::with_capacity(setup.levels);
    for k in 0..setup.levels {
        let (p, steps) = setup.rung(k, r)?;
        let init = match setup.init {
            InitMode::Exact => rk_init_exact(breather_state, &tab, &p)?,
            InitMode::Euler => rk_init_euler(
                |x| breather_state(x, 0.0),
                |x| breather_state_t(x, 0.0),
                &tab,
                &p,
            )?,
        };
        let out = rk_run(&sg, &tab, &p, init, steps, &setup.solver)?;
        rows.push(ConvergenceRow {
            n: p.n_diamonds,
            dt: p.dt,
            error: rk_error(&out, &p, setup.sampling)?,
        });
    }
    ConvergenceTable::new(rows)
}
