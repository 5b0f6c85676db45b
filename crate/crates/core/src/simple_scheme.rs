//! The simple diamond scheme.
//!
//! Corners of the mesh carry the unknowns. A diamond with bottom corner
//! `z_b`, side corners `z_l`, `z_r` and unknown top `z_1` satisfies
//!
//! ```text
//!   K (z_1 − z_b)/Δt + L (z_r − z_l)/Δx = ∇S((z_1 + z_b + z_l + z_r)/4)
//! ```
//!
//! which is solved independently for every diamond of a level.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::mesh::MeshParams;
use crate::nonlinear::{self, SolverConfig, SolverMethod};
use crate::system::{MultiHamiltonianSystem, StateVector, WaveSystem};
use nalgebra::DVector;

/// Corner values of one level.
///
/// Only corners whose index parity matches the level exist, so entry `k`
/// holds the corner `i = 2k + (j mod 2)` at `x = a + iΔx/2`, `t = jΔt/2`.
#[derive(Debug, Clone, PartialEq)]
pub struct CornerGrid {
    pub level: usize,
    pub values: Vec<StateVector>,
}

impl CornerGrid {
    /// Half-grid index `i` of entry `k`.
    pub fn node_index(&self, k: usize) -> usize {
        2 * k + self.level % 2
    }

    pub fn x(&self, params: &MeshParams, k: usize) -> f64 {
        params.a + self.node_index(k) as f64 * params.dx * 0.5
    }

    pub fn t(&self, params: &MeshParams) -> f64 {
        self.level as f64 * params.dt * 0.5
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Two consecutive levels, which is all the scheme needs to continue.
#[derive(Debug, Clone, PartialEq)]
pub struct SimpleState {
    pub lower: CornerGrid,
    pub upper: CornerGrid,
}

/// Level 0 from `z0` and level 1 by one forward-Euler half-step.
pub fn simple_init(
    z0: impl Fn(f64) -> StateVector,
    z0_t: impl Fn(f64) -> StateVector,
    params: &MeshParams,
) -> SimpleState {
    let n = params.n_diamonds;
    let x = |i: usize| params.a + i as f64 * params.dx * 0.5;
    let lower = (0..n).map(|k| z0(x(2 * k))).collect();
    let upper = (0..n)
        .map(|k| {
            let xi = x(2 * k + 1);
            z0(xi) + z0_t(xi) * (params.dt * 0.5)
        })
        .collect();
    SimpleState {
        lower: CornerGrid {
            level: 0,
            values: lower,
        },
        upper: CornerGrid {
            level: 1,
            values: upper,
        },
    }
}

/// Both starting levels sampled from a known solution `z(x, t)`.
pub fn simple_init_exact(z: impl Fn(f64, f64) -> StateVector, params: &MeshParams) -> SimpleState {
    let n = params.n_diamonds;
    let x = |i: usize| params.a + i as f64 * params.dx * 0.5;
    let lower = (0..n).map(|k| z(x(2 * k), 0.0)).collect();
    let upper = (0..n).map(|k| z(x(2 * k + 1), params.dt * 0.5)).collect();
    SimpleState {
        lower: CornerGrid {
            level: 0,
            values: lower,
        },
        upper: CornerGrid {
            level: 1,
            values: upper,
        },
    }
}

fn check_inputs(n: usize, zs: [&StateVector; 3]) -> Result<()> {
    for z in zs {
        if z.len() != n {
            return Err(Error::InvalidInput(format!(
                "state has length {} but the system has n = {n}",
                z.len()
            )));
        }
        if z.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("non-finite corner value".into()));
        }
    }
    Ok(())
}

/// Solves one diamond for its top corner.
///
/// The residual is measured on the equations multiplied by `Δt`.
pub fn simple_diamond_update(
    sys: &MultiHamiltonianSystem,
    z_left: &StateVector,
    z_bottom: &StateVector,
    z_right: &StateVector,
    params: &MeshParams,
    cfg: &SolverConfig,
) -> Result<StateVector> {
    check_inputs(sys.n(), [z_left, z_bottom, z_right])?;
    let dt = params.dt;
    let lam = params.dt / params.dx;
    let k = sys.k();
    let side = sys.l() * (z_right - z_left) * lam;
    let rest = z_bottom + z_left + z_right;
    let center = |z1: &StateVector| (z1 + &rest) * 0.25;
    let residual = |z1: &StateVector| k * (z1 - z_bottom) + &side - sys.grad(&center(z1)) * dt;
    let jacobian = |z1: &StateVector| k - sys.hessian_or_fd(&center(z1)) * (0.25 * dt);

    let guess = z_left + z_right - z_bottom;
    let z1 = match cfg.method {
        SolverMethod::Newton | SolverMethod::Auto => {
            nonlinear::newton(residual, jacobian, guess, cfg)?.0
        }
        SolverMethod::FixedPoint => nonlinear::chord(residual, &jacobian(&guess), guess, cfg)?,
    };
    Ok(z1)
}

/// Wave-equation fast path: `w` and `v` are eliminated and only the scalar
/// equation `u_1 = C + (Δt²/4) f(ū)` is solved.
pub fn simple_wave_update(
    sys: &WaveSystem,
    z_left: &StateVector,
    z_bottom: &StateVector,
    z_right: &StateVector,
    params: &MeshParams,
    cfg: &SolverConfig,
) -> Result<StateVector> {
    check_inputs(3, [z_left, z_bottom, z_right])?;
    let dt = params.dt;
    let lam = params.dt / params.dx;
    let (ul, vl, wl) = (z_left[0], z_left[1], z_left[2]);
    let (ub, vb, wb) = (z_bottom[0], z_bottom[1], z_bottom[2]);
    let (ur, vr, wr) = (z_right[0], z_right[1], z_right[2]);

    let w1 = 4.0 * (ur - ul) / params.dx - wb - wl - wr;
    let c = ub + 0.25 * dt * (2.0 * vb + vl + vr + lam * (wr - wl));
    let q = 0.25 * dt * dt;
    let others = ub + ul + ur;

    let u1 = solve_scalar(sys, c, q, others, cfg)?;
    let ubar = 0.25 * (u1 + others);
    let v1 = vb + lam * (wr - wl) + dt * sys.f(ubar);
    Ok(StateVector::from_vec(vec![u1, v1, w1]))
}

/// Solves `u = c + q f((u + others)/4)`.
fn solve_scalar(sys: &WaveSystem, c: f64, q: f64, others: f64, cfg: &SolverConfig) -> Result<f64> {
    let g = |u: f64| u - c - q * sys.f(0.25 * (u + others));
    if g(c) == 0.0 {
        return Ok(c);
    }
    let x0 = DVector::from_element(1, c);
    let use_newton = cfg.method != SolverMethod::FixedPoint && sys.f_prime(0.0).is_some();
    let u = if use_newton {
        nonlinear::newton(
            |x: &DVector<f64>| DVector::from_element(1, g(x[0])),
            |x: &DVector<f64>| {
                let fp = sys.f_prime(0.25 * (x[0] + others)).unwrap_or(0.0);
                nalgebra::DMatrix::from_element(1, 1, 1.0 - 0.25 * q * fp)
            },
            x0,
            cfg,
        )?
        .0
    } else {
        nonlinear::fixed_point(
            |x: &DVector<f64>| DVector::from_element(1, c + q * sys.f(0.25 * (x[0] + others))),
            x0,
            cfg,
        )?
        .0
    };
    Ok(u[0])
}

/// Which corner solver `simple_run` uses for each diamond.
#[derive(Clone, Copy)]
pub enum SimpleSolver<'a> {
    General(&'a MultiHamiltonianSystem),
    Wave(&'a WaveSystem),
}

impl SimpleSolver<'_> {
    fn update(
        &self,
        zl: &StateVector,
        zb: &StateVector,
        zr: &StateVector,
        params: &MeshParams,
        cfg: &SolverConfig,
    ) -> Result<StateVector> {
        match self {
            SimpleSolver::General(sys) => simple_diamond_update(sys, zl, zb, zr, params, cfg),
            SimpleSolver::Wave(sys) => simple_wave_update(sys, zl, zb, zr, params, cfg),
        }
    }

    pub fn system(&self) -> &MultiHamiltonianSystem {
        match self {
            SimpleSolver::General(sys) => sys,
            SimpleSolver::Wave(sys) => sys.system(),
        }
    }
}

/// Left, bottom and right corners of entry `k` of the next level.
pub fn stencil(state: &SimpleState, k: usize) -> (&StateVector, &StateVector, &StateVector) {
    let n = state.upper.values.len();
    let mid = &state.upper.values;
    let bottom = &state.lower.values[k];
    // The new level has the parity of `lower`; its entry k sits between
    // entries k−1 and k of an odd middle level, or k and k+1 of an even one.
    if state.upper.level % 2 == 1 {
        (&mid[(k + n - 1) % n], bottom, &mid[k])
    } else {
        (&mid[k], bottom, &mid[(k + 1) % n])
    }
}

/// Advances by one half-level.
pub fn simple_half_step(
    solver: SimpleSolver<'_>,
    state: SimpleState,
    params: &MeshParams,
    cfg: &SolverConfig,
) -> Result<SimpleState> {
    let level = state.upper.level + 1;
    let results: Vec<Result<StateVector>> = (0..state.lower.values.len())
        .into_par_iter()
        .map(|k| {
            let (zl, zb, zr) = stencil(&state, k);
            solver
                .update(zl, zb, zr, params, cfg)
                .map_err(|e| e.at(level, k))
        })
        .collect();
    let values = results.into_iter().collect::<Result<Vec<_>>>()?;
    Ok(SimpleState {
        lower: state.upper,
        upper: CornerGrid { level, values },
    })
}

/// Runs `steps` full steps; `lower` of the result is at `t = steps·Δt`.
pub fn simple_run(
    solver: SimpleSolver<'_>,
    params: &MeshParams,
    init: SimpleState,
    steps: usize,
    cfg: &SolverConfig,
) -> Result<SimpleState> {
    cfg.validate()?;
    if init.lower.values.len() != params.n_diamonds || init.upper.values.len() != params.n_diamonds
    {
        return Err(Error::InvalidInput(
            "initial grids do not have N entries".into(),
        ));
    }
    if init.upper.level != init.lower.level + 1 {
        return Err(Error::InvalidInput(
            "initial grids are not consecutive levels".into(),
        ));
    }
    let mut state = init;
    for _ in 0..2 * steps {
        state = simple_half_step(solver, state, params, cfg)?;
    }
    Ok(state)
}
