//! Discrete multisymplectic conservation laws, checked on tangent pairs.
//!
//! A pair of tangents `(ξ, η)` of the numerical solution turns the 2-forms
//! into numbers: `dz_a ∧ K dz_b ↦ ξ_aᵀ K η_b − η_aᵀ K ξ_b`, so that
//! `ω = ½ dz ∧ K dz ↦ ξᵀ K η` and likewise `κ ↦ ξᵀ L η`. Tangents are
//! propagated through the exactly linearized per-diamond equations.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::mesh::{advance_reindex, DiamondOutput, MeshParams, TransformedCoeffs, ZigzagState};
use crate::nonlinear::{self, SolverConfig};
use crate::rk_scheme::{
    diamond_step, flatten, solve_corner_extension, unflatten, update_edges, EdgeData, StageBlock,
    StageOperator,
};
use crate::simple_scheme::{simple_half_step, stencil, CornerGrid, SimpleSolver, SimpleState};
use crate::system::{MultiHamiltonianSystem, StateVector};
use crate::tableau::GaussTableau;

/// Evaluates the forms of `K` and `L` on tangent pairs.
#[derive(Debug, Clone, PartialEq)]
pub struct FormEvaluator {
    pub k: DMatrix<f64>,
    pub l: DMatrix<f64>,
}

impl FormEvaluator {
    pub fn new(sys: &MultiHamiltonianSystem) -> Self {
        Self {
            k: sys.k().clone(),
            l: sys.l().clone(),
        }
    }

    /// `ω(ξ, η) = ξᵀ K η`.
    pub fn omega(&self, xi: &StateVector, eta: &StateVector) -> f64 {
        xi.dot(&(&self.k * eta))
    }

    /// `κ(ξ, η) = ξᵀ L η`.
    pub fn kappa(&self, xi: &StateVector, eta: &StateVector) -> f64 {
        xi.dot(&(&self.l * eta))
    }

    /// `dz_a ∧ M dz_b` on the pair, for `M` one of `K`, `L`.
    pub fn wedge(
        m: &DMatrix<f64>,
        a: (&StateVector, &StateVector),
        b: (&StateVector, &StateVector),
    ) -> f64 {
        a.0.dot(&(m * b.1)) - a.1.dot(&(m * b.0))
    }
}

/// Tangent values at the four corners of a simple-scheme diamond.
#[derive(Debug, Clone, PartialEq)]
pub struct CornerWindow {
    pub left: StateVector,
    pub bottom: StateVector,
    pub right: StateVector,
    pub top: StateVector,
}

/// Absolute value of the simple scheme's discrete conservation law
///
/// ```text
///   1/(4Δt) [ (l + t + r) ∧ K t − (l + b + r) ∧ K b ]
/// + 1/(4Δx) [ (t + r + b) ∧ L r − (t + l + b) ∧ L l ]
/// ```
pub fn simple_conservation_residual(
    forms: &FormEvaluator,
    xi: &CornerWindow,
    eta: &CornerWindow,
    dx: f64,
    dt: f64,
) -> f64 {
    let (k, l) = (&forms.k, &forms.l);
    let term = |m: &DMatrix<f64>,
                pick: fn(&CornerWindow) -> [&StateVector; 3],
                at: fn(&CornerWindow) -> &StateVector| {
        let s = |w: &CornerWindow| {
            pick(w)
                .into_iter()
                .fold(StateVector::zeros(w.top.len()), |acc, v| acc + v)
        };
        let a = (s(xi), s(eta));
        FormEvaluator::wedge(m, (&a.0, &a.1), (at(xi), at(eta)))
    };
    let time = term(k, |w| [&w.left, &w.top, &w.right], |w| &w.top)
        - term(k, |w| [&w.left, &w.bottom, &w.right], |w| &w.bottom);
    let space = term(l, |w| [&w.top, &w.right, &w.bottom], |w| &w.right)
        - term(l, |w| [&w.top, &w.left, &w.bottom], |w| &w.left);
    (time / (4.0 * dt) + space / (4.0 * dx)).abs()
}

/// Tangent values on all four edges of an rk diamond.
#[derive(Debug, Clone, PartialEq)]
pub struct EdgeWindow {
    pub left: Vec<StateVector>,
    pub bottom: Vec<StateVector>,
    pub right: Vec<StateVector>,
    pub top: Vec<StateVector>,
}

/// Absolute value of
/// `(1/Δt) Σ b_i (ω^t_i + ω_r^i − ω_ℓ^i − ω^b_i) + (1/Δx) Σ b_i (κ_r^i + κ^b_i − κ^t_i − κ_ℓ^i)`.
pub fn rk_conservation_residual(
    forms: &FormEvaluator,
    tab: &GaussTableau,
    xi: &EdgeWindow,
    eta: &EdgeWindow,
    dx: f64,
    dt: f64,
) -> f64 {
    let mut time = 0.0;
    let mut space = 0.0;
    for i in 0..tab.r {
        let om = |a: &[StateVector], b: &[StateVector]| forms.omega(&a[i], &b[i]);
        let ka = |a: &[StateVector], b: &[StateVector]| forms.kappa(&a[i], &b[i]);
        time += tab.b[i]
            * (om(&xi.top, &eta.top) + om(&xi.right, &eta.right)
                - om(&xi.left, &eta.left)
                - om(&xi.bottom, &eta.bottom));
        space += tab.b[i]
            * (ka(&xi.right, &eta.right) + ka(&xi.bottom, &eta.bottom)
                - ka(&xi.top, &eta.top)
                - ka(&xi.left, &eta.left));
    }
    (time / dt + space / dx).abs()
}

/// Residual of one diamond at a given level.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DiamondResidual {
    pub level: usize,
    pub diamond: usize,
    pub residual: f64,
}

fn require_hessian(sys: &MultiHamiltonianSystem) -> Result<()> {
    if sys.has_hessian() {
        Ok(())
    } else {
        Err(Error::MissingHessian)
    }
}

/// Top-corner tangents of one simple diamond, linearized about the solved
/// primal corners.
pub fn simple_tangent_update(
    sys: &MultiHamiltonianSystem,
    primal: &CornerWindow,
    tangents: &[(&StateVector, &StateVector, &StateVector)],
    params: &MeshParams,
) -> Result<Vec<StateVector>> {
    require_hessian(sys)?;
    let center = (&primal.left + &primal.bottom + &primal.right + &primal.top) * 0.25;
    let h = sys.hessian(&center).ok_or(Error::MissingHessian)?;
    let k = sys.k();
    let a = k / params.dt - &h * 0.25;
    let lu = nonlinear::lu_factor(&a)?;
    tangents
        .iter()
        .map(|&(l, b, r)| {
            let rhs = k * b / params.dt - sys.l() * (r - l) / params.dx + &h * (b + l + r) * 0.25;
            lu.solve(&rhs).ok_or(Error::Singular {
                column: 0,
                pivot: 0.0,
            })
        })
        .collect()
}

/// Primal state with two tangents, all for the simple scheme.
#[derive(Debug, Clone, PartialEq)]
pub struct SimpleTangentState {
    pub primal: SimpleState,
    pub xi: SimpleState,
    pub eta: SimpleState,
}

fn window(state: &SimpleState, top: &[StateVector], k: usize) -> CornerWindow {
    let (l, b, r) = stencil(state, k);
    CornerWindow {
        left: l.clone(),
        bottom: b.clone(),
        right: r.clone(),
        top: top[k].clone(),
    }
}

/// One half-level of primal and tangents, with the conservation residual of every diamond.
pub fn simple_tangent_half_step(
    solver: SimpleSolver<'_>,
    state: SimpleTangentState,
    params: &MeshParams,
    cfg: &SolverConfig,
) -> Result<(SimpleTangentState, Vec<DiamondResidual>)> {
    let sys = solver.system();
    require_hessian(sys)?;
    let forms = FormEvaluator::new(sys);
    let next = simple_half_step(solver, state.primal.clone(), params, cfg)?;
    let level = next.upper.level;
    let top = &next.upper.values;
    let solved: Vec<Result<(StateVector, StateVector, f64)>> = (0..top.len())
        .into_par_iter()
        .map(|k| {
            let p = window(&state.primal, top, k);
            let (xl, xb, xr) = stencil(&state.xi, k);
            let (el, eb, er) = stencil(&state.eta, k);
            let t = simple_tangent_update(sys, &p, &[(xl, xb, xr), (el, eb, er)], params)
                .map_err(|e| e.at(level, k))?;
            let xw = CornerWindow {
                left: xl.clone(),
                bottom: xb.clone(),
                right: xr.clone(),
                top: t[0].clone(),
            };
            let ew = CornerWindow {
                left: el.clone(),
                bottom: eb.clone(),
                right: er.clone(),
                top: t[1].clone(),
            };
            let res = simple_conservation_residual(&forms, &xw, &ew, params.dx, params.dt);
            Ok((t[0].clone(), t[1].clone(), res))
        })
        .collect();
    let solved = solved.into_iter().collect::<Result<Vec<_>>>()?;
    let mut xi_top = Vec::with_capacity(solved.len());
    let mut eta_top = Vec::with_capacity(solved.len());
    let mut residuals = Vec::with_capacity(solved.len());
    for (d, (x, e, res)) in solved.into_iter().enumerate() {
        xi_top.push(x);
        eta_top.push(e);
        residuals.push(DiamondResidual {
            level,
            diamond: d,
            residual: res,
        });
    }
    let shift = |s: SimpleState, values: Vec<StateVector>| SimpleState {
        lower: s.upper,
        upper: CornerGrid { level, values },
    };
    Ok((
        SimpleTangentState {
            primal: next,
            xi: shift(state.xi, xi_top),
            eta: shift(state.eta, eta_top),
        },
        residuals,
    ))
}

/// Runs `steps` full steps, collecting the residual of every diamond.
pub fn simple_conservation_run(
    solver: SimpleSolver<'_>,
    params: &MeshParams,
    init: SimpleTangentState,
    steps: usize,
    cfg: &SolverConfig,
) -> Result<(SimpleTangentState, Vec<DiamondResidual>)> {
    let mut state = init;
    let mut all = Vec::new();
    for _ in 0..2 * steps {
        let (next, res) = simple_tangent_half_step(solver, state, params, cfg)?;
        state = next;
        all.extend(res);
    }
    Ok((state, all))
}

/// Stage tangents of one rk diamond about solved primal stages.
fn rk_tangent_stages(
    sys: &MultiHamiltonianSystem,
    tab: &GaussTableau,
    op: &StageOperator,
    jac_lu: &nalgebra::LU<f64, nalgebra::Dyn, nalgebra::Dyn>,
    tangent: &EdgeData,
) -> Result<StageBlock> {
    let rhs = op.edge_terms(tangent) * op.scale;
    let zv = jac_lu.solve(&rhs).ok_or(Error::Singular {
        column: 0,
        pivot: 0.0,
    })?;
    Ok(StageBlock::from_z(tab, tangent, unflatten(&zv, sys.n())))
}

fn tangent_output(tab: &GaussTableau, stages: &StageBlock, edges: &EdgeData) -> DiamondOutput {
    let (right, top) = update_edges(stages, edges, tab);
    let (corner_right, corner_top) = solve_corner_extension(tab, edges);
    DiamondOutput {
        right,
        top,
        corner_right,
        corner_top,
    }
}

/// Zig-zag primal state with two tangents.
#[derive(Debug, Clone, PartialEq)]
pub struct RkTangentState {
    pub primal: ZigzagState,
    pub xi: ZigzagState,
    pub eta: ZigzagState,
}

/// One rk half-step of primal and tangents, with the residual of every diamond.
pub fn rk_tangent_half_step(
    sys: &MultiHamiltonianSystem,
    tab: &GaussTableau,
    params: &MeshParams,
    state: &RkTangentState,
    cfg: &SolverConfig,
) -> Result<(RkTangentState, Vec<DiamondResidual>)> {
    require_hessian(sys)?;
    let forms = FormEvaluator::new(sys);
    let op = StageOperator::new(tab, &TransformedCoeffs::new(sys, params.dx, params.dt));
    let level = state.primal.level;
    type Solved = (DiamondOutput, DiamondOutput, DiamondOutput, f64);
    let solve = |d: usize| -> Result<Solved> {
        let edges = EdgeData::from_state(&state.primal, d);
        let (stages, out) = diamond_step(sys, tab, &op, &edges, cfg)?;
        let lu = nonlinear::lu_factor(&op.jacobian(sys, &flatten(&stages.z)))?;
        let xe = EdgeData::from_state(&state.xi, d);
        let ee = EdgeData::from_state(&state.eta, d);
        let xo = tangent_output(tab, &rk_tangent_stages(sys, tab, &op, &lu, &xe)?, &xe);
        let eo = tangent_output(tab, &rk_tangent_stages(sys, tab, &op, &lu, &ee)?, &ee);
        let win = |e: &EdgeData, o: &DiamondOutput| EdgeWindow {
            left: e.left.clone(),
            bottom: e.bottom.clone(),
            right: o.right.clone(),
            top: o.top.clone(),
        };
        let res = rk_conservation_residual(
            &forms,
            tab,
            &win(&xe, &xo),
            &win(&ee, &eo),
            params.dx,
            params.dt,
        );
        Ok((out, xo, eo, res))
    };
    let solved: Vec<Result<Solved>> = (0..state.primal.n_diamonds())
        .into_par_iter()
        .map(|d| solve(d).map_err(|e| e.at(level, d)))
        .collect();
    let mut outs = Vec::with_capacity(solved.len());
    let mut xs = Vec::with_capacity(solved.len());
    let mut es = Vec::with_capacity(solved.len());
    let mut residuals = Vec::with_capacity(solved.len());
    for (d, s) in solved.into_iter().enumerate() {
        let (o, x, e, res) = s?;
        outs.push(o);
        xs.push(x);
        es.push(e);
        residuals.push(DiamondResidual {
            level: level + 1,
            diamond: d,
            residual: res,
        });
    }
    Ok((
        RkTangentState {
            primal: advance_reindex(&outs, level)?,
            xi: advance_reindex(&xs, level)?,
            eta: advance_reindex(&es, level)?,
        },
        residuals,
    ))
}

pub fn rk_conservation_run(
    sys: &MultiHamiltonianSystem,
    tab: &GaussTableau,
    params: &MeshParams,
    init: RkTangentState,
    steps: usize,
    cfg: &SolverConfig,
) -> Result<(RkTangentState, Vec<DiamondResidual>)> {
    let mut state = init;
    let mut all = Vec::new();
    for _ in 0..2 * steps {
        let (next, res) = rk_tangent_half_step(sys, tab, params, &state, cfg)?;
        state = next;
        all.extend(res);
    }
    Ok((state, all))
}

/// Seeded tangent data with entries uniform in `[−1, 1]`.
pub fn random_tangent_values(count: usize, n: usize, seed: u64) -> Vec<StateVector> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| DVector::from_fn(n, |_, _| rng.gen_range(-1.0..1.0)))
        .collect()
}

pub fn random_simple_tangent(like: &SimpleState, seed: u64) -> SimpleState {
    let n = like.lower.values.first().map_or(0, |v| v.len());
    let m = like.lower.values.len();
    let vals = random_tangent_values(2 * m, n, seed);
    SimpleState {
        lower: CornerGrid {
            level: like.lower.level,
            values: vals[..m].to_vec(),
        },
        upper: CornerGrid {
            level: like.upper.level,
            values: vals[m..].to_vec(),
        },
    }
}

pub fn random_rk_tangent(like: &ZigzagState, seed: u64) -> Result<ZigzagState> {
    let vals = random_tangent_values(like.values().len(), like.dim(), seed);
    ZigzagState::new(like.level, like.n_diamonds(), like.stages(), vals)
}
