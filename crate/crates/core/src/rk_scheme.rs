//! The r-stage diamond scheme.
//!
//! On the unit square of one diamond the PDE reads `K̃ z_t̃ + L̃ z_x̃ = ∇S(z)`.
//! Gauss collocation in both directions gives stage values `Z_i^j` at
//! `(c_i, c_j)` with
//!
//! ```text
//!   Z_i^j = z̃_ℓ^j + Σ_k a_ik X_k^j
//!   Z_i^j = z̃^b_i + Σ_k a_jk T_i^k
//!   K̃ T_i^j + L̃ X_i^j = ∇S(Z_i^j)
//! ```
//!
//! and the upper edges follow from `z̃_r^j = z̃_ℓ^j + Σ_k b_k X_k^j` and
//! `z̃^t_i = z̃^b_i + Σ_k b_k T_i^k`. With `M = A⁻¹` the first two lines give
//! `X_i^j = Σ_k m_ik (Z_k^j − z̃_ℓ^j)` and `T_i^j = Σ_k m_jk (Z_i^k − z̃^b_i)`,
//! which leaves `r² n` equations in `Z`.
//!
//! Stage arrays are flattened with `i` (the x̃ stage) major: entry `(i, j)`
//! lives at `i r + j`.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::mesh::{
    advance_reindex, slot_coords, DiamondOutput, MeshParams, TransformedCoeffs, ZigzagState,
};
use crate::nonlinear::{self, kron, SolverConfig, SolverMethod};
use crate::system::{MultiHamiltonianSystem, StateVector, WaveSystem};
use crate::tableau::{build_b, GaussTableau};

/// Boundary data of one diamond: the shared bottom corner and the stage
/// values on the lower-left and lower-right edges.
#[derive(Debug, Clone, PartialEq)]
pub struct EdgeData {
    pub corner: StateVector,
    pub left: Vec<StateVector>,
    pub bottom: Vec<StateVector>,
}

impl EdgeData {
    pub fn from_state(state: &ZigzagState, diamond: usize) -> Self {
        Self {
            corner: state.corner(diamond).clone(),
            left: state.left(diamond).to_vec(),
            bottom: state.bottom(diamond).to_vec(),
        }
    }

    fn check(&self, r: usize, n: usize) -> Result<()> {
        if self.left.len() != r || self.bottom.len() != r {
            return Err(Error::InvalidInput(format!(
                "edges have {} and {} values, expected r = {r}",
                self.left.len(),
                self.bottom.len()
            )));
        }
        for z in std::iter::once(&self.corner)
            .chain(&self.left)
            .chain(&self.bottom)
        {
            if z.len() != n {
                return Err(Error::InvalidInput(format!(
                    "edge value has length {}, expected {n}",
                    z.len()
                )));
            }
            if z.iter().any(|v| !v.is_finite()) {
                return Err(Error::InvalidInput("non-finite edge value".into()));
            }
        }
        Ok(())
    }
}

/// Stage values of one diamond, each an `r × r` array flattened `i`-major.
#[derive(Debug, Clone, PartialEq)]
pub struct StageBlock {
    pub r: usize,
    pub z: Vec<StateVector>,
    pub x: Vec<StateVector>,
    pub t: Vec<StateVector>,
}

impl StageBlock {
    /// `Z_i^j` with zero-based `i`, `j`.
    pub fn z(&self, i: usize, j: usize) -> &StateVector {
        &self.z[i * self.r + j]
    }
    pub fn x(&self, i: usize, j: usize) -> &StateVector {
        &self.x[i * self.r + j]
    }
    pub fn t(&self, i: usize, j: usize) -> &StateVector {
        &self.t[i * self.r + j]
    }

    /// Builds `X` and `T` from `Z` and the edges.
    pub fn from_z(tab: &GaussTableau, edges: &EdgeData, z: Vec<StateVector>) -> Self {
        let r = tab.r;
        let m = &tab.a_inv;
        let mut x = Vec::with_capacity(r * r);
        let mut t = Vec::with_capacity(r * r);
        for i in 0..r {
            for j in 0..r {
                let mut xi = StateVector::zeros(edges.corner.len());
                let mut ti = xi.clone();
                for k in 0..r {
                    xi += (&z[k * r + j] - &edges.left[j]) * m[(i, k)];
                    ti += (&z[i * r + k] - &edges.bottom[i]) * m[(j, k)];
                }
                x.push(xi);
                t.push(ti);
            }
        }
        Self { r, z, x, t }
    }
}

pub(crate) fn flatten(vs: &[StateVector]) -> DVector<f64> {
    let n = vs.first().map_or(0, |v| v.len());
    DVector::from_iterator(vs.len() * n, vs.iter().flat_map(|v| v.iter().copied()))
}

pub(crate) fn unflatten(v: &DVector<f64>, n: usize) -> Vec<StateVector> {
    v.as_slice()
        .chunks(n)
        .map(StateVector::from_column_slice)
        .collect()
}

/// The constant part of the eliminated stage equations, shared by every
/// diamond of a half-step.
#[derive(Debug, Clone)]
pub struct StageOperator {
    r: usize,
    n: usize,
    /// `I⊗M⊗K̃ + M⊗I⊗L̃`.
    linear: DMatrix<f64>,
    row_sums: DVector<f64>,
    k_tilde: DMatrix<f64>,
    l_tilde: DMatrix<f64>,
    /// Equations are multiplied by `|Δt|` so residuals stay O(1) as the mesh is refined.
    pub(crate) scale: f64,
}

impl StageOperator {
    pub fn new(tab: &GaussTableau, coeffs: &TransformedCoeffs) -> Self {
        let r = tab.r;
        let n = coeffs.k_tilde.nrows();
        let id = DMatrix::identity(r, r);
        let m = &tab.a_inv;
        let linear = kron(&kron(&id, m), &coeffs.k_tilde) + kron(&kron(m, &id), &coeffs.l_tilde);
        Self {
            r,
            n,
            linear,
            row_sums: tab.a_inv_row_sums(),
            k_tilde: coeffs.k_tilde.clone(),
            l_tilde: coeffs.l_tilde.clone(),
            scale: coeffs.dt.abs(),
        }
    }

    /// `K̃ s_j z̃^b_i + L̃ s_i z̃_ℓ^j`, the edge terms moved to the right-hand side.
    pub(crate) fn edge_terms(&self, edges: &EdgeData) -> DVector<f64> {
        let r = self.r;
        let kb: Vec<StateVector> = edges.bottom.iter().map(|b| &self.k_tilde * b).collect();
        let ll: Vec<StateVector> = edges.left.iter().map(|l| &self.l_tilde * l).collect();
        let mut out = Vec::with_capacity(r * r);
        for i in 0..r {
            for j in 0..r {
                out.push(&kb[i] * self.row_sums[j] + &ll[j] * self.row_sums[i]);
            }
        }
        flatten(&out)
    }

    fn residual(
        &self,
        sys: &MultiHamiltonianSystem,
        zv: &DVector<f64>,
        edge_terms: &DVector<f64>,
    ) -> DVector<f64> {
        let grads: Vec<StateVector> = zv
            .as_slice()
            .chunks(self.n)
            .map(|c| sys.grad(&StateVector::from_column_slice(c)))
            .collect();
        (&self.linear * zv - edge_terms - flatten(&grads)) * self.scale
    }

    pub(crate) fn jacobian(&self, sys: &MultiHamiltonianSystem, zv: &DVector<f64>) -> DMatrix<f64> {
        let n = self.n;
        let mut jac = self.linear.clone();
        for (s, c) in zv.as_slice().chunks(n).enumerate() {
            let h = sys.hessian_or_fd(&StateVector::from_column_slice(c));
            let mut block = jac.view_mut((s * n, s * n), (n, n));
            block -= h;
        }
        jac * self.scale
    }
}

/// Starting guess `Z_i^j = z̃_ℓ^j + z̃^b_i − corner`.
fn initial_guess(edges: &EdgeData) -> Vec<StateVector> {
    let r = edges.left.len();
    let mut z = Vec::with_capacity(r * r);
    for i in 0..r {
        for j in 0..r {
            z.push(&edges.left[j] + &edges.bottom[i] - &edges.corner);
        }
    }
    z
}

/// Solves the stage equations of one diamond.
pub fn solve_stages(
    sys: &MultiHamiltonianSystem,
    tab: &GaussTableau,
    coeffs: &TransformedCoeffs,
    edges: &EdgeData,
    cfg: &SolverConfig,
) -> Result<StageBlock> {
    solve_stages_with(sys, tab, &StageOperator::new(tab, coeffs), edges, cfg)
}

pub fn solve_stages_with(
    sys: &MultiHamiltonianSystem,
    tab: &GaussTableau,
    op: &StageOperator,
    edges: &EdgeData,
    cfg: &SolverConfig,
) -> Result<StageBlock> {
    edges.check(tab.r, sys.n())?;
    if op.r != tab.r || op.n != sys.n() {
        return Err(Error::InvalidInput(
            "stage operator does not match the tableau or system".into(),
        ));
    }
    let rhs = op.edge_terms(edges);
    let f = |zv: &DVector<f64>| op.residual(sys, zv, &rhs);
    let x0 = flatten(&initial_guess(edges));
    let zv = match cfg.method {
        SolverMethod::Newton | SolverMethod::Auto => {
            nonlinear::newton(f, |zv: &DVector<f64>| op.jacobian(sys, zv), x0, cfg)?.0
        }
        SolverMethod::FixedPoint => {
            let j0 = op.jacobian(sys, &x0);
            nonlinear::chord(f, &j0, x0, cfg)?
        }
    };
    Ok(StageBlock::from_z(tab, edges, unflatten(&zv, sys.n())))
}

/// `z̃_r^j = z̃_ℓ^j + Σ_k b_k X_k^j` and `z̃^t_i = z̃^b_i + Σ_k b_k T_i^k`.
pub fn update_edges(
    stages: &StageBlock,
    edges: &EdgeData,
    tab: &GaussTableau,
) -> (Vec<StateVector>, Vec<StateVector>) {
    let r = tab.r;
    let right = (0..r)
        .map(|j| {
            (0..r).fold(edges.left[j].clone(), |acc, k| {
                acc + stages.x(k, j) * tab.b[k]
            })
        })
        .collect();
    let top = (0..r)
        .map(|i| {
            (0..r).fold(edges.bottom[i].clone(), |acc, k| {
                acc + stages.t(i, k) * tab.b[k]
            })
        })
        .collect();
    (right, top)
}

/// Right and left corner estimates of a diamond.
///
/// The stage relations are extended to the bottom row and left column of
/// the square, where the "stage values" are the edge data themselves:
/// `X_k^0 = Σ_i m_ki (z̃^b_i − z̃⁰)` and `T_0^k = Σ_j m_kj (z̃_ℓ^j − z̃⁰)`.
/// The update formulas then give `z̃_r⁰` and `z̃^t_0`.
pub fn solve_corner_extension(tab: &GaussTableau, edges: &EdgeData) -> (StateVector, StateVector) {
    let w = tab.b_a_inv();
    let extend = |vals: &[StateVector]| {
        vals.iter()
            .zip(w.iter())
            .fold(edges.corner.clone(), |acc, (v, wk)| {
                acc + (v - &edges.corner) * *wk
            })
    };
    (extend(&edges.bottom), extend(&edges.left))
}

/// Convergence information from [`reduced_wave_solve`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReducedReport {
    pub iterations: usize,
    /// `Δt² ‖B⁻¹‖_∞ Lip`; the iteration is a contraction when this is below one.
    pub contraction_bound: f64,
}

/// Stage solve for the wave equation through the `r²` scalar unknowns `u_i^j`.
///
/// Eliminating `v` and `w` leaves `B u = b + Δt² f(u)`, iterated as
/// `u ← B⁻¹(b + Δt² f(u))`.
pub fn reduced_wave_solve(
    sys: &WaveSystem,
    tab: &GaussTableau,
    coeffs: &TransformedCoeffs,
    edges: &EdgeData,
    cfg: &SolverConfig,
) -> Result<(StageBlock, ReducedReport)> {
    let r = tab.r;
    edges.check(r, 3)?;
    let (dt, dx) = (coeffs.dt, coeffs.dx);
    let lam = dt / dx;
    let m = &tab.a_inv;
    let s = tab.a_inv_row_sums();
    let id = DMatrix::identity(r, r);
    let m_t = kron(&id, m);
    let m_x = kron(m, &id);
    let bmat = build_b(tab, lam).b;

    let comp = |vals: &[StateVector], c: usize| -> Vec<f64> { vals.iter().map(|v| v[c]).collect() };
    let (ub, vb, wb) = (
        comp(&edges.bottom, 0),
        comp(&edges.bottom, 1),
        comp(&edges.bottom, 2),
    );
    let (ul, vl, wl) = (
        comp(&edges.left, 0),
        comp(&edges.left, 1),
        comp(&edges.left, 2),
    );
    let grid = |f: &dyn Fn(usize, usize) -> f64| DVector::from_fn(r * r, |ij, _| f(ij / r, ij % r));
    let c_v = grid(&|i, j| s[j] * ub[i] + s[i] * ul[j]);
    let c_w = grid(&|i, j| s[i] * ul[j] - s[j] * ub[i]);
    let b = (&m_t + &m_x) * &c_v - (&m_x - &m_t) * &c_w * (lam * lam)
        + grid(&|i, j| s[j] * vb[i] + s[i] * vl[j]) * dt
        + grid(&|i, j| s[j] * wb[i] - s[i] * wl[j]) * (dt * lam);

    let lu = nonlinear::lu_factor(&bmat)?;
    let solve = |rhs: &DVector<f64>| {
        lu.solve(rhs).ok_or(Error::Singular {
            column: 0,
            pivot: 0.0,
        })
    };
    let contraction_bound =
        dt * dt * nonlinear::inf_norm_inverse(&bmat)? * sys.lipschitz().unwrap_or(f64::NAN);

    let u0 = solve(&b)?;
    let g = |u: &DVector<f64>| {
        let rhs = &b + u.map(|x| sys.f(x)) * (dt * dt);
        solve(&rhs).unwrap_or_else(|_| DVector::from_element(r * r, f64::NAN))
    };
    let (u, report) = nonlinear::fixed_point(g, u0, cfg)?;

    let v = ((&m_t + &m_x) * &u - &c_v) / dt;
    let w = ((&m_x - &m_t) * &u - &c_w) / dx;
    let z = (0..r * r)
        .map(|ij| StateVector::from_vec(vec![u[ij], v[ij], w[ij]]))
        .collect();
    Ok((
        StageBlock::from_z(tab, edges, z),
        ReducedReport {
            iterations: report.iterations,
            contraction_bound,
        },
    ))
}

/// Solves one diamond: stages, upper edges and both corner estimates.
pub fn diamond_step(
    sys: &MultiHamiltonianSystem,
    tab: &GaussTableau,
    op: &StageOperator,
    edges: &EdgeData,
    cfg: &SolverConfig,
) -> Result<(StageBlock, DiamondOutput)> {
    let stages = solve_stages_with(sys, tab, op, edges, cfg)?;
    let (right, top) = update_edges(&stages, edges, tab);
    let (corner_right, corner_top) = solve_corner_extension(tab, edges);
    Ok((
        stages,
        DiamondOutput {
            right,
            top,
            corner_right,
            corner_top,
        },
    ))
}

/// Advances the zig-zag by one level using explicit transformed coefficients
/// (a negative `Δt` steps backwards).
pub fn rk_half_step_with(
    sys: &MultiHamiltonianSystem,
    tab: &GaussTableau,
    coeffs: &TransformedCoeffs,
    state: &ZigzagState,
    cfg: &SolverConfig,
) -> Result<ZigzagState> {
    if state.stages() != tab.r || state.dim() != sys.n() {
        return Err(Error::InvalidInput(format!(
            "state has r = {}, n = {} but the scheme has r = {}, n = {}",
            state.stages(),
            state.dim(),
            tab.r,
            sys.n()
        )));
    }
    let op = StageOperator::new(tab, coeffs);
    let level = state.level;
    let outputs: Vec<Result<DiamondOutput>> = (0..state.n_diamonds())
        .into_par_iter()
        .map(|d| {
            diamond_step(sys, tab, &op, &EdgeData::from_state(state, d), cfg)
                .map(|(_, out)| out)
                .map_err(|e| e.at(level, d))
        })
        .collect();
    let outputs = outputs.into_iter().collect::<Result<Vec<_>>>()?;
    advance_reindex(&outputs, level)
}

pub fn rk_half_step(
    sys: &MultiHamiltonianSystem,
    tab: &GaussTableau,
    params: &MeshParams,
    state: &ZigzagState,
    cfg: &SolverConfig,
) -> Result<ZigzagState> {
    rk_half_step_with(
        sys,
        tab,
        &TransformedCoeffs::new(sys, params.dx, params.dt),
        state,
        cfg,
    )
}

/// Runs `steps` full steps (two half-steps each).
pub fn rk_run(
    sys: &MultiHamiltonianSystem,
    tab: &GaussTableau,
    params: &MeshParams,
    init: ZigzagState,
    steps: usize,
    cfg: &SolverConfig,
) -> Result<ZigzagState> {
    cfg.validate()?;
    if init.n_diamonds() != params.n_diamonds {
        return Err(Error::InvalidInput(format!(
            "state has {} diamonds but the mesh has {}",
            init.n_diamonds(),
            params.n_diamonds
        )));
    }
    let coeffs = TransformedCoeffs::new(sys, params.dx, params.dt);
    let mut state = init;
    for _ in 0..2 * steps {
        state = rk_half_step_with(sys, tab, &coeffs, &state, cfg)?;
    }
    Ok(state)
}

/// Level-0 zig-zag with every node set to `z0(x) + t z0_t(x)` at its own
/// `(x, t)`; `x` is wrapped into the domain.
pub fn rk_init_euler(
    z0: impl Fn(f64) -> StateVector,
    z0_t: impl Fn(f64) -> StateVector,
    tab: &GaussTableau,
    params: &MeshParams,
) -> Result<ZigzagState> {
    rk_init_exact(|x, t| z0(x) + z0_t(x) * t, tab, params)
}

/// Level-0 zig-zag sampled from a known solution `z(x, t)`.
pub fn rk_init_exact(
    z: impl Fn(f64, f64) -> StateVector,
    tab: &GaussTableau,
    params: &MeshParams,
) -> Result<ZigzagState> {
    let mut values = Vec::with_capacity(params.n_diamonds * (2 * tab.r + 1));
    for d in 0..params.n_diamonds {
        for s in 0..=2 * tab.r {
            let (x, t) = slot_coords(params, tab, 0, d, s)?;
            values.push(z(params.wrap(x), t));
        }
    }
    ZigzagState::new(0, params.n_diamonds, tab.r, values)
}

/// Edge midpoints of one simple-scheme diamond, seen as `r = 1` data.
#[derive(Debug, Clone, PartialEq)]
pub struct R1Edges {
    pub left: StateVector,
    pub bottom: StateVector,
    pub right: StateVector,
    pub top: StateVector,
}

/// Maps the four corners `(left, bottom, right, top)` of a diamond to its
/// edge midpoints.
pub fn map_simple_to_r1(
    zl: &StateVector,
    zb: &StateVector,
    zr: &StateVector,
    zt: &StateVector,
) -> R1Edges {
    R1Edges {
        left: (zb + zl) * 0.5,
        bottom: (zb + zr) * 0.5,
        right: (zr + zt) * 0.5,
        top: (zl + zt) * 0.5,
    }
}

/// Largest residual of the two `r = 1` equations
/// `K̃(z̃^t − z̃^b) + L̃(z̃_r − z̃_ℓ) = ∇S(mean)` and `z̃^t − z̃_r + z̃^b − z̃_ℓ = 0`.
pub fn r1_residual(sys: &MultiHamiltonianSystem, coeffs: &TransformedCoeffs, e: &R1Edges) -> f64 {
    let mean = (&e.top + &e.bottom + &e.right + &e.left) * 0.25;
    let first = &coeffs.k_tilde * (&e.top - &e.bottom) + &coeffs.l_tilde * (&e.right - &e.left)
        - sys.grad(&mean);
    let second = &e.top - &e.right + &e.bottom - &e.left;
    first.amax().max(second.amax())
}
