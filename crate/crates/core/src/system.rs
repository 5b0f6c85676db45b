//! Multi-Hamiltonian systems `K z_t + L z_x = ∇S(z)`.
//!
//! `K` and `L` are constant skew-symmetric matrices and `S` is a smooth
//! scalar function of the state. The one-dimensional nonlinear wave
//! equation `u_tt − u_xx = f(u)` fits this form with `z = (u, u_t, u_x)`,
//! see [`make_wave_system`].

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// A point of state space, length `n` of the owning system.
pub type StateVector = DVector<f64>;

pub type GradFn = Arc<dyn Fn(&StateVector) -> StateVector + Send + Sync>;
pub type HessFn = Arc<dyn Fn(&StateVector) -> DMatrix<f64> + Send + Sync>;
pub type ValueFn = Arc<dyn Fn(&StateVector) -> f64 + Send + Sync>;
pub type ScalarFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// Step used for central-difference Hessians.
const FD_STEP: f64 = 1e-6;

#[derive(Clone)]
pub struct MultiHamiltonianSystem {
    n: usize,
    k: DMatrix<f64>,
    l: DMatrix<f64>,
    grad_s: GradFn,
    hess_s: Option<HessFn>,
    s_value: Option<ValueFn>,
    lipschitz: Option<f64>,
}

impl fmt::Debug for MultiHamiltonianSystem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("MultiHamiltonianSystem")
            .field("n", &self.n)
            .field("k", &self.k)
            .field("l", &self.l)
            .field("has_hessian", &self.hess_s.is_some())
            .field("lipschitz", &self.lipschitz)
            .finish()
    }
}

fn is_skew(m: &DMatrix<f64>) -> bool {
    m.is_square() && *m == -m.transpose()
}

impl MultiHamiltonianSystem {
    /// Builds a system, rejecting `K`, `L` that are not exactly skew.
    pub fn new(k: DMatrix<f64>, l: DMatrix<f64>, grad_s: GradFn) -> Result<Self> {
        let sys = Self::new_unchecked(k, l, grad_s);
        if sys.k.shape() != (sys.n, sys.n) || sys.l.shape() != (sys.n, sys.n) {
            return Err(Error::InvalidInput(format!(
                "K is {:?} and L is {:?}; both must be square of the same size",
                sys.k.shape(),
                sys.l.shape()
            )));
        }
        if !is_skew(&sys.k) {
            return Err(Error::InvalidInput("K is not skew-symmetric".into()));
        }
        if !is_skew(&sys.l) {
            return Err(Error::InvalidInput("L is not skew-symmetric".into()));
        }
        Ok(sys)
    }

    /// Builds a system without checking anything; see [`validate_system`].
    pub fn new_unchecked(k: DMatrix<f64>, l: DMatrix<f64>, grad_s: GradFn) -> Self {
        Self {
            n: k.nrows(),
            k,
            l,
            grad_s,
            hess_s: None,
            s_value: None,
            lipschitz: None,
        }
    }

    pub fn with_hessian(mut self, hess: HessFn) -> Self {
        self.hess_s = Some(hess);
        self
    }

    pub fn with_value(mut self, value: ValueFn) -> Self {
        self.s_value = Some(value);
        self
    }

    /// Records a Lipschitz bound for the nonlinearity. It is metadata used by
    /// the solvability bound, never estimated.
    pub fn with_lipschitz(mut self, lip: f64) -> Self {
        self.lipschitz = Some(lip);
        self
    }

    pub fn n(&self) -> usize {
        self.n
    }
    pub fn k(&self) -> &DMatrix<f64> {
        &self.k
    }
    pub fn l(&self) -> &DMatrix<f64> {
        &self.l
    }
    pub fn lipschitz(&self) -> Option<f64> {
        self.lipschitz
    }
    pub fn has_hessian(&self) -> bool {
        self.hess_s.is_some()
    }

    pub fn grad(&self, z: &StateVector) -> StateVector {
        (self.grad_s)(z)
    }

    pub fn hessian(&self, z: &StateVector) -> Option<DMatrix<f64>> {
        self.hess_s.as_ref().map(|h| h(z))
    }

    /// The analytic Hessian if there is one, otherwise central differences of `∇S`.
    pub fn hessian_or_fd(&self, z: &StateVector) -> DMatrix<f64> {
        match &self.hess_s {
            Some(h) => h(z),
            None => fd_jacobian(&*self.grad_s, z, FD_STEP),
        }
    }

    pub fn value(&self, z: &StateVector) -> Option<f64> {
        self.s_value.as_ref().map(|s| s(z))
    }
}

/// Central-difference Jacobian of `g` at `z`.
pub fn fd_jacobian(
    g: &dyn Fn(&StateVector) -> StateVector,
    z: &StateVector,
    eps: f64,
) -> DMatrix<f64> {
    let n = z.len();
    let mut jac = DMatrix::zeros(n, n);
    for c in 0..n {
        let h = eps * (1.0 + z[c].abs());
        let mut zp = z.clone();
        let mut zm = z.clone();
        zp[c] += h;
        zm[c] -= h;
        let col = (g(&zp) - g(&zm)) / (2.0 * h);
        jac.set_column(c, &col);
    }
    jac
}

/// The wave-equation `K` (rows `(0,−1,0), (1,0,0), (0,0,0)`).
pub fn wave_k() -> DMatrix<f64> {
    DMatrix::from_row_slice(3, 3, &[0.0, -1.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 0.0])
}

/// The wave-equation `L` (rows `(0,0,1), (0,0,0), (−1,0,0)`).
pub fn wave_l() -> DMatrix<f64> {
    DMatrix::from_row_slice(3, 3, &[0.0, 0.0, 1.0, 0.0, 0.0, 0.0, -1.0, 0.0, 0.0])
}

/// `u_tt − u_xx = f(u)` as a multi-Hamiltonian system in `z = (u, v, w)`.
#[derive(Clone)]
pub struct WaveSystem {
    base: MultiHamiltonianSystem,
    f: ScalarFn,
    f_prime: Option<ScalarFn>,
}

impl fmt::Debug for WaveSystem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("WaveSystem")
            .field("base", &self.base)
            .finish()
    }
}

impl WaveSystem {
    pub fn system(&self) -> &MultiHamiltonianSystem {
        &self.base
    }
    pub fn f(&self, u: f64) -> f64 {
        (self.f)(u)
    }
    pub fn f_prime(&self, u: f64) -> Option<f64> {
        self.f_prime.as_ref().map(|fp| fp(u))
    }
    pub fn with_lipschitz(mut self, lip: f64) -> Self {
        self.base = self.base.with_lipschitz(lip);
        self
    }
    pub fn with_potential(mut self, v: ScalarFn) -> Self {
        self.base = self.base.with_value(Arc::new(move |z: &StateVector| {
            v(z[0]) + 0.5 * z[1] * z[1] - 0.5 * z[2] * z[2]
        }));
        self
    }
}

impl std::ops::Deref for WaveSystem {
    type Target = MultiHamiltonianSystem;
    fn deref(&self) -> &MultiHamiltonianSystem {
        &self.base
    }
}

/// The wave equation `u_tt − u_xx = f(u)`.
///
/// With the `K`, `L` above the first row of the system reads
/// `−v_t + w_x = ∂S/∂u`, so `∇S(u, v, w) = (−f(u), v, −w)`, i.e.
/// `S = V(u) + v²/2 − w²/2` with `f = −V′`.
pub fn make_wave_system(f: ScalarFn, f_prime: Option<ScalarFn>) -> WaveSystem {
    let fg = f.clone();
    let grad: GradFn =
        Arc::new(move |z: &StateVector| StateVector::from_vec(vec![-fg(z[0]), z[1], -z[2]]));
    let mut base = MultiHamiltonianSystem::new_unchecked(wave_k(), wave_l(), grad);
    if let Some(fp) = &f_prime {
        let fp = fp.clone();
        base = base.with_hessian(Arc::new(move |z: &StateVector| {
            DMatrix::from_diagonal(&DVector::from_vec(vec![-fp(z[0]), 1.0, -1.0]))
        }));
    }
    WaveSystem { base, f, f_prime }
}

/// Sine–Gordon, `u_tt − u_xx = −sin u`, with Lipschitz constant 1.
pub fn sine_gordon() -> WaveSystem {
    make_wave_system(
        Arc::new(|u: f64| -u.sin()),
        Some(Arc::new(|u: f64| -u.cos())),
    )
    .with_lipschitz(1.0)
    .with_potential(Arc::new(|u: f64| -u.cos()))
}

/// The zero-potential wave equation `u_tt = u_xx`.
pub fn linear_wave() -> WaveSystem {
    make_wave_system(Arc::new(|_| 0.0), Some(Arc::new(|_| 0.0)))
        .with_lipschitz(0.0)
        .with_potential(Arc::new(|_| 0.0))
}

/// `K z_t + L z_x = S z` for a constant symmetric `S`.
pub fn make_linear_system(
    k: DMatrix<f64>,
    l: DMatrix<f64>,
    s: DMatrix<f64>,
) -> Result<MultiHamiltonianSystem> {
    if s.shape() != k.shape() {
        return Err(Error::InvalidInput(format!(
            "S is {:?} but K is {:?}",
            s.shape(),
            k.shape()
        )));
    }
    if s != s.transpose() {
        return Err(Error::InvalidInput("S is not symmetric".into()));
    }
    let lip = crate::nonlinear::inf_norm(&s);
    let sg = s.clone();
    let sh = s.clone();
    let sv = s;
    let grad: GradFn = Arc::new(move |z: &StateVector| &sg * z);
    Ok(MultiHamiltonianSystem::new(k, l, grad)?
        .with_hessian(Arc::new(move |_| sh.clone()))
        .with_value(Arc::new(move |z: &StateVector| 0.5 * z.dot(&(&sv * z))))
        .with_lipschitz(lip))
}

#[derive(Debug, Clone, PartialEq)]
pub enum Diagnostic {
    BadShape(String),
    KNotSkew,
    LNotSkew,
    GradientLength { expected: usize, got: usize },
    HessianNotSymmetric { point: Vec<f64> },
    HessianMismatch { point: Vec<f64>, rel_error: f64 },
    NegativeLipschitz(f64),
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Diagnostic::BadShape(s) => write!(f, "bad shape: {s}"),
            Diagnostic::KNotSkew => write!(f, "K not skew"),
            Diagnostic::LNotSkew => write!(f, "L not skew"),
            Diagnostic::GradientLength { expected, got } => {
                write!(f, "grad S has length {got}, expected {expected}")
            }
            Diagnostic::HessianNotSymmetric { point } => {
                write!(f, "Hessian not symmetric at {point:?}")
            }
            Diagnostic::HessianMismatch { point, rel_error } => {
                write!(f, "Hessian differs from finite differences of grad S at {point:?} (rel. error {rel_error:.2e})")
            }
            Diagnostic::NegativeLipschitz(l) => write!(f, "negative Lipschitz constant {l}"),
        }
    }
}

/// Number of pseudo-random points the Hessian is checked at.
pub const HESSIAN_SAMPLES: usize = 10;
pub const HESSIAN_REL_TOL: f64 = 1e-5;

/// Checks the structural requirements of a system. An empty list means all hold.
pub fn validate_system(sys: &MultiHamiltonianSystem) -> Vec<Diagnostic> {
    let mut out = Vec::new();
    let n = sys.n();
    if sys.k().shape() != (n, n) || sys.l().shape() != (n, n) {
        out.push(Diagnostic::BadShape(format!(
            "K {:?}, L {:?}, n = {n}",
            sys.k().shape(),
            sys.l().shape()
        )));
        return out;
    }
    if !is_skew(sys.k()) {
        out.push(Diagnostic::KNotSkew);
    }
    if !is_skew(sys.l()) {
        out.push(Diagnostic::LNotSkew);
    }
    if let Some(l) = sys.lipschitz() {
        if l < 0.0 {
            out.push(Diagnostic::NegativeLipschitz(l));
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    for _ in 0..HESSIAN_SAMPLES {
        let z = StateVector::from_fn(n, |_, _| rng.gen_range(-2.0..2.0));
        let g = sys.grad(&z);
        if g.len() != n {
            out.push(Diagnostic::GradientLength {
                expected: n,
                got: g.len(),
            });
            return out;
        }
        let Some(h) = sys.hessian(&z) else { continue };
        if h.shape() != (n, n) {
            out.push(Diagnostic::BadShape(format!("Hessian is {:?}", h.shape())));
            return out;
        }
        let scale = h.amax().max(1.0);
        if (&h - h.transpose()).amax() > 1e-12 * scale {
            out.push(Diagnostic::HessianNotSymmetric {
                point: z.iter().cloned().collect(),
            });
        }
        let fd = fd_jacobian(&|x: &StateVector| sys.grad(x), &z, FD_STEP);
        let rel_error = (&h - &fd).amax() / scale;
        if rel_error > HESSIAN_REL_TOL {
            out.push(Diagnostic::HessianMismatch {
                point: z.iter().cloned().collect(),
                rel_error,
            });
        }
    }
    out
}
