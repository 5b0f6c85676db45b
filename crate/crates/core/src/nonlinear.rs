//! Small dense kernels shared by the per-diamond solves.
//!
//! Every system solved here is tiny (at most `r² n` unknowns for one
//! diamond), so everything is dense and direct. Factorizations come from
//! `nalgebra`; this module adds the pivot checks, norms and the two
//! iterative drivers (Newton and fixed point) with the reporting the
//! schemes need.

use nalgebra::{Complex, DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Pivots smaller than this are treated as exact zeros.
pub const PIVOT_FLOOR: f64 = 1e-300;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolverMethod {
    Newton,
    FixedPoint,
    /// Newton, using an analytic Hessian when the system has one.
    Auto,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverConfig {
    pub method: SolverMethod,
    /// Infinity-norm residual tolerance.
    pub tol: f64,
    pub max_iter: usize,
    /// Relaxation factor in (0, 1] for fixed-point iterations.
    pub damping: Option<f64>,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            method: SolverMethod::Auto,
            tol: 1e-12,
            max_iter: 50,
            damping: None,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tol > 0.0) {
            return Err(Error::InvalidInput(format!(
                "tol must be positive, got {}",
                self.tol
            )));
        }
        if self.max_iter == 0 {
            return Err(Error::InvalidInput("max_iter must be at least 1".into()));
        }
        if let Some(w) = self.damping {
            if !(w > 0.0 && w <= 1.0) {
                return Err(Error::InvalidInput(format!(
                    "damping must lie in (0, 1], got {w}"
                )));
            }
        }
        Ok(())
    }

    pub fn with_method(mut self, method: SolverMethod) -> Self {
        self.method = method;
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolveReport {
    pub iterations: usize,
    pub final_residual: f64,
    pub converged: bool,
}

pub fn inf_norm_vec(v: &DVector<f64>) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

/// Maximum absolute row sum.
pub fn inf_norm(m: &DMatrix<f64>) -> f64 {
    m.row_iter()
        .map(|row| row.iter().map(|x| x.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

fn check_square(m: usize, n: usize) -> Result<()> {
    if m != n {
        return Err(Error::InvalidInput(format!(
            "expected a square matrix, got {m}x{n}"
        )));
    }
    Ok(())
}

/// LU factorization with partial pivoting, rejecting pivots below [`PIVOT_FLOOR`].
pub fn lu_factor(m: &DMatrix<f64>) -> Result<nalgebra::LU<f64, nalgebra::Dyn, nalgebra::Dyn>> {
    check_square(m.nrows(), m.ncols())?;
    let lu = m.clone().lu();
    let u = lu.u();
    for (column, pivot) in u.diagonal().iter().enumerate() {
        if !(pivot.abs() >= PIVOT_FLOOR) {
            return Err(Error::Singular {
                column,
                pivot: *pivot,
            });
        }
    }
    Ok(lu)
}

pub fn lu_solve(m: &DMatrix<f64>, rhs: &DVector<f64>) -> Result<DVector<f64>> {
    if rhs.len() != m.nrows() {
        return Err(Error::InvalidInput(format!(
            "rhs has length {} but the matrix has {} rows",
            rhs.len(),
            m.nrows()
        )));
    }
    let lu = lu_factor(m)?;
    lu.solve(rhs).ok_or(Error::Singular {
        column: 0,
        pivot: 0.0,
    })
}

pub fn inverse(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let lu = lu_factor(m)?;
    lu.try_inverse().ok_or(Error::Singular {
        column: 0,
        pivot: 0.0,
    })
}

/// `‖M⁻¹‖_∞` via the explicit inverse.
pub fn inf_norm_inverse(m: &DMatrix<f64>) -> Result<f64> {
    Ok(inf_norm(&inverse(m)?))
}

/// Determinant by complex LU with partial pivoting. Singular input gives 0.
pub fn det_complex(m: &DMatrix<Complex<f64>>) -> Complex<f64> {
    assert_eq!(m.nrows(), m.ncols(), "determinant of a non-square matrix");
    if m.nrows() == 0 {
        return Complex::new(1.0, 0.0);
    }
    m.clone().lu().determinant()
}

pub fn min_singular_value(m: &DMatrix<f64>) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    let svd = m.clone().svd(false, false);
    svd.singular_values
        .iter()
        .cloned()
        .fold(f64::INFINITY, f64::min)
}

/// Damped Newton iteration for `F(x) = 0`.
///
/// When the full step fails to reduce `‖F‖_∞` the step is halved, up to
/// eight times; if none of the trial steps helps the full step is taken.
pub fn newton<F, J>(
    mut f: F,
    mut jac: J,
    x0: DVector<f64>,
    cfg: &SolverConfig,
) -> Result<(DVector<f64>, SolveReport)>
where
    F: FnMut(&DVector<f64>) -> DVector<f64>,
    J: FnMut(&DVector<f64>) -> DMatrix<f64>,
{
    let mut x = x0;
    let mut fx = f(&x);
    let mut res = inf_norm_vec(&fx);
    for it in 0..cfg.max_iter {
        if res <= cfg.tol {
            return Ok((
                x,
                SolveReport {
                    iterations: it,
                    final_residual: res,
                    converged: true,
                },
            ));
        }
        if !res.is_finite() {
            return Err(Error::NoConvergence {
                iterations: it,
                residual: res,
            });
        }
        let step = lu_solve(&jac(&x), &(-&fx))?;

        let mut accepted = None;
        let mut t = 1.0;
        for _ in 0..=8 {
            let trial = &x + &step * t;
            let ft = f(&trial);
            let rt = inf_norm_vec(&ft);
            if rt < res {
                accepted = Some((trial, ft, rt));
                break;
            }
            t *= 0.5;
        }
        let (xn, fxn, rn) = accepted.unwrap_or_else(|| {
            let trial = &x + &step;
            let ft = f(&trial);
            let rt = inf_norm_vec(&ft);
            (trial, ft, rt)
        });
        x = xn;
        fx = fxn;
        res = rn;
    }
    if res <= cfg.tol {
        return Ok((
            x,
            SolveReport {
                iterations: cfg.max_iter,
                final_residual: res,
                converged: true,
            },
        ));
    }
    Err(Error::NoConvergence {
        iterations: cfg.max_iter,
        residual: res,
    })
}

/// Fixed-point iteration `x ← x + ω (G(x) − x)` until `‖x − G(x)‖_∞ ≤ tol`.
///
/// Reports divergence once the successive-step ratio has exceeded one for
/// five consecutive iterations.
pub fn fixed_point<G>(
    mut g: G,
    x0: DVector<f64>,
    cfg: &SolverConfig,
) -> Result<(DVector<f64>, SolveReport)>
where
    G: FnMut(&DVector<f64>) -> DVector<f64>,
{
    let omega = cfg.damping.unwrap_or(1.0);
    let mut x = x0;
    let mut prev_step = f64::NAN;
    let mut growing = 0;
    for it in 0..cfg.max_iter {
        let gx = g(&x);
        let diff = &gx - &x;
        let res = inf_norm_vec(&diff);
        if res <= cfg.tol {
            x += diff * omega;
            return Ok((
                x,
                SolveReport {
                    iterations: it + 1,
                    final_residual: res,
                    converged: true,
                },
            ));
        }
        if !res.is_finite() {
            return Err(Error::NoConvergence {
                iterations: it,
                residual: res,
            });
        }
        let ratio = res / prev_step;
        if ratio > 1.0 {
            growing += 1;
            if growing >= 5 {
                return Err(Error::Diverged {
                    iterations: it,
                    ratio,
                });
            }
        } else {
            growing = 0;
        }
        prev_step = res;
        x += diff * omega;
    }
    let res = inf_norm_vec(&(g(&x) - &x));
    if res <= cfg.tol {
        return Ok((
            x,
            SolveReport {
                iterations: cfg.max_iter,
                final_residual: res,
                converged: true,
            },
        ));
    }
    Err(Error::NoConvergence {
        iterations: cfg.max_iter,
        residual: res,
    })
}

/// Fixed-point iteration `x ← x − J₀⁻¹ F(x)` with a frozen Jacobian.
pub fn chord(
    f: impl Fn(&DVector<f64>) -> DVector<f64>,
    j0: &DMatrix<f64>,
    x0: DVector<f64>,
    cfg: &SolverConfig,
) -> Result<DVector<f64>> {
    let lu = lu_factor(j0)?;
    let g = |x: &DVector<f64>| {
        let step = lu
            .solve(&f(x))
            .unwrap_or_else(|| DVector::from_element(x.len(), f64::NAN));
        x - step
    };
    Ok(fixed_point(g, x0, cfg)?.0)
}

/// Kronecker product `a ⊗ b`.
pub fn kron(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    a.kronecker(b)
}
