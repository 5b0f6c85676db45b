//! Gauss–Legendre Runge–Kutta coefficients and the solvability matrix of
//! the per-diamond wave-equation system.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::nonlinear::{inf_norm, inf_norm_inverse, inverse, kron, min_singular_value};

pub const MAX_STAGES: usize = 8;

/// `(A, b, c)` of the `r`-stage Gauss method, plus `A⁻¹`.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussTableau {
    pub r: usize,
    pub a: DMatrix<f64>,
    pub b: DVector<f64>,
    pub c: DVector<f64>,
    pub a_inv: DMatrix<f64>,
}

/// Legendre polynomial `P_r(x)` and its derivative by the three-term recurrence.
fn legendre(r: usize, x: f64) -> (f64, f64) {
    let (mut p0, mut p1) = (1.0, x);
    if r == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=r {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let dp = r as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, dp)
}

/// Lagrange basis polynomial `ℓ_j` on the nodes `c`, evaluated at `s`.
fn lagrange(c: &[f64], j: usize, s: f64) -> f64 {
    c.iter()
        .enumerate()
        .filter(|&(m, _)| m != j)
        .map(|(_, &cm)| (s - cm) / (c[j] - cm))
        .product()
}

/// The `r`-stage Gauss collocation method, `1 ≤ r ≤ 8`.
///
/// Abscissae are the roots of `P_r(2x − 1)` found by Newton's method from
/// Chebyshev initial guesses. The weights and `a_ij = ∫₀^{c_i} ℓ_j` are
/// obtained by integrating the Lagrange basis with the same Gauss rule,
/// which is exact for these degrees and satisfies the collocation
/// conditions `Σ_k a_ik c_k^{q−1} = c_i^q / q`, `Σ_k b_k c_k^{q−1} = 1/q`.
pub fn gauss_tableau(r: usize) -> Result<GaussTableau> {
    if !(1..=MAX_STAGES).contains(&r) {
        return Err(Error::InvalidInput(format!(
            "stage count must be in 1..={MAX_STAGES}, got {r}"
        )));
    }
    let rf = r as f64;
    let mut nodes = Vec::with_capacity(r);
    let mut weights = Vec::with_capacity(r);
    for k in 1..=r {
        let mut x = (std::f64::consts::PI * (k as f64 - 0.5) / rf).cos();
        for _ in 0..100 {
            let (p, dp) = legendre(r, x);
            let dx = p / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let (_, dp) = legendre(r, x);
        nodes.push(0.5 * (1.0 + x));
        // Gauss weight on [−1, 1] is 2 / ((1 − x²) P′(x)²); halve it for [0, 1].
        weights.push(1.0 / ((1.0 - x * x) * dp * dp));
    }
    // Chebyshev guesses run from +1 down to −1.
    nodes.reverse();
    weights.reverse();

    let a = DMatrix::from_fn(r, r, |i, j| {
        let ci = nodes[i];
        ci * (0..r)
            .map(|m| weights[m] * lagrange(&nodes, j, ci * nodes[m]))
            .sum::<f64>()
    });
    let a_inv = inverse(&a)?;
    Ok(GaussTableau {
        r,
        a,
        b: DVector::from_vec(weights),
        c: DVector::from_vec(nodes),
        a_inv,
    })
}

impl GaussTableau {
    /// Row sums of `A⁻¹`.
    pub fn a_inv_row_sums(&self) -> DVector<f64> {
        DVector::from_fn(self.r, |i, _| self.a_inv.row(i).sum())
    }

    /// `bᵀ A⁻¹`, the weights that extrapolate stage data to the far edge.
    pub fn b_a_inv(&self) -> DVector<f64> {
        (self.b.transpose() * &self.a_inv).transpose()
    }

    /// Order and collocation conditions that fail by more than `tol`:
    /// `Σ_k b_k c_k^{q−1} = 1/q` for `q ≤ 2r`, `Σ_k a_ik c_k^{q−1} = c_i^q/q`
    /// for `q ≤ r`, and the symmetry `c_i + c_{r+1−i} = 1`, `b_i = b_{r+1−i}`.
    pub fn defects(&self, tol: f64) -> Vec<String> {
        let r = self.r;
        let mut out = Vec::new();
        for q in 1..=2 * r {
            let s: f64 = (0..r)
                .map(|k| self.b[k] * self.c[k].powi(q as i32 - 1))
                .sum();
            let err = (s - 1.0 / q as f64).abs();
            if err > tol {
                out.push(format!(
                    "r = {r}: quadrature condition q = {q} off by {err:e}"
                ));
            }
        }
        for q in 1..=r {
            for i in 0..r {
                let s: f64 = (0..r)
                    .map(|k| self.a[(i, k)] * self.c[k].powi(q as i32 - 1))
                    .sum();
                let err = (s - self.c[i].powi(q as i32) / q as f64).abs();
                if err > tol {
                    out.push(format!(
                        "r = {r}: collocation condition q = {q}, row {i} off by {err:e}"
                    ));
                }
            }
        }
        for i in 0..r {
            let j = r - 1 - i;
            let err = (self.c[i] + self.c[j] - 1.0)
                .abs()
                .max((self.b[i] - self.b[j]).abs());
            if err > tol {
                out.push(format!("r = {r}: nodes or weights not symmetric at {i}"));
            }
        }
        out
    }
}

/// The matrix `B` whose invertibility (with a step bound) makes the reduced
/// wave-equation stage system solvable.
#[derive(Debug, Clone, PartialEq)]
pub struct SolvabilityMatrix {
    pub r: usize,
    pub lambda: f64,
    pub b: DMatrix<f64>,
}

/// `B = (1−λ²)(I⊗A⁻²) + 2(1+λ²)(A⁻¹⊗A⁻¹) + (1−λ²)(A⁻²⊗I)`.
///
/// Unknowns are ordered `(u_1^1, u_1^2, …, u_1^r, u_2^1, …, u_r^r)`: the
/// lower (x̃-stage) index `i` is major and the upper (t̃-stage) index `j`
/// minor. `I⊗A⁻²` therefore acts on `j` and `A⁻²⊗I` on `i`.
pub fn build_b(tab: &GaussTableau, lambda: f64) -> SolvabilityMatrix {
    let r = tab.r;
    let m = &tab.a_inv;
    let m2 = m * m;
    let id = DMatrix::identity(r, r);
    let l2 = lambda * lambda;
    let b =
        kron(&id, &m2) * (1.0 - l2) + kron(m, m) * (2.0 * (1.0 + l2)) + kron(&m2, &id) * (1.0 - l2);
    SolvabilityMatrix { r, lambda, b }
}

/// The largest `Δt` for which the contraction argument guarantees a
/// solution: `√(1 / (Lip · ‖B⁻¹‖_∞))`. Infinite for `Lip = 0`.
pub fn max_stable_dt(b: &SolvabilityMatrix, lipschitz: f64) -> Result<f64> {
    if lipschitz < 0.0 {
        return Err(Error::InvalidInput(format!(
            "Lipschitz constant must be nonnegative, got {lipschitz}"
        )));
    }
    let smin = min_singular_value(&b.b);
    if smin < 1e-12 * inf_norm(&b.b) {
        return Err(Error::Singular {
            column: 0,
            pivot: smin,
        });
    }
    let norm = inf_norm_inverse(&b.b)?;
    Ok((1.0 / (lipschitz * norm)).sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SolvabilityRow {
    pub r: usize,
    pub lambda: f64,
    pub min_singular_value: f64,
}

/// Minimum singular values of `B` for `r = 1..=rmax` and `points` Courant
/// numbers evenly spaced on `[0, 1]`.
pub fn solvability_table(rmax: usize, points: usize) -> Result<Vec<SolvabilityRow>> {
    let mut rows = Vec::with_capacity(rmax * points);
    for r in 1..=rmax {
        let tab = gauss_tableau(r)?;
        for k in 0..points {
            let lambda = if points > 1 {
                k as f64 / (points - 1) as f64
            } else {
                0.0
            };
            let b = build_b(&tab, lambda);
            rows.push(SolvabilityRow {
                r,
                lambda,
                min_singular_value: min_singular_value(&b.b),
            });
        }
    }
    Ok(rows)
}
