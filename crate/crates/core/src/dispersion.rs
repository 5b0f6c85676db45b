//! Linear dispersion analysis.
//!
//! For `K z_t + L z_x = S z` a plane wave `e^{i(ξx − ωt)} c` solves the
//! PDE iff `p(ξ, ω) = det(−iωK + iξL − S) = 0`. The simple diamond scheme
//! has the relation `P(x, y) = p(h(x, y))` in the scaled discrete
//! frequencies `x = 𝒳Δx`, `y = ΩΔt`, where `h` maps `(−π, π)²`
//! diffeomorphically onto its image. The `r = 1` diamond scheme has the
//! same relation after a rotation of the frequency plane.
//!
//! `−iωK + iξL − S` is Hermitian whenever `K`, `L` are real skew and `S`
//! is real symmetric, so every relation here is real valued; the complex
//! determinant's imaginary part is rounding noise.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use nalgebra::{Complex, DMatrix};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::nonlinear::det_complex;

/// `cos(x/2) + cos(y/2)` below this is a pole of `h`.
pub const POLE_GUARD: f64 = 1e-14;

/// Grid lines per axis used by the zero-set tracer unless told otherwise.
pub const DEFAULT_RESOLUTION: usize = 512;

pub type CustomRelation = Arc<dyn Fn(f64, f64) -> Complex<f64> + Send + Sync>;

#[derive(Clone)]
pub enum DispersionProblem {
    Matrix {
        k: DMatrix<f64>,
        l: DMatrix<f64>,
        s: DMatrix<f64>,
    },
    /// A scalar relation `p(ξ, ω)` given directly.
    Custom(CustomRelation),
}

impl fmt::Debug for DispersionProblem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DispersionProblem::Matrix { k, l, s } => f
                .debug_struct("Matrix")
                .field("k", k)
                .field("l", l)
                .field("s", s)
                .finish(),
            DispersionProblem::Custom(_) => f.write_str("Custom(..)"),
        }
    }
}

impl DispersionProblem {
    pub fn matrix(k: DMatrix<f64>, l: DMatrix<f64>, s: DMatrix<f64>) -> Result<Self> {
        let n = k.nrows();
        for (name, m) in [("K", &k), ("L", &l), ("S", &s)] {
            if m.shape() != (n, n) {
                return Err(Error::InvalidInput(format!(
                    "{name} is {:?}, expected {n}×{n}",
                    m.shape()
                )));
            }
        }
        if k != -k.transpose() || l != -l.transpose() {
            return Err(Error::InvalidInput("K and L must be skew-symmetric".into()));
        }
        if s != s.transpose() {
            return Err(Error::InvalidInput("S must be symmetric".into()));
        }
        Ok(DispersionProblem::Matrix { k, l, s })
    }

    /// The linear wave equation `u_tt = u_xx` in the form `z = (u, u_t, u_x)`.
    pub fn wave() -> Self {
        DispersionProblem::Matrix {
            k: crate::system::wave_k(),
            l: crate::system::wave_l(),
            s: DMatrix::from_diagonal(&nalgebra::dvector![0.0, 1.0, -1.0]),
        }
    }

    /// `p(ξ, ω) = ω − ξ + ξ³`.
    pub fn cubic() -> Self {
        DispersionProblem::Custom(Arc::new(|xi, omega| {
            Complex::new(omega - xi + xi * xi * xi, 0.0)
        }))
    }

    fn det_at(&self, omega_k: f64, xi_l: f64, k: &DMatrix<f64>, l: &DMatrix<f64>) -> Complex<f64> {
        let DispersionProblem::Matrix { s, .. } = self else {
            unreachable!()
        };
        let i = Complex::new(0.0, 1.0);
        let m = DMatrix::from_fn(s.nrows(), s.ncols(), |a, b| {
            -i * omega_k * k[(a, b)] + i * xi_l * l[(a, b)] - s[(a, b)]
        });
        det_complex(&m)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DiscreteGeometry {
    pub dx: f64,
    pub dt: f64,
}

impl DiscreteGeometry {
    pub fn new(dx: f64, dt: f64) -> Result<Self> {
        if !(dx > 0.0 && dt > 0.0 && dx.is_finite() && dt.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "dx and dt must be positive and finite, got {dx}, {dt}"
            )));
        }
        Ok(Self { dx, dt })
    }

    /// `Δx = 1`, `Δt = λ`.
    pub fn from_lambda(lambda: f64) -> Result<Self> {
        Self::new(1.0, lambda)
    }

    pub fn lambda(&self) -> f64 {
        self.dt / self.dx
    }
}

/// `p(ξ, ω) = det(−iωK + iξL − S)`.
pub fn p_continuous(prob: &DispersionProblem, xi: f64, omega: f64) -> Complex<f64> {
    match prob {
        DispersionProblem::Matrix { k, l, .. } => prob.det_at(omega, xi, k, l),
        DispersionProblem::Custom(p) => p(xi, omega),
    }
}

fn pole_denominator(x: f64, y: f64) -> Result<f64> {
    let d = (0.5 * x).cos() + (0.5 * y).cos();
    if d.abs() < POLE_GUARD {
        Err(Error::Pole { x, y })
    } else {
        Ok(d)
    }
}

/// Maps scaled discrete frequencies `(𝒳Δx, ΩΔt)` to `(ξ, ω)`.
pub fn h_map(x: f64, y: f64, geom: &DiscreteGeometry) -> Result<(f64, f64)> {
    let d = pole_denominator(x, y)?;
    Ok((
        4.0 * (0.5 * x).sin() / (geom.dx * d),
        4.0 * (0.5 * y).sin() / (geom.dt * d),
    ))
}

/// Inverse of [`h_map`]. `None` when `(ξ, ω)` has no preimage in `[−π, π]²`.
pub fn h_inverse(xi: f64, omega: f64, geom: &DiscreteGeometry) -> Option<(f64, f64)> {
    let a = ((geom.dx * xi + geom.dt * omega) / 4.0).atan();
    let b = ((geom.dx * xi - geom.dt * omega) / 4.0).atan();
    let (x, y) = (2.0 * (a + b), 2.0 * (a - b));
    (x.abs() <= PI && y.abs() <= PI).then_some((x, y))
}

/// Jacobian of [`h_map`] and its determinant.
pub fn jacobian_h(x: f64, y: f64, geom: &DiscreteGeometry) -> Result<(DMatrix<f64>, f64)> {
    let d = pole_denominator(x, y)?;
    let lambda = geom.lambda();
    let (sx, cx) = (0.5 * x).sin_cos();
    let (sy, cy) = (0.5 * y).sin_cos();
    let pre = 2.0 / (geom.dt * d * d);
    let diag = 1.0 + cx * cy;
    let off = sx * sy;
    let j = DMatrix::from_row_slice(
        2,
        2,
        &[
            pre * lambda * diag,
            pre * lambda * off,
            pre * off,
            pre * diag,
        ],
    );
    let det = j[(0, 0)] * j[(1, 1)] - j[(0, 1)] * j[(1, 0)];
    Ok((j, det))
}

/// Dispersion relation of the simple scheme, `p ∘ h`.
pub fn p_simple(
    prob: &DispersionProblem,
    x: f64,
    y: f64,
    geom: &DiscreteGeometry,
) -> Result<Complex<f64>> {
    let (xi, omega) = h_map(x, y, geom)?;
    Ok(p_continuous(prob, xi, omega))
}

/// Dispersion relation of the `r = 1` diamond scheme in the rotated
/// frequencies `(𝒳̃, Ω̃)`.
pub fn p_r1(
    prob: &DispersionProblem,
    xt: f64,
    ot: f64,
    geom: &DiscreteGeometry,
) -> Result<Complex<f64>> {
    let half_x = 0.5 * xt;
    let half_o = 0.5 * ot;
    if half_x.cos().abs() < POLE_GUARD || half_o.cos().abs() < POLE_GUARD {
        return Err(Error::Pole { x: xt, y: ot });
    }
    let (tx, to) = (half_x.tan(), half_o.tan());
    match prob {
        DispersionProblem::Matrix { k, l, .. } => {
            let kt = k / geom.dt;
            let lx = l / geom.dx;
            let k_tilde = &kt - &lx;
            let l_tilde = kt + lx;
            Ok(prob.det_at(2.0 * to, 2.0 * tx, &k_tilde, &l_tilde))
        }
        DispersionProblem::Custom(p) => {
            let xi = 2.0 * (to + tx) / geom.dx;
            let omega = 2.0 * (to - tx) / geom.dt;
            Ok(p(xi, omega))
        }
    }
}

/// `(𝒳Δx, ΩΔt) ↦ (𝒳̃, Ω̃)`.
pub fn to_rotated(x: f64, y: f64) -> (f64, f64) {
    (0.5 * (x - y), 0.5 * (x + y))
}

/// `ΩΔt = 2 asin(λ sin(𝒳Δx / 2))`, or `None` where the mode is unstable.
pub fn wave_stability_curve(x: f64, lambda: f64) -> Option<f64> {
    let s = lambda * (0.5 * x).sin();
    (s.abs() <= 1.0).then(|| 2.0 * s.asin())
}

/// `|ω|` on the image of the lines `y = ±π`.
pub fn boundary_curve(xi: f64, geom: &DiscreteGeometry) -> f64 {
    let q = geom.dx * xi / 4.0;
    4.0 / geom.dt * (1.0 + q * q).sqrt()
}

/// Smallest `|ξ|` at which `ω = ±ξ` leaves the region between the
/// boundary curves, `None` if it never does.
pub fn wave_boundary_crossing(geom: &DiscreteGeometry) -> Option<f64> {
    let lambda = geom.lambda();
    if lambda <= 1.0 {
        return None;
    }
    Some(4.0 / geom.dt / (1.0 - 1.0 / (lambda * lambda)).sqrt())
}

fn bisect(f: &impl Fn(f64) -> Result<f64>, mut a: f64, mut b: f64, mut fa: f64) -> Result<f64> {
    for _ in 0..200 {
        let m = 0.5 * (a + b);
        if m <= a || m >= b {
            break;
        }
        let fm = f(m)?;
        if fm == 0.0 {
            return Ok(m);
        }
        if (fm < 0.0) == (fa < 0.0) {
            a = m;
            fa = fm;
        } else {
            b = m;
        }
    }
    Ok(0.5 * (a + b))
}

/// Roots of `f` on `[lo, hi]`, from sign changes between `resolution + 1`
/// equispaced samples plus samples that are exactly zero. Intervals touching
/// a sample where `f` fails (a pole) are skipped.
pub fn line_roots(f: impl Fn(f64) -> Result<f64>, lo: f64, hi: f64, resolution: usize) -> Vec<f64> {
    let res = resolution.max(1);
    let node = |j: usize| lo + (hi - lo) * j as f64 / res as f64;
    let samples: Vec<(f64, Option<f64>)> = (0..=res)
        .map(|j| {
            let t = node(j);
            (t, f(t).ok().filter(|v| v.is_finite()))
        })
        .collect();
    let mut roots = Vec::new();
    for (j, &(t, v)) in samples.iter().enumerate() {
        if v == Some(0.0) {
            roots.push(t);
            continue;
        }
        let Some(&(t1, v1)) = samples.get(j + 1) else {
            break;
        };
        if let (Some(a), Some(b)) = (v, v1) {
            if b != 0.0 && (a < 0.0) != (b < 0.0) {
                if let Ok(root) = bisect(&f, t, t1, a) {
                    roots.push(root);
                }
            }
        }
    }
    roots
}

/// Roots `y` of `P(x, ·)` on `[−π, π]` for the simple scheme.
pub fn simple_roots_in_y(
    prob: &DispersionProblem,
    x: f64,
    geom: &DiscreteGeometry,
    resolution: usize,
) -> Vec<f64> {
    line_roots(|y| Ok(p_simple(prob, x, y, geom)?.re), -PI, PI, resolution)
}

/// Zero set of `f` on a rectangle, traced along both families of grid
/// lines. Points come back in a fixed order independent of threading.
pub fn zero_set(
    f: &(impl Fn(f64, f64) -> Result<f64> + Sync),
    x_range: (f64, f64),
    y_range: (f64, f64),
    resolution: usize,
) -> Vec<(f64, f64)> {
    let res = resolution.max(1);
    let at = |(lo, hi): (f64, f64), j: usize| lo + (hi - lo) * j as f64 / res as f64;
    let vertical = (0..=res).into_par_iter().flat_map_iter(|i| {
        let x = at(x_range, i);
        line_roots(|y| f(x, y), y_range.0, y_range.1, res)
            .into_iter()
            .map(move |y| (x, y))
    });
    let horizontal = (0..=res).into_par_iter().flat_map_iter(|j| {
        let y = at(y_range, j);
        line_roots(|x| f(x, y), x_range.0, x_range.1, res)
            .into_iter()
            .map(move |x| (x, y))
    });
    let mut out: Vec<(f64, f64)> = vertical.collect();
    out.extend(horizontal.collect::<Vec<_>>());
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct CurvePoint {
    pub curve_id: String,
    pub xi: f64,
    pub omega: f64,
    pub x: f64,
    pub y: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CurveOptions {
    pub resolution: usize,
    /// Half-width of the `(ξ, ω)` window searched for the continuous curve.
    pub window: f64,
}

impl Default for CurveOptions {
    fn default() -> Self {
        Self {
            resolution: DEFAULT_RESOLUTION,
            window: 8.0,
        }
    }
}

pub const LINEAR_FIGURE_LAMBDAS: [f64; 3] = [2.0, 1.0, 0.5];
pub const CUBIC_FIGURE_LAMBDAS: [f64; 3] = [2.0, 1.0, 0.025];

/// Samples, for each `λ` (with `Δx = 1`):
///
/// * `lambda=λ/continuous`: zeros of `p` in the `(ξ, ω)` window, with
///   their preimage under `h` (NaN when outside `[−π, π]²`);
/// * `lambda=λ/discrete`: zeros of `p ∘ h` in `[−π, π]²` and their image;
/// * `lambda=λ/boundary`: the images of `y = ±π`.
pub fn emit_dispersion_curves(
    prob: &DispersionProblem,
    lambdas: &[f64],
    opts: &CurveOptions,
) -> Result<Vec<CurvePoint>> {
    let mut rows = Vec::new();
    for &lambda in lambdas {
        let geom = DiscreteGeometry::from_lambda(lambda)?;
        let tag = format!("lambda={lambda}");
        let w = opts.window;

        let cont = zero_set(
            &|xi, omega| Ok(p_continuous(prob, xi, omega).re),
            (-w, w),
            (-w, w),
            opts.resolution,
        );
        for (xi, omega) in cont {
            let (x, y) = h_inverse(xi, omega, &geom).unwrap_or((f64::NAN, f64::NAN));
            rows.push(CurvePoint {
                curve_id: format!("{tag}/continuous"),
                xi,
                omega,
                x,
                y,
            });
        }

        let disc = zero_set(
            &|x, y| Ok(p_simple(prob, x, y, &geom)?.re),
            (-PI, PI),
            (-PI, PI),
            opts.resolution,
        );
        for (x, y) in disc {
            let Ok((xi, omega)) = h_map(x, y, &geom) else {
                continue;
            };
            rows.push(CurvePoint {
                curve_id: format!("{tag}/discrete"),
                xi,
                omega,
                x,
                y,
            });
        }

        let res = opts.resolution.max(2);
        for sign in [1.0, -1.0] {
            for i in 1..res {
                let x = -PI + 2.0 * PI * i as f64 / res as f64;
                let xi = 4.0 * (0.5 * x).tan() / geom.dx;
                rows.push(CurvePoint {
                    curve_id: format!("{tag}/boundary"),
                    xi,
                    omega: sign * boundary_curve(xi, &geom),
                    x,
                    y: sign * PI,
                });
            }
        }
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn geom(dx: f64, dt: f64) -> DiscreteGeometry {
        DiscreteGeometry::new(dx, dt).unwrap()
    }

    #[test]
    fn wave_relation_values() {
        let w = DispersionProblem::wave();
        assert!(p_continuous(&w, 1.0, 1.0).norm() < 1e-14);
        assert!((p_continuous(&w, 2.0, 0.0) - Complex::new(4.0, 0.0)).norm() < 1e-14);
        assert!(p_continuous(&w, 0.0, 0.0).norm() < 1e-15);
    }

    #[test]
    fn wave_relation_is_xi2_minus_omega2() {
        let w = DispersionProblem::wave();
        for i in 0..5 {
            for j in 0..5 {
                let xi = -2.0 + i as f64 * 0.9;
                let om = -1.7 + j as f64 * 0.8;
                let p = p_continuous(&w, xi, om);
                assert!((p.re - (xi * xi - om * om)).abs() < 1e-12);
                assert!(p.im.abs() < 1e-12);
            }
        }
    }

    #[test]
    fn matrix_problem_rejects_bad_input() {
        let k = crate::system::wave_k();
        let l = crate::system::wave_l();
        let bad_s = DMatrix::from_row_slice(3, 3, &[0., 1., 0., 0., 0., 0., 0., 0., 0.]);
        assert!(DispersionProblem::matrix(k.clone(), l.clone(), bad_s).is_err());
        assert!(DispersionProblem::matrix(
            DMatrix::identity(3, 3),
            l.clone(),
            DMatrix::identity(3, 3)
        )
        .is_err());
        assert!(DispersionProblem::matrix(k, l, DMatrix::identity(3, 3)).is_ok());
        assert!(DiscreteGeometry::new(0.0, 1.0).is_err());
    }

    #[test]
    fn h_values_and_pole() {
        let g = geom(1.0, 1.0);
        assert_eq!(h_map(0.0, 0.0, &g).unwrap(), (0.0, 0.0));
        let (a, b) = h_map(PI, 0.0, &g).unwrap();
        assert!((a - 4.0).abs() < 1e-14 && b.abs() < 1e-15);
        assert!(matches!(h_map(PI, PI, &g), Err(Error::Pole { .. })));
    }

    #[test]
    fn simple_relation_values() {
        let w = DispersionProblem::wave();
        let g = geom(1.0, 0.5);
        assert!(p_simple(&w, PI, PI / 3.0, &g).unwrap().norm() < 1e-12);
        assert_eq!(
            p_simple(&w, 0.0, 0.0, &g).unwrap(),
            p_continuous(&w, 0.0, 0.0)
        );
        let g1 = geom(1.0, 1.0);
        assert!(p_simple(&w, PI / 2.0, PI / 2.0, &g1).unwrap().norm() < 1e-12);
    }

    #[test]
    fn r1_at_origin_is_det_minus_s() {
        let s = DMatrix::from_row_slice(3, 3, &[2., 1., 0., 1., 3., 0.5, 0., 0.5, -1.]);
        let prob =
            DispersionProblem::matrix(crate::system::wave_k(), crate::system::wave_l(), s.clone())
                .unwrap();
        let v = p_r1(&prob, 0.0, 0.0, &geom(0.3, 0.2)).unwrap();
        assert!((v.re - (-s).determinant()).abs() < 1e-12);
    }

    #[test]
    fn r1_matches_simple_under_rotation() {
        let s = DMatrix::from_row_slice(3, 3, &[0.7, 0.2, 0., 0.2, 1., -0.3, 0., -0.3, -1.]);
        let probs = [
            DispersionProblem::wave(),
            DispersionProblem::matrix(crate::system::wave_k(), crate::system::wave_l(), s).unwrap(),
            DispersionProblem::cubic(),
        ];
        let g = geom(0.4, 0.3);
        for prob in &probs {
            for i in 0..21 {
                for j in 0..21 {
                    let x = -0.95 * PI + 1.9 * PI * i as f64 / 20.0;
                    let y = -0.95 * PI + 1.9 * PI * j as f64 / 20.0;
                    let (xt, ot) = to_rotated(x, y);
                    let a = p_simple(prob, x, y, &g).unwrap();
                    let b = p_r1(prob, xt, ot, &g).unwrap();
                    let scale = 1.0 + a.norm();
                    assert!((a - b).norm() < 1e-10 * scale, "{x} {y}: {a} vs {b}");
                }
            }
        }
    }

    #[test]
    fn r1_tan_pole() {
        let w = DispersionProblem::wave();
        assert!(matches!(
            p_r1(&w, PI, 0.0, &geom(1.0, 1.0)),
            Err(Error::Pole { .. })
        ));
    }

    #[test]
    fn r1_zeros_pull_back_to_stability_curve() {
        let w = DispersionProblem::wave();
        let lambda = 0.5;
        let g = geom(1.0, lambda);
        for i in 1..20 {
            let x = -PI + 2.0 * PI * i as f64 / 20.0;
            let y = wave_stability_curve(x, lambda).unwrap();
            let (xt, ot) = to_rotated(x, y);
            assert!(p_r1(&w, xt, ot, &g).unwrap().norm() < 1e-10);
        }
    }

    #[test]
    fn jacobian_at_origin_is_identity() {
        let (j, det) = jacobian_h(0.0, 0.0, &geom(1.0, 1.0)).unwrap();
        assert!((j - DMatrix::<f64>::identity(2, 2)).abs().max() < 1e-15);
        assert!((det - 1.0).abs() < 1e-15);
    }

    #[test]
    fn jacobian_matches_finite_differences() {
        let g = geom(0.7, 0.35);
        let e = 1e-6;
        for &(x, y) in &[(0.3, -1.2), (2.5, 2.0), (-3.0, 0.1)] {
            let (j, _) = jacobian_h(x, y, &g).unwrap();
            let px = h_map(x + e, y, &g).unwrap();
            let mx = h_map(x - e, y, &g).unwrap();
            let py = h_map(x, y + e, &g).unwrap();
            let my = h_map(x, y - e, &g).unwrap();
            let fd = [
                (px.0 - mx.0) / (2.0 * e),
                (py.0 - my.0) / (2.0 * e),
                (px.1 - mx.1) / (2.0 * e),
                (py.1 - my.1) / (2.0 * e),
            ];
            let got = [j[(0, 0)], j[(0, 1)], j[(1, 0)], j[(1, 1)]];
            for (a, b) in got.iter().zip(fd) {
                assert!((a - b).abs() < 1e-6 * (1.0 + b.abs()), "{a} vs {b}");
            }
        }
    }

    #[test]
    fn jacobian_positive_on_grid() {
        for &lambda in &[0.1, 0.5, 1.0, 2.0] {
            let g = geom(1.0, lambda);
            for i in 1..41 {
                for k in 1..41 {
                    let x = -PI + 2.0 * PI * i as f64 / 41.0;
                    let y = -PI + 2.0 * PI * k as f64 / 41.0;
                    let (j, det) = jacobian_h(x, y, &g).unwrap();
                    assert!(det > 0.0);
                    let (jm, _) = jacobian_h(-x, -y, &g).unwrap();
                    assert_eq!(j, jm);
                }
            }
        }
    }

    #[test]
    fn h_inverse_round_trip() {
        let g = geom(0.5, 0.8);
        for &(x, y) in &[(0.0, 0.0), (1.0, -2.0), (-3.0, 3.0), (2.9, 0.4)] {
            let (xi, om) = h_map(x, y, &g).unwrap();
            let (x2, y2) = h_inverse(xi, om, &g).unwrap();
            assert!((x - x2).abs() < 1e-12 && (y - y2).abs() < 1e-12);
        }
        // ξ = 0 and ω beyond the boundary curve has no preimage
        assert!(h_inverse(0.0, 1.01 * boundary_curve(0.0, &g), &g).is_none());
    }

    #[test]
    fn stability_curve_values() {
        assert!((wave_stability_curve(PI, 0.5).unwrap() - PI / 3.0).abs() < 1e-15);
        assert!((wave_stability_curve(PI, 1.0).unwrap() - PI).abs() < 1e-15);
        assert!(wave_stability_curve(PI, 2.0).is_none());
    }

    #[test]
    fn boundary_values() {
        let g = geom(1.0, 1.0);
        assert!((boundary_curve(0.0, &g) - 4.0).abs() < 1e-15);
        let g2 = geom(0.5, 1.5);
        let big = 1e8;
        assert!((boundary_curve(big, &g2) / big - 1.0 / g2.lambda()).abs() < 1e-7);
        // at λ = 1 the gap to |ω| = |ξ| closes only at infinity
        let mut last = f64::INFINITY;
        for k in 0..8 {
            let xi = 10f64.powi(k);
            let gap = boundary_curve(xi, &g) - xi;
            assert!(gap > 0.0 && gap < last);
            last = gap;
        }
        assert!(last < 1e-5);
    }

    #[test]
    fn boundary_crossing_iff_lambda_above_one() {
        for &lambda in &[0.25, 0.5, 1.0] {
            let g = geom(1.0, lambda);
            assert!(wave_boundary_crossing(&g).is_none());
            for k in -3..9 {
                let xi = 10f64.powi(k);
                assert!(xi <= boundary_curve(xi, &g));
            }
        }
        for &lambda in &[1.1, 2.0, 5.0] {
            let g = geom(0.3, 0.3 * lambda);
            let c = wave_boundary_crossing(&g).unwrap();
            assert!(0.999 * c <= boundary_curve(0.999 * c, &g));
            assert!(1.001 * c > boundary_curve(1.001 * c, &g));
        }
    }

    #[test]
    fn bisection_roots_match_stability_curve() {
        let w = DispersionProblem::wave();
        for &lambda in &[0.3, 0.5, 1.0] {
            let g = geom(1.0, lambda);
            for i in 0..=16 {
                let x = -0.99 * PI + 1.98 * PI * i as f64 / 16.0;
                let y = wave_stability_curve(x, lambda).unwrap();
                let roots = simple_roots_in_y(&w, x, &g, 512);
                assert!(!roots.is_empty());
                for r in &roots {
                    assert!(
                        (r.abs() - y.abs()).abs() < 1e-8,
                        "λ={lambda} x={x}: {r} vs {y}"
                    );
                }
            }
        }
        // x = 0: double root at y = 0, sampled exactly
        assert_eq!(simple_roots_in_y(&w, 0.0, &geom(1.0, 0.5), 512), vec![0.0]);
    }

    #[test]
    fn unstable_modes_have_no_root() {
        let w = DispersionProblem::wave();
        let g = geom(1.0, 2.0);
        assert!(simple_roots_in_y(&w, PI * 0.9, &g, 512).is_empty());
    }

    #[test]
    fn line_roots_skips_poles() {
        let roots = line_roots(
            |t| {
                if t.abs() < 1e-12 {
                    Err(Error::Pole { x: t, y: 0.0 })
                } else {
                    Ok(1.0 / t)
                }
            },
            -1.0,
            1.0,
            10,
        );
        assert!(roots.is_empty());
    }

    #[test]
    fn cubic_curve_points() {
        let c = DispersionProblem::cubic();
        assert_eq!(p_continuous(&c, 0.0, 0.0).re, 0.0);
        assert_eq!(p_continuous(&c, 1.0, 0.0).re, 0.0);
        let rows = emit_dispersion_curves(
            &c,
            &[1.0],
            &CurveOptions {
                resolution: 64,
                window: 2.0,
            },
        )
        .unwrap();
        let cont: Vec<_> = rows
            .iter()
            .filter(|r| r.curve_id == "lambda=1/continuous")
            .collect();
        assert!(cont.iter().any(|r| r.xi == 0.0 && r.omega.abs() < 1e-12));
        assert!(cont
            .iter()
            .any(|r| (r.xi - 1.0).abs() < 1e-12 && r.omega.abs() < 1e-12));
        for r in &cont {
            assert!((r.omega - r.xi + r.xi.powi(3)).abs() < 1e-9);
        }
    }

    #[test]
    fn linear_curve_reaches_corner_at_lambda_one() {
        let w = DispersionProblem::wave();
        let rows = emit_dispersion_curves(
            &w,
            &[1.0],
            &CurveOptions {
                resolution: 256,
                window: 8.0,
            },
        )
        .unwrap();
        let near = rows
            .iter()
            .filter(|r| r.curve_id == "lambda=1/discrete")
            .map(|r| (PI - r.x).hypot(PI - r.y))
            .fold(f64::INFINITY, f64::min);
        assert!(near < 0.05);
        for r in rows.iter().filter(|r| r.curve_id.ends_with("discrete")) {
            assert!((r.x.abs() - r.y.abs()).abs() < 1e-8);
        }
    }

    #[test]
    fn emitted_curves_are_consistent() {
        let w = DispersionProblem::wave();
        let rows = emit_dispersion_curves(
            &w,
            &LINEAR_FIGURE_LAMBDAS,
            &CurveOptions {
                resolution: 64,
                window: 6.0,
            },
        )
        .unwrap();
        for lambda in LINEAR_FIGURE_LAMBDAS {
            let g = DiscreteGeometry::from_lambda(lambda).unwrap();
            for r in rows
                .iter()
                .filter(|r| r.curve_id.starts_with(&format!("lambda={lambda}/")))
            {
                if r.x.is_nan() {
                    continue;
                }
                let (xi, om) = h_map(r.x, r.y, &g).unwrap();
                assert!((xi - r.xi).abs() < 1e-8 * (1.0 + xi.abs()));
                assert!((om - r.omega).abs() < 1e-8 * (1.0 + om.abs()));
            }
        }
    }

    #[test]
    fn zero_set_is_thread_independent() {
        let w = DispersionProblem::wave();
        let g = geom(1.0, 0.5);
        let f = |x: f64, y: f64| Ok(p_simple(&w, x, y, &g)?.re);
        let a = zero_set(&f, (-PI, PI), (-PI, PI), 64);
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(1)
            .build()
            .unwrap();
        let b = pool.install(|| zero_set(&f, (-PI, PI), (-PI, PI), 64));
        assert_eq!(a, b);
    }

    proptest! {
        #[test]
        fn h_is_odd(x in -3.1f64..3.1, y in -3.1f64..3.1, lambda in 0.05f64..4.0) {
            let g = geom(1.0, lambda);
            let (a, b) = h_map(x, y, &g).unwrap();
            let (c, d) = h_map(-x, -y, &g).unwrap();
            prop_assert_eq!(a, -c);
            prop_assert_eq!(b, -d);
        }

        #[test]
        fn stability_curve_total_iff_lambda_le_one(x in -PI..PI, lambda in 0.01f64..1.0) {
            let y = wave_stability_curve(x, lambda).unwrap();
            prop_assert!(y.abs() <= PI);
            prop_assert!(wave_stability_curve(PI, 1.0 + lambda).is_none());
        }

        #[test]
        fn rotation_identity(x in -3.0f64..3.0, y in -3.0f64..3.0, dx in 0.1f64..2.0, dt in 0.1f64..2.0) {
            let g = geom(dx, dt);
            let w = DispersionProblem::wave();
            let (xt, ot) = to_rotated(x, y);
            let a = p_simple(&w, x, y, &g).unwrap();
            let b = p_r1(&w, xt, ot, &g).unwrap();
            prop_assert!((a - b).norm() <= 1e-10 * (1.0 + a.norm()));
        }
    }
}
