//! Diamond mesh geometry and the zig-zag state layout.
//!
//! Level `j` holds `N` diamonds whose bottom corners sit at
//! `x = a + (d + (j mod 2)/2) Δx`, `t = j Δt/2`. Each diamond is mapped to
//! the unit square by
//!
//! ```text
//!   x̃ = x/Δx + t/Δt,   t̃ = −x/Δx + t/Δt      (relative to the bottom corner)
//! ```
//!
//! so the bottom corner goes to (0,0), the right corner to (1,0), the left
//! corner to (0,1) and the top to (1,1). The square's left edge is the
//! diamond's lower-left edge and its bottom edge the lower-right one; the
//! right and top edges of the square are the upper-right and upper-left
//! diamond edges.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::system::{MultiHamiltonianSystem, StateVector};
use crate::tableau::GaussTableau;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeshParams {
    pub n_diamonds: usize,
    pub a: f64,
    pub b: f64,
    pub dx: f64,
    pub dt: f64,
    pub lambda: f64,
    pub r: usize,
}

impl MeshParams {
    /// Uniform periodic mesh of `n` diamonds on `[a, b]` at Courant number `lambda`.
    pub fn new(n: usize, a: f64, b: f64, lambda: f64, r: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidInput("need at least one diamond".into()));
        }
        if !(b > a) {
            return Err(Error::InvalidInput(format!("empty domain [{a}, {b}]")));
        }
        if !(lambda > 0.0) || !lambda.is_finite() {
            return Err(Error::InvalidInput(format!(
                "Courant number must be positive, got {lambda}"
            )));
        }
        if r == 0 {
            return Err(Error::InvalidInput("stage count must be at least 1".into()));
        }
        let dx = (b - a) / n as f64;
        Ok(Self {
            n_diamonds: n,
            a,
            b,
            dx,
            dt: lambda * dx,
            lambda,
            r,
        })
    }

    pub fn period(&self) -> f64 {
        self.b - self.a
    }

    /// Maps `x` into `[a, b)`.
    pub fn wrap(&self, x: f64) -> f64 {
        let p = self.period();
        let y = (x - self.a).rem_euclid(p) + self.a;
        if y >= self.b {
            self.a
        } else {
            y
        }
    }

    /// Bottom corner of diamond `d` at level `j`.
    pub fn bottom_corner(&self, level: usize, diamond: usize) -> (f64, f64) {
        let shift = (level % 2) as f64 * 0.5;
        (
            self.a + (diamond as f64 + shift) * self.dx,
            level as f64 * self.dt * 0.5,
        )
    }

    /// Physical coordinates of the unit-square point `(x̃, t̃)` of a diamond.
    pub fn square_to_physical(&self, level: usize, diamond: usize, xt: f64, tt: f64) -> (f64, f64) {
        let (x0, t0) = self.bottom_corner(level, diamond);
        (
            x0 + 0.5 * self.dx * (xt - tt),
            t0 + 0.5 * self.dt * (xt + tt),
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Edge {
    Left,
    Bottom,
    Right,
    Top,
}

/// Physical `(x, t)` of stage node `stage ∈ 1..=r` on an edge of a diamond.
/// `x` is not wrapped into the domain; use [`MeshParams::wrap`].
pub fn square_coords(
    params: &MeshParams,
    tab: &GaussTableau,
    level: usize,
    diamond: usize,
    edge: Edge,
    stage: usize,
) -> Result<(f64, f64)> {
    if diamond >= params.n_diamonds {
        return Err(Error::InvalidInput(format!(
            "diamond {diamond} out of range (N = {})",
            params.n_diamonds
        )));
    }
    if !(1..=tab.r).contains(&stage) {
        return Err(Error::InvalidInput(format!(
            "stage {stage} out of range 1..={}",
            tab.r
        )));
    }
    let c = tab.c[stage - 1];
    let (xt, tt) = match edge {
        Edge::Bottom => (c, 0.0),
        Edge::Left => (0.0, c),
        Edge::Top => (c, 1.0),
        Edge::Right => (1.0, c),
    };
    Ok(params.square_to_physical(level, diamond, xt, tt))
}

/// Coordinates of a zig-zag slot: 0 is the bottom corner, `1..=r` the
/// left edge, `r+1..=2r` the bottom edge.
pub fn slot_coords(
    params: &MeshParams,
    tab: &GaussTableau,
    level: usize,
    diamond: usize,
    slot: usize,
) -> Result<(f64, f64)> {
    let r = tab.r;
    match slot {
        0 => Ok(params.bottom_corner(level, diamond)),
        s if s <= r => square_coords(params, tab, level, diamond, Edge::Left, s),
        s if s <= 2 * r => square_coords(params, tab, level, diamond, Edge::Bottom, s - r),
        s => Err(Error::InvalidInput(format!(
            "slot {s} out of range 0..={}",
            2 * r
        ))),
    }
}

/// `K̃ = K/Δt − L/Δx` and `L̃ = K/Δt + L/Δx`.
#[derive(Debug, Clone, PartialEq)]
pub struct TransformedCoeffs {
    pub k_tilde: DMatrix<f64>,
    pub l_tilde: DMatrix<f64>,
    pub dx: f64,
    /// Negative for a step backwards in time.
    pub dt: f64,
}

impl TransformedCoeffs {
    pub fn new(sys: &MultiHamiltonianSystem, dx: f64, dt: f64) -> Self {
        let kt = sys.k() / dt;
        let lx = sys.l() / dx;
        Self {
            k_tilde: &kt - &lx,
            l_tilde: kt + lx,
            dx,
            dt,
        }
    }
}

pub fn transform_coeffs(sys: &MultiHamiltonianSystem, params: &MeshParams) -> TransformedCoeffs {
    TransformedCoeffs::new(sys, params.dx, params.dt)
}

/// The `N (2r + 1)` edge values of one zig-zag level.
#[derive(Debug, Clone, PartialEq)]
pub struct ZigzagState {
    pub level: usize,
    n_diamonds: usize,
    r: usize,
    n: usize,
    values: Vec<StateVector>,
}

impl ZigzagState {
    pub fn new(
        level: usize,
        n_diamonds: usize,
        r: usize,
        values: Vec<StateVector>,
    ) -> Result<Self> {
        if values.len() != n_diamonds * (2 * r + 1) {
            return Err(Error::InvalidInput(format!(
                "expected {} slot values, got {}",
                n_diamonds * (2 * r + 1),
                values.len()
            )));
        }
        let n = values.first().map_or(0, |v| v.len());
        if values.iter().any(|v| v.len() != n) {
            return Err(Error::InvalidInput(
                "slot values have different lengths".into(),
            ));
        }
        Ok(Self {
            level,
            n_diamonds,
            r,
            n,
            values,
        })
    }

    pub fn from_fn(
        level: usize,
        n_diamonds: usize,
        r: usize,
        mut f: impl FnMut(usize, usize) -> StateVector,
    ) -> Result<Self> {
        let mut values = Vec::with_capacity(n_diamonds * (2 * r + 1));
        for d in 0..n_diamonds {
            for s in 0..=2 * r {
                values.push(f(d, s));
            }
        }
        Self::new(level, n_diamonds, r, values)
    }

    pub fn n_diamonds(&self) -> usize {
        self.n_diamonds
    }
    pub fn stages(&self) -> usize {
        self.r
    }
    pub fn dim(&self) -> usize {
        self.n
    }
    pub fn slots_per_diamond(&self) -> usize {
        2 * self.r + 1
    }

    pub fn get(&self, diamond: usize, slot: usize) -> &StateVector {
        &self.values[diamond * (2 * self.r + 1) + slot]
    }

    pub fn get_mut(&mut self, diamond: usize, slot: usize) -> &mut StateVector {
        let w = 2 * self.r + 1;
        &mut self.values[diamond * w + slot]
    }

    pub fn corner(&self, diamond: usize) -> &StateVector {
        self.get(diamond, 0)
    }
    /// `z̃_ℓ^1..r` of a diamond.
    pub fn left(&self, diamond: usize) -> &[StateVector] {
        let w = 2 * self.r + 1;
        &self.values[diamond * w + 1..diamond * w + 1 + self.r]
    }
    /// `z̃^b_1..r` of a diamond.
    pub fn bottom(&self, diamond: usize) -> &[StateVector] {
        let w = 2 * self.r + 1;
        &self.values[diamond * w + 1 + self.r..(diamond + 1) * w]
    }

    pub fn values(&self) -> &[StateVector] {
        &self.values
    }

    /// Largest componentwise difference to another state of the same shape.
    pub fn max_abs_diff(&self, other: &ZigzagState) -> f64 {
        self.values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b).amax())
            .fold(0.0, f64::max)
    }
}

/// What a half-step produces for one diamond.
#[derive(Debug, Clone, PartialEq)]
pub struct DiamondOutput {
    /// `z̃_r^1..r`, the upper-right edge.
    pub right: Vec<StateVector>,
    /// `z̃^t_1..r`, the upper-left edge.
    pub top: Vec<StateVector>,
    /// Estimate of the right corner (`z̃_r^0`).
    pub corner_right: StateVector,
    /// Estimate of the left corner (`z̃^t_0`).
    pub corner_top: StateVector,
}

/// Diamonds of level `j` feeding the lower-left and lower-right edges of
/// diamond `d` on level `j + 1`.
pub fn feeding_diamonds(level: usize, diamond: usize, n_diamonds: usize) -> (usize, usize) {
    if level.is_multiple_of(2) {
        (diamond, (diamond + 1) % n_diamonds)
    } else {
        ((diamond + n_diamonds - 1) % n_diamonds, diamond)
    }
}

/// Builds the level-`j+1` zig-zag from the outputs of all level-`j` diamonds.
///
/// The lower-left edge of a new diamond is the upper-right edge of one old
/// diamond and its lower-right edge the upper-left edge of the neighbour to
/// the right; the shift alternates with the parity of `j` so the mesh does
/// not drift. The shared bottom corner is the mean of its two estimates.
pub fn advance_reindex(outputs: &[DiamondOutput], level: usize) -> Result<ZigzagState> {
    let n_diamonds = outputs.len();
    let Some(first) = outputs.first() else {
        return Err(Error::InvalidInput("no diamonds".into()));
    };
    let r = first.right.len();
    let mut values = Vec::with_capacity(n_diamonds * (2 * r + 1));
    for d in 0..n_diamonds {
        let (lo_left, lo_right) = feeding_diamonds(level, d, n_diamonds);
        let (from_left, from_right) = (&outputs[lo_left], &outputs[lo_right]);
        values.push((&from_left.corner_right + &from_right.corner_top) * 0.5);
        values.extend(from_left.right.iter().cloned());
        values.extend(from_right.top.iter().cloned());
    }
    ZigzagState::new(level + 1, n_diamonds, r, values)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::system::{linear_wave, wave_k, wave_l};
    use crate::tableau::gauss_tableau;

    #[test]
    fn transformed_coefficients() {
        let sys = linear_wave();
        let unit = TransformedCoeffs::new(&sys, 1.0, 1.0);
        assert_eq!(unit.k_tilde, wave_k() - wave_l());
        assert_eq!(unit.l_tilde, wave_k() + wave_l());

        let half = TransformedCoeffs::new(&sys, 1.0, 0.5);
        assert_eq!(half.k_tilde, wave_k() * 2.0 - wave_l());
        assert_eq!(half.k_tilde[(0, 1)], -2.0);
        assert_eq!(half.k_tilde[(0, 2)], -1.0);
        assert_eq!(half.k_tilde[(1, 0)], 2.0);
        assert_eq!(half.k_tilde[(2, 0)], 1.0);

        let no_l = MultiHamiltonianSystem::new(
            wave_k(),
            DMatrix::zeros(3, 3),
            std::sync::Arc::new(|z: &StateVector| z.clone()),
        )
        .unwrap();
        let c = TransformedCoeffs::new(&no_l, 0.3, 0.25);
        assert_eq!(c.k_tilde, c.l_tilde);
        assert_eq!(c.k_tilde, wave_k() / 0.25);
    }

    #[test]
    fn transformed_sums_and_skewness() {
        let sys = linear_wave();
        let (dx, dt) = (0.37, 0.125);
        let c = TransformedCoeffs::new(&sys, dx, dt);
        assert_eq!(&c.k_tilde + &c.l_tilde, wave_k() * (2.0 / dt));
        assert!((&c.l_tilde - &c.k_tilde - wave_l() * (2.0 / dx)).amax() < 1e-15);
        assert_eq!(c.k_tilde, -c.k_tilde.transpose());
        assert_eq!(c.l_tilde, -c.l_tilde.transpose());
    }

    #[test]
    fn edge_node_coordinates() {
        let p = MeshParams::new(8, -1.0, 1.0, 0.5, 1).unwrap();
        let t = gauss_tableau(1).unwrap();
        let (x, tt) = square_coords(&p, &t, 0, 0, Edge::Bottom, 1).unwrap();
        assert!((x - (p.a + p.dx / 4.0)).abs() < 1e-15 && (tt - p.dt / 4.0).abs() < 1e-15);
        let (x, tt) = square_coords(&p, &t, 0, 0, Edge::Left, 1).unwrap();
        assert!((x - (p.a - p.dx / 4.0)).abs() < 1e-15 && (tt - p.dt / 4.0).abs() < 1e-15);
        assert!((p.wrap(x) - (p.b - p.dx / 4.0)).abs() < 1e-15);

        let t3 = gauss_tableau(3).unwrap();
        for d in 0..8 {
            for s in 1..=3 {
                let (xl, tl) = square_coords(&p, &t3, 3, d, Edge::Left, s).unwrap();
                let (xr, tr) = square_coords(&p, &t3, 3, d, Edge::Right, s).unwrap();
                assert!((xr - xl - p.dx / 2.0).abs() < 1e-14);
                assert!((tr - tl - p.dt / 2.0).abs() < 1e-14);
                let (xb, tb) = square_coords(&p, &t3, 3, d, Edge::Bottom, s).unwrap();
                let (xt, ttop) = square_coords(&p, &t3, 3, d, Edge::Top, s).unwrap();
                assert!((xt - xb + p.dx / 2.0).abs() < 1e-14);
                assert!((ttop - tb - p.dt / 2.0).abs() < 1e-14);
            }
        }
        assert!(square_coords(&p, &t, 0, 8, Edge::Left, 1).is_err());
        assert!(square_coords(&p, &t, 0, 0, Edge::Left, 2).is_err());
    }

    #[test]
    fn corner_slots_sit_on_the_level_time() {
        let p = MeshParams::new(5, 0.0, 3.0, 0.7, 2).unwrap();
        let t = gauss_tableau(2).unwrap();
        for j in 0..6 {
            for d in 0..5 {
                let (_, tc) = slot_coords(&p, &t, j, d, 0).unwrap();
                assert_eq!(tc, j as f64 * p.dt * 0.5);
            }
        }
    }

    /// A fake half-step whose outputs are the node coordinates themselves:
    /// reindexing must land every value on the coordinates of its new slot.
    fn coordinate_outputs(p: &MeshParams, t: &GaussTableau, level: usize) -> Vec<DiamondOutput> {
        let enc = |(x, tt): (f64, f64)| StateVector::from_vec(vec![p.wrap(x), tt]);
        (0..p.n_diamonds)
            .map(|d| DiamondOutput {
                right: (1..=t.r)
                    .map(|s| enc(square_coords(p, t, level, d, Edge::Right, s).unwrap()))
                    .collect(),
                top: (1..=t.r)
                    .map(|s| enc(square_coords(p, t, level, d, Edge::Top, s).unwrap()))
                    .collect(),
                corner_right: enc(p.square_to_physical(level, d, 1.0, 0.0)),
                corner_top: enc(p.square_to_physical(level, d, 0.0, 1.0)),
            })
            .collect()
    }

    #[test]
    fn reindex_matches_geometry() {
        for &n in &[1usize, 2, 5] {
            for r in 1..=3 {
                let p = MeshParams::new(n, -2.0, 3.0, 0.5, r).unwrap();
                let t = gauss_tableau(r).unwrap();
                for level in 0..4 {
                    let next = advance_reindex(&coordinate_outputs(&p, &t, level), level).unwrap();
                    assert_eq!(next.level, level + 1);
                    for d in 0..n {
                        for s in 0..=2 * r {
                            let (x, tt) = slot_coords(&p, &t, level + 1, d, s).unwrap();
                            let v = next.get(d, s);
                            let dxw = (v[0] - p.wrap(x)).abs();
                            let dxw = dxw.min((dxw - p.period()).abs());
                            assert!(dxw < 1e-12, "n={n} r={r} level={level} d={d} s={s}");
                            assert!((v[1] - tt).abs() < 1e-12);
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn two_half_steps_restore_offsets() {
        let p = MeshParams::new(6, 0.0, 6.0, 0.5, 2).unwrap();
        let t = gauss_tableau(2).unwrap();
        let xs = |level: usize| {
            let mut v: Vec<i64> = (0..6)
                .flat_map(|d| (0..5).map(move |s| (d, s)))
                .map(|(d, s)| {
                    (p.wrap(slot_coords(&p, &t, level, d, s).unwrap().0) * 1e9).round() as i64
                })
                .collect();
            v.sort();
            v
        };
        assert_eq!(xs(0), xs(2));
        assert_ne!(xs(0), xs(1));
    }

    #[test]
    fn single_diamond_wraps_onto_itself() {
        let out = DiamondOutput {
            right: vec![StateVector::from_vec(vec![1.0])],
            top: vec![StateVector::from_vec(vec![2.0])],
            corner_right: StateVector::from_vec(vec![3.0]),
            corner_top: StateVector::from_vec(vec![5.0]),
        };
        for level in 0..2 {
            let s = advance_reindex(std::slice::from_ref(&out), level).unwrap();
            assert_eq!(s.corner(0)[0], 4.0);
            assert_eq!(s.left(0)[0][0], 1.0);
            assert_eq!(s.bottom(0)[0][0], 2.0);
        }
    }

    #[test]
    fn constant_outputs_give_constant_state() {
        let c = StateVector::from_vec(vec![0.5, -1.0, 2.0]);
        let out = DiamondOutput {
            right: vec![c.clone(); 3],
            top: vec![c.clone(); 3],
            corner_right: c.clone(),
            corner_top: c.clone(),
        };
        let s = advance_reindex(&vec![out; 4], 1).unwrap();
        assert!(s.values().iter().all(|v| *v == c));
    }
}
