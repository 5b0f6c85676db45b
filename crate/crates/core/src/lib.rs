//! Multi-symplectic box schemes on a diamond mesh.
//!
//! A multi-Hamiltonian PDE `K z_t + L z_x = ∇S(z)` is discretized on a
//! mesh of diamonds (squares rotated by 45° in space-time). Each diamond is
//! solved independently from its two lower edges, which makes a half-step
//! embarrassingly parallel.

pub mod conservation;
pub mod dispersion;
pub mod error;
pub mod harness;
pub mod mesh;
pub mod nonlinear;
pub mod rk_scheme;
pub mod simple_scheme;
pub mod system;
pub mod tableau;

pub use error::{Error, Result};
