//! Finite element exterior calculus on simplicial meshes.
//!
//! The crate is organized bottom-up:
//!
//! * [`exterior`] and [`polyform`] hold the exact algebra of alternating and
//!   polynomial differential forms (`d`, Koszul `κ`, the `P_rΛ^k` and
//!   `P_r^-Λ^k` families).
//! * [`mesh`] builds simplicial complexes and their subsimplex lattice.
//! * [`fem`] assembles global finite element spaces from face-moment degrees
//!   of freedom, and [`derham`] chains them into discrete de Rham complexes.
//! * [`hodge`] solves mixed Hodge-Laplacian source and eigenvalue problems,
//!   [`elasticity`] the 2D mixed elasticity system.
//! * [`experiments`] drives the numerical studies used by the `feec` CLI.

pub mod derham;
pub mod elasticity;
pub mod error;
pub mod experiments;
pub mod exterior;
pub mod fem;
pub mod hodge;
pub mod linalg;
pub mod mesh;
pub mod polyform;
pub mod quadrature;
pub mod ratmat;

pub use error::{FeecError, Result};

/// Exact scalar used by the algebraic layers.
pub type Rational = num_rational::BigRational;

pub fn rational_to_f64(q: &Rational) -> f64 {
    use num_traits::ToPrimitive;
    q.to_f64().unwrap_or(f64::NAN)
}

pub fn rational_from_i64(v: i64) -> Rational {
    Rational::from_integer(v.into())
}
