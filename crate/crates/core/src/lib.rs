//! Normalized ground states of the Choquard equation
//! `−Δu + μu = (I_α ∗ F(u)) f(u)`, `‖u‖₂² = m`, on radial grids.
//!
//! The ground state is found by minimizing the fiber-maximized energy
//! `Ψ(u) = max_s I(s ⋆ u)` over the mass sphere, then dilating the minimizer
//! onto the Pohožaev manifold.

// `!(x > 0.0)` is used on purpose so that NaN is rejected too
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod fiber;
pub mod functionals;
pub mod grid;
pub mod interp;
pub mod nonlinearity;
pub mod quad;
pub mod riesz;
pub mod solver;
pub mod sweep;

pub use error::{Error, Result};
pub use grid::{make_grid, Field, GridSpec, RadialGrid};
pub use riesz::{build_kernel, riesz_constant, RieszKernel};
