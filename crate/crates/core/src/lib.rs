//! Numerical pseudoholomorphic discs.
//!
//! Discs are built by inverting `u ↦ u + T_CG(Q_J(u) ∂u/∂z)` on a Cartesian
//! grid of the unit disc, and then used to probe Levi forms, Kobayashi-Royden
//! pseudonorms and distance certificates.

pub mod cauchy_green;
pub mod disc_solver;
pub mod discgrid;
pub mod error;
pub mod experiments;
pub mod geometry;
pub mod kobayashi;
pub mod poly;
pub mod psh_levi;

pub use error::{Error, Result};
