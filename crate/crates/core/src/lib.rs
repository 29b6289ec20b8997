//! Multimaterial, anisotropic topology optimization for 2D linear elasticity.
//!
//! The design lives on a P1 triangle mesh. Every element carries, for each
//! material class, a volume fraction `z`, a scalar material parameter `m` and an
//! orientation `theta`. Compliance is minimized under a mass budget with a
//! generalized optimality-criteria update whose two Lagrange multipliers (the
//! global mass multiplier and the per-element partition-of-unity multiplier) are
//! found by nested bisection.
//!
//! Material classes may be isotropic, rotated copies of an anisotropic tensor,
//! or tabulated from periodic homogenization of phase-field microstructures
//! (see [`homogenize`]).

// Index loops mirror the element formulas; `!(x > 0.0)` deliberately rejects NaN.
#![allow(clippy::needless_range_loop, clippy::neg_cmp_op_on_partial_ord)]

pub mod case;
pub mod error;
pub mod fem;
pub mod filter;
pub mod materials;
pub mod mesh;
pub mod optimizer;
pub mod homogenize;
pub(crate) mod linalg;
pub mod problem;

pub use error::{Error, Result};
pub use materials::{MaterialClass, Tensor4};
pub use mesh::Mesh;
pub use problem::Problem;
