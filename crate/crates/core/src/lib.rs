//! Simulation tools for random surfaces in a quenched random field.
//!
//! The crate covers the real-valued gradient model with uniformly convex
//! potential, the integer-valued Gaussian free field and the membrane model,
//! all on boxes `Λ_L = {-L, ..., L}^d` with zero boundary conditions.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod disorder;
pub mod elliptic;
pub mod error;
pub mod experiments;
pub mod field;
pub mod groundstate;
pub mod io;
pub mod ivgff;
pub mod langevin;
pub mod lattice;
pub mod parabolic;
pub mod potentials;
pub mod selftest;
pub mod stats;

pub use error::{Error, Result};
pub use field::{Field, IntField};
pub use lattice::{linf_distance, Edge, Lattice, Site};
