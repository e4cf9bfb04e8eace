//! Axisymmetric harmonic maps from R^3 minus a rod-type singular set into
//! complex hyperbolic space, with reconstruction of the associated
//! stationary axisymmetric Einstein/Abelian-Yang-Mills fields.
//!
//! The pipeline runs in five stages:
//!
//! 1. [`rod_structure`] describes the axis singular set and the regularised
//!    potential `u0` of a uniform line charge on it.
//! 2. [`seed_map`] builds an approximately harmonic map that carries the
//!    prescribed singular behaviour.
//! 3. [`solver`] minimises the renormalised energy on a sequence of balls.
//! 4. [`diagnostics`] checks the distance and maximum-principle bounds.
//! 5. [`spacetime`] integrates the metric potentials and reports conical
//!    defects on the bounded axis components.

pub mod config;
pub mod diagnostics;
pub mod error;
pub mod jet;
pub mod nonfinite;
pub mod oracles;
pub mod pipeline;
pub mod quadrature;
pub mod rod_structure;
pub mod seed_map;
pub mod solver;
pub mod spacetime;
pub mod target_geometry;
pub mod validation;

pub use error::{Error, Result};
