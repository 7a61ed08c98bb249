//! Mass-conserving periodic solver for marine ecosystem models of N-DOP type.
//!
//! Two tracers, phosphate `y1` and dissolved organic phosphorus `y2`, are
//! transported by a time-periodic advection-diffusion operator and coupled by
//! bounded, mass-conserving reactions. The solver computes the periodic
//! solution with prescribed total mass by splitting the system into a linear
//! problem for `y2`, a sum problem with zero mean for `y1 + y2` and a fixed
//! point iteration over the reactions.

pub mod grid;
pub mod krylov;
pub mod reactions;
pub mod solver;
pub mod sparse;
pub mod transport;
