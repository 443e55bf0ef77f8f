//! Models and sample paths of possibly-killed finite-activity Lévy
//! processes, with exact-in-distribution simulation on a time grid.
//!
//! A model is the characteristic data `(gamma, sigma, nu, q)` in dimension
//! `d`. `gamma` is the Lévy–Itô drift with respect to the unit-ball
//! truncation, so the continuous part of the path drifts at
//! `gamma - ∫_{|x|<=1} x nu(dx)` and the jump part is the uncompensated
//! compound Poisson process of `nu`. With that convention convolution and
//! the jump-measure reconciliation act componentwise on the characteristics.
//!
//! Paths store node values on the grid together with the exact jump times,
//! so marginals at nodes are exact in distribution for this finite-activity
//! class; only the killing time is rounded (up) to the grid.

mod model;
mod path;
mod simulate;

pub use model::{AtomicJumpMeasure, JumpAtom, LevyModel};
pub use path::{JumpEvent, Observation, PathValue, SamplePath};
pub use simulate::simulate;
