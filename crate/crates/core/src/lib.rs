//! First-order mean-field games on rectangles with a prescribed boundary
//! influx, solved through their convex density/flux formulation.
//!
//! The pipeline is: [`problem`] (parse and audit an instance) →
//! [`solver`] (primal–dual splitting on the discrete transport problem,
//! value function recovered as the multiplier of the continuity
//! constraint) → [`verify`] (weak-solution certificate) →
//! [`characteristics`] (agent-level Monte Carlo cross-check).
//!
//! Discrete layout conventions live in [`grid`]; convex analysis
//! primitives (Hamiltonians, couplings, conjugates, proximal maps) in
//! [`convex`]; the discrete continuity equation and mass accounting in
//! [`continuity`].

pub mod characteristics;
pub mod continuity;
pub mod convex;
pub mod error;
pub mod grid;
pub mod problem;
pub mod solver;
pub mod verify;

pub use error::{Assumption, MfgError, Result};
