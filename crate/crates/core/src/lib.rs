//! Indirect optimal control of second-order systems.
//!
//! Every problem is solvable in four equivalent charts: the Pontryagin
//! Hamiltonian on `T*TQ`, the new control Lagrangian on `TT*Q`, the new
//! control Hamiltonian on `T*T*Q`, and, when the dynamics come from a
//! forced Lagrangian, the forced new control Lagrangian on `TTQ`.

pub mod diff;
pub mod error;
pub mod linalg;
pub mod model;
pub mod formulations;
pub mod registry;
pub mod tulczyjew;
pub mod actions;
pub mod optimality;
pub mod bvp;
pub mod conserved;
pub mod config;
pub mod checks;

pub use error::{Error, Result};
