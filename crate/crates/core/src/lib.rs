//! Finite element state solvers whose weak forms are weighted by a shallow
//! ReLU network, trained against cost functionals with adjoint gradients.

pub mod cost;
pub mod error;
pub mod experiments;
pub mod fem;
pub mod linalg;
pub mod nn;
pub mod optim;
pub mod parallel;
pub mod state;
pub mod verify;
pub mod weight;

pub use error::{Error, FailureKind, Result};
