//! Optimal heating of a conducting body by boundary current.
//!
//! The state is the thermistor system: a quasilinear heat equation driven by
//! Joule heating, coupled to a quasi-static potential equation whose Neumann
//! data is the control. The crate provides
//!
//! * P1 tetrahedral discretization ([`mesh`], [`fem`], [`sparse`]),
//! * implicit Euler / Newton forward solver ([`state`]),
//! * the exact transpose of that scheme for reduced gradients ([`adjoint`]),
//! * the penalized reduced objective ([`objective`]) and a projected
//!   Dai–Yuan conjugate gradient driver with penalty continuation ([`optimizer`]).

pub mod adjoint;
pub mod error;
pub mod fem;
pub mod materials;
pub mod mesh;
pub mod objective;
pub mod optimizer;
pub mod sparse;
pub mod state;
#[cfg(test)]
mod testing;
#[cfg(any(test, feature = "verify"))]
pub mod verify;

pub use error::{Error, Result};
