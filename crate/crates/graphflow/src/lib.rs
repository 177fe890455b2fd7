//! A structured-grid laboratory for graphical mean curvature flow between
//! constant-curvature spaces.
//!
//! A map `f : Σ₁ → Σ₂` between space forms is evolved so that its graph in
//! the product moves by mean curvature. The crate provides
//!
//! - exact chart geometry of the constant-curvature factors ([`spaceform`]),
//! - second-order finite-difference calculus over structured grids with
//!   pole ghost cells ([`grid`]),
//! - the explicit flow integrator with CFL control ([`flow`]),
//! - singular-value frames and the algebra of the parallel difference
//!   tensor, including its second exterior power ([`frames`]),
//! - extrinsic curvature diagnostics and a discrete residual verifier for
//!   the evolution of the log projection Jacobian ([`curvature`]),
//! - randomized algebraic verifiers for the preserved-quantity identities
//!   and inequalities ([`identities`], [`verify`]),
//! - scenario presets, configuration, and run persistence
//!   ([`scenario`], [`report`]).

pub mod curvature;
pub mod error;
pub mod flow;
pub mod frames;
pub mod grid;
pub mod identities;
pub mod report;
pub mod scenario;
pub mod spaceform;
pub mod verify;

pub use error::{Error, Result};
