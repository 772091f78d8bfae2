//! Dynamics of GD, momentum, RMSProp and Adam on degenerate monomials
//! `L(x) = x^k / k`.
//!
//! The crate is split the same way the experiments are:
//!
//! * [`objectives`]: the monomial family and the coupled 2-D objectives.
//! * [`optimizers`]: raw floating-point reference steppers and the trajectory runner.
//! * [`normalized`]: the `(omega, lambda, log|x|)` state system, fixed points,
//!   Jacobians and theoretical regime labels.
//! * [`theory`]: closed-form rates and critical constants.
//! * [`analysis`]: slope fits, spike detection, empirical regime labels and
//!   limit sets of the sharpness map.
//! * [`sweeps`]: deterministic phase-diagram and bifurcation grids.
//! * [`io`]: CSV and JSON exports.

pub mod analysis;
pub mod error;
pub mod io;
pub mod normalized;
pub mod objectives;
pub mod optimizers;
pub mod sweeps;
pub mod theory;

pub use error::{Error, Result};
pub use objectives::{Coupled2D, Monomial, TermExponent};
pub use optimizers::{Method, OptimizerParams, OptimizerState, RunConfig, Sample, StopRule, Termination, Trajectory, V0Policy};
