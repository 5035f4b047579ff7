//! Regularized Landau equation as a gradient flow of the regularized entropy.
//!
//! The crate is `no_std` (with `alloc`) when built without the default `std`
//! feature. Modules:
//!
//! - [`core`]: parameters, grids, particle ensembles, trajectories, moments.
//! - [`kernels`]: the exponential regularization kernels and their bounds.
//! - [`collision`]: projection, tilde-gradient, velocity field, dissipation.
//! - [`particle_solver`]: deterministic particle method.
//! - [`grazing_metric`]: discrete grazing continuity equation and the Landau distance.
//! - [`jko`]: minimizing-movement scheme, slope estimator, EDI certificate.
//! - [`aux_flow`]: cutoff transport problem with frozen first variation.
#![cfg_attr(not(feature = "std"), no_std)]

extern crate alloc;

pub mod aux_flow;
pub mod collision;
pub mod core;
pub mod error;
pub mod grazing_metric;
pub mod init;
pub mod jko;
pub mod kernels;
mod linalg;
mod math;
mod lbfgs;
pub mod particle_solver;
pub mod quadrature;

pub use crate::core::{
    boltzmann_entropy, make_maxwellian, moment, Diagnostics, GridDensity, GridField, GridSpec,
    Measure, ModelParams, ParticleEnsemble, Trajectory,
};
pub use error::{Error, Result};
pub use linalg::{Mat3, Vec3};
