//! Delta-velocity rectified-flow editing on closed-form fields.
//!
//! The crate is `no_std` (with `alloc`). It provides:
//!
//! - [`schedules`]: path coefficients `(a, b, ȧ, ḃ)`, shift rules and weights;
//! - [`condfield`]: conditional Gaussian-mixture velocity fields with exact
//!   posteriors, guidance, noise/score views and Monte-Carlo oracles;
//! - [`integrate`]: Euler and DDIM samplers, inversion, reconstruction error
//!   and two-ODE translation;
//! - [`distill`]: SDS, RFDS, DDS and DVRF residuals and energies;
//! - [`editor`]: the optimisation loop, its schedulers and optimisers, and the
//!   FlowEdit ODE;
//! - [`analytics`]: trajectory geometry, sweeps and equivalence reports.

#![cfg_attr(not(test), no_std)]

extern crate alloc;

pub mod analytics;
pub mod condfield;
pub mod distill;
pub mod editor;
mod error;
pub mod integrate;
pub mod latent;
pub mod rng;
pub mod schedules;
pub mod tasks;

pub use condfield::{CondGmmField, DiracField, Prompt, VelocityModel};
pub use error::{Error, Result};
pub use latent::Latent;
pub use schedules::{Schedule, ShiftRule, WeightMode};
