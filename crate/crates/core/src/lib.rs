//! Inference of parameter-dependent effective shear viscosities for steady
//! one-dimensional non-Newtonian flows.
//!
//! The crate is `no_std` with `alloc`. Enabling the `std` feature lets the
//! velocity loss and the error metrics run their independent PDE solves in
//! parallel on the rayon global pool; results are reduced in a fixed order, so
//! values are identical with or without the feature.
//!
//! Module map:
//!
//! * [`rheology`]: tensor invariants, Glen's law, the viscous-plastic shear
//!   viscosity and the [`ViscosityModel`] union.
//! * [`nn`]: the neural viscosity `exp(xi(lambda)) * chi(log gamma, lambda)`
//!   with hand-written reverse-mode derivatives.
//! * [`fem`]: P1 finite elements, Newton solver and adjoint solves.
//! * [`losses`]: stress, velocity, sparsity and monotonicity terms.
//! * [`optim`]: L-BFGS with a strong-Wolfe line search, and Adam.
//! * [`experiments`]: synthetic datasets, noise and error metrics.
//! * [`train`]: the training driver tying the above together.
#![no_std]

extern crate alloc;
#[cfg(feature = "std")]
extern crate std;

pub mod error;
pub mod experiments;
pub mod fem;
pub mod linalg;
pub mod losses;
mod math;
pub mod nn;
pub mod optim;
pub mod quadrature;
pub mod rheology;
pub mod train;

pub use error::{Error, Result};
pub use nn::{Architecture, EvalRecord, NetworkParams, Normalization};
pub use rheology::ViscosityModel;
