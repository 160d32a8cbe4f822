//! Four-state stochastic model of energy demand, supply, imports and
//! renewables with multiplicative noise.
//!
//! * [`model`]: parameters, drift, diffusion and Jacobian.
//! * [`stability`]: equilibria, spectral and matrix-inequality verdicts, persistence bound.
//! * [`sde`]: Brownian grids, Euler-Maruyama and Milstein integration, ensembles.
//! * [`experiments`]: convergence, moments, persistence averages, sensitivity.
//! * [`io`] and [`cli`]: JSON configuration, CSV artifacts and the `energy-sde` binary.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::too_many_arguments)]

pub mod cli;
pub mod error;
pub mod experiments;
pub mod io;
pub mod model;
pub mod sde;
pub mod stability;

pub use error::{Error, Result};
pub use model::{diffusion, drift, jacobian, Matrix4, ModelParams, NoiseIntensities, Param, State};
pub use sde::{simulate, simulate_ensemble, Positivity, Scheme, SimConfig, Trajectory};
pub use stability::{find_equilibria, Branch, Equilibrium};
