//! Brownian increments, Euler-Maruyama and Milstein steps, positivity
//! policies and path/ensemble integration.

mod brownian;
mod scheme;
mod simulate;

pub use brownian::{generate_brownian, BrownianGrid};
pub use scheme::{
    apply_positivity, em_step, milstein_correction, milstein_step, Positivity, Scheme, DEFAULT_EPS,
};
pub use simulate::{
    for_each_path, integrate_with, simulate, simulate_ensemble, simulate_path, step_count,
    EnsembleSummary, SimConfig, Trajectory, BLOW_UP_THRESHOLD, LOG_RATIO_CLAMP, PATH_BLOCK,
};
