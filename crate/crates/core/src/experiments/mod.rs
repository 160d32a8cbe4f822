//! Numerical studies: discretisation error, moment boundedness, persistence
//! averages, quantities of interest and parameter sensitivity.

mod averages;
mod convergence;
mod sensitivity;

pub use averages::{
    compute_qoi, ensemble_qoi, moment_estimate, persistence_estimate, time_average, MomentReport,
    PersistenceEstimate, QoIRecord, Qoi,
};
pub use convergence::{
    convergence_study, coupled_errors, coupled_terminal_states, log_log_slope, quasi_steady_start,
    strong_error, weak_error, CoupledErrors, ErrorSetup, ErrorTable, Phi, StrongError, WeakError,
    DEFAULT_DT_LIST, DEFAULT_REFINEMENT,
};
pub use sensitivity::{
    normalized_index, sensitivity_index, sensitivity_sweep, sensitivity_sweep_over,
    SensitivityCell, SensitivityResult, SensitivitySetup, SensitivityTable, DEFAULT_DELTA_FRACTION,
};

use crate::error::Result;
use crate::model::{NoiseIntensities, ModelParams};
use crate::sde::{simulate_ensemble, SimConfig};

/// Terminal min-max band width of component `component` for each value of
/// its noise intensity, all runs sharing the same seed and path streams.
pub fn noise_band_widths(
    params: &ModelParams,
    noise: &NoiseIntensities,
    component: usize,
    sigmas: &[f64],
    config: &SimConfig,
    n_paths: usize,
) -> Result<Vec<f64>> {
    sigmas
        .iter()
        .map(|&s| {
            let mut n = *noise;
            n.sigma[component] = s;
            Ok(simulate_ensemble(config, params, &n, n_paths)?.terminal_band_width(component))
        })
        .collect()
}
