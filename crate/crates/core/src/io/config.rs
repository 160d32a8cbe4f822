//! JSON run configuration. Every block is optional and unknown keys are
//! rejected at every level.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::experiments::{quasi_steady_start, ErrorSetup, Phi, Qoi, SensitivitySetup, DEFAULT_DELTA_FRACTION, DEFAULT_DT_LIST, DEFAULT_REFINEMENT};
use crate::model::{ModelParams, NoiseIntensities, State};
use crate::sde::{step_count, SimConfig};
use crate::stability::PersistenceSpec;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub model: ModelParams,
    pub noise: NoiseIntensities,
    pub sim: SimConfig,
    pub experiments: ExperimentConfig,
}

/// Settings of the `converge`, `weak-error`, `ensemble`, `moments`,
/// `persistence`, `sensitivity` and `stability` subcommands.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    /// Coarse steps of the error studies, strictly decreasing.
    pub dt_list: Vec<f64>,
    /// Reference step is `dt / refinement`.
    pub refinement: usize,
    /// Paths of the error studies.
    pub error_paths: usize,
    pub error_t_end: f64,
    /// Start of the error studies; the quasi-steady start when absent.
    pub error_x0: Option<State>,
    pub weak_phi: Phi,
    /// Paths of `ensemble`, `moments` and `persistence`.
    pub n_paths: usize,
    pub moment_p: f64,
    pub c: [f64; 4],
    pub eta: f64,
    pub kappa: f64,
    pub sensitivity_t_end: f64,
    pub sensitivity_paths: usize,
    pub delta_fraction: f64,
    /// QoI columns written by `sensitivity`.
    pub qoi: Vec<Qoi>,
    /// Diagonal of the matrix-inequality weight; identity when absent.
    pub lmi_p_diag: Option<[f64; 4]>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            dt_list: DEFAULT_DT_LIST.to_vec(),
            refinement: DEFAULT_REFINEMENT,
            error_paths: 500,
            error_t_end: 5.0,
            error_x0: None,
            weak_phi: Phi::X1,
            n_paths: 1000,
            moment_p: 2.0,
            c: [1.0; 4],
            eta: 1.0,
            kappa: 0.5,
            sensitivity_t_end: 3.0,
            sensitivity_paths: 200,
            delta_fraction: DEFAULT_DELTA_FRACTION,
            qoi: Qoi::ALL.to_vec(),
            lmi_p_diag: None,
        }
    }
}

fn field_err(field: &str, e: impl std::fmt::Display) -> Error {
    Error::Config(format!("{field}: {e}"))
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        let report = self.model.validate();
        if !report.is_ok() {
            return Err(field_err("model", report.violations.join("; ")));
        }
        self.noise.ensure_valid().map_err(|e| field_err("noise.sigma", e))?;
        self.sim.validate().map_err(|e| field_err("sim", e))?;

        let x = &self.experiments;
        if x.dt_list.is_empty() {
            return Err(field_err("experiments.dt_list", "must not be empty"));
        }
        if x.dt_list.windows(2).any(|w| !(w[0] > w[1])) {
            return Err(field_err("experiments.dt_list", "must be strictly decreasing"));
        }
        for &dt in &x.dt_list {
            step_count(x.error_t_end, dt).map_err(|e| field_err("experiments.dt_list", e))?;
        }
        if x.refinement == 0 {
            return Err(field_err("experiments.refinement", "must be >= 1"));
        }
        if x.error_paths < 2 {
            return Err(field_err("experiments.error_paths", "must be >= 2"));
        }
        if let Some(x0) = x.error_x0 {
            if x0.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
                return Err(field_err("experiments.error_x0", "components must be finite and >= 0"));
            }
        }
        if x.n_paths == 0 {
            return Err(field_err("experiments.n_paths", "must be >= 1"));
        }
        if !(x.moment_p >= 2.0) || !x.moment_p.is_finite() {
            return Err(field_err("experiments.moment_p", "must be >= 2"));
        }
        self.persistence_spec()
            .validate()
            .map_err(|e| field_err("experiments.c/eta/kappa", e))?;
        step_count(x.sensitivity_t_end, self.sim.dt)
            .map_err(|e| field_err("experiments.sensitivity_t_end", e))?;
        if x.sensitivity_paths == 0 {
            return Err(field_err("experiments.sensitivity_paths", "must be >= 1"));
        }
        if !(x.delta_fraction > 0.0 && x.delta_fraction < 1.0) {
            return Err(field_err("experiments.delta_fraction", "must lie in (0, 1)"));
        }
        if x.qoi.is_empty() {
            return Err(field_err("experiments.qoi", "must not be empty"));
        }
        if let Some(d) = x.lmi_p_diag {
            if d.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
                return Err(field_err("experiments.lmi_p_diag", "entries must be finite and > 0"));
            }
        }
        Ok(())
    }

    pub fn persistence_spec(&self) -> PersistenceSpec {
        PersistenceSpec {
            c: self.experiments.c,
            eta: self.experiments.eta,
            kappa: self.experiments.kappa,
        }
    }

    pub fn error_setup(&self) -> Result<ErrorSetup> {
        let x0 = match self.experiments.error_x0 {
            Some(x0) => x0,
            None => quasi_steady_start(&self.model)?,
        };
        Ok(ErrorSetup {
            x0,
            t_end: self.experiments.error_t_end,
            refinement: self.experiments.refinement,
            n_paths: self.experiments.error_paths,
            seed: self.sim.seed,
            positivity: self.sim.positivity,
        })
    }

    pub fn sensitivity_setup(&self) -> SensitivitySetup {
        SensitivitySetup {
            sim: SimConfig {
                t_end: self.experiments.sensitivity_t_end,
                ..self.sim
            },
            n_paths: self.experiments.sensitivity_paths,
            delta_fraction: self.experiments.delta_fraction,
        }
    }

    /// SHA-256 of the canonical JSON serialisation, in hex.
    pub fn hash(&self) -> String {
        let json = serde_json::to_string(self).expect("config serialises");
        hex::encode(Sha256::digest(json.as_bytes()))
    }
}

/// Parses and validates `text`; `origin` labels error messages.
pub fn parse_config(text: &str, origin: &str) -> Result<RunConfig> {
    let cfg: RunConfig = serde_json::from_str(text).map_err(|e| {
        Error::Config(format!(
            "{origin}: parse error at line {}, column {}: {e}",
            e.line(),
            e.column()
        ))
    })?;
    cfg.validate()
        .map_err(|e| Error::Config(format!("{origin}: {}", strip_prefix(&e))))?;
    Ok(cfg)
}

fn strip_prefix(e: &Error) -> String {
    match e {
        Error::Config(m) => m.clone(),
        other => other.to_string(),
    }
}

pub fn load_config(path: impl AsRef<Path>) -> Result<RunConfig> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_config(&text, &path.display().to_string())
}
