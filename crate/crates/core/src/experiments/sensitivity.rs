//! Normalised local sensitivity indices `S_p = (p / Q) dQ/dp` by central
//! differences with common random numbers.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{ModelParams, NoiseIntensities, Param};
use crate::sde::SimConfig;

use super::averages::{ensemble_qoi, Qoi, QoIRecord};

pub const DEFAULT_DELTA_FRACTION: f64 = 0.10;

/// Ensemble used to evaluate a QoI. Every evaluation reuses the same seed and
/// path streams, so perturbed runs share their Brownian paths.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SensitivitySetup {
    pub sim: SimConfig,
    pub n_paths: usize,
    pub delta_fraction: f64,
}

impl Default for SensitivitySetup {
    /// 200 paths over the first three years from the reference start, ahead
    /// of the import surge, so +-10% perturbations stay in one dynamical regime.
    fn default() -> Self {
        Self {
            sim: SimConfig {
                t_end: 3.0,
                ..SimConfig::default()
            },
            n_paths: 200,
            delta_fraction: DEFAULT_DELTA_FRACTION,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SensitivityResult {
    pub param: String,
    pub qoi: Qoi,
    pub baseline_q: f64,
    pub q_plus: f64,
    pub q_minus: f64,
    pub s_index: f64,
    pub delta_fraction: f64,
}

/// `(Q(p + dp) - Q(p - dp)) / (2 dp) * p / Q(p)` with `dp = delta_fraction * p`.
/// Returns `(Q(p), Q(p+dp), Q(p-dp), S_p)`.
pub fn normalized_index(
    p: f64,
    delta_fraction: f64,
    mut q: impl FnMut(f64) -> Result<f64>,
) -> Result<(f64, f64, f64, f64)> {
    if !(delta_fraction > 0.0) || !delta_fraction.is_finite() {
        return Err(Error::InvalidInput(format!(
            "delta_fraction must be > 0 (got {delta_fraction})"
        )));
    }
    if p == 0.0 {
        return Err(Error::UndefinedIndex("parameter value is zero".into()));
    }
    let q0 = q(p)?;
    if q0 == 0.0 {
        return Err(Error::UndefinedIndex("baseline quantity Q(p) is zero".into()));
    }
    let dp = delta_fraction * p;
    let qp = q(p + dp)?;
    let qm = q(p - dp)?;
    Ok((q0, qp, qm, (qp - qm) / (2.0 * dp) * p / q0))
}

fn perturbed(params: &ModelParams, param: Param, value: f64, sign: &str) -> Result<ModelParams> {
    let out = params.with(param, value);
    out.ensure_valid().map_err(|e| {
        Error::InvalidParams(format!("perturbing {param} by {sign} violates: {e}"))
    })?;
    Ok(out)
}

fn evaluate_record(params: &ModelParams, noise: &NoiseIntensities, setup: &SensitivitySetup) -> Result<QoIRecord> {
    ensemble_qoi(&setup.sim, params, noise, setup.n_paths)
}

pub fn sensitivity_index(
    params: &ModelParams,
    noise: &NoiseIntensities,
    param: Param,
    qoi: Qoi,
    setup: &SensitivitySetup,
) -> Result<SensitivityResult> {
    params.ensure_valid()?;
    let p0 = params.get(param);
    let (baseline_q, q_plus, q_minus, s_index) = normalized_index(p0, setup.delta_fraction, |v| {
        let sign = if v > p0 { "+" } else if v < p0 { "-" } else { "0" };
        let candidate = if v == p0 { *params } else { perturbed(params, param, v, sign)? };
        Ok(qoi.of(&evaluate_record(&candidate, noise, setup)?))
    })?;
    Ok(SensitivityResult {
        param: param.name().to_string(),
        qoi,
        baseline_q,
        q_plus,
        q_minus,
        s_index,
        delta_fraction: setup.delta_fraction,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SensitivityCell {
    pub param: Param,
    pub qoi: Qoi,
    pub result: std::result::Result<SensitivityResult, String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SensitivityTable {
    pub baseline: QoIRecord,
    pub cells: Vec<SensitivityCell>,
}

impl SensitivityTable {
    pub fn cell(&self, param: Param, qoi: Qoi) -> Option<&SensitivityCell> {
        self.cells.iter().find(|c| c.param == param && c.qoi == qoi)
    }

    /// Parameters with a defined index for `qoi`, by decreasing `|S_p|`
    /// (ties broken by parameter order).
    pub fn ranking(&self, qoi: Qoi) -> Vec<(Param, f64)> {
        let mut v: Vec<(Param, f64)> = self
            .cells
            .iter()
            .filter(|c| c.qoi == qoi)
            .filter_map(|c| c.result.as_ref().ok().map(|r| (c.param, r.s_index)))
            .collect();
        v.sort_by(|a, b| b.1.abs().total_cmp(&a.1.abs()).then(a.0.cmp(&b.0)));
        v
    }

    pub fn rank_of(&self, param: Param, qoi: Qoi) -> Option<usize> {
        self.ranking(qoi).iter().position(|(p, _)| *p == param).map(|r| r + 1)
    }
}

/// All parameters in `params_to_sweep` against all three QoIs. Cell failures are
/// recorded and the sweep continues. Each parameter's `+-` runs are independent
/// of the others, so the order of `params_to_sweep` does not affect any cell.
pub fn sensitivity_sweep_over(
    params: &ModelParams,
    noise: &NoiseIntensities,
    setup: &SensitivitySetup,
    params_to_sweep: &[Param],
) -> Result<SensitivityTable> {
    params.ensure_valid()?;
    if !(setup.delta_fraction > 0.0) {
        return Err(Error::InvalidInput("delta_fraction must be > 0".into()));
    }
    let baseline = evaluate_record(params, noise, setup)?;

    let per_param: Vec<Vec<SensitivityCell>> = params_to_sweep
        .par_iter()
        .map(|&param| {
            let p0 = params.get(param);
            let dp = setup.delta_fraction * p0;
            let run = |v: f64, sign: &str| {
                perturbed(params, param, v, sign).and_then(|pp| evaluate_record(&pp, noise, setup))
            };
            let plus = run(p0 + dp, "+");
            let minus = run(p0 - dp, "-");
            Qoi::ALL
                .iter()
                .map(|&qoi| {
                    let q0 = qoi.of(&baseline);
                    let result = match (&plus, &minus) {
                        (Err(e), _) | (_, Err(e)) => Err(e.to_string()),
                        _ if q0 == 0.0 => Err(Error::UndefinedIndex(format!(
                            "baseline {qoi} is zero"
                        ))
                        .to_string()),
                        (Ok(rp), Ok(rm)) => {
                            let (qp, qm) = (qoi.of(rp), qoi.of(rm));
                            Ok(SensitivityResult {
                                param: param.name().to_string(),
                                qoi,
                                baseline_q: q0,
                                q_plus: qp,
                                q_minus: qm,
                                s_index: (qp - qm) / (2.0 * dp) * p0 / q0,
                                delta_fraction: setup.delta_fraction,
                            })
                        }
                    };
                    SensitivityCell { param, qoi, result }
                })
                .collect()
        })
        .collect();

    Ok(SensitivityTable {
        baseline,
        cells: per_param.into_iter().flatten().collect(),
    })
}

pub fn sensitivity_sweep(
    params: &ModelParams,
    noise: &NoiseIntensities,
    setup: &SensitivitySetup,
) -> Result<SensitivityTable> {
    sensitivity_sweep_over(params, noise, setup, &Param::ALL)
}
