//! Persistence-in-mean lower bound and a grid falsifier for its drift hypothesis.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{drift_unchecked, ModelParams, NoiseIntensities, State};

/// Weights `c`, drift floor `eta` and crowding constant `kappa` of the
/// log-Lyapunov persistence argument.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PersistenceSpec {
    pub c: [f64; 4],
    pub eta: f64,
    pub kappa: f64,
}

impl PersistenceSpec {
    fn check_weights(&self) -> Result<()> {
        if self.c.iter().any(|&c| !(c > 0.0) || !c.is_finite()) {
            return Err(Error::InvalidInput(format!("weights must be > 0: {:?}", self.c)));
        }
        if !(self.kappa >= 0.0) || !self.kappa.is_finite() {
            return Err(Error::InvalidInput(format!("kappa must be >= 0 (got {})", self.kappa)));
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        self.check_weights()?;
        if !(self.eta > 0.0) || !self.eta.is_finite() {
            return Err(Error::InvalidInput(format!("eta must be > 0 (got {})", self.eta)));
        }
        Ok(())
    }

    /// `0.5 * sum c_i sigma_i^2`.
    pub fn noise_penalty(&self, noise: &NoiseIntensities) -> f64 {
        0.5 * self
            .c
            .iter()
            .zip(noise.sigma)
            .map(|(c, s)| c * s * s)
            .sum::<f64>()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum PersistenceBound {
    /// Lower bound on the long-run time average of `E[sum c_i X_i]`.
    Bound { value: f64 },
    /// `eta` does not dominate the noise penalty.
    ConditionFails { eta: f64, noise_penalty: f64 },
    /// `kappa = 0`: the drift hypothesis holds with no crowding, so no finite bound is produced.
    Unbounded { margin: f64 },
}

pub fn persistence_bound(spec: &PersistenceSpec, noise: &NoiseIntensities) -> Result<PersistenceBound> {
    spec.validate()?;
    noise.ensure_valid()?;
    let penalty = spec.noise_penalty(noise);
    if spec.eta < penalty {
        return Ok(PersistenceBound::ConditionFails {
            eta: spec.eta,
            noise_penalty: penalty,
        });
    }
    let margin = spec.eta - penalty;
    if spec.kappa == 0.0 {
        return Ok(PersistenceBound::Unbounded { margin });
    }
    Ok(PersistenceBound::Bound {
        value: margin / spec.kappa,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DriftConditionReport {
    /// Smallest `sum c_i f_i(X)/X_i - (eta - kappa sum X_i)` on the grid.
    pub min_margin: f64,
    pub argmin: State,
    pub points: u64,
}

impl DriftConditionReport {
    pub fn holds_on_grid(&self) -> bool {
        self.min_margin >= 0.0
    }
}

pub fn drift_condition_margin(x: &State, params: &ModelParams, spec: &PersistenceSpec) -> f64 {
    let f = drift_unchecked(x, params);
    let lhs: f64 = (0..4).map(|i| spec.c[i] * f[i] / x[i]).sum();
    let total: f64 = x.iter().sum();
    lhs - (spec.eta - spec.kappa * total)
}

/// Evaluates the persistence drift hypothesis on a regular grid over the box
/// `[lo, hi]` with `intervals` subdivisions per axis (`(intervals+1)^4` points).
///
/// Doubling `intervals` evaluates a superset of the previous points. Only the
/// sampled region is checked; a nonnegative minimum is not a proof.
pub fn check_persistence_drift_condition(
    params: &ModelParams,
    spec: &PersistenceSpec,
    lo: State,
    hi: State,
    intervals: usize,
) -> Result<DriftConditionReport> {
    params.ensure_valid()?;
    spec.check_weights()?;
    if !spec.eta.is_finite() {
        return Err(Error::InvalidInput("eta must be finite".into()));
    }
    if intervals == 0 {
        return Err(Error::InvalidInput("grid needs at least one interval".into()));
    }
    for i in 0..4 {
        if !(lo[i] > 0.0) || !(hi[i] >= lo[i]) || !hi[i].is_finite() {
            return Err(Error::InvalidInput(format!(
                "box must be strictly positive with lo <= hi (axis {}: [{}, {}])",
                i + 1,
                lo[i],
                hi[i]
            )));
        }
    }
    let m = intervals;
    let coord = |axis: usize, k: usize| lo[axis] + (hi[axis] - lo[axis]) * (k as f64 / m as f64);

    let (min_margin, argmin) = (0..=m)
        .into_par_iter()
        .map(|i| {
            let mut best = (f64::INFINITY, [0.0; 4]);
            for j in 0..=m {
                for k in 0..=m {
                    for l in 0..=m {
                        let x = [coord(0, i), coord(1, j), coord(2, k), coord(3, l)];
                        let v = drift_condition_margin(&x, params, spec);
                        if v < best.0 {
                            best = (v, x);
                        }
                    }
                }
            }
            best
        })
        // Per-slab minima come back in slab order; strict `<` keeps the first.
        .collect::<Vec<_>>()
        .into_iter()
        .fold((f64::INFINITY, [0.0; 4]), |acc, b| if b.0 < acc.0 { b } else { acc });

    Ok(DriftConditionReport {
        min_margin,
        argmin,
        points: ((m + 1) as u64).pow(4),
    })
}
