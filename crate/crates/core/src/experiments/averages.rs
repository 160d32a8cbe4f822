//! Moment, persistence and quantity-of-interest estimators over ensembles.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{ModelParams, NoiseIntensities, State};
use crate::sde::{for_each_path, simulate_ensemble, simulate_path, SimConfig, Trajectory};

/// Trapezoidal time average `(1/T) int v dt` on a (possibly nonuniform) grid.
/// A single sample averages to itself.
pub fn time_average(times: &[f64], values: &[f64]) -> f64 {
    assert_eq!(times.len(), values.len());
    if values.len() == 1 {
        return values[0];
    }
    let span = times[times.len() - 1] - times[0];
    let integral: f64 = times
        .windows(2)
        .zip(values.windows(2))
        .map(|(t, v)| 0.5 * (t[1] - t[0]) * (v[0] + v[1]))
        .sum();
    integral / span
}

/// Scalar summaries of a run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct QoIRecord {
    /// Time average of demand `X1`.
    pub avg_demand: f64,
    /// Time average of renewables `X4`.
    pub avg_renewable: f64,
    /// Maximum of imports `X3` over the grid.
    pub max_import: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Qoi {
    AvgDemand,
    AvgRenewable,
    MaxImport,
}

impl Qoi {
    pub const ALL: [Qoi; 3] = [Qoi::AvgDemand, Qoi::AvgRenewable, Qoi::MaxImport];

    pub fn name(self) -> &'static str {
        match self {
            Qoi::AvgDemand => "avg_demand",
            Qoi::AvgRenewable => "avg_renewable",
            Qoi::MaxImport => "max_import",
        }
    }

    pub fn of(self, r: &QoIRecord) -> f64 {
        match self {
            Qoi::AvgDemand => r.avg_demand,
            Qoi::AvgRenewable => r.avg_renewable,
            Qoi::MaxImport => r.max_import,
        }
    }
}

impl fmt::Display for Qoi {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Qoi {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "avg_demand" | "avg-demand" => Ok(Qoi::AvgDemand),
            "avg_renewable" | "avg-renewable" => Ok(Qoi::AvgRenewable),
            "max_import" | "max-import" => Ok(Qoi::MaxImport),
            other => Err(format!("unknown quantity of interest '{other}'")),
        }
    }
}

pub fn compute_qoi(traj: &Trajectory) -> Result<QoIRecord> {
    if traj.states.is_empty() || traj.states.len() != traj.times.len() {
        return Err(Error::InvalidInput("empty or malformed trajectory".into()));
    }
    let comp = |i: usize| traj.states.iter().map(|x| x[i]).collect::<Vec<_>>();
    Ok(QoIRecord {
        avg_demand: time_average(&traj.times, &comp(0)),
        avg_renewable: time_average(&traj.times, &comp(3)),
        max_import: traj
            .states
            .iter()
            .map(|x| x[2])
            .fold(f64::NEG_INFINITY, f64::max),
    })
}

/// Average of per-path QoIs over `n_paths` paths of `config` (streams `0..n_paths`).
pub fn ensemble_qoi(
    config: &SimConfig,
    params: &ModelParams,
    noise: &NoiseIntensities,
    n_paths: usize,
) -> Result<QoIRecord> {
    params.ensure_valid()?;
    noise.ensure_valid()?;
    config.validate()?;
    if n_paths == 0 {
        return Err(Error::InvalidInput("n_paths must be >= 1".into()));
    }
    let mut sum = [0.0; 3];
    for_each_path(
        n_paths,
        |k| simulate_path(config, params, noise, k).and_then(|t| compute_qoi(&t)),
        |_, q| {
            sum[0] += q.avg_demand;
            sum[1] += q.avg_renewable;
            sum[2] += q.max_import;
        },
    )?;
    let n = n_paths as f64;
    Ok(QoIRecord {
        avg_demand: sum[0] / n,
        avg_renewable: sum[1] / n,
        max_import: sum[2] / n,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MomentReport {
    pub p: f64,
    pub times: Vec<f64>,
    /// Sample mean of `|X(t)|^p` (Euclidean norm).
    pub moments: Vec<f64>,
    pub std_errors: Vec<f64>,
    pub running_max: Vec<f64>,
    pub sup: f64,
    pub sup_std_error: f64,
    pub sup_time: f64,
    /// No statistically visible rise over the last quarter of the horizon:
    /// the least-squares rise across that window is at most four mean
    /// standard errors.
    pub plateau: bool,
}

pub fn moment_estimate(
    p: f64,
    config: &SimConfig,
    params: &ModelParams,
    noise: &NoiseIntensities,
    n_paths: usize,
) -> Result<MomentReport> {
    if !(p >= 2.0) || !p.is_finite() {
        return Err(Error::InvalidInput(format!("moment order must be >= 2 (got {p})")));
    }
    params.ensure_valid()?;
    noise.ensure_valid()?;
    config.validate()?;
    if n_paths == 0 {
        return Err(Error::InvalidInput("n_paths must be >= 1".into()));
    }
    let n = config.steps()?;
    let times: Vec<f64> = (0..=n).map(|k| config.time(k, n)).collect();
    let mut mean = vec![0.0; n + 1];
    let mut m2 = vec![0.0; n + 1];
    for_each_path(
        n_paths,
        |k| simulate_path(config, params, noise, k),
        |k, traj| {
            let count = (k + 1) as f64;
            for (t, x) in traj.states.iter().enumerate() {
                let v = norm(x).powf(p);
                let d = v - mean[t];
                mean[t] += d / count;
                m2[t] += d * (v - mean[t]);
            }
        },
    )?;
    let nf = n_paths as f64;
    let std_errors: Vec<f64> = m2
        .iter()
        .map(|&s| if n_paths > 1 { (s / (nf - 1.0) / nf).sqrt() } else { 0.0 })
        .collect();

    let mut running_max = Vec::with_capacity(n + 1);
    let mut best = (f64::NEG_INFINITY, 0usize);
    for (t, &m) in mean.iter().enumerate() {
        if m > best.0 {
            best = (m, t);
        }
        running_max.push(best.0);
    }

    let q = (3 * n) / 4;
    let window_t = &times[q..];
    let window_m = &mean[q..];
    let slope = linear_slope(window_t, window_m);
    let rise = slope * (window_t[window_t.len() - 1] - window_t[0]);
    let mean_se = std_errors[q..].iter().sum::<f64>() / (n + 1 - q) as f64;
    let plateau = rise <= 4.0 * mean_se;

    Ok(MomentReport {
        p,
        sup: best.0,
        sup_std_error: std_errors[best.1],
        sup_time: times[best.1],
        times,
        moments: mean,
        std_errors,
        running_max,
        plateau,
    })
}

fn norm(x: &State) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

fn linear_slope(x: &[f64], y: &[f64]) -> f64 {
    if x.len() < 2 {
        return 0.0;
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    if sxx == 0.0 {
        0.0
    } else {
        sxy / sxx
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PersistenceEstimate {
    /// `(1/T) int E[sum c_i X_i] dt`.
    pub weighted_average: f64,
    /// `(1/T) int E[X_i] dt` per component.
    pub component_averages: [f64; 4],
}

pub fn persistence_estimate(
    c: [f64; 4],
    config: &SimConfig,
    params: &ModelParams,
    noise: &NoiseIntensities,
    n_paths: usize,
) -> Result<PersistenceEstimate> {
    if c.iter().any(|&w| !(w > 0.0) || !w.is_finite()) {
        return Err(Error::InvalidInput(format!("weights must be > 0: {c:?}")));
    }
    let ens = simulate_ensemble(config, params, noise, n_paths)?;
    let component_averages: [f64; 4] = std::array::from_fn(|i| {
        let v: Vec<f64> = ens.mean.iter().map(|m| m[i]).collect();
        time_average(&ens.times, &v)
    });
    let weighted: Vec<f64> = ens
        .mean
        .iter()
        .map(|m| (0..4).map(|i| c[i] * m[i]).sum())
        .collect();
    Ok(PersistenceEstimate {
        weighted_average: time_average(&ens.times, &weighted),
        component_averages,
    })
}
