use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{drift_unchecked, ensure_finite, ModelParams, NoiseIntensities, State};

use super::brownian::BrownianGrid;
use super::scheme::{apply_positivity, em_step, milstein_step, Positivity, Scheme};

/// Any component above this magnitude aborts the run.
pub const BLOW_UP_THRESHOLD: f64 = 1e12;

/// Magnitude cap on `f_i / X_i` in the log-domain policy.
pub const LOG_RATIO_CLAMP: f64 = 1e6;

/// Paths evaluated concurrently per block before their results are folded
/// in path order.
pub const PATH_BLOCK: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimConfig {
    pub t_end: f64,
    pub dt: f64,
    pub seed: u64,
    pub scheme: Scheme,
    pub positivity: Positivity,
    pub x0: State,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            t_end: 50.0,
            dt: 0.01,
            seed: 42,
            scheme: Scheme::EulerMaruyama,
            positivity: Positivity::default(),
            x0: [2.0, 1.0, 0.5, 0.5],
        }
    }
}

/// `round(t_end / dt)` after checking the ratio is integral to within an ulp or two.
pub fn step_count(t_end: f64, dt: f64) -> Result<usize> {
    if !(t_end > 0.0) || !t_end.is_finite() {
        return Err(Error::InvalidInput(format!("t_end must be > 0 (got {t_end})")));
    }
    if !(dt > 0.0) || dt > t_end {
        return Err(Error::InvalidInput(format!(
            "dt must satisfy 0 < dt <= t_end (got dt = {dt}, t_end = {t_end})"
        )));
    }
    let ratio = t_end / dt;
    let n = ratio.round();
    if (ratio - n).abs() > 2.0 * f64::EPSILON * ratio || n > usize::MAX as f64 / 8.0 {
        return Err(Error::InvalidInput(format!(
            "t_end / dt = {ratio} is not an integer step count"
        )));
    }
    Ok(n as usize)
}

impl SimConfig {
    pub fn steps(&self) -> Result<usize> {
        step_count(self.t_end, self.dt)
    }

    pub fn validate(&self) -> Result<()> {
        self.steps()?;
        ensure_finite(&self.x0)?;
        match self.positivity {
            Positivity::Projection { eps } if !(eps > 0.0) || !eps.is_finite() => {
                Err(Error::InvalidInput(format!("projection eps must be > 0 (got {eps})")))
            }
            Positivity::LogDomain if self.x0.iter().any(|&v| !(v > 0.0)) => Err(Error::InvalidInput(
                "log-domain policy needs a strictly positive initial state".into(),
            )),
            _ => Ok(()),
        }
    }

    /// Grid time of step `k` out of `n`; the last point is exactly `t_end`.
    pub fn time(&self, k: usize, n: usize) -> f64 {
        if k == n {
            self.t_end
        } else {
            k as f64 * self.dt
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<State>,
    /// Positivity interventions up to and including each grid point.
    pub cumulative_clamps: Vec<u64>,
    /// Number of positivity interventions over the run.
    pub applied_clamps: u64,
}

impl Trajectory {
    pub fn last(&self) -> &State {
        self.states.last().expect("trajectory has at least the initial state")
    }
}

fn check_blow_up(x: &State, step: usize) -> Result<()> {
    if x.iter().any(|v| !v.is_finite() || v.abs() > BLOW_UP_THRESHOLD) {
        return Err(Error::BlowUp {
            step,
            path: None,
            state: *x,
        });
    }
    Ok(())
}

/// Integrates from `x0` with the given increments, one step per increment,
/// calling `visit(k, state, clamps_so_far)` for `k = 0..=n`. Returns the clamp count.
pub fn integrate_with(
    x0: &State,
    params: &ModelParams,
    noise: &NoiseIntensities,
    scheme: Scheme,
    positivity: Positivity,
    dt: f64,
    increments: &[[f64; 4]],
    mut visit: impl FnMut(usize, &State, u64),
) -> Result<u64> {
    let mut clamps = 0u64;
    let mut x = *x0;
    if let Positivity::Projection { .. } = positivity {
        let (y, c) = apply_positivity(&x, positivity);
        x = y;
        clamps += u64::from(c);
    }
    visit(0, &x, clamps);

    if let Positivity::LogDomain = positivity {
        let half_var = noise.sigma.map(|s| 0.5 * s * s);
        let mut y = x.map(f64::ln);
        for (k, db) in increments.iter().enumerate() {
            let f = drift_unchecked(&x, params);
            for i in 0..4 {
                let mut ratio = f[i] / x[i];
                if !(ratio.abs() <= LOG_RATIO_CLAMP) {
                    ratio = if ratio.is_nan() { 0.0 } else { ratio.signum() * LOG_RATIO_CLAMP };
                    clamps += 1;
                }
                y[i] += (ratio - half_var[i]) * dt + noise.sigma[i] * db[i];
                x[i] = y[i].exp().max(f64::MIN_POSITIVE);
            }
            check_blow_up(&x, k + 1)?;
            visit(k + 1, &x, clamps);
        }
        return Ok(clamps);
    }

    for (k, db) in increments.iter().enumerate() {
        let next = match scheme {
            Scheme::EulerMaruyama => em_step(&x, params, noise, dt, db),
            Scheme::Milstein => milstein_step(&x, params, noise, dt, db),
        };
        check_blow_up(&next, k + 1)?;
        let (next, c) = apply_positivity(&next, positivity);
        clamps += u64::from(c);
        x = next;
        visit(k + 1, &x, clamps);
    }
    Ok(clamps)
}

/// Runs one path with increments taken from stream `path` of `config.seed`.
pub fn simulate_path(
    config: &SimConfig,
    params: &ModelParams,
    noise: &NoiseIntensities,
    path: u64,
) -> Result<Trajectory> {
    let n = config.steps()?;
    let grid = BrownianGrid::generate(config.seed, path, n, 1, config.dt)?;
    let mut times = Vec::with_capacity(n + 1);
    let mut states = Vec::with_capacity(n + 1);
    let mut cumulative_clamps = Vec::with_capacity(n + 1);
    let applied_clamps = integrate_with(
        &config.x0,
        params,
        noise,
        config.scheme,
        config.positivity,
        config.dt,
        grid.fine_increments(),
        |k, x, c| {
            times.push(config.time(k, n));
            states.push(*x);
            cumulative_clamps.push(c);
        },
    )
    .map_err(|e| if path == 0 { e } else { e.on_path(path) })?;
    Ok(Trajectory {
        times,
        states,
        cumulative_clamps,
        applied_clamps,
    })
}

pub fn simulate(config: &SimConfig, params: &ModelParams, noise: &NoiseIntensities) -> Result<Trajectory> {
    params.ensure_valid()?;
    noise.ensure_valid()?;
    config.validate()?;
    simulate_path(config, params, noise, 0)
}

/// Evaluates `run(k)` for every path `k` in blocks of [`PATH_BLOCK`] in
/// parallel and hands results to `fold` strictly in path order, so the
/// reduction is independent of scheduling.
pub fn for_each_path<T: Send>(
    n_paths: usize,
    run: impl Fn(u64) -> Result<T> + Sync,
    mut fold: impl FnMut(u64, T),
) -> Result<()> {
    let mut start = 0usize;
    while start < n_paths {
        let end = (start + PATH_BLOCK).min(n_paths);
        let results: Vec<Result<T>> = (start..end)
            .into_par_iter()
            .map(|k| run(k as u64).map_err(|e| e.on_path(k as u64)))
            .collect();
        for (offset, r) in results.into_iter().enumerate() {
            fold((start + offset) as u64, r?);
        }
        start = end;
    }
    Ok(())
}

/// Per-time statistics over an ensemble of paths.
///
/// Means and variances use Welford updates applied in path order; the
/// variance is the unbiased sample variance (0 for a single path).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EnsembleSummary {
    pub times: Vec<f64>,
    pub mean: Vec<State>,
    pub variance: Vec<State>,
    pub min: Vec<State>,
    pub max: Vec<State>,
    pub n_paths: usize,
    pub total_clamps: u64,
}

impl EnsembleSummary {
    /// `max - min` of component `i` at the final time.
    pub fn terminal_band_width(&self, i: usize) -> f64 {
        let last = self.times.len() - 1;
        self.max[last][i] - self.min[last][i]
    }
}

pub fn simulate_ensemble(
    config: &SimConfig,
    params: &ModelParams,
    noise: &NoiseIntensities,
    n_paths: usize,
) -> Result<EnsembleSummary> {
    params.ensure_valid()?;
    noise.ensure_valid()?;
    config.validate()?;
    if n_paths == 0 {
        return Err(Error::InvalidInput("n_paths must be >= 1".into()));
    }
    let n = config.steps()?;
    let times: Vec<f64> = (0..=n).map(|k| config.time(k, n)).collect();
    let mut mean = vec![[0.0; 4]; n + 1];
    let mut m2 = vec![[0.0; 4]; n + 1];
    let mut min = vec![[f64::INFINITY; 4]; n + 1];
    let mut max = vec![[f64::NEG_INFINITY; 4]; n + 1];
    let mut total_clamps = 0u64;

    for_each_path(
        n_paths,
        |k| simulate_path(config, params, noise, k),
        |k, traj| {
            let count = (k + 1) as f64;
            total_clamps += traj.applied_clamps;
            for (t, x) in traj.states.iter().enumerate() {
                for i in 0..4 {
                    let delta = x[i] - mean[t][i];
                    mean[t][i] += delta / count;
                    m2[t][i] += delta * (x[i] - mean[t][i]);
                    min[t][i] = min[t][i].min(x[i]);
                    max[t][i] = max[t][i].max(x[i]);
                }
            }
        },
    )?;

    let denom = if n_paths > 1 { (n_paths - 1) as f64 } else { 1.0 };
    let variance = m2.iter().map(|v| v.map(|s| s / denom)).collect();
    Ok(EnsembleSummary {
        times,
        mean,
        variance,
        min,
        max,
        n_paths,
        total_clamps,
    })
}
