//! Strong and weak discretisation error against a self-refined reference
//! that shares the Brownian path.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{ModelParams, NoiseIntensities, State};
use crate::sde::{
    for_each_path, integrate_with, step_count, BrownianGrid, Positivity, Scheme, DEFAULT_EPS,
};

/// Step sizes of the reference convergence study.
pub const DEFAULT_DT_LIST: [f64; 3] = [0.02, 0.01, 0.005];
/// Reference step is `dt / DEFAULT_REFINEMENT`.
pub const DEFAULT_REFINEMENT: usize = 8;

/// Scalar test function of the terminal state used by the weak error.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Phi {
    X1,
    X2,
    X3,
    X4,
}

impl Phi {
    pub fn index(self) -> usize {
        match self {
            Phi::X1 => 0,
            Phi::X2 => 1,
            Phi::X3 => 2,
            Phi::X4 => 3,
        }
    }

    pub fn name(self) -> &'static str {
        ["X1", "X2", "X3", "X4"][self.index()]
    }
}

impl fmt::Display for Phi {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Phi {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "x1" => Ok(Phi::X1),
            "x2" => Ok(Phi::X2),
            "x3" => Ok(Phi::X3),
            "x4" => Ok(Phi::X4),
            other => Err(format!("unknown test function '{other}' (expected x1..x4)")),
        }
    }
}

/// Start point for error studies: imports absent, supply at the projection
/// floor, demand at the balance `a1 (1 - X1/W) = d3 d1 / d2` and renewables
/// at `d1/d2 X1`. From here the paths fluctuate around a stationary level,
/// so the measured error reflects the schemes rather than a transient.
pub fn quasi_steady_start(p: &ModelParams) -> Result<State> {
    let x1 = p.w * (1.0 - p.d1 * p.d3 / (p.a1 * p.d2));
    if !(x1 > 0.0) {
        return Err(Error::InvalidInput(
            "no positive import-free demand balance: d1 d3 >= a1 d2".into(),
        ));
    }
    Ok([x1, DEFAULT_EPS, 0.0, p.d1 / p.d2 * x1])
}

/// Fixed ingredients of a coupled coarse/reference run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ErrorSetup {
    pub x0: State,
    pub t_end: f64,
    pub refinement: usize,
    pub n_paths: usize,
    pub seed: u64,
    pub positivity: Positivity,
}

impl ErrorSetup {
    /// T = 5, 500 paths, refinement 8, projection floor, quasi-steady start.
    pub fn default_for(p: &ModelParams) -> Result<Self> {
        Ok(Self {
            x0: quasi_steady_start(p)?,
            t_end: 5.0,
            refinement: DEFAULT_REFINEMENT,
            n_paths: 500,
            seed: 42,
            positivity: Positivity::default(),
        })
    }

    fn validate(&self, dt: f64) -> Result<usize> {
        if self.n_paths < 2 {
            return Err(Error::InvalidInput("error estimates need n_paths >= 2".into()));
        }
        if self.refinement == 0 {
            return Err(Error::InvalidInput("refinement must be >= 1".into()));
        }
        if let Positivity::LogDomain = self.positivity {
            if self.x0.iter().any(|&v| !(v > 0.0)) {
                return Err(Error::InvalidInput(
                    "log-domain policy needs a strictly positive initial state".into(),
                ));
            }
        }
        step_count(self.t_end, dt)
    }
}

/// Terminal states at `dt` and at `dt / refinement` driven by the same path.
pub fn coupled_terminal_states(
    scheme: Scheme,
    params: &ModelParams,
    noise: &NoiseIntensities,
    setup: &ErrorSetup,
    dt: f64,
    path: u64,
) -> Result<(State, State)> {
    let n = step_count(setup.t_end, dt)?;
    let grid = BrownianGrid::generate(setup.seed, path, n, setup.refinement, dt)?;
    let terminal = |dt: f64, incs: &[[f64; 4]]| -> Result<State> {
        let mut last = setup.x0;
        integrate_with(&setup.x0, params, noise, scheme, setup.positivity, dt, incs, |_, x, _| {
            last = *x
        })?;
        Ok(last)
    };
    let coarse = terminal(dt, &grid.coarse_increments())?;
    let fine = terminal(grid.dt_fine(), grid.fine_increments())?;
    Ok((coarse, fine))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StrongError {
    /// Sample mean of `|X_dt(T) - X_ref(T)|^2`.
    pub mean_square: f64,
    pub std_error: f64,
    /// Square root of `mean_square`.
    pub rms: f64,
    pub n_paths: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct WeakError {
    pub phi: Phi,
    /// `|mean phi(coarse) - mean phi(reference)|`.
    pub value: f64,
    pub std_error: f64,
    pub mean_coarse: f64,
    pub mean_reference: f64,
    /// Mean of `|phi(coarse) - phi(reference)|` over the same paths.
    pub mean_abs_difference: f64,
}

/// Strong error and the weak error of every coordinate from one set of coupled runs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CoupledErrors {
    pub dt: f64,
    pub strong: StrongError,
    pub weak: [WeakError; 4],
}

impl CoupledErrors {
    pub fn weak(&self, phi: Phi) -> WeakError {
        self.weak[phi.index()]
    }
}

#[derive(Default)]
struct Moments {
    n: f64,
    mean: f64,
    m2: f64,
}

impl Moments {
    fn push(&mut self, x: f64) {
        self.n += 1.0;
        let d = x - self.mean;
        self.mean += d / self.n;
        self.m2 += d * (x - self.mean);
    }

    fn std_error(&self) -> f64 {
        if self.n < 2.0 {
            return 0.0;
        }
        (self.m2 / (self.n - 1.0) / self.n).sqrt()
    }
}

pub fn coupled_errors(
    scheme: Scheme,
    params: &ModelParams,
    noise: &NoiseIntensities,
    setup: &ErrorSetup,
    dt: f64,
) -> Result<CoupledErrors> {
    params.ensure_valid()?;
    noise.ensure_valid()?;
    setup.validate(dt)?;

    let mut sq = Moments::default();
    let mut diff: [Moments; 4] = Default::default();
    let mut abs_diff = [0.0f64; 4];
    let mut coarse_sum = [0.0f64; 4];
    let mut fine_sum = [0.0f64; 4];
    for_each_path(
        setup.n_paths,
        |k| coupled_terminal_states(scheme, params, noise, setup, dt, k),
        |_, (c, f)| {
            let d: [f64; 4] = std::array::from_fn(|i| c[i] - f[i]);
            sq.push(d.iter().map(|v| v * v).sum());
            for i in 0..4 {
                diff[i].push(d[i]);
                abs_diff[i] += d[i].abs();
                coarse_sum[i] += c[i];
                fine_sum[i] += f[i];
            }
        },
    )?;

    let n = setup.n_paths as f64;
    let mean_square = sq.mean;
    let strong = StrongError {
        mean_square,
        std_error: sq.std_error(),
        rms: mean_square.sqrt(),
        n_paths: setup.n_paths,
    };
    let phis = [Phi::X1, Phi::X2, Phi::X3, Phi::X4];
    let weak = std::array::from_fn(|i| WeakError {
        phi: phis[i],
        value: diff[i].mean.abs(),
        std_error: diff[i].std_error(),
        mean_coarse: coarse_sum[i] / n,
        mean_reference: fine_sum[i] / n,
        mean_abs_difference: abs_diff[i] / n,
    });
    Ok(CoupledErrors { dt, strong, weak })
}

pub fn strong_error(
    scheme: Scheme,
    params: &ModelParams,
    noise: &NoiseIntensities,
    setup: &ErrorSetup,
    dt: f64,
) -> Result<StrongError> {
    Ok(coupled_errors(scheme, params, noise, setup, dt)?.strong)
}

pub fn weak_error(
    scheme: Scheme,
    phi: Phi,
    params: &ModelParams,
    noise: &NoiseIntensities,
    setup: &ErrorSetup,
    dt: f64,
) -> Result<WeakError> {
    Ok(coupled_errors(scheme, params, noise, setup, dt)?.weak(phi))
}

/// Error-versus-step-size record for one scheme.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ErrorTable {
    pub scheme: Scheme,
    pub dt_values: Vec<f64>,
    /// Mean-square terminal errors.
    pub strong_errors: Vec<f64>,
    pub strong_std_errors: Vec<f64>,
    /// Root-mean-square terminal errors.
    pub rms_errors: Vec<f64>,
    pub weak_phi: Option<Phi>,
    pub weak_errors: Option<Vec<f64>>,
    /// Least-squares slope of `ln rms` against `ln dt`: the strong order.
    /// Absent for a single row.
    pub fitted_rate: Option<f64>,
    /// Least-squares slope of `ln mean_square` against `ln dt` (twice the strong order).
    pub mean_square_slope: Option<f64>,
    pub n_paths: usize,
}

/// Least-squares slope of `ln y` on `ln x`; `None` with fewer than two points
/// or any nonpositive value.
pub fn log_log_slope(x: &[f64], y: &[f64]) -> Option<f64> {
    if x.len() < 2 || x.len() != y.len() || x.iter().chain(y).any(|&v| !(v > 0.0)) {
        return None;
    }
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = lx.iter().map(|a| (a - mx) * (a - mx)).sum();
    if sxx == 0.0 {
        None
    } else {
        Some(sxy / sxx)
    }
}

pub fn convergence_study(
    scheme: Scheme,
    params: &ModelParams,
    noise: &NoiseIntensities,
    setup: &ErrorSetup,
    dt_list: &[f64],
    weak_phi: Option<Phi>,
) -> Result<ErrorTable> {
    if dt_list.is_empty() {
        return Err(Error::InvalidInput("dt list is empty".into()));
    }
    if dt_list.windows(2).any(|w| !(w[0] > w[1])) {
        return Err(Error::InvalidInput(format!(
            "dt values must be strictly decreasing: {dt_list:?}"
        )));
    }
    let rows = dt_list
        .iter()
        .map(|&dt| coupled_errors(scheme, params, noise, setup, dt))
        .collect::<Result<Vec<_>>>()?;

    let strong_errors: Vec<f64> = rows.iter().map(|r| r.strong.mean_square).collect();
    let rms_errors: Vec<f64> = rows.iter().map(|r| r.strong.rms).collect();
    Ok(ErrorTable {
        scheme,
        dt_values: dt_list.to_vec(),
        strong_std_errors: rows.iter().map(|r| r.strong.std_error).collect(),
        weak_phi,
        weak_errors: weak_phi.map(|phi| rows.iter().map(|r| r.weak(phi).value).collect()),
        fitted_rate: log_log_slope(dt_list, &rms_errors),
        mean_square_slope: log_log_slope(dt_list, &strong_errors),
        strong_errors,
        rms_errors,
        n_paths: setup.n_paths,
    })
}
