use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::model::{diffusion_unchecked, drift_unchecked, ModelParams, NoiseIntensities, State};

/// Default floor of the projection policy.
pub const DEFAULT_EPS: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scheme {
    #[serde(alias = "em")]
    EulerMaruyama,
    Milstein,
}

impl Scheme {
    pub fn name(self) -> &'static str {
        match self {
            Scheme::EulerMaruyama => "em",
            Scheme::Milstein => "milstein",
        }
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Scheme {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "em" | "euler-maruyama" => Ok(Scheme::EulerMaruyama),
            "milstein" => Ok(Scheme::Milstein),
            other => Err(format!("unknown scheme '{other}' (expected em|milstein)")),
        }
    }
}

/// How states are kept nonnegative during integration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Positivity {
    /// Replace each component by `max(x, eps)` after every step.
    Projection { eps: f64 },
    /// Integrate `ln X` instead of `X`.
    #[serde(alias = "log")]
    LogDomain,
    None,
}

impl Default for Positivity {
    fn default() -> Self {
        Positivity::Projection { eps: DEFAULT_EPS }
    }
}

impl Positivity {
    pub fn name(self) -> &'static str {
        match self {
            Positivity::Projection { .. } => "projection",
            Positivity::LogDomain => "log",
            Positivity::None => "none",
        }
    }
}

/// One Euler-Maruyama step, before any positivity policy.
#[inline]
pub fn em_step(x: &State, params: &ModelParams, noise: &NoiseIntensities, dt: f64, db: &[f64; 4]) -> State {
    let f = drift_unchecked(x, params);
    let g = diffusion_unchecked(x, noise);
    [
        x[0] + f[0] * dt + g[0] * db[0],
        x[1] + f[1] * dt + g[1] * db[1],
        x[2] + f[2] * dt + g[2] * db[2],
        x[3] + f[3] * dt + g[3] * db[3],
    ]
}

/// The diagonal Milstein term `0.5 sigma_i^2 X_i ((dB_i)^2 - dt)`.
#[inline]
pub fn milstein_correction(x: &State, noise: &NoiseIntensities, dt: f64, db: &[f64; 4]) -> State {
    let mut c = [0.0; 4];
    for i in 0..4 {
        let s = noise.sigma[i];
        c[i] = 0.5 * s * s * x[i] * (db[i] * db[i] - dt);
    }
    c
}

/// One Milstein step: [`em_step`] plus [`milstein_correction`].
#[inline]
pub fn milstein_step(x: &State, params: &ModelParams, noise: &NoiseIntensities, dt: f64, db: &[f64; 4]) -> State {
    let mut e = em_step(x, params, noise, dt, db);
    let c = milstein_correction(x, noise, dt, db);
    for i in 0..4 {
        // skipping noise-free components keeps them bit-identical to EM
        if noise.sigma[i] != 0.0 {
            e[i] += c[i];
        }
    }
    e
}

/// Applies a post-step policy, returning the new state and the number of
/// clamped components. The log-domain policy acts inside the integrator and
/// is a passthrough here.
pub fn apply_positivity(x: &State, policy: Positivity) -> (State, u32) {
    match policy {
        Positivity::Projection { eps } => {
            let mut out = *x;
            let mut clamps = 0;
            for v in &mut out {
                // `!(v >= eps)` also catches NaN so it cannot slip through.
                if !(*v >= eps) {
                    *v = eps;
                    clamps += 1;
                }
            }
            (out, clamps)
        }
        Positivity::LogDomain | Positivity::None => (*x, 0),
    }
}
