//! Parameter set, state vector and the vector fields of the four-state
//! supply-demand system (demand, external supply, imports, renewables).

use std::fmt;

use nalgebra::Matrix4 as NaMatrix4;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Dense 4x4 real matrix used for Jacobians, noise covariances and Lyapunov weights.
pub type Matrix4 = NaMatrix4<f64>;

/// A point in state space: `[demand, external supply, imports, renewables]`.
pub type State = [f64; 4];

/// The thirteen deterministic constants of the model.
///
/// Field names follow the conventional symbols of the model. Units are years
/// and GW-index throughout.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelParams {
    /// Demand growth rate (1/year).
    pub a1: f64,
    /// Demand carrying capacity (GW-index).
    #[serde(rename = "W")]
    pub w: f64,
    /// Supply competition coefficient (1/(GW year)).
    pub a2: f64,
    /// Renewable demand offset (1/year).
    pub d3: f64,
    /// Supply adjustment rate (1/year).
    pub z1: f64,
    /// Import competition coefficient (1/year).
    pub z2: f64,
    /// Demand-supply responsiveness (1/(GW year)).
    pub z3: f64,
    /// Market capacity parameter (GW-index).
    #[serde(rename = "N")]
    pub n: f64,
    /// Import adjustment rate (1/year).
    pub s1: f64,
    /// Import demand sensitivity (1/GW).
    pub s2: f64,
    /// Import activation threshold.
    pub s3: f64,
    /// Renewable build-up rate (1/year).
    pub d1: f64,
    /// Renewable depreciation rate (1/year).
    pub d2: f64,
}

impl ModelParams {
    /// Baseline calibration used throughout the numerical studies.
    pub const BASELINE: ModelParams = ModelParams {
        a1: 0.8,
        w: 10.0,
        a2: 0.05,
        d3: 0.1,
        z1: 0.6,
        z2: 0.25,
        z3: 0.08,
        n: 6.0,
        s1: 0.35,
        s2: 0.9,
        s3: 1.2,
        d1: 0.25,
        d2: 0.5,
    };

    pub fn get(&self, p: Param) -> f64 {
        match p {
            Param::A1 => self.a1,
            Param::W => self.w,
            Param::A2 => self.a2,
            Param::D3 => self.d3,
            Param::Z1 => self.z1,
            Param::Z2 => self.z2,
            Param::Z3 => self.z3,
            Param::N => self.n,
            Param::S1 => self.s1,
            Param::S2 => self.s2,
            Param::S3 => self.s3,
            Param::D1 => self.d1,
            Param::D2 => self.d2,
        }
    }

    pub fn with(mut self, p: Param, value: f64) -> Self {
        let slot = match p {
            Param::A1 => &mut self.a1,
            Param::W => &mut self.w,
            Param::A2 => &mut self.a2,
            Param::D3 => &mut self.d3,
            Param::Z1 => &mut self.z1,
            Param::Z2 => &mut self.z2,
            Param::Z3 => &mut self.z3,
            Param::N => &mut self.n,
            Param::S1 => &mut self.s1,
            Param::S2 => &mut self.s2,
            Param::S3 => &mut self.s3,
            Param::D1 => &mut self.d1,
            Param::D2 => &mut self.d2,
        };
        *slot = value;
        self
    }

    /// Import activation level of demand, `s3 / s2`.
    pub fn import_threshold(&self) -> f64 {
        self.s3 / self.s2
    }

    /// Checks the parameter constraints and collects problems.
    pub fn validate(&self) -> ValidationReport {
        let mut report = ValidationReport::default();
        for p in Param::ALL {
            let v = self.get(p);
            if !v.is_finite() || v <= 0.0 {
                report
                    .violations
                    .push(format!("{} must be finite and > 0 (got {v})", p.name()));
            }
        }
        if self.n >= self.w {
            report.violations.push("N < W required".to_string());
        }
        if self.n <= self.import_threshold() {
            report.warnings.push(
                "N > s3/s2 violated; import-threshold branch infeasible".to_string(),
            );
        }
        report
    }

    /// Like [`validate`](Self::validate) but turns violations into an error.
    pub fn ensure_valid(&self) -> Result<()> {
        let report = self.validate();
        if report.is_ok() {
            Ok(())
        } else {
            Err(Error::InvalidParams(report.violations.join("; ")))
        }
    }
}

impl Default for ModelParams {
    fn default() -> Self {
        Self::BASELINE
    }
}

/// Outcome of [`ModelParams::validate`]. Warnings do not make the set invalid.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ValidationReport {
    pub violations: Vec<String>,
    pub warnings: Vec<String>,
}

impl ValidationReport {
    pub fn is_ok(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Identifies one of the thirteen model constants.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub enum Param {
    A1,
    W,
    A2,
    D3,
    Z1,
    Z2,
    Z3,
    N,
    S1,
    S2,
    S3,
    D1,
    D2,
}

impl Param {
    pub const ALL: [Param; 13] = [
        Param::A1,
        Param::W,
        Param::A2,
        Param::D3,
        Param::Z1,
        Param::Z2,
        Param::Z3,
        Param::N,
        Param::S1,
        Param::S2,
        Param::S3,
        Param::D1,
        Param::D2,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Param::A1 => "a1",
            Param::W => "W",
            Param::A2 => "a2",
            Param::D3 => "d3",
            Param::Z1 => "z1",
            Param::Z2 => "z2",
            Param::Z3 => "z3",
            Param::N => "N",
            Param::S1 => "s1",
            Param::S2 => "s2",
            Param::S3 => "s3",
            Param::D1 => "d1",
            Param::D2 => "d2",
        }
    }

    pub fn from_name(name: &str) -> Option<Param> {
        Param::ALL.into_iter().find(|p| p.name() == name)
    }
}

impl fmt::Display for Param {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Multiplicative noise strengths, one per state component (1/sqrt(year)).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NoiseIntensities {
    pub sigma: [f64; 4],
}

impl NoiseIntensities {
    pub const BASELINE: NoiseIntensities = NoiseIntensities {
        sigma: [0.10, 0.10, 0.08, 0.12],
    };

    pub const fn new(sigma: [f64; 4]) -> Self {
        Self { sigma }
    }

    /// No noise: the stochastic system reduces to the deterministic one.
    pub const fn zero() -> Self {
        Self { sigma: [0.0; 4] }
    }

    pub fn is_zero(&self) -> bool {
        self.sigma.iter().all(|&s| s == 0.0)
    }

    pub fn ensure_valid(&self) -> Result<()> {
        for (i, &s) in self.sigma.iter().enumerate() {
            if !s.is_finite() || s < 0.0 {
                return Err(Error::InvalidInput(format!(
                    "sigma{} must be finite and >= 0 (got {s})",
                    i + 1
                )));
            }
        }
        Ok(())
    }

    /// `diag(sigma_i^2)`.
    pub fn covariance(&self) -> Matrix4 {
        Matrix4::from_diagonal(&self.sigma.map(|s| s * s).into())
    }
}

impl Default for NoiseIntensities {
    fn default() -> Self {
        Self::BASELINE
    }
}

pub(crate) fn ensure_finite(x: &State) -> Result<()> {
    if x.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::InvalidInput(format!("non-finite state {x:?}")))
    }
}

/// Deterministic vector field. Callers are expected to have validated the
/// parameters; only the state is checked here.
pub fn drift(x: &State, p: &ModelParams) -> Result<State> {
    ensure_finite(x)?;
    Ok(drift_unchecked(x, p))
}

#[inline]
pub(crate) fn drift_unchecked(x: &State, p: &ModelParams) -> State {
    let [x1, x2, x3, x4] = *x;
    [
        p.a1 * x1 * (1.0 - x1 / p.w) - p.a2 * x2 * (x2 + x3) - p.d3 * x4,
        -p.z1 * x2 - p.z2 * x3 + p.z3 * x1 * (p.n - (x1 - x3)),
        p.s1 * x3 * (p.s2 * x1 - p.s3),
        p.d1 * x1 - p.d2 * x4,
    ]
}

/// Diagonal diffusion coefficients `sigma_i * X_i`.
pub fn diffusion(x: &State, noise: &NoiseIntensities) -> Result<State> {
    ensure_finite(x)?;
    Ok(diffusion_unchecked(x, noise))
}

#[inline]
pub(crate) fn diffusion_unchecked(x: &State, noise: &NoiseIntensities) -> State {
    [
        noise.sigma[0] * x[0],
        noise.sigma[1] * x[1],
        noise.sigma[2] * x[2],
        noise.sigma[3] * x[3],
    ]
}

/// Analytic Jacobian of [`drift`].
pub fn jacobian(x: &State, p: &ModelParams) -> Result<Matrix4> {
    ensure_finite(x)?;
    let [x1, x2, x3, _] = *x;
    #[rustfmt::skip]
    let j = Matrix4::new(
        p.a1 * (1.0 - 2.0 * x1 / p.w), -p.a2 * (2.0 * x2 + x3), -p.a2 * x2,          -p.d3,
        p.z3 * (p.n - 2.0 * x1 + x3),  -p.z1,                   -p.z2 + p.z3 * x1,   0.0,
        p.s1 * p.s2 * x3,              0.0,                     p.s1 * (p.s2 * x1 - p.s3), 0.0,
        p.d1,                          0.0,                     0.0,                 -p.d2,
    );
    Ok(j)
}
