//! Deterministic equilibria on the trivial, import-free and import-threshold branches.

use std::fmt;

use nalgebra::Vector4;
use serde::Serialize;

use crate::error::Result;
use crate::model::{drift_unchecked, jacobian, ModelParams, State};

/// Residual below which a point counts as an equilibrium.
pub const RESIDUAL_TOL: f64 = 1e-9;

const SCAN_POINTS: usize = 1000;
const ROOT_TOL: f64 = 1e-12;
const MAX_BISECTIONS: usize = 200;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Branch {
    /// The origin.
    Trivial,
    /// Imports absent, `X3 = 0`.
    NoImport,
    /// Demand sits at the import activation level `X1 = s3 / s2`.
    ImportThreshold,
}

impl Branch {
    pub fn name(self) -> &'static str {
        match self {
            Branch::Trivial => "trivial",
            Branch::NoImport => "no-import",
            Branch::ImportThreshold => "import-threshold",
        }
    }
}

impl fmt::Display for Branch {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// An equilibrium candidate on one branch.
///
/// Components that the branch could not determine (because the branch is
/// infeasible) are `NaN`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Equilibrium {
    pub point: State,
    pub branch: Branch,
    pub feasible: bool,
    pub infeasibility_reason: Option<String>,
}

impl Equilibrium {
    fn feasible(point: State, branch: Branch) -> Self {
        Self {
            point,
            branch,
            feasible: true,
            infeasibility_reason: None,
        }
    }

    fn infeasible(point: State, branch: Branch, reason: impl Into<String>) -> Self {
        Self {
            point,
            branch,
            feasible: false,
            infeasibility_reason: Some(reason.into()),
        }
    }

    /// `max_i |f_i(point)|`, `NaN` when the point is undetermined.
    pub fn residual(&self, params: &ModelParams) -> f64 {
        residual(&self.point, params)
    }
}

pub(crate) fn residual(x: &State, params: &ModelParams) -> f64 {
    if x.iter().any(|v| !v.is_finite()) {
        return f64::NAN;
    }
    drift_unchecked(x, params)
        .iter()
        .fold(0.0, |m, v| m.max(v.abs()))
}

/// Reduced first equilibrium equation on the import-free branch, divided by `X1`.
pub fn no_import_reduced(x1: f64, p: &ModelParams) -> f64 {
    let k = p.z3 / p.z1;
    p.a1 * (1.0 - x1 / p.w) - p.a2 * k * k * x1 * (p.n - x1).powi(2) - p.d3 * p.d1 / p.d2
}

/// Coefficients `(qa, qb, qc)` of the import-threshold quadratic in `X3`
/// and the affine map `X2 = A + B X3`, returned as `(qa, qb, qc, A, B)`.
pub fn import_threshold_quadratic(p: &ModelParams) -> (f64, f64, f64, f64, f64) {
    let x1 = p.import_threshold();
    let x4 = p.d1 / p.d2 * x1;
    let a = p.z3 * x1 * (p.n - x1) / p.z1;
    let b = (p.z3 * x1 - p.z2) / p.z1;
    let rhs = p.a1 * x1 * (1.0 - x1 / p.w) - p.d3 * x4;
    // a2 (A + B X3)(A + (B + 1) X3) = rhs
    let qa = p.a2 * b * (b + 1.0);
    let qb = p.a2 * a * (2.0 * b + 1.0);
    let qc = p.a2 * a * a - rhs;
    (qa, qb, qc, a, b)
}

/// Returns the trivial equilibrium, then every import-free root (or one
/// infeasible record), then every import-threshold root (or one infeasible
/// record). At the baseline calibration this is exactly three entries.
pub fn find_equilibria(params: &ModelParams) -> Result<Vec<Equilibrium>> {
    params.ensure_valid()?;
    let mut out = vec![Equilibrium::feasible([0.0; 4], Branch::Trivial)];
    out.extend(no_import_branch(params));
    out.extend(import_threshold_branch(params));
    Ok(out)
}

fn no_import_branch(p: &ModelParams) -> Vec<Equilibrium> {
    let g = |x: f64| no_import_reduced(x, p);
    let undetermined = [f64::NAN, f64::NAN, 0.0, f64::NAN];

    let grid: Vec<f64> = (1..=SCAN_POINTS)
        .map(|k| p.n * k as f64 / (SCAN_POINTS + 1) as f64)
        .collect();
    let values: Vec<f64> = grid.iter().map(|&x| g(x)).collect();

    let mut roots = Vec::new();
    for i in 0..grid.len() {
        if values[i] == 0.0 {
            roots.push(grid[i]);
        } else if i + 1 < grid.len() && values[i] * values[i + 1] < 0.0 {
            roots.push(bisect(&g, grid[i], grid[i + 1], values[i]));
        }
    }

    if roots.is_empty() {
        let (lo, hi) = values
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
        let sign = if lo > 0.0 { "positive" } else { "negative" };
        return vec![Equilibrium::infeasible(
            undetermined,
            Branch::NoImport,
            format!(
                "no sign change of reduced demand equation on (0, N): g {sign} throughout, range [{lo:.6}, {hi:.6}]"
            ),
        )];
    }

    roots
        .into_iter()
        .map(|x1| {
            let x2 = p.z3 / p.z1 * x1 * (p.n - x1);
            let x4 = p.d1 / p.d2 * x1;
            let point = polish([x1, x2, 0.0, x4], p, Branch::NoImport);
            classify_point(point, Branch::NoImport, p)
        })
        .collect()
}

fn import_threshold_branch(p: &ModelParams) -> Vec<Equilibrium> {
    let x1 = p.import_threshold();
    let x4 = p.d1 / p.d2 * x1;
    let undetermined = [x1, f64::NAN, f64::NAN, x4];

    if p.n <= x1 {
        return vec![Equilibrium::infeasible(
            undetermined,
            Branch::ImportThreshold,
            format!("N > s3/s2 violated (N = {}, s3/s2 = {x1})", p.n),
        )];
    }

    let (qa, qb, qc, a, b) = import_threshold_quadratic(p);
    let scale = qa.abs().max(qb.abs()).max(qc.abs());
    let roots: Vec<f64> = if qa.abs() <= 1e-14 * scale {
        if qb == 0.0 {
            Vec::new()
        } else {
            vec![-qc / qb]
        }
    } else {
        let disc = qb * qb - 4.0 * qa * qc;
        if disc < 0.0 {
            return vec![Equilibrium::infeasible(
                undetermined,
                Branch::ImportThreshold,
                format!(
                    "negative discriminant {disc:.6e} of quadratic {qa:.6e} X3^2 + {qb:.6e} X3 + {qc:.6e}"
                ),
            )];
        }
        let q = -0.5 * (qb + qb.signum() * disc.sqrt());
        let mut r = vec![q / qa];
        if q != 0.0 {
            r.push(qc / q);
        }
        r.dedup();
        r
    };

    let mut feasible = Vec::new();
    let mut rejected = Vec::new();
    for x3 in roots {
        let x2 = a + b * x3;
        if x3 > 0.0 && x2 > 0.0 {
            let point = polish([x1, x2, x3, x4], p, Branch::ImportThreshold);
            feasible.push(classify_point(point, Branch::ImportThreshold, p));
        } else {
            rejected.push(format!("X3 = {x3:.6e}, X2 = {x2:.6e}"));
        }
    }
    if feasible.is_empty() {
        let reason = if rejected.is_empty() {
            "degenerate quadratic has no root".to_string()
        } else {
            format!("no root with X2 > 0 and X3 > 0 ({})", rejected.join("; "))
        };
        vec![Equilibrium::infeasible(undetermined, Branch::ImportThreshold, reason)]
    } else {
        feasible
    }
}

fn classify_point(point: State, branch: Branch, p: &ModelParams) -> Equilibrium {
    let r = residual(&point, p);
    let positive = match branch {
        Branch::NoImport => point[0] > 0.0 && point[0] < p.n && point[1] > 0.0 && point[3] > 0.0,
        _ => point.iter().all(|&v| v > 0.0),
    };
    if !positive {
        Equilibrium::infeasible(point, branch, "root yields a non-positive component")
    } else if !(r < RESIDUAL_TOL) {
        Equilibrium::infeasible(point, branch, format!("residual {r:.3e} above tolerance"))
    } else {
        Equilibrium::feasible(point, branch)
    }
}

fn bisect(g: &impl Fn(f64) -> f64, mut lo: f64, mut hi: f64, mut g_lo: f64) -> f64 {
    for _ in 0..MAX_BISECTIONS {
        let mid = 0.5 * (lo + hi);
        let g_mid = g(mid);
        if g_mid.abs() < ROOT_TOL || mid <= lo || mid >= hi {
            return mid;
        }
        if g_lo * g_mid < 0.0 {
            hi = mid;
        } else {
            lo = mid;
            g_lo = g_mid;
        }
    }
    0.5 * (lo + hi)
}

/// A few Newton steps on the full system, keeping the branch's structural
/// relations exact (`X4 = d1/d2 X1`, and `X3 = 0` or `X1 = s3/s2`).
fn polish(mut x: State, p: &ModelParams, branch: Branch) -> State {
    for _ in 0..8 {
        if residual(&x, p) < 1e-13 {
            break;
        }
        let Ok(j) = jacobian(&x, p) else { break };
        let f = Vector4::from(drift_unchecked(&x, p));
        let Some(dx) = j.lu().solve(&f) else { break };
        let mut next = [x[0] - dx[0], x[1] - dx[1], x[2] - dx[2], x[3] - dx[3]];
        match branch {
            Branch::NoImport => next[2] = 0.0,
            Branch::ImportThreshold => next[0] = p.import_threshold(),
            Branch::Trivial => {}
        }
        next[3] = p.d1 / p.d2 * next[0];
        if !(residual(&next, p) < residual(&x, p)) {
            break;
        }
        x = next;
    }
    x
}
