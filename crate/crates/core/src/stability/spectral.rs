//! Eigenvalue classification and the matrix-inequality check for almost sure
//! exponential stability.

use nalgebra::{Schur, SymmetricEigen};
use num_complex::Complex64;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{jacobian, Matrix4, ModelParams, NoiseIntensities};

use super::equilibria::Equilibrium;

/// Real parts inside `[-MARGINAL_BAND, MARGINAL_BAND]` are treated as zero.
pub const MARGINAL_BAND: f64 = 1e-12;

/// Iteration cap for the Schur reduction.
pub const MAX_QR_ITERATIONS: usize = 500;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum SpectralVerdict {
    Stable,
    Marginal,
    Unstable,
}

impl SpectralVerdict {
    pub fn from_abscissa(max_re: f64) -> Self {
        if max_re < -MARGINAL_BAND {
            SpectralVerdict::Stable
        } else if max_re <= MARGINAL_BAND {
            SpectralVerdict::Marginal
        } else {
            SpectralVerdict::Unstable
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            SpectralVerdict::Stable => "stable",
            SpectralVerdict::Marginal => "marginal",
            SpectralVerdict::Unstable => "unstable",
        }
    }
}

/// Eigenvalues of a real 4x4 matrix via Hessenberg reduction and shifted QR.
pub fn eigenvalues_4x4(m: &Matrix4) -> Result<[Complex64; 4]> {
    if m.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput("matrix has non-finite entries".into()));
    }
    let schur = Schur::try_new(*m, f64::EPSILON, MAX_QR_ITERATIONS).ok_or_else(|| {
        Error::NumericFailure(format!(
            "Schur iteration did not converge in {MAX_QR_ITERATIONS} iterations"
        ))
    })?;
    let ev = schur.complex_eigenvalues();
    Ok([ev[0], ev[1], ev[2], ev[3]])
}

/// Outcome of the matrix-inequality test `J'P + PJ + P S P <= -alpha P`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LmiVerdict {
    pub feasible: bool,
    /// Largest `alpha` for the given `P`, present only when feasible.
    pub alpha: Option<f64>,
    /// `alpha / (2 lambda_max(P))`, present only when feasible.
    pub decay_rate_bound: Option<f64>,
    /// `lambda_max` of the congruence-normalised inequality matrix.
    pub lambda_max: f64,
}

fn check_spd(p: &Matrix4) -> Result<SymmetricEigen<f64, nalgebra::U4>> {
    if p.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput("P has non-finite entries".into()));
    }
    let asym = (p - p.transpose()).abs().max();
    if asym > 1e-12 * p.abs().max().max(1.0) {
        return Err(Error::InvalidInput(format!(
            "P is not symmetric (max asymmetry {asym:.3e})"
        )));
    }
    let eig = SymmetricEigen::new(*p);
    if eig.eigenvalues.iter().any(|&l| l <= 0.0) {
        return Err(Error::InvalidInput(format!(
            "P is not positive definite (eigenvalues {:?})",
            eig.eigenvalues.as_slice()
        )));
    }
    Ok(eig)
}

/// Checks the inequality for a fixed symmetric positive-definite `P`
/// (identity when `None`).
///
/// With `M = P^{-1/2} (J'P + PJ + P S P) P^{-1/2}` the inequality holds for
/// `alpha = -lambda_max(M)` whenever `lambda_max(M) < 0`.
pub fn lmi_check(j: &Matrix4, noise: &NoiseIntensities, p: Option<&Matrix4>) -> Result<LmiVerdict> {
    let p = p.copied().unwrap_or_else(Matrix4::identity);
    let p_eig = check_spd(&p)?;
    let sigma = noise.covariance();

    let inv_sqrt = p_eig.eigenvectors
        * Matrix4::from_diagonal(&p_eig.eigenvalues.map(|l| 1.0 / l.sqrt()))
        * p_eig.eigenvectors.transpose();
    let lhs = j.transpose() * p + p * j + p * sigma * p;
    let m = inv_sqrt * lhs * inv_sqrt;
    // Symmetrise against rounding before the symmetric solver.
    let m = 0.5 * (m + m.transpose());
    let lambda_max = SymmetricEigen::new(m).eigenvalues.max();
    let p_max = p_eig.eigenvalues.max();

    if lambda_max < 0.0 {
        let alpha = -lambda_max;
        Ok(LmiVerdict {
            feasible: true,
            alpha: Some(alpha),
            decay_rate_bound: Some(alpha / (2.0 * p_max)),
            lambda_max,
        })
    } else {
        Ok(LmiVerdict {
            feasible: false,
            alpha: None,
            decay_rate_bound: None,
            lambda_max,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StabilityReport {
    pub eigenvalues: [Complex64; 4],
    pub max_real_part: f64,
    pub verdict: SpectralVerdict,
    pub lmi: LmiVerdict,
}

impl StabilityReport {
    pub fn spectrally_stable(&self) -> bool {
        self.verdict == SpectralVerdict::Stable
    }
}

/// Spectral and matrix-inequality verdicts for the linearisation at a
/// feasible equilibrium.
pub fn classify_equilibrium(
    params: &ModelParams,
    eq: &Equilibrium,
    noise: &NoiseIntensities,
    p: Option<&Matrix4>,
) -> Result<StabilityReport> {
    if !eq.feasible {
        return Err(Error::InvalidInput(format!(
            "cannot classify infeasible {} equilibrium",
            eq.branch
        )));
    }
    noise.ensure_valid()?;
    let j = jacobian(&eq.point, params)?;
    classify_jacobian(&j, noise, p)
}

pub fn classify_jacobian(
    j: &Matrix4,
    noise: &NoiseIntensities,
    p: Option<&Matrix4>,
) -> Result<StabilityReport> {
    let eigenvalues = eigenvalues_4x4(j)?;
    let max_real_part = eigenvalues
        .iter()
        .map(|z| z.re)
        .fold(f64::NEG_INFINITY, f64::max);
    Ok(StabilityReport {
        eigenvalues,
        max_real_part,
        verdict: SpectralVerdict::from_abscissa(max_real_part),
        lmi: lmi_check(j, noise, p)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stability::find_equilibria;

    fn det_shifted(m: &Matrix4, z: Complex64) -> f64 {
        let mc = m.map(|v| Complex64::new(v, 0.0)) - nalgebra::Matrix4::<Complex64>::identity() * z;
        mc.determinant().norm()
    }

    fn sorted_re(ev: &[Complex64; 4]) -> Vec<f64> {
        let mut v: Vec<f64> = ev.iter().map(|z| z.re).collect();
        v.sort_by(f64::total_cmp);
        v
    }

    #[test]
    fn identity_eigenvalues() {
        let ev = eigenvalues_4x4(&Matrix4::identity()).unwrap();
        for z in ev {
            assert!((z - Complex64::new(1.0, 0.0)).norm() < 1e-14);
        }
    }

    #[test]
    fn diagonal_eigenvalues() {
        let m = Matrix4::from_diagonal(&[2.0, -3.0, 0.5, -0.5].into());
        assert_eq!(sorted_re(&eigenvalues_4x4(&m).unwrap()), vec![-3.0, -0.5, 0.5, 2.0]);
    }

    #[test]
    fn companion_of_quartic_unity() {
        // companion matrix of l^4 - 1
        #[rustfmt::skip]
        let m = Matrix4::new(
            0.0, 0.0, 0.0, 1.0,
            1.0, 0.0, 0.0, 0.0,
            0.0, 1.0, 0.0, 0.0,
            0.0, 0.0, 1.0, 0.0,
        );
        let ev = eigenvalues_4x4(&m).unwrap();
        let expected = [
            Complex64::new(1.0, 0.0),
            Complex64::new(-1.0, 0.0),
            Complex64::new(0.0, 1.0),
            Complex64::new(0.0, -1.0),
        ];
        for e in expected {
            assert!(ev.iter().any(|z| (z - e).norm() < 1e-12), "{ev:?}");
        }
        for z in ev {
            assert!(det_shifted(&m, z) < 1e-8 * (1.0 + m.norm()));
        }
    }

    #[test]
    fn nonfinite_matrix_is_rejected() {
        let mut m = Matrix4::identity();
        m[(1, 2)] = f64::INFINITY;
        assert!(eigenvalues_4x4(&m).is_err());
    }

    #[test]
    fn origin_is_unstable_at_baseline() {
        let p = ModelParams::BASELINE;
        let eqs = find_equilibria(&p).unwrap();
        let r = classify_equilibrium(&p, &eqs[0], &NoiseIntensities::BASELINE, None).unwrap();
        // X1 and X4 couple through d3 and d1, so the origin spectrum is
        // -z1, -s1 s3 and the roots of (l - a1)(l + d2) + d1 d3.
        let disc = ((p.a1 + p.d2).powi(2) - 4.0 * p.d1 * p.d3).sqrt();
        let mut want = [
            -p.z1,
            -p.s1 * p.s3,
            0.5 * (p.a1 - p.d2 + disc),
            0.5 * (p.a1 - p.d2 - disc),
        ];
        want.sort_by(f64::total_cmp);
        let got = sorted_re(&r.eigenvalues);
        for (g, e) in got.iter().zip(want) {
            assert!((g - e).abs() < 1e-10, "{got:?} vs {want:?}");
        }
        assert!(r.eigenvalues.iter().all(|z| z.im.abs() < 1e-12));
        assert_eq!(r.verdict, SpectralVerdict::Unstable);
        assert!(!r.lmi.feasible);
        assert!(r.lmi.alpha.is_none());
    }

    #[test]
    fn diagonal_lmi_example() {
        let j = -Matrix4::identity();
        let noise = NoiseIntensities::new([0.1; 4]);
        let v = lmi_check(&j, &noise, None).unwrap();
        assert!(v.feasible);
        assert!((v.alpha.unwrap() - 1.99).abs() < 1e-14);
        assert!((v.decay_rate_bound.unwrap() - 0.995).abs() < 1e-14);
    }

    #[test]
    fn scaled_identity_weight_rescales_bound() {
        // P = 2I: M = 2(J' + J) + 4 S, alpha halves after dividing by lambda_max(P).
        let j = -Matrix4::identity();
        let noise = NoiseIntensities::new([0.1; 4]);
        let p = Matrix4::identity() * 2.0;
        let v = lmi_check(&j, &noise, Some(&p)).unwrap();
        assert!((v.alpha.unwrap() - (2.0 - 0.02)).abs() < 1e-13);
        assert!((v.decay_rate_bound.unwrap() - 1.98 / 4.0).abs() < 1e-13);
    }

    #[test]
    fn non_spd_weight_is_rejected() {
        let j = -Matrix4::identity();
        let noise = NoiseIntensities::zero();
        let mut asym = Matrix4::identity();
        asym[(0, 1)] = 0.5;
        assert!(matches!(lmi_check(&j, &noise, Some(&asym)), Err(Error::InvalidInput(_))));
        let indefinite = Matrix4::from_diagonal(&[1.0, 1.0, -1.0, 1.0].into());
        assert!(matches!(
            lmi_check(&j, &noise, Some(&indefinite)),
            Err(Error::InvalidInput(_))
        ));
    }

    #[test]
    fn marginal_band() {
        assert_eq!(SpectralVerdict::from_abscissa(-1e-13), SpectralVerdict::Marginal);
        assert_eq!(SpectralVerdict::from_abscissa(1e-12), SpectralVerdict::Marginal);
        assert_eq!(SpectralVerdict::from_abscissa(-2e-12), SpectralVerdict::Stable);
        assert_eq!(SpectralVerdict::from_abscissa(2e-12), SpectralVerdict::Unstable);
    }

    #[test]
    fn infeasible_equilibrium_cannot_be_classified() {
        let p = ModelParams::BASELINE;
        let eqs = find_equilibria(&p).unwrap();
        assert!(classify_equilibrium(&p, &eqs[1], &NoiseIntensities::BASELINE, None).is_err());
    }
}
