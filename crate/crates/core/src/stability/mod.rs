//! Equilibria, linear stability, the stochastic matrix-inequality criterion
//! and the persistence-in-mean bound.

mod equilibria;
mod persistence;
mod spectral;

pub use equilibria::{
    find_equilibria, import_threshold_quadratic, no_import_reduced, Branch, Equilibrium,
    RESIDUAL_TOL,
};
pub use persistence::{
    check_persistence_drift_condition, drift_condition_margin, persistence_bound,
    DriftConditionReport, PersistenceBound, PersistenceSpec,
};
pub use spectral::{
    classify_equilibrium, classify_jacobian, eigenvalues_4x4, lmi_check, LmiVerdict,
    SpectralVerdict, StabilityReport, MARGINAL_BAND, MAX_QR_ITERATIONS,
};
