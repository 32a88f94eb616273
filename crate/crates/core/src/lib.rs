//! Best linear unbiased estimation under linear equality constraints.
//!
//! The crate provides the constrained BLUE in nullspace and direct form, the
//! LS / BLUE / constrained LS baselines, analytic covariances, a KKT reference
//! solver, a verification suite for the algebraic identities behind the
//! estimator, and a Monte Carlo harness for FIR system identification.

pub mod error;
pub mod estimators;
pub mod model;
pub mod montecarlo;
pub mod numerics;
pub mod verify;

pub use error::{Error, Result};
pub use estimators::{
    analytic_cblue_covariance_direct, analytic_cblue_covariance_nullspace, blue, cblue,
    cblue_direct, cblue_nullspace, cls, covariance, kkt_oracle, ls, mean_subtracted,
    AffineEstimator, CovarianceResult, EstimatorFamily, EstimatorKind, PrecisionMatrices,
};
pub use model::{parameterize, validate, CompatibilityReport, ConstraintSet, LinearModel, NullspaceParam};
pub use numerics::{CMatrix, CVector, HpdFactor};
pub use montecarlo::{run_experiment, ExperimentSpec, MseKind, MseReport, MseRow, TrueXPolicy};
pub use verify::{run_verification, VerificationReport, VerifyOptions};
