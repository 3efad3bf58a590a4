//! Certificates and bounds for the error dynamics `e(k+1) = W̃_σ e(k)`.
//!
//! Everything here needs only the worst-case mode `W̃_m`, the expected matrix
//! `Λ` (built by linearity), or small lifted systems; no routine enumerates modes.

mod bounds;
mod certify;
mod lyapunov;
mod tail;

use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;

use nalgebra::DMatrix;

pub use bounds::{
    convergence_rate_bound, error_probability_bound, exact_mean_curve, verify_mean_contraction,
    ErrorBoundCurve, MeanContractionReport, MeanCurve, PrefactorPath,
};
pub use certify::{certify, Certificate, CertifyOptions, DEFAULT_TAIL_HORIZON};
pub use lyapunov::{
    lyapunov_kronecker, lyapunov_series, solve_discrete_lyapunov, solve_discrete_lyapunov_with,
    LyapunovCertificate, LyapunovMethod, KRONECKER_AUTO_LIMIT, KRONECKER_HARD_LIMIT,
    LYAPUNOV_RESIDUAL_TOL,
};
pub use tail::{
    kron_norm_identity_check, second_moment_bound_check, tail_constants, tail_constants_with,
    KronNormReport, SecondMomentReport, TailConstants, LIFTED_DIM_LIMIT,
};

/// Largest singular value `‖M‖₂`.
pub fn spectral_norm(m: &DMatrix<f64>) -> f64 {
    crate::linalg::spectral_norm_svd(m)
}

/// Cooperative cancellation flag for long-running solves.
#[derive(Debug, Clone, Default)]
pub struct CancelToken(Arc<AtomicBool>);

impl CancelToken {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn cancel(&self) {
        self.0.store(true, Ordering::Relaxed);
    }

    pub fn is_cancelled(&self) -> bool {
        self.0.load(Ordering::Relaxed)
    }

    pub(crate) fn check(token: Option<&CancelToken>) -> crate::Result<()> {
        match token {
            Some(t) if t.is_cancelled() => Err(crate::Error::Cancelled),
            _ => Ok(()),
        }
    }
}
