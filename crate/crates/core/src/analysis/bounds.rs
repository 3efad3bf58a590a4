//! Mean-error and tail-probability bounds.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use super::lyapunov::{solve_discrete_lyapunov_with, LyapunovCertificate, LyapunovMethod};
use super::tail::TailConstants;
use super::CancelToken;
use crate::error::{Error, Result};
use crate::linalg;

/// `√(K · rate^k) · ‖e(0)‖` for `k = 0..=steps`, with `rate` from the worst-case certificate.
///
/// `prefactor` is the `K` from [`verify_mean_contraction`].
pub fn convergence_rate_bound(
    cert: &LyapunovCertificate,
    prefactor: f64,
    e0_norm: f64,
    steps: usize,
) -> Vec<f64> {
    let root_k = prefactor.sqrt();
    let half_log_rate = 0.5 * cert.rate.ln();
    (0..=steps)
        .map(|k| {
            if k == 0 {
                root_k * e0_norm
            } else {
                root_k * (half_log_rate * k as f64).exp() * e0_norm
            }
        })
        .collect()
}

/// Exact mean error `ē(k) = Λ^k e(0)`.
#[derive(Debug, Clone)]
pub struct MeanCurve {
    pub vectors: Vec<DVector<f64>>,
    pub norms: Vec<f64>,
}

pub fn exact_mean_curve(lambda: &DMatrix<f64>, e0: &DVector<f64>, steps: usize) -> MeanCurve {
    let mut vectors = Vec::with_capacity(steps + 1);
    let mut norms = Vec::with_capacity(steps + 1);
    let mut e = e0.clone();
    for k in 0..=steps {
        if k > 0 {
            e = lambda * &e;
        }
        norms.push(e.norm());
        vectors.push(e.clone());
    }
    MeanCurve { vectors, norms }
}

/// How the prefactor `K` of the mean bound was justified.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum PrefactorPath {
    /// `ΛᵀΛ - I ≤ -(1/λ_max(P_m)) I` holds, so `V = ‖ē‖²` decays at the worst-case rate and `K = 1`.
    IdentityP,
    /// `ΛᵀPΛ - P = -I` solved with `λ_max(P) ≤ λ_max(P_m)`; `K = cond(P)`.
    SolvedP,
    /// Solved for `Λ / √rate`, which gives `ΛᵀPΛ ≤ rate · P` directly; `K = cond(P)`.
    ScaledP,
    /// No certificate at the worst-case rate could be built.
    Uncertified,
}

#[derive(Debug, Clone, Serialize)]
pub struct MeanContractionReport {
    /// `λ_max(ΛᵀΛ - I + I/λ_max(P_m))`; non-positive means the identity check passes.
    pub identity_margin: f64,
    pub identity_holds: bool,
    pub path: PrefactorPath,
    /// Prefactor `K` of `‖ē(k)‖² ≤ K · rate^k · ‖e(0)‖²`.
    pub k_const: f64,
    /// `λ_max` of the certifying `P` (1 on the identity path).
    pub lambda_max_p: f64,
    pub lyapunov_residual: f64,
    /// Worst-case rate `1 - 1/λ_max(P_m)`.
    pub rate: f64,
    pub spectral_radius: f64,
    pub smallest_singular_value: f64,
    pub singular: bool,
}

impl MeanContractionReport {
    pub fn certified(&self) -> bool {
        self.path != PrefactorPath::Uncertified
    }
}

/// Checks that the worst-case rate also bounds the mean dynamics, and picks `K`.
pub fn verify_mean_contraction(
    lambda: &DMatrix<f64>,
    worst: &LyapunovCertificate,
    cancel: Option<&CancelToken>,
) -> Result<MeanContractionReport> {
    let n = lambda.nrows();
    if !lambda.is_square() || n != worst.p.nrows() {
        return Err(Error::DimensionMismatch {
            expected: worst.p.nrows(),
            actual: n,
        });
    }
    let rate = worst.rate;
    let gram = lambda.transpose() * lambda;
    let shifted = &gram - DMatrix::<f64>::identity(n, n) * rate;
    let (_, identity_margin) = linalg::symmetric_extremes(&shifted);
    let identity_holds = identity_margin <= 0.0;

    let singular_values = lambda.clone().singular_values();
    let smallest_singular_value = singular_values.iter().copied().fold(f64::INFINITY, f64::min);
    let spectral_radius = linalg::spectral_radius(lambda)?;

    let mut report = MeanContractionReport {
        identity_margin,
        identity_holds,
        path: PrefactorPath::Uncertified,
        k_const: f64::INFINITY,
        lambda_max_p: f64::NAN,
        lyapunov_residual: f64::NAN,
        rate,
        spectral_radius,
        smallest_singular_value,
        singular: smallest_singular_value < 1e-10,
    };
    if identity_holds {
        report.path = PrefactorPath::IdentityP;
        report.k_const = 1.0;
        report.lambda_max_p = 1.0;
        report.lyapunov_residual = 0.0;
        return Ok(report);
    }
    if spectral_radius >= 1.0 {
        return Ok(report);
    }

    let solved = solve_discrete_lyapunov_with(lambda, LyapunovMethod::Series, cancel)?;
    if solved.lambda_max <= worst.lambda_max && !solved.ill_conditioned {
        report.path = PrefactorPath::SolvedP;
        report.k_const = solved.k_const;
        report.lambda_max_p = solved.lambda_max;
        report.lyapunov_residual = solved.residual;
        return Ok(report);
    }

    if rate > 0.0 && spectral_radius * spectral_radius < rate {
        let scaled = lambda / rate.sqrt();
        let cert = solve_discrete_lyapunov_with(&scaled, LyapunovMethod::Series, cancel)?;
        if !cert.ill_conditioned {
            report.path = PrefactorPath::ScaledP;
            report.k_const = cert.k_const;
            report.lambda_max_p = cert.lambda_max;
            report.lyapunov_residual = cert.residual;
        }
    }
    Ok(report)
}

/// `min(1, β(k))` with `β(k) = (√d K / ε) · rate₂^{k/2} · ‖e(0)‖²`.
#[derive(Debug, Clone, Serialize)]
pub struct ErrorBoundCurve {
    pub epsilon: f64,
    pub k_const: f64,
    pub dim: usize,
    /// Unclamped `β(k)`.
    pub beta: Vec<f64>,
    /// `min(1, β(k))`.
    pub values: Vec<f64>,
}

pub fn error_probability_bound(
    tc: &TailConstants,
    e0: &DVector<f64>,
    epsilon: f64,
    steps: usize,
    dim: usize,
    k_const: f64,
) -> Result<ErrorBoundCurve> {
    if !(epsilon > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "epsilon must be positive, got {epsilon}"
        )));
    }
    // ‖y(0)‖ = ‖vec(e e^T)‖ = ‖e‖².
    let y0 = e0.norm_squared();
    let lead = (dim as f64).sqrt() * k_const / epsilon * y0;
    let half_log_rate = 0.5 * tc.second_moment_rate.ln();
    let beta: Vec<f64> = (0..=steps)
        .map(|k| {
            if k == 0 {
                lead
            } else {
                lead * (half_log_rate * k as f64).exp()
            }
        })
        .collect();
    let values = beta.iter().map(|b| b.min(1.0)).collect();
    Ok(ErrorBoundCurve {
        epsilon,
        k_const,
        dim,
        beta,
        values,
    })
}
