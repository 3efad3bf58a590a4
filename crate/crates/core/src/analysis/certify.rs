//! End-to-end certification from the worst-case mode and the expected matrix.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use super::bounds::{
    convergence_rate_bound, error_probability_bound, verify_mean_contraction, ErrorBoundCurve,
    MeanContractionReport,
};
use super::lyapunov::{solve_discrete_lyapunov_with, LyapunovCertificate, LyapunovMethod};
use super::tail::{tail_constants_with, TailConstants};
use super::CancelToken;
use crate::error::{Error, Result};
use crate::modes::{build_projector, deflate, expected_matrix, worst_case_mode, AugmentedSpec, SwitchingDistribution};

/// Default number of powers examined when searching for `k₀`.
pub const DEFAULT_TAIL_HORIZON: usize = 200_000;

#[derive(Debug, Clone)]
pub struct CertifyOptions {
    pub horizon: usize,
    pub cancel: Option<CancelToken>,
}

impl Default for CertifyOptions {
    fn default() -> Self {
        Self {
            horizon: DEFAULT_TAIL_HORIZON,
            cancel: None,
        }
    }
}

/// Scalar results of [`certify`], serialized as `certificate.json`.
#[derive(Debug, Clone, Serialize)]
pub struct Certificate {
    pub num_pes: usize,
    pub points_per_pe: usize,
    pub buffer_len: usize,
    pub r: f64,
    /// Augmented dimension `d = N n q`.
    pub dim: usize,
    pub num_edges: usize,
    /// `q^E` as a decimal string (it can exceed any fixed-width integer).
    pub mode_count: String,
    pub e0_norm: f64,
    /// Certificate for `W̃_m`; its `rate` is `1 - 1/λ_max(P_m)`.
    pub worst_case: LyapunovCertificate,
    pub mean: MeanContractionReport,
    pub tail: TailConstants,
}

impl Certificate {
    /// Prefactor shared by the mean and probability bounds.
    pub fn k_const(&self) -> f64 {
        self.mean.k_const
    }

    /// Bound on `‖ē(k)‖` for `k = 0..=steps`.
    pub fn rate_bound(&self, steps: usize) -> Vec<f64> {
        convergence_rate_bound(&self.worst_case, self.k_const(), self.e0_norm, steps)
    }

    /// `min(1, β(k))` for one `ε`.
    pub fn probability_bound(&self, epsilon: f64, steps: usize) -> Result<ErrorBoundCurve> {
        let e0 = DVector::from_element(1, self.e0_norm);
        error_probability_bound(&self.tail, &e0, epsilon, steps, self.dim, self.k_const())
    }
}

/// Builds every certificate the bounds need without enumerating modes.
///
/// Only `W_m`, `Psi` and `Lambda` are formed, each `d × d`. The Lyapunov
/// equation is solved by the series method so nothing of size `d²` is allocated.
pub fn certify(
    aspec: &AugmentedSpec,
    dist: &SwitchingDistribution,
    e0: &DVector<f64>,
    opts: &CertifyOptions,
) -> Result<Certificate> {
    let dim = aspec.dim();
    if e0.len() != dim {
        return Err(Error::DimensionMismatch {
            expected: dim,
            actual: e0.len(),
        });
    }
    let cancel = opts.cancel.as_ref();
    let proj = build_projector(aspec);
    let w_m: DMatrix<f64> = deflate(&worst_case_mode(aspec).w, &proj)?;
    CancelToken::check(cancel)?;
    let worst_case = solve_discrete_lyapunov_with(&w_m, LyapunovMethod::Series, cancel)?;
    let lambda = expected_matrix(aspec, dist)?;
    let mean = verify_mean_contraction(&lambda, &worst_case, cancel)?;
    drop(lambda);
    let tail = tail_constants_with(&w_m, opts.horizon, cancel)?;
    let grid = aspec.grid();
    Ok(Certificate {
        num_pes: grid.num_pes(),
        points_per_pe: grid.points_per_pe(),
        buffer_len: aspec.buffer_len(),
        r: grid.r(),
        dim,
        num_edges: aspec.num_edges(),
        mode_count: mode_count_string(aspec),
        e0_norm: e0.norm(),
        worst_case,
        mean,
        tail,
    })
}

fn mode_count_string(aspec: &AugmentedSpec) -> String {
    match aspec.mode_count() {
        Some(m) => m.to_string(),
        None => format!("{}^{}", aspec.buffer_len(), aspec.num_edges()),
    }
}
