//! Tail constants `(k₀, c₀, c₁)` of `‖W̃_m^k‖⁴` and the lifted second-moment checks.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use super::lyapunov::{solve_discrete_lyapunov_with, LyapunovMethod, KRONECKER_HARD_LIMIT};
use super::CancelToken;
use crate::error::{Error, Result};
use crate::linalg::{self, SparseRows};

/// Largest lifted dimension `(N n q)²` for which `P̃_m` is solved directly.
pub const LIFTED_DIM_LIMIT: usize = 2500;

/// Largest lifted dimension for which `(W̃ ⊗ W̃)^k` is materialized.
const KRON_POWER_LIMIT: usize = 900;

const POWER_TOL: f64 = 1e-13;
const POWER_MAX_ITER: usize = 2000;

#[derive(Debug, Clone, Serialize)]
pub struct TailConstants {
    /// First power with `‖W̃^k‖ < 1`.
    pub k0: usize,
    /// `max_{0 ≤ k < k₀} ‖W̃^k‖⁴`.
    pub c0: f64,
    /// `‖W̃^{k₀}‖⁴`.
    pub c1: f64,
    /// `1 - (1 - c₁) / (k₀ c₀)`.
    pub second_moment_rate: f64,
    /// `‖W̃^k‖⁴` for `k = 0..=k₀`.
    #[serde(skip)]
    pub norms_fourth: Vec<f64>,
}

impl TailConstants {
    /// `k₀ c₀ / (1 - c₁)`, the closed-form bound on `Σ_k ‖W̃^k‖⁴`.
    pub fn series_bound(&self) -> f64 {
        self.k0 as f64 * self.c0 / (1.0 - self.c1)
    }
}

pub fn tail_constants(w: &DMatrix<f64>, horizon: usize) -> Result<TailConstants> {
    tail_constants_with(w, horizon, None)
}

/// Walks `W̃^k` for `k = 1..=horizon`, stopping at the first power with spectral norm below 1.
///
/// Powers are formed with a sparse left factor and kept at unit scale
/// (the true power is `M · exp(log_scale)`). Norms come from warm-started
/// power iteration, confirmed by a full SVD at every new maximum and at the
/// crossing.
pub fn tail_constants_with(
    w: &DMatrix<f64>,
    horizon: usize,
    cancel: Option<&CancelToken>,
) -> Result<TailConstants> {
    if !w.is_square() {
        return Err(Error::DimensionMismatch {
            expected: w.nrows(),
            actual: w.ncols(),
        });
    }
    let n = w.nrows();
    let sparse = SparseRows::from_dense(w);
    let mut m = w.clone();
    let mut next = DMatrix::zeros(n, n);
    let mut log_scale = 0.0_f64;
    let mut v = DVector::from_element(n, 1.0);
    let mut norms_fourth = vec![1.0];
    let mut c0 = 1.0_f64;
    let mut smallest = f64::INFINITY;

    for k in 1..=horizon {
        if k % 64 == 0 {
            CancelToken::check(cancel)?;
        }
        let scale = log_scale.exp();
        let mut sigma = linalg::spectral_norm_power(&m, &mut v, POWER_TOL, POWER_MAX_ITER) * scale;
        let fourth_est = sigma.powi(4);
        if sigma < 1.0 || fourth_est > c0 {
            sigma = linalg::spectral_norm_svd(&m) * scale;
        }
        let fourth = sigma.powi(4);
        smallest = smallest.min(sigma);
        norms_fourth.push(fourth);
        if sigma < 1.0 {
            return Ok(TailConstants {
                k0: k,
                c0,
                c1: fourth,
                second_moment_rate: 1.0 - (1.0 - fourth) / (k as f64 * c0),
                norms_fourth,
            });
        }
        c0 = c0.max(fourth);

        sparse.mul_into(&m, &mut next);
        std::mem::swap(&mut m, &mut next);
        let amax = m.amax();
        if amax == 0.0 {
            // Nilpotent: the next power is exactly zero.
            norms_fourth.push(0.0);
            let k0 = k + 1;
            return Ok(TailConstants {
                k0,
                c0,
                c1: 0.0,
                second_moment_rate: 1.0 - 1.0 / (k0 as f64 * c0),
                norms_fourth,
            });
        }
        if !(1e-100..=1e100).contains(&amax) {
            m /= amax;
            log_scale += amax.ln();
        }
    }
    Err(Error::HorizonExhausted { horizon, smallest })
}

/// The chain `λ_max(P̃_m) < Σ_{k≤horizon} ‖W̃^k‖⁴ ≤ k₀c₀/(1-c₁)` evaluated numerically.
#[derive(Debug, Clone, Serialize)]
pub struct SecondMomentReport {
    /// `λ_max` of the solution of `Γᵀ P̃ Γ - P̃ = -I`, `Γ = W̃ ⊗ W̃`.
    pub lambda_max_lifted: f64,
    pub lifted_residual: f64,
    pub truncated_sum: f64,
    pub closed_form_bound: f64,
    pub tail: TailConstants,
    pub first_strict: bool,
    pub second_holds: bool,
    pub second_strict: bool,
}

pub fn second_moment_bound_check(w: &DMatrix<f64>, horizon: usize) -> Result<SecondMomentReport> {
    let n = w.nrows();
    let lifted = n * n;
    if lifted > LIFTED_DIM_LIMIT {
        return Err(Error::DimensionGuard {
            what: "lifted second-moment Lyapunov solve",
            dim: lifted,
            limit: LIFTED_DIM_LIMIT,
        });
    }
    let tail = tail_constants(w, horizon.max(1))?;
    let gamma = linalg::kron(w, w);
    let method = if gamma.nrows() <= KRONECKER_HARD_LIMIT {
        LyapunovMethod::Kronecker
    } else {
        LyapunovMethod::Series
    };
    let cert = solve_discrete_lyapunov_with(&gamma, method, None)?;

    // Independent of the tail walk: dense powers and full SVDs.
    let mut power = DMatrix::<f64>::identity(n, n);
    let mut truncated_sum = 0.0;
    for _ in 0..=horizon {
        truncated_sum += linalg::spectral_norm_svd(&power).powi(4);
        power = &power * w;
    }
    let closed_form_bound = tail.series_bound();
    Ok(SecondMomentReport {
        lambda_max_lifted: cert.lambda_max,
        lifted_residual: cert.residual,
        truncated_sum,
        closed_form_bound,
        first_strict: cert.lambda_max < truncated_sum,
        second_holds: truncated_sum <= closed_form_bound,
        second_strict: truncated_sum < closed_form_bound,
        tail,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct KronNormReport {
    pub power: usize,
    /// `‖(W̃ ⊗ W̃)^k‖₂`.
    pub lifted_norm: f64,
    /// `‖W̃^k‖₂²`.
    pub squared_norm: f64,
    pub abs_diff: f64,
}

/// Compares `‖(W̃ ⊗ W̃)^k‖` with `‖W̃^k‖²` by materializing the lifted power.
pub fn kron_norm_identity_check(w: &DMatrix<f64>, k: usize) -> Result<KronNormReport> {
    let n = w.nrows();
    if n * n > KRON_POWER_LIMIT {
        return Err(Error::DimensionGuard {
            what: "Kronecker power materialization",
            dim: n * n,
            limit: KRON_POWER_LIMIT,
        });
    }
    let gamma = linalg::kron(w, w);
    let mut lifted = DMatrix::<f64>::identity(n * n, n * n);
    let mut base = DMatrix::<f64>::identity(n, n);
    for _ in 0..k {
        lifted = &lifted * &gamma;
        base = &base * w;
    }
    let lifted_norm = linalg::spectral_norm_svd(&lifted);
    let squared_norm = linalg::spectral_norm_svd(&base).powi(2);
    Ok(KronNormReport {
        power: k,
        lifted_norm,
        squared_norm,
        abs_diff: (lifted_norm - squared_norm).abs(),
    })
}
