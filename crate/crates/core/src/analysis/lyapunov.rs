//! Discrete Lyapunov equation `W̃ᵀ P W̃ - P = -I`.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use super::CancelToken;
use crate::error::{Error, Result};
use crate::linalg;

/// `Auto` uses the Kronecker system up to this dimension.
pub const KRONECKER_AUTO_LIMIT: usize = 30;

/// The Kronecker system is refused above this dimension (`n²` unknowns, dense LU).
pub const KRONECKER_HARD_LIMIT: usize = 60;

/// Relative residual above which a certificate is flagged ill-conditioned.
pub const LYAPUNOV_RESIDUAL_TOL: f64 = 1e-8;

/// Series terms are summed until the increment falls below this fraction of `‖P‖`.
const SERIES_TOL: f64 = 1e-14;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum LyapunovMethod {
    Auto,
    /// Solve `(I - W̃ᵀ ⊗ W̃ᵀ) vec(P) = vec(I)` by LU.
    Kronecker,
    /// Sum `P = Σ (W̃ᵀ)^k W̃^k`, doubling the number of terms each sweep.
    Series,
}

/// A solution `P` together with the quantities derived from it.
#[derive(Debug, Clone, Serialize)]
pub struct LyapunovCertificate {
    #[serde(skip)]
    pub p: DMatrix<f64>,
    pub lambda_max: f64,
    pub lambda_min: f64,
    /// `‖W̃ᵀPW̃ - P + I‖_F / ‖P‖_F`.
    pub residual: f64,
    /// Decay factor `1 - 1/λ_max(P)` of `V(e) = eᵀPe` per step.
    pub rate: f64,
    /// Condition number `λ_max(P) / λ_min(P)`.
    pub k_const: f64,
    pub spectral_radius: f64,
    pub method: LyapunovMethod,
    pub ill_conditioned: bool,
}

pub fn solve_discrete_lyapunov(w: &DMatrix<f64>) -> Result<LyapunovCertificate> {
    solve_discrete_lyapunov_with(w, LyapunovMethod::Auto, None)
}

pub fn solve_discrete_lyapunov_with(
    w: &DMatrix<f64>,
    method: LyapunovMethod,
    cancel: Option<&CancelToken>,
) -> Result<LyapunovCertificate> {
    if !w.is_square() {
        return Err(Error::DimensionMismatch {
            expected: w.nrows(),
            actual: w.ncols(),
        });
    }
    let radius = linalg::spectral_radius(w)?;
    if radius >= 1.0 {
        return Err(Error::NonConvergent(format!(
            "spectral radius {radius} is not below 1"
        )));
    }
    let method = match method {
        LyapunovMethod::Auto if w.nrows() <= KRONECKER_AUTO_LIMIT => LyapunovMethod::Kronecker,
        LyapunovMethod::Auto => LyapunovMethod::Series,
        m => m,
    };
    let p = match method {
        LyapunovMethod::Kronecker => lyapunov_kronecker(w)?,
        _ => lyapunov_series(w, cancel)?,
    };
    Ok(certificate(w, p, radius, method))
}

fn certificate(
    w: &DMatrix<f64>,
    p: DMatrix<f64>,
    spectral_radius: f64,
    method: LyapunovMethod,
) -> LyapunovCertificate {
    let n = w.nrows();
    let resid = w.transpose() * &p * w - &p + DMatrix::<f64>::identity(n, n);
    let residual = resid.norm() / p.norm();
    let (lambda_min, lambda_max) = linalg::symmetric_extremes(&p);
    LyapunovCertificate {
        rate: 1.0 - 1.0 / lambda_max,
        k_const: lambda_max / lambda_min,
        lambda_max,
        lambda_min,
        residual,
        spectral_radius,
        method,
        ill_conditioned: !(residual < LYAPUNOV_RESIDUAL_TOL) || !(lambda_min > 0.0),
        p,
    }
}

/// Direct solve of the vectorized equation; `vec(W̃ᵀPW̃) = (W̃ᵀ ⊗ W̃ᵀ) vec(P)`.
pub fn lyapunov_kronecker(w: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = w.nrows();
    if n > KRONECKER_HARD_LIMIT {
        return Err(Error::DimensionGuard {
            what: "Kronecker Lyapunov solve",
            dim: n,
            limit: KRONECKER_HARD_LIMIT,
        });
    }
    let wt = w.transpose();
    let mut sys = -linalg::kron(&wt, &wt);
    for i in 0..n * n {
        sys[(i, i)] += 1.0;
    }
    let rhs = DVector::from_fn(n * n, |i, _| if i % (n + 1) == 0 { 1.0 } else { 0.0 });
    let sol = sys
        .lu()
        .solve(&rhs)
        .ok_or_else(|| Error::NonConvergent("singular Kronecker system".into()))?;
    let p = DMatrix::from_column_slice(n, n, sol.as_slice());
    Ok(symmetrize(p))
}

/// Convergent series with doubling: after sweep `j`, `P` holds the first `2^j` terms.
pub fn lyapunov_series(w: &DMatrix<f64>, cancel: Option<&CancelToken>) -> Result<DMatrix<f64>> {
    let n = w.nrows();
    let mut p = DMatrix::<f64>::identity(n, n);
    let mut a = w.clone();
    for _ in 0..64 {
        CancelToken::check(cancel)?;
        let inc = a.transpose() * &p * &a;
        let inc_norm = inc.norm();
        p += inc;
        if !p.iter().all(|v| v.is_finite()) {
            return Err(Error::NonConvergent("series diverged".into()));
        }
        if inc_norm <= SERIES_TOL * p.norm() {
            return Ok(symmetrize(p));
        }
        a = &a * &a;
    }
    Err(Error::NonConvergent(
        "series did not settle within 2^64 terms".into(),
    ))
}

fn symmetrize(p: DMatrix<f64>) -> DMatrix<f64> {
    (&p + p.transpose()) * 0.5
}
