//! Dense linear-algebra helpers shared by the mode and analysis modules.

use nalgebra::{Complex, DMatrix, DVector};

use crate::error::{Error, Result};

/// Below this dimension spectral radii come from a dense eigensolver.
pub const DENSE_EIGEN_LIMIT: usize = 500;

/// All eigenvalues, sorted by decreasing modulus.
pub fn eigenvalues_by_modulus(m: &DMatrix<f64>) -> Result<Vec<Complex<f64>>> {
    if !m.is_square() {
        return Err(Error::DimensionMismatch {
            expected: m.nrows(),
            actual: m.ncols(),
        });
    }
    if m.nrows() == 0 {
        return Ok(Vec::new());
    }
    // Exactly repeated eigenvalues can stall deflation at machine precision.
    let schur = [f64::EPSILON, 64.0 * f64::EPSILON, 1e-12]
        .iter()
        .find_map(|&eps| m.clone().try_schur(eps, 10_000 * m.nrows()))
        .ok_or(Error::EigenFailure)?;
    let mut eig: Vec<Complex<f64>> = schur.complex_eigenvalues().iter().copied().collect();
    eig.sort_by(|a, b| b.norm().total_cmp(&a.norm()));
    Ok(eig)
}

/// Spectral radius; dense eigensolver below [`DENSE_EIGEN_LIMIT`], power iteration above.
pub fn spectral_radius(m: &DMatrix<f64>) -> Result<f64> {
    if m.nrows() < DENSE_EIGEN_LIMIT {
        Ok(eigenvalues_by_modulus(m)?
            .first()
            .map(|z| z.norm())
            .unwrap_or(0.0))
    } else {
        Ok(power_spectral_radius(m, 20_000))
    }
}

/// Geometric-mean growth rate of a power iteration over its second half.
///
/// Handles complex-conjugate dominant pairs, where single-step ratios oscillate.
pub fn power_spectral_radius(m: &DMatrix<f64>, iters: usize) -> f64 {
    let n = m.nrows();
    // Deterministic, generic start vector.
    let mut x = DVector::from_fn(n, |i, _| 1.0 + ((i * 7919) % 101) as f64 / 101.0);
    x /= x.norm();
    let burn = iters / 2;
    let mut log_sum = 0.0;
    for k in 0..iters {
        let y = m * &x;
        let nrm = y.norm();
        if nrm == 0.0 {
            return 0.0;
        }
        if k >= burn {
            log_sum += nrm.ln();
        }
        x = y / nrm;
    }
    (log_sum / (iters - burn) as f64).exp()
}

/// Maximum absolute row sum.
pub fn inf_norm(m: &DMatrix<f64>) -> f64 {
    m.row_iter()
        .map(|row| row.iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// Extreme eigenvalues `(min, max)` of a symmetric matrix.
pub fn symmetric_extremes(p: &DMatrix<f64>) -> (f64, f64) {
    let eig = p.clone().symmetric_eigenvalues();
    let min = eig.iter().copied().fold(f64::INFINITY, f64::min);
    let max = eig.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    (min, max)
}

/// Kronecker product `a ⊗ b`.
pub fn kron(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    a.kronecker(b)
}

/// Largest singular value from a full SVD.
pub fn spectral_norm_svd(m: &DMatrix<f64>) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    m.clone()
        .singular_values()
        .iter()
        .copied()
        .fold(0.0, f64::max)
}

/// Power iteration on `MᵀM`, warm-started from `v` (updated in place).
///
/// Returns a lower estimate of `‖M‖₂` that converges to it; stops when the
/// squared estimate changes by less than `rel_tol` relatively.
pub fn spectral_norm_power(
    m: &DMatrix<f64>,
    v: &mut DVector<f64>,
    rel_tol: f64,
    max_iter: usize,
) -> f64 {
    let nv = v.norm();
    if nv == 0.0 || !nv.is_finite() {
        v.fill(1.0);
    }
    let nv = v.norm();
    *v /= nv;
    let mut prev = 0.0_f64;
    for _ in 0..max_iter.max(1) {
        let y = m * &*v;
        let sigma2 = y.norm_squared();
        if sigma2 == 0.0 {
            return 0.0;
        }
        let z = m.tr_mul(&y);
        let nz = z.norm();
        if nz == 0.0 {
            return sigma2.sqrt();
        }
        *v = z / nz;
        if (sigma2 - prev).abs() <= rel_tol * sigma2 {
            return sigma2.sqrt();
        }
        prev = sigma2;
    }
    (m * &*v).norm()
}

/// Compressed-row copy of a dense matrix, for repeated products with mostly-zero operators.
#[derive(Debug, Clone)]
pub(crate) struct SparseRows {
    n: usize,
    row_start: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<f64>,
}

impl SparseRows {
    pub(crate) fn from_dense(m: &DMatrix<f64>) -> Self {
        let mut row_start = Vec::with_capacity(m.nrows() + 1);
        let mut cols = Vec::new();
        let mut vals = Vec::new();
        row_start.push(0);
        for i in 0..m.nrows() {
            for j in 0..m.ncols() {
                let v = m[(i, j)];
                if v != 0.0 {
                    cols.push(j);
                    vals.push(v);
                }
            }
            row_start.push(cols.len());
        }
        Self {
            n: m.nrows(),
            row_start,
            cols,
            vals,
        }
    }

    /// `out = self * rhs`, column by column.
    pub(crate) fn mul_into(&self, rhs: &DMatrix<f64>, out: &mut DMatrix<f64>) {
        for c in 0..rhs.ncols() {
            let src = rhs.column(c);
            let mut dst = out.column_mut(c);
            for i in 0..self.n {
                let mut acc = 0.0;
                for k in self.row_start[i]..self.row_start[i + 1] {
                    acc += self.vals[k] * src[self.cols[k]];
                }
                dst[i] = acc;
            }
        }
    }
}
