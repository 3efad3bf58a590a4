//! One-dimensional explicit heat-equation discretization.
//!
//! Grid points are indexed from 0 internally. The first and last points carry
//! Dirichlet values and are updated by identity rows, so boundary values live
//! inside the state vector rather than beside it.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// State of the whole grid, `U(k)`, of length `num_pes * points_per_pe`.
pub type StateVector = DVector<f64>;

/// Largest admissible diffusion number for the explicit scheme.
pub const MAX_RATIO: f64 = 0.5;

/// Physical and numerical parameters of the discretization.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GridSpec {
    num_pes: usize,
    points_per_pe: usize,
    dx: f64,
    dt: f64,
    alpha: f64,
    r: f64,
}

impl GridSpec {
    /// Builds a grid from physical parameters, computing `r = alpha * dt / dx^2`.
    ///
    /// A ratio within a few ulps of 0.5 is snapped to exactly 0.5, so that
    /// e.g. `dx = 0.1, dt = 0.01, alpha = 0.5` gives a zero centre coefficient.
    pub fn new(num_pes: usize, points_per_pe: usize, dx: f64, dt: f64, alpha: f64) -> Result<Self> {
        for (name, v) in [("dx", dx), ("dt", dt), ("alpha", alpha)] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::InvalidGrid(format!("{name} must be positive, got {v}")));
            }
        }
        let mut r = alpha * dt / (dx * dx);
        if (r - MAX_RATIO).abs() <= 4.0 * f64::EPSILON * MAX_RATIO {
            r = MAX_RATIO;
        }
        Self::build(num_pes, points_per_pe, dx, dt, alpha, r)
    }

    /// Builds a grid directly from the diffusion number (unit `dx` and `alpha`, `dt = r`).
    pub fn with_ratio(num_pes: usize, points_per_pe: usize, r: f64) -> Result<Self> {
        Self::build(num_pes, points_per_pe, 1.0, r, 1.0, r)
    }

    fn build(
        num_pes: usize,
        points_per_pe: usize,
        dx: f64,
        dt: f64,
        alpha: f64,
        r: f64,
    ) -> Result<Self> {
        if num_pes == 0 || points_per_pe == 0 {
            return Err(Error::InvalidGrid(
                "num_pes and points_per_pe must be positive".into(),
            ));
        }
        if num_pes * points_per_pe < 3 {
            return Err(Error::InvalidGrid(format!(
                "need at least 3 grid points, got {}",
                num_pes * points_per_pe
            )));
        }
        if !(r > 0.0 && r <= MAX_RATIO) {
            return Err(Error::UnstableRatio { r });
        }
        Ok(Self {
            num_pes,
            points_per_pe,
            dx,
            dt,
            alpha,
            r,
        })
    }

    pub fn num_pes(&self) -> usize {
        self.num_pes
    }

    pub fn points_per_pe(&self) -> usize {
        self.points_per_pe
    }

    pub fn dx(&self) -> f64 {
        self.dx
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    /// Diffusion number `alpha * dt / dx^2`.
    pub fn r(&self) -> f64 {
        self.r
    }

    /// Total number of grid points `N * n`.
    pub fn len(&self) -> usize {
        self.num_pes * self.points_per_pe
    }

    /// Never true; a valid grid has at least three points.
    pub fn is_empty(&self) -> bool {
        false
    }

    /// Index of the PE owning grid point `i` (0-based).
    pub fn pe_of(&self, i: usize) -> usize {
        i / self.points_per_pe
    }

    /// Interior points, i.e. everything except the two Dirichlet rows.
    pub fn interior(&self) -> std::ops::Range<usize> {
        1..self.len() - 1
    }
}

/// Fixed temperatures at the two ends of the rod.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundaryConditions {
    pub left: f64,
    pub right: f64,
}

impl BoundaryConditions {
    pub fn new(left: f64, right: f64) -> Self {
        Self { left, right }
    }

    /// Overwrites the first and last entries of `u` with the boundary values.
    pub fn apply(&self, u: &mut StateVector) {
        let n = u.len();
        if n == 0 {
            return;
        }
        u[0] = self.left;
        u[n - 1] = self.right;
    }
}

/// Synchronous update matrix `A`: identity first/last rows, `(r, 1-2r, r)` elsewhere.
pub fn build_sync_matrix(spec: &GridSpec) -> DMatrix<f64> {
    let len = spec.len();
    let r = spec.r();
    let centre = 1.0 - 2.0 * r;
    let mut a = DMatrix::zeros(len, len);
    a[(0, 0)] = 1.0;
    a[(len - 1, len - 1)] = 1.0;
    for i in spec.interior() {
        a[(i, i - 1)] = r;
        a[(i, i)] = centre;
        a[(i, i + 1)] = r;
    }
    a
}

/// One synchronous step `U(k+1) = A U(k)`.
pub fn sync_step(a: &DMatrix<f64>, u: &StateVector) -> Result<StateVector> {
    if a.ncols() != u.len() || a.nrows() != u.len() {
        return Err(Error::DimensionMismatch {
            expected: a.ncols(),
            actual: u.len(),
        });
    }
    Ok(a * u)
}

/// `u_i = cos^2(3 pi i / (2 (Nn - 1)))` with the 1-based grid index `i`.
///
/// The Dirichlet values are not applied here; see [`BoundaryConditions::apply`].
pub fn cos2_initial_condition(spec: &GridSpec) -> StateVector {
    let len = spec.len();
    let denom = 2.0 * (len as f64 - 1.0);
    DVector::from_fn(len, |j, _| {
        let i = (j + 1) as f64;
        (3.0 * std::f64::consts::PI * i / denom).cos().powi(2)
    })
}

/// Linear ramp between the two boundary values; the common fixed point of every mode.
pub fn steady_state_profile(spec: &GridSpec, bc: &BoundaryConditions) -> StateVector {
    let len = spec.len();
    let span = (len - 1) as f64;
    DVector::from_fn(len, |j, _| {
        let w_right = j as f64 / span;
        let w_left = (len - 1 - j) as f64 / span;
        bc.left * w_left + bc.right * w_right
    })
}

/// Left and right ramp weights `(mu_1, mu_2)` over the grid.
pub(crate) fn ramp_weights(len: usize) -> (DVector<f64>, DVector<f64>) {
    let span = (len - 1) as f64;
    let mu1 = DVector::from_fn(len, |j, _| (len - 1 - j) as f64 / span);
    let mu2 = DVector::from_fn(len, |j, _| j as f64 / span);
    (mu1, mu2)
}
