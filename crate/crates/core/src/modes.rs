//! Switched-system representation of the buffered asynchronous scheme.
//!
//! The augmented state stacks the `q` most recent grid states, newest first:
//! `X(k) = [U(k); U(k-1); ...; U(k-q+1)]`. Every cross-PE read of an interior
//! point is a *dependency edge*; a [`DelayPattern`] assigns each edge a delay
//! `d` in `0..q`, meaning the neighbour value is read from block `d` of `X(k)`.
//! Each pattern gives one mode matrix `W_j`, and there are `q^E` of them.

use std::fmt;

use nalgebra::{Complex, DMatrix, DVector, RowDVector};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::grid::{build_sync_matrix, ramp_weights, GridSpec};
use crate::linalg;

/// Default ceiling on the number of modes [`enumerate_modes`] will build.
pub const DEFAULT_MODE_CAP: u128 = 100_000;

/// Tolerance on eigenvalue claims in [`verify_eigenstructure`].
pub const EIGEN_TOL: f64 = 1e-10;

/// Tolerance on shared-eigenvector residuals.
pub const RESIDUAL_TOL: f64 = 1e-12;

/// Tolerance on per-edge probability sums.
pub const PROBABILITY_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Side {
    Left,
    Right,
}

/// A read of `neighbor` by the update of `point`, where the two lie in different PEs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct DependencyEdge {
    pub point: usize,
    pub neighbor: usize,
    pub side: Side,
}

/// Neighbour lookup for one interior point: `Some(edge)` when the read crosses a PE boundary.
#[derive(Debug, Clone, Copy)]
pub(crate) struct PointPlan {
    pub point: usize,
    pub left_edge: Option<usize>,
    pub right_edge: Option<usize>,
}

/// Grid plus buffer length; fixes the edge set and the augmented dimension `N n q`.
#[derive(Debug, Clone)]
pub struct AugmentedSpec {
    grid: GridSpec,
    buffer_len: usize,
    edges: Vec<DependencyEdge>,
    plan: Vec<PointPlan>,
}

impl AugmentedSpec {
    pub fn new(grid: GridSpec, buffer_len: usize) -> Result<Self> {
        if buffer_len == 0 {
            return Err(Error::InvalidArgument("buffer length must be at least 1".into()));
        }
        let mut edges = Vec::new();
        let mut plan = Vec::new();
        for i in grid.interior() {
            let mut entry = PointPlan {
                point: i,
                left_edge: None,
                right_edge: None,
            };
            if grid.pe_of(i - 1) != grid.pe_of(i) {
                entry.left_edge = Some(edges.len());
                edges.push(DependencyEdge {
                    point: i,
                    neighbor: i - 1,
                    side: Side::Left,
                });
            }
            if grid.pe_of(i + 1) != grid.pe_of(i) {
                entry.right_edge = Some(edges.len());
                edges.push(DependencyEdge {
                    point: i,
                    neighbor: i + 1,
                    side: Side::Right,
                });
            }
            plan.push(entry);
        }
        Ok(Self {
            grid,
            buffer_len,
            edges,
            plan,
        })
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    /// Buffer length `q`.
    pub fn buffer_len(&self) -> usize {
        self.buffer_len
    }

    /// Grid length `N n`.
    pub fn grid_len(&self) -> usize {
        self.grid.len()
    }

    /// Augmented dimension `N n q`.
    pub fn dim(&self) -> usize {
        self.grid.len() * self.buffer_len
    }

    /// Dependency edges, ordered by updating point then left before right.
    pub fn edges(&self) -> &[DependencyEdge] {
        &self.edges
    }

    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }

    pub(crate) fn plan(&self) -> &[PointPlan] {
        &self.plan
    }

    /// `q^E`, or `None` if it does not fit in a `u128`.
    pub fn mode_count(&self) -> Option<u128> {
        let e = u32::try_from(self.edges.len()).ok()?;
        (self.buffer_len as u128).checked_pow(e)
    }

    fn mode_count_display(&self) -> String {
        match self.mode_count() {
            Some(m) => m.to_string(),
            None => format!("{}^{}", self.buffer_len, self.edges.len()),
        }
    }

    pub fn check_pattern(&self, pattern: &DelayPattern) -> Result<()> {
        if pattern.len() != self.num_edges() {
            return Err(Error::InvalidPattern(format!(
                "expected {} delays, got {}",
                self.num_edges(),
                pattern.len()
            )));
        }
        if let Some((e, &d)) = pattern
            .as_slice()
            .iter()
            .enumerate()
            .find(|(_, &d)| d >= self.buffer_len)
        {
            return Err(Error::InvalidPattern(format!(
                "delay {d} on edge {e} outside 0..{}",
                self.buffer_len
            )));
        }
        Ok(())
    }

    /// Every delay pattern in lexicographic order (first edge most significant).
    pub fn patterns(&self, cap: u128) -> Result<PatternIter> {
        match self.mode_count() {
            Some(m) if m <= cap => Ok(PatternIter {
                q: self.buffer_len,
                next: Some(vec![0; self.num_edges()]),
            }),
            _ => Err(Error::TooManyModes {
                count: self.mode_count_display(),
                cap,
            }),
        }
    }
}

/// Per-edge delays; entry `d` on edge `e` means the neighbour is read as of step `k - d`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize)]
pub struct DelayPattern(Vec<usize>);

impl DelayPattern {
    pub fn new(delays: Vec<usize>) -> Self {
        Self(delays)
    }

    pub fn zeros(num_edges: usize) -> Self {
        Self(vec![0; num_edges])
    }

    /// The most delayed pattern: every edge reads the oldest buffer.
    pub fn worst_case(aspec: &AugmentedSpec) -> Self {
        Self(vec![aspec.buffer_len() - 1; aspec.num_edges()])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.0
    }

    pub(crate) fn as_mut_slice(&mut self) -> &mut [usize] {
        &mut self.0
    }
}

impl fmt::Display for DelayPattern {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.0.iter().map(|d| d.to_string()).collect();
        write!(f, "[{}]", parts.join(","))
    }
}

/// Odometer over `{0..q}^E`.
pub struct PatternIter {
    q: usize,
    next: Option<Vec<usize>>,
}

impl Iterator for PatternIter {
    type Item = DelayPattern;

    fn next(&mut self) -> Option<DelayPattern> {
        let current = self.next.take()?;
        let mut succ = current.clone();
        let mut carry = true;
        for d in succ.iter_mut().rev() {
            *d += 1;
            if *d < self.q {
                carry = false;
                break;
            }
            *d = 0;
        }
        if !carry {
            self.next = Some(succ);
        }
        Some(DelayPattern(current))
    }
}

/// One mode matrix `W_j` together with the pattern that produced it.
#[derive(Debug, Clone)]
pub struct ModeMatrix {
    pub w: DMatrix<f64>,
    pub pattern: DelayPattern,
}

/// Builds `W` for a pattern: top block row realizes the buffered stencil,
/// lower block rows shift the history by one.
pub fn build_mode_matrix(aspec: &AugmentedSpec, pattern: &DelayPattern) -> Result<ModeMatrix> {
    aspec.check_pattern(pattern)?;
    let len = aspec.grid_len();
    let q = aspec.buffer_len();
    let mut w = DMatrix::zeros(len * q, len * q);
    let a = build_sync_matrix(aspec.grid());
    w.view_mut((0, 0), (len, len)).copy_from(&a);
    for (edge, &d) in aspec.edges().iter().zip(pattern.as_slice()) {
        if d > 0 {
            let coeff = w[(edge.point, edge.neighbor)];
            w[(edge.point, edge.neighbor)] = 0.0;
            w[(edge.point, d * len + edge.neighbor)] += coeff;
        }
    }
    add_shift_register(&mut w, len, q);
    Ok(ModeMatrix {
        w,
        pattern: pattern.clone(),
    })
}

fn add_shift_register(w: &mut DMatrix<f64>, len: usize, q: usize) {
    for b in 1..q {
        for i in 0..len {
            w[(b * len + i, (b - 1) * len + i)] = 1.0;
        }
    }
}

/// All `q^E` mode matrices in lexicographic pattern order, refusing if there are more than `cap`.
pub fn enumerate_modes(aspec: &AugmentedSpec, cap: u128) -> Result<Vec<ModeMatrix>> {
    aspec
        .patterns(cap)?
        .map(|p| build_mode_matrix(aspec, &p))
        .collect()
}

/// The all-maximal-delay mode `W_m`.
pub fn worst_case_mode(aspec: &AugmentedSpec) -> ModeMatrix {
    build_mode_matrix(aspec, &DelayPattern::worst_case(aspec))
        .expect("worst-case pattern is valid by construction")
}

/// Rank-2 projector onto the shared unit eigenspace, `Psi = v1 s1 + v2 s2`.
#[derive(Debug, Clone)]
pub struct SteadyStateProjector {
    pub psi: DMatrix<f64>,
    pub v1: DVector<f64>,
    pub v2: DVector<f64>,
    pub s1: RowDVector<f64>,
    pub s2: RowDVector<f64>,
    grid_len: usize,
}

impl SteadyStateProjector {
    /// `Psi x` without touching the dense matrix.
    pub fn apply(&self, x: &DVector<f64>) -> DVector<f64> {
        &self.v1 * x[0] + &self.v2 * x[self.grid_len - 1]
    }
}

pub fn build_projector(aspec: &AugmentedSpec) -> SteadyStateProjector {
    let len = aspec.grid_len();
    let q = aspec.buffer_len();
    let dim = aspec.dim();
    let (mu1, mu2) = ramp_weights(len);
    let v1 = DVector::from_fn(dim, |i, _| mu1[i % len]);
    let v2 = DVector::from_fn(dim, |i, _| mu2[i % len]);
    let mut s1 = RowDVector::zeros(dim);
    let mut s2 = RowDVector::zeros(dim);
    s1[0] = 1.0;
    s2[len - 1] = 1.0;
    let psi = &v1 * &s1 + &v2 * &s2;
    debug_assert_eq!(psi.nrows(), len * q);
    SteadyStateProjector {
        psi,
        v1,
        v2,
        s1,
        s2,
        grid_len: len,
    }
}

/// `W - Psi`, checking that the result is a strict contraction in spectral radius.
pub fn deflate(w: &DMatrix<f64>, proj: &SteadyStateProjector) -> Result<DMatrix<f64>> {
    if w.shape() != proj.psi.shape() {
        return Err(Error::DimensionMismatch {
            expected: proj.psi.nrows(),
            actual: w.nrows(),
        });
    }
    let deflated = w - &proj.psi;
    let radius = linalg::spectral_radius(&deflated)?;
    if radius >= 1.0 - 1e-12 {
        return Err(Error::NotContractive { radius });
    }
    Ok(deflated)
}

/// Independent categorical delay distribution for every dependency edge.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SwitchingDistribution {
    per_edge: Vec<Vec<f64>>,
}

impl SwitchingDistribution {
    pub fn new(aspec: &AugmentedSpec, per_edge: Vec<Vec<f64>>) -> Result<Self> {
        if per_edge.len() != aspec.num_edges() {
            return Err(Error::InvalidDistribution(format!(
                "expected {} edge distributions, got {}",
                aspec.num_edges(),
                per_edge.len()
            )));
        }
        for (e, probs) in per_edge.iter().enumerate() {
            if probs.len() != aspec.buffer_len() {
                return Err(Error::InvalidDistribution(format!(
                    "edge {e}: expected {} probabilities, got {}",
                    aspec.buffer_len(),
                    probs.len()
                )));
            }
            if probs.iter().any(|p| !(p.is_finite() && *p >= 0.0)) {
                return Err(Error::InvalidDistribution(format!(
                    "edge {e}: probabilities must be finite and non-negative"
                )));
            }
            let sum: f64 = probs.iter().sum();
            if (sum - 1.0).abs() > PROBABILITY_TOL {
                return Err(Error::InvalidDistribution(format!(
                    "edge {e}: probabilities sum to {sum}"
                )));
            }
        }
        Ok(Self { per_edge })
    }

    /// Uniform over `0..q` on every edge.
    pub fn uniform(aspec: &AugmentedSpec) -> Self {
        let q = aspec.buffer_len();
        Self {
            per_edge: vec![vec![1.0 / q as f64; q]; aspec.num_edges()],
        }
    }

    /// The same categorical on every edge.
    pub fn shared(aspec: &AugmentedSpec, probs: Vec<f64>) -> Result<Self> {
        Self::new(aspec, vec![probs; aspec.num_edges()])
    }

    pub fn per_edge(&self) -> &[Vec<f64>] {
        &self.per_edge
    }

    pub fn is_uniform(&self) -> bool {
        self.per_edge.iter().all(|p| {
            let u = 1.0 / p.len() as f64;
            p.iter().all(|&x| x == u)
        })
    }
}

/// `pi_j`: product of the per-edge probabilities of the pattern's delays.
pub fn mode_probability(pattern: &DelayPattern, dist: &SwitchingDistribution) -> Result<f64> {
    if pattern.len() != dist.per_edge.len() {
        return Err(Error::DimensionMismatch {
            expected: dist.per_edge.len(),
            actual: pattern.len(),
        });
    }
    pattern
        .as_slice()
        .iter()
        .zip(&dist.per_edge)
        .try_fold(1.0, |acc, (&d, probs)| {
            probs
                .get(d)
                .map(|p| acc * p)
                .ok_or_else(|| Error::InvalidPattern(format!("delay {d} outside distribution")))
        })
}

/// Expected deflated mode `Lambda = sum_j pi_j (W_j - Psi)`, built without enumeration.
///
/// Each cross-PE coefficient `r` is spread over the delay block columns in
/// proportion to that edge's delay probabilities.
pub fn expected_matrix(aspec: &AugmentedSpec, dist: &SwitchingDistribution) -> Result<DMatrix<f64>> {
    if dist.per_edge.len() != aspec.num_edges() {
        return Err(Error::InvalidDistribution(
            "distribution does not match the edge set".into(),
        ));
    }
    let len = aspec.grid_len();
    let q = aspec.buffer_len();
    let mut lam = DMatrix::zeros(len * q, len * q);
    let a = build_sync_matrix(aspec.grid());
    lam.view_mut((0, 0), (len, len)).copy_from(&a);
    for (edge, probs) in aspec.edges().iter().zip(&dist.per_edge) {
        let coeff = lam[(edge.point, edge.neighbor)];
        lam[(edge.point, edge.neighbor)] = 0.0;
        for (d, p) in probs.iter().enumerate() {
            lam[(edge.point, d * len + edge.neighbor)] += coeff * p;
        }
    }
    add_shift_register(&mut lam, len, q);
    let proj = build_projector(aspec);
    Ok(lam - proj.psi)
}

/// `Lambda` by brute-force enumeration of every mode; the oracle for [`expected_matrix`].
pub fn expected_matrix_enumerated(
    aspec: &AugmentedSpec,
    dist: &SwitchingDistribution,
    cap: u128,
) -> Result<DMatrix<f64>> {
    let proj = build_projector(aspec);
    let dim = aspec.dim();
    let mut lam = DMatrix::zeros(dim, dim);
    for pattern in aspec.patterns(cap)? {
        let pi = mode_probability(&pattern, dist)?;
        if pi == 0.0 {
            continue;
        }
        let mode = build_mode_matrix(aspec, &pattern)?;
        lam += (mode.w - &proj.psi) * pi;
    }
    Ok(lam)
}

/// Outcome of checking the shared unit eigenstructure of one mode.
#[derive(Debug, Clone, Serialize)]
pub struct EigenReport {
    /// `‖W v_i - v_i‖` for `i = 1, 2`.
    pub right_residuals: [f64; 2],
    /// `‖s_i W - s_i‖` for `i = 1, 2`.
    pub left_residuals: [f64; 2],
    /// Up to three eigenvalues of largest modulus, as `(re, im)`.
    pub leading: Vec<(f64, f64)>,
    /// Eigenvalues within [`EIGEN_TOL`] of 1.
    pub unit_count: usize,
    /// Eigenvalues with modulus at least `1 - EIGEN_TOL`.
    pub near_unit_modulus: usize,
    pub inf_norm: f64,
    pub passed: bool,
}

pub fn verify_eigenstructure(w: &DMatrix<f64>, proj: &SteadyStateProjector) -> Result<EigenReport> {
    let right_residuals = [
        (w * &proj.v1 - &proj.v1).norm(),
        (w * &proj.v2 - &proj.v2).norm(),
    ];
    let left_residuals = [
        (&proj.s1 * w - &proj.s1).norm(),
        (&proj.s2 * w - &proj.s2).norm(),
    ];
    let eig = linalg::eigenvalues_by_modulus(w)?;
    let unit_count = eig
        .iter()
        .filter(|z| (**z - Complex::new(1.0, 0.0)).norm() < EIGEN_TOL)
        .count();
    let near_unit_modulus = eig.iter().filter(|z| z.norm() >= 1.0 - EIGEN_TOL).count();
    let third_ok = eig.get(2).is_none_or(|z| z.norm() < 1.0 - EIGEN_TOL);
    let inf_norm = linalg::inf_norm(w);
    let passed = right_residuals
        .iter()
        .chain(left_residuals.iter())
        .all(|&r| r < RESIDUAL_TOL)
        && unit_count == 2
        && near_unit_modulus == 2
        && third_ok;
    Ok(EigenReport {
        right_residuals,
        left_residuals,
        leading: eig.iter().take(3).map(|z| (z.re, z.im)).collect(),
        unit_count,
        near_unit_modulus,
        inf_norm,
        passed,
    })
}
