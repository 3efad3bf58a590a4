//! Seeded Monte Carlo simulation of the buffered asynchronous update.
//!
//! The simulator works on `q` buffered grid states (`O(N n q)` memory, `O(N n)`
//! work per step) and never forms mode matrices. Its arithmetic is ordered to
//! match a dense product with the corresponding mode matrix term for term.

use nalgebra::DVector;
use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::grid::{steady_state_profile, BoundaryConditions, StateVector};
use crate::modes::{AugmentedSpec, DelayPattern, SwitchingDistribution};

/// History of the last `q` grid states, newest first.
#[derive(Debug, Clone)]
pub struct AsyncSimState {
    len: usize,
    q: usize,
    head: usize,
    buffers: Vec<f64>,
    scratch: Vec<f64>,
    step: usize,
}

impl AsyncSimState {
    pub fn buffer_len(&self) -> usize {
        self.q
    }

    pub fn grid_len(&self) -> usize {
        self.len
    }

    /// Step counter `k`.
    pub fn step(&self) -> usize {
        self.step
    }

    /// Grid state `U(k - depth)`.
    pub fn buffer(&self, depth: usize) -> &[f64] {
        let slot = (self.head + depth) % self.q;
        &self.buffers[slot * self.len..(slot + 1) * self.len]
    }

    /// Newest grid state `U(k)`.
    pub fn newest(&self) -> &[f64] {
        self.buffer(0)
    }

    /// Augmented state `X(k)`.
    pub fn augmented(&self) -> DVector<f64> {
        let mut x = DVector::zeros(self.len * self.q);
        for d in 0..self.q {
            x.rows_mut(d * self.len, self.len)
                .copy_from_slice(self.buffer(d));
        }
        x
    }

    /// Rebuilds a state from an augmented vector (newest block first).
    pub fn from_augmented(x: &DVector<f64>, q: usize, step: usize) -> Result<Self> {
        if q == 0 || x.len() % q != 0 {
            return Err(Error::DimensionMismatch {
                expected: q,
                actual: x.len(),
            });
        }
        let len = x.len() / q;
        Ok(Self {
            len,
            q,
            head: 0,
            buffers: x.as_slice().to_vec(),
            scratch: vec![0.0; len],
            step,
        })
    }
}

/// Primes every buffer with the initial grid state.
pub fn init_state(initial: &StateVector, q: usize) -> AsyncSimState {
    let len = initial.len();
    let mut buffers = Vec::with_capacity(len * q);
    for _ in 0..q {
        buffers.extend_from_slice(initial.as_slice());
    }
    AsyncSimState {
        len,
        q,
        head: 0,
        buffers,
        scratch: vec![0.0; len],
        step: 0,
    }
}

/// Draws delay patterns from a [`SwitchingDistribution`].
#[derive(Debug, Clone)]
pub struct DelaySampler {
    q: usize,
    kind: SamplerKind,
}

#[derive(Debug, Clone)]
enum SamplerKind {
    Uniform(usize),
    Weighted(Vec<WeightedIndex<f64>>),
}

impl DelaySampler {
    pub fn new(dist: &SwitchingDistribution) -> Result<Self> {
        let edges = dist.per_edge().len();
        let q = dist.per_edge().first().map_or(1, Vec::len);
        let kind = if dist.is_uniform() {
            SamplerKind::Uniform(edges)
        } else {
            let per_edge = dist
                .per_edge()
                .iter()
                .map(|p| {
                    WeightedIndex::new(p.iter().copied())
                        .map_err(|e| Error::InvalidDistribution(e.to_string()))
                })
                .collect::<Result<Vec<_>>>()?;
            SamplerKind::Weighted(per_edge)
        };
        Ok(Self { q, kind })
    }

    pub fn num_edges(&self) -> usize {
        match &self.kind {
            SamplerKind::Uniform(e) => *e,
            SamplerKind::Weighted(w) => w.len(),
        }
    }

    /// Fills `pattern` with one independent draw per edge.
    pub fn sample_into<R: Rng + ?Sized>(&self, rng: &mut R, pattern: &mut DelayPattern) {
        let out = pattern.as_mut_slice();
        match &self.kind {
            SamplerKind::Uniform(_) => {
                if self.q == 1 {
                    out.fill(0);
                } else {
                    for d in out.iter_mut() {
                        *d = rng.random_range(0..self.q);
                    }
                }
            }
            SamplerKind::Weighted(per_edge) => {
                for (d, w) in out.iter_mut().zip(per_edge) {
                    *d = w.sample(rng);
                }
            }
        }
    }
}

/// One delay pattern, each edge drawn independently.
pub fn sample_delays<R: Rng + ?Sized>(rng: &mut R, sampler: &DelaySampler) -> DelayPattern {
    let mut p = DelayPattern::zeros(sampler.num_edges());
    sampler.sample_into(rng, &mut p);
    p
}

/// One buffered asynchronous update in place.
///
/// Cross-PE neighbours are read at the depth given by `pattern`; within-PE
/// neighbours at depth 0. The three stencil terms are accumulated in the
/// order of their augmented column index, so the result is bit-identical to
/// `W(pattern) * X(k)`.
pub fn async_step(state: &mut AsyncSimState, pattern: &DelayPattern, aspec: &AugmentedSpec) {
    debug_assert_eq!(state.len, aspec.grid_len());
    debug_assert_eq!(state.q, aspec.buffer_len());
    debug_assert!(aspec.check_pattern(pattern).is_ok());
    let len = state.len;
    let q = state.q;
    let r = aspec.grid().r();
    let centre = 1.0 - 2.0 * r;
    let delays = pattern.as_slice();
    let head = state.head;
    let buffers = &state.buffers;
    let read = |depth: usize, idx: usize| buffers[((head + depth) % q) * len + idx];

    let mut scratch = std::mem::take(&mut state.scratch);
    scratch[0] = read(0, 0);
    scratch[len - 1] = read(0, len - 1);
    for p in aspec.plan() {
        let i = p.point;
        let dl = p.left_edge.map_or(0, |e| delays[e]);
        let dr = p.right_edge.map_or(0, |e| delays[e]);
        let mut terms = [
            (dl * len + i - 1, r * read(dl, i - 1)),
            (i, centre * read(0, i)),
            (dr * len + i + 1, r * read(dr, i + 1)),
        ];
        sort3_by_column(&mut terms);
        scratch[i] = terms[0].1 + terms[1].1 + terms[2].1;
    }
    // Overwrite the oldest slot; it becomes the newest.
    let slot = (head + q - 1) % q;
    state.buffers[slot * len..(slot + 1) * len].copy_from_slice(&scratch);
    state.scratch = scratch;
    state.head = slot;
    state.step += 1;
}

fn sort3_by_column(t: &mut [(usize, f64); 3]) {
    if t[0].0 > t[1].0 {
        t.swap(0, 1);
    }
    if t[1].0 > t[2].0 {
        t.swap(1, 2);
    }
    if t[0].0 > t[1].0 {
        t.swap(0, 1);
    }
}

/// One synchronous stencil step on a grid state, same summation order as `A * U`.
pub fn sync_stencil_step(u: &[f64], out: &mut [f64], r: f64) {
    let len = u.len();
    let centre = 1.0 - 2.0 * r;
    out[0] = u[0];
    out[len - 1] = u[len - 1];
    for i in 1..len - 1 {
        out[i] = r * u[i - 1] + centre * u[i] + r * u[i + 1];
    }
}

/// Everything needed to reproduce a simulation.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub aspec: AugmentedSpec,
    pub dist: SwitchingDistribution,
    /// Initial grid state; its end entries are overwritten by `bc`.
    pub initial: StateVector,
    pub bc: BoundaryConditions,
    pub steps: usize,
    pub seed: u64,
    pub epsilons: Vec<f64>,
    /// Steps at which the newest grid state is recorded.
    pub snapshot_steps: Vec<usize>,
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        if self.initial.len() != self.aspec.grid_len() {
            return Err(Error::DimensionMismatch {
                expected: self.aspec.grid_len(),
                actual: self.initial.len(),
            });
        }
        if self.dist.per_edge().len() != self.aspec.num_edges() {
            return Err(Error::InvalidDistribution(
                "distribution does not match the edge set".into(),
            ));
        }
        if let Some(e) = self.epsilons.iter().find(|e| !(e.is_finite() && **e > 0.0)) {
            return Err(Error::InvalidArgument(format!(
                "epsilon must be positive, got {e}"
            )));
        }
        Ok(())
    }

    /// Initial grid state with the Dirichlet values applied.
    pub fn initial_with_boundary(&self) -> StateVector {
        let mut u = self.initial.clone();
        self.bc.apply(&mut u);
        u
    }

    /// Augmented `X(0)`: the initial grid state replicated over all buffers.
    pub fn initial_augmented(&self) -> DVector<f64> {
        let u = self.initial_with_boundary();
        let len = u.len();
        DVector::from_fn(len * self.aspec.buffer_len(), |i, _| u[i % len])
    }

    /// `e(0) = X(0) - X_ss`.
    pub fn initial_error(&self) -> DVector<f64> {
        self.initial_augmented() - self.steady_state()
    }

    /// `X_ss = Psi X(0)`: the boundary ramp repeated over all buffers.
    pub fn steady_state(&self) -> DVector<f64> {
        let ramp = steady_state_profile(self.aspec.grid(), &self.bc);
        let len = ramp.len();
        let q = self.aspec.buffer_len();
        DVector::from_fn(len * q, |i, _| ramp[i % len])
    }
}

/// Per-step error of one run.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    /// `‖e(k)‖₂`, `k = 0..=steps`.
    pub error_norms: Vec<f64>,
    /// `‖e(k)‖∞`.
    pub error_inf_norms: Vec<f64>,
    /// Newest grid state at the requested steps.
    pub snapshots: Vec<(usize, StateVector)>,
}

impl Trajectory {
    fn with_capacity(steps: usize) -> Self {
        Self {
            error_norms: Vec::with_capacity(steps + 1),
            error_inf_norms: Vec::with_capacity(steps + 1),
            snapshots: Vec::new(),
        }
    }

    fn record(&mut self, state: &[f64], target: &[f64]) {
        let (sq, inf) = error_stats(state, target);
        self.error_norms.push(sq.sqrt());
        self.error_inf_norms.push(inf);
    }
}

fn error_stats(state: &[f64], target: &[f64]) -> (f64, f64) {
    state
        .iter()
        .zip(target)
        .fold((0.0, 0.0_f64), |(sq, inf), (x, t)| {
            let e = x - t;
            (sq + e * e, inf.max(e.abs()))
        })
}

/// Per-run seed for ensemble member `run`: `seed XOR splitmix64(run)`.
pub fn derive_seed(seed: u64, run: u64) -> u64 {
    seed ^ splitmix64(run)
}

fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// One asynchronous run seeded by `cfg.seed`; errors measured against `Psi X(0)`.
pub fn run_trajectory(cfg: &RunConfig) -> Result<Trajectory> {
    cfg.validate()?;
    run_seeded(cfg, cfg.seed)
}

fn run_seeded(cfg: &RunConfig, seed: u64) -> Result<Trajectory> {
    let sampler = DelaySampler::new(&cfg.dist)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut state = init_state(&cfg.initial_with_boundary(), cfg.aspec.buffer_len());
    let x_ss = cfg.steady_state();
    let mut pattern = DelayPattern::zeros(cfg.aspec.num_edges());
    let mut traj = Trajectory::with_capacity(cfg.steps);
    let mut aug = vec![0.0; x_ss.len()];
    let mut record = |state: &AsyncSimState, traj: &mut Trajectory| {
        fill_augmented(state, &mut aug);
        traj.record(&aug, x_ss.as_slice());
        if cfg.snapshot_steps.contains(&state.step) {
            traj.snapshots
                .push((state.step, DVector::from_column_slice(state.newest())));
        }
    };
    record(&state, &mut traj);
    for _ in 0..cfg.steps {
        sampler.sample_into(&mut rng, &mut pattern);
        async_step(&mut state, &pattern, &cfg.aspec);
        record(&state, &mut traj);
    }
    Ok(traj)
}

fn fill_augmented(state: &AsyncSimState, out: &mut [f64]) {
    for d in 0..state.q {
        out[d * state.len..(d + 1) * state.len].copy_from_slice(state.buffer(d));
    }
}

/// Synchronous reference `U(k+1) = A U(k)`; errors measured on the grid state against the ramp.
pub fn run_sync_reference(cfg: &RunConfig) -> Result<Trajectory> {
    cfg.validate()?;
    let r = cfg.aspec.grid().r();
    let ramp = steady_state_profile(cfg.aspec.grid(), &cfg.bc);
    let mut u = cfg.initial_with_boundary().as_slice().to_vec();
    let mut next = vec![0.0; u.len()];
    let mut traj = Trajectory::with_capacity(cfg.steps);
    for k in 0..=cfg.steps {
        if k > 0 {
            sync_stencil_step(&u, &mut next, r);
            std::mem::swap(&mut u, &mut next);
        }
        traj.record(&u, ramp.as_slice());
        if cfg.snapshot_steps.contains(&k) {
            traj.snapshots.push((k, DVector::from_column_slice(&u)));
        }
    }
    Ok(traj)
}

/// Statistics over `num_runs` independent runs.
#[derive(Debug, Clone)]
pub struct EnsembleResult {
    pub num_runs: usize,
    pub epsilons: Vec<f64>,
    /// Empirical mean error vector per step.
    pub mean_error: Vec<DVector<f64>>,
    /// Norm of the averaged error vector, `‖ē(k)‖`.
    pub mean_error_norm: Vec<f64>,
    /// Empirical `E‖e(k)‖²`.
    pub mean_sq_error_norm: Vec<f64>,
    /// Empirical componentwise `E[e_i(k)²]`.
    pub component_second_moment: Vec<DVector<f64>>,
    /// `exceedance[j][k]`: fraction of runs with `‖e(k)‖² > epsilons[j]`.
    pub exceedance: Vec<Vec<f64>>,
    /// `‖e(k)‖₂` for every run, indexed `[run][step]`.
    pub run_error_norms: Vec<Vec<f64>>,
    /// `‖e(k)‖∞` for every run.
    pub run_error_inf_norms: Vec<Vec<f64>>,
}

impl EnsembleResult {
    pub fn steps(&self) -> usize {
        self.mean_error.len().saturating_sub(1)
    }

    /// Componentwise standard error of the mean error vector at `step`.
    pub fn standard_error(&self, step: usize) -> DVector<f64> {
        let m = self.num_runs as f64;
        if self.num_runs < 2 {
            return DVector::zeros(self.mean_error[step].len());
        }
        let mean = &self.mean_error[step];
        let second = &self.component_second_moment[step];
        DVector::from_fn(mean.len(), |i, _| {
            let var = ((second[i] - mean[i] * mean[i]) * m / (m - 1.0)).max(0.0);
            (var / m).sqrt()
        })
    }
}

struct Member {
    state: AsyncSimState,
    rng: ChaCha8Rng,
    pattern: DelayPattern,
    errors: Vec<f64>,
}

/// Runs `num_runs` seeded trajectories.
///
/// Run `i` uses [`derive_seed`]`(cfg.seed, i)`. Runs advance in step chunks on
/// `workers` threads (0 = all cores); statistics are merged on the calling
/// thread in run order, so results do not depend on the worker count.
pub fn run_ensemble(cfg: &RunConfig, num_runs: usize, workers: usize) -> Result<EnsembleResult> {
    cfg.validate()?;
    if num_runs == 0 {
        return Err(Error::InvalidArgument("num_runs must be at least 1".into()));
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::InvalidArgument(e.to_string()))?;
    let sampler = DelaySampler::new(&cfg.dist)?;
    let dim = cfg.aspec.dim();
    let x_ss = cfg.steady_state();
    let initial = init_state(&cfg.initial_with_boundary(), cfg.aspec.buffer_len());

    // Bound the per-chunk error buffers to roughly 8M doubles.
    let chunk = (8_000_000 / (num_runs * dim).max(1)).clamp(1, 256);

    let mut members: Vec<Member> = (0..num_runs)
        .map(|i| Member {
            state: initial.clone(),
            rng: ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, i as u64)),
            pattern: DelayPattern::zeros(cfg.aspec.num_edges()),
            errors: vec![0.0; chunk * dim],
        })
        .collect();

    let mut acc = Accumulator::new(cfg, num_runs, dim);
    let mut first = vec![0.0; dim];
    fill_augmented(&initial, &mut first);
    for (e, t) in first.iter_mut().zip(x_ss.iter()) {
        *e -= t;
    }
    for run in 0..num_runs {
        acc.add(run, &first);
    }
    acc.finish_step();

    let mut done = 0;
    while done < cfg.steps {
        let n = chunk.min(cfg.steps - done);
        pool.install(|| {
            members.par_iter_mut().for_each(|m| {
                for s in 0..n {
                    sampler.sample_into(&mut m.rng, &mut m.pattern);
                    async_step(&mut m.state, &m.pattern, &cfg.aspec);
                    let out = &mut m.errors[s * dim..(s + 1) * dim];
                    fill_augmented(&m.state, out);
                    for (e, t) in out.iter_mut().zip(x_ss.iter()) {
                        *e -= t;
                    }
                }
            })
        });
        for s in 0..n {
            for (run, m) in members.iter().enumerate() {
                acc.add(run, &m.errors[s * dim..(s + 1) * dim]);
            }
            acc.finish_step();
        }
        done += n;
    }
    Ok(acc.into_result())
}

struct Accumulator {
    num_runs: usize,
    epsilons: Vec<f64>,
    sum: DVector<f64>,
    sum_sq: DVector<f64>,
    sum_norm_sq: f64,
    exceed: Vec<usize>,
    out: EnsembleResult,
}

impl Accumulator {
    fn new(cfg: &RunConfig, num_runs: usize, dim: usize) -> Self {
        let steps = cfg.steps + 1;
        Self {
            num_runs,
            epsilons: cfg.epsilons.clone(),
            sum: DVector::zeros(dim),
            sum_sq: DVector::zeros(dim),
            sum_norm_sq: 0.0,
            exceed: vec![0; cfg.epsilons.len()],
            out: EnsembleResult {
                num_runs,
                epsilons: cfg.epsilons.clone(),
                mean_error: Vec::with_capacity(steps),
                mean_error_norm: Vec::with_capacity(steps),
                mean_sq_error_norm: Vec::with_capacity(steps),
                component_second_moment: Vec::with_capacity(steps),
                exceedance: vec![Vec::with_capacity(steps); cfg.epsilons.len()],
                run_error_norms: vec![Vec::with_capacity(steps); num_runs],
                run_error_inf_norms: vec![Vec::with_capacity(steps); num_runs],
            },
        }
    }

    fn add(&mut self, run: usize, err: &[f64]) {
        let mut norm_sq = 0.0;
        let mut inf = 0.0_f64;
        for (i, &e) in err.iter().enumerate() {
            self.sum[i] += e;
            self.sum_sq[i] += e * e;
            norm_sq += e * e;
            inf = inf.max(e.abs());
        }
        self.sum_norm_sq += norm_sq;
        for (count, eps) in self.exceed.iter_mut().zip(&self.epsilons) {
            if norm_sq > *eps {
                *count += 1;
            }
        }
        self.out.run_error_norms[run].push(norm_sq.sqrt());
        self.out.run_error_inf_norms[run].push(inf);
    }

    fn finish_step(&mut self) {
        let m = self.num_runs as f64;
        let mean = &self.sum / m;
        self.out.mean_error_norm.push(mean.norm());
        self.out.mean_error.push(mean);
        self.out.component_second_moment.push(&self.sum_sq / m);
        self.out.mean_sq_error_norm.push(self.sum_norm_sq / m);
        for (j, count) in self.exceed.iter_mut().enumerate() {
            self.out.exceedance[j].push(*count as f64 / m);
            *count = 0;
        }
        self.sum.fill(0.0);
        self.sum_sq.fill(0.0);
        self.sum_norm_sq = 0.0;
    }

    fn into_result(self) -> EnsembleResult {
        self.out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{build_sync_matrix, cos2_initial_condition, GridSpec};
    use crate::modes::build_mode_matrix;

    fn config(n: usize, q: usize, steps: usize, seed: u64) -> RunConfig {
        let grid = GridSpec::with_ratio(n, 1, 0.5).unwrap();
        let aspec = AugmentedSpec::new(grid, q).unwrap();
        RunConfig {
            dist: SwitchingDistribution::uniform(&aspec),
            initial: cos2_initial_condition(&grid),
            aspec,
            bc: BoundaryConditions::new(1.0, 0.0),
            steps,
            seed,
            epsilons: vec![0.01, 1.0],
            snapshot_steps: vec![0, steps],
        }
    }

    #[test]
    fn priming_replicates_initial_state() {
        let u = DVector::from_vec(vec![1.0, 0.3, 0.7, 0.0]);
        let s = init_state(&u, 3);
        for d in 0..3 {
            assert_eq!(s.buffer(d), u.as_slice());
        }
        let x = s.augmented();
        assert_eq!(x.len(), 12);
        assert_eq!(&x.as_slice()[8..], u.as_slice());
    }

    #[test]
    fn first_step_from_primed_state_is_synchronous() {
        let cfg = config(6, 3, 1, 0);
        let u0 = cfg.initial_with_boundary();
        let a = build_sync_matrix(cfg.aspec.grid());
        let want = &a * &u0;
        let pattern = DelayPattern::new(vec![2, 1, 0, 2, 1, 1, 0, 2]);
        let mut s = init_state(&u0, 3);
        async_step(&mut s, &pattern, &cfg.aspec);
        assert_eq!(s.newest(), want.as_slice());
        assert_eq!(s.buffer(1), u0.as_slice());
        assert_eq!(s.step(), 1);
    }

    #[test]
    fn async_step_equals_mode_product() {
        let cfg = config(5, 3, 0, 0);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let sampler = DelaySampler::new(&cfg.dist).unwrap();
        let x = DVector::from_fn(15, |_, _| rng.random_range(-1.0..1.0));
        for _ in 0..20 {
            let p = sample_delays(&mut rng, &sampler);
            let mut s = AsyncSimState::from_augmented(&x, 3, 0).unwrap();
            async_step(&mut s, &p, &cfg.aspec);
            let w = build_mode_matrix(&cfg.aspec, &p).unwrap().w;
            assert_eq!(s.augmented(), &w * &x);
        }
    }

    #[test]
    fn q1_sampler_gives_zeros() {
        let grid = GridSpec::with_ratio(6, 1, 0.5).unwrap();
        let aspec = AugmentedSpec::new(grid, 1).unwrap();
        let sampler = DelaySampler::new(&SwitchingDistribution::uniform(&aspec)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..10 {
            assert!(sample_delays(&mut rng, &sampler).as_slice().iter().all(|&d| d == 0));
        }
    }

    #[test]
    fn sampler_frequencies() {
        let grid = GridSpec::with_ratio(3, 1, 0.5).unwrap();
        let aspec = AugmentedSpec::new(grid, 3).unwrap();
        let check = |dist: SwitchingDistribution, probs: [f64; 3]| {
            let sampler = DelaySampler::new(&dist).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(2024);
            let draws = 100_000;
            let mut counts = [0usize; 3];
            for _ in 0..draws {
                counts[sample_delays(&mut rng, &sampler).as_slice()[0]] += 1;
            }
            for (c, p) in counts.iter().zip(probs) {
                let sigma = (draws as f64 * p * (1.0 - p)).sqrt();
                assert!((*c as f64 - draws as f64 * p).abs() < 3.0 * sigma, "{counts:?}");
            }
        };
        check(SwitchingDistribution::uniform(&aspec), [1.0 / 3.0; 3]);
        check(
            SwitchingDistribution::shared(&aspec, vec![0.2, 0.5, 0.3]).unwrap(),
            [0.2, 0.5, 0.3],
        );
    }

    #[test]
    fn sampling_is_deterministic() {
        let grid = GridSpec::with_ratio(10, 1, 0.5).unwrap();
        let aspec = AugmentedSpec::new(grid, 3).unwrap();
        let sampler = DelaySampler::new(&SwitchingDistribution::uniform(&aspec)).unwrap();
        let seq = |seed| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            (0..50).map(|_| sample_delays(&mut rng, &sampler)).collect::<Vec<_>>()
        };
        assert_eq!(seq(7), seq(7));
        assert_ne!(seq(7), seq(8));
    }

    #[test]
    fn steady_initial_state_stays_put() {
        let mut cfg = config(8, 3, 50, 3);
        cfg.initial = steady_state_profile(cfg.aspec.grid(), &cfg.bc);
        let t = run_trajectory(&cfg).unwrap();
        assert!(t.error_norms.iter().all(|&e| e < 1e-15));
    }

    #[test]
    fn trajectories_are_seed_deterministic() {
        let a = run_trajectory(&config(10, 3, 200, 5)).unwrap();
        let b = run_trajectory(&config(10, 3, 200, 5)).unwrap();
        let c = run_trajectory(&config(10, 3, 200, 6)).unwrap();
        assert_eq!(a, b);
        assert_ne!(a.error_norms, c.error_norms);
        assert_eq!(a.error_norms.len(), 201);
        assert_eq!(a.snapshots.len(), 2);
    }

    #[test]
    fn sync_reference_matches_q1_async() {
        let mut cfg = config(12, 1, 100, 0);
        cfg.aspec = AugmentedSpec::new(*cfg.aspec.grid(), 1).unwrap();
        cfg.dist = SwitchingDistribution::uniform(&cfg.aspec);
        let s = run_sync_reference(&cfg).unwrap();
        let a = run_trajectory(&cfg).unwrap();
        assert_eq!(s.error_norms, a.error_norms);
    }

    #[test]
    fn sync_reference_obeys_max_principle() {
        let cfg = config(30, 1, 500, 0);
        let u0 = cfg.initial_with_boundary();
        let lo = u0.min();
        let hi = u0.max();
        let mut u = u0.as_slice().to_vec();
        let mut next = vec![0.0; u.len()];
        for _ in 0..500 {
            sync_stencil_step(&u, &mut next, 0.5);
            std::mem::swap(&mut u, &mut next);
            assert!(u.iter().all(|&v| v >= lo && v <= hi));
        }
        let t = run_sync_reference(&cfg).unwrap();
        assert!(t.error_norms.windows(2).all(|w| w[1] <= w[0] + 1e-15));
    }

    #[test]
    fn single_run_ensemble_matches_trajectory() {
        let cfg = config(8, 2, 100, 42);
        let ens = run_ensemble(&cfg, 1, 1).unwrap();
        let mut single = cfg.clone();
        single.seed = derive_seed(cfg.seed, 0);
        let t = run_trajectory(&single).unwrap();
        for (a, b) in ens.mean_error_norm.iter().zip(&t.error_norms) {
            assert!((a - b).abs() <= 1e-15 * b.max(1.0));
        }
        for row in &ens.exceedance {
            assert!(row.iter().all(|&p| p == 0.0 || p == 1.0));
        }
    }

    #[test]
    fn ensemble_independent_of_worker_count() {
        let cfg = config(8, 3, 300, 1);
        let a = run_ensemble(&cfg, 7, 1).unwrap();
        let b = run_ensemble(&cfg, 7, 3).unwrap();
        assert_eq!(a.mean_error_norm, b.mean_error_norm);
        assert_eq!(a.exceedance, b.exceedance);
    }

    #[test]
    fn rejects_bad_config() {
        let mut cfg = config(8, 3, 10, 1);
        cfg.epsilons = vec![0.0];
        assert!(run_trajectory(&cfg).is_err());
        let mut cfg = config(8, 3, 10, 1);
        cfg.initial = DVector::zeros(3);
        assert!(run_ensemble(&cfg, 2, 1).is_err());
        assert!(run_ensemble(&config(8, 3, 10, 1), 0, 1).is_err());
    }
}
