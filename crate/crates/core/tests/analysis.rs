use async_heat::analysis::{
    convergence_rate_bound, error_probability_bound, exact_mean_curve, kron_norm_identity_check,
    lyapunov_kronecker, lyapunov_series, second_moment_bound_check, solve_discrete_lyapunov,
    solve_discrete_lyapunov_with, spectral_norm, tail_constants, verify_mean_contraction,
    LyapunovMethod, PrefactorPath, TailConstants,
};
use async_heat::grid::GridSpec;
use async_heat::modes::{
    build_mode_matrix, build_projector, deflate, expected_matrix, worst_case_mode, AugmentedSpec,
    DelayPattern, SwitchingDistribution,
};
use async_heat::Error;
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn aspec(num_pes: usize, q: usize) -> AugmentedSpec {
    AugmentedSpec::new(GridSpec::with_ratio(num_pes, 1, 0.5).unwrap(), q).unwrap()
}

fn worst_deflated(spec: &AugmentedSpec) -> DMatrix<f64> {
    deflate(&worst_case_mode(spec).w, &build_projector(spec)).unwrap()
}

fn diag(a: &[f64]) -> DMatrix<f64> {
    DMatrix::from_diagonal(&DVector::from_row_slice(a))
}

/// Plain partial sums of `Σ (Wᵀ)^k W^k`, one term at a time.
fn naive_series(w: &DMatrix<f64>, terms: usize) -> DMatrix<f64> {
    let n = w.nrows();
    let mut p = DMatrix::zeros(n, n);
    let mut power = DMatrix::<f64>::identity(n, n);
    for _ in 0..terms {
        p += power.transpose() * &power;
        power = &power * w;
    }
    p
}

fn random_stable(rng: &mut ChaCha8Rng, n: usize, radius: f64) -> DMatrix<f64> {
    let m = DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
    let rho = async_heat::linalg::spectral_radius(&m).unwrap();
    m * (radius / rho)
}

#[test]
fn zero_and_diagonal_solutions() {
    let cert = solve_discrete_lyapunov(&DMatrix::zeros(3, 3)).unwrap();
    assert_eq!(cert.lambda_max, 1.0);
    assert_eq!(cert.p, DMatrix::identity(3, 3));

    let a = [0.3, -0.7, 0.95];
    let cert = solve_discrete_lyapunov(&diag(&a)).unwrap();
    for (i, ai) in a.iter().enumerate() {
        let want = 1.0 / (1.0 - ai * ai);
        assert!((cert.p[(i, i)] - want).abs() < 1e-11 * want);
    }
    assert!(cert.lambda_min > 0.0 && cert.rate > 0.0 && cert.rate < 1.0);
}

#[test]
fn small_worst_case_mode_certificate() {
    let w = worst_deflated(&aspec(3, 2));
    let cert = solve_discrete_lyapunov_with(&w, LyapunovMethod::Kronecker, None).unwrap();
    assert!(cert.lambda_max > 1.0);
    assert!(cert.residual < 1e-10);
    let oracle = naive_series(&w, 50);
    assert!((&cert.p - &oracle).amax() / oracle.amax() < 1e-12);
    assert!((cert.lambda_max - 3.5).abs() < 1e-12);
}

#[test]
fn unstable_input_is_rejected() {
    let w = diag(&[1.01, 0.2]);
    assert!(matches!(solve_discrete_lyapunov(&w), Err(Error::NonConvergent(_))));
    let proj = build_projector(&aspec(3, 2));
    assert!(matches!(deflate(&DMatrix::identity(6, 6), &proj), Err(Error::NotContractive { .. })));
}

#[test]
fn series_and_kronecker_agree() {
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    for n in [2, 5, 12, 20] {
        let w = random_stable(&mut rng, n, 0.9);
        let pk = lyapunov_kronecker(&w).unwrap();
        let ps = lyapunov_series(&w, None).unwrap();
        assert!((&pk - &ps).norm() / pk.norm() < 1e-8);
    }
}

#[test]
fn rate_bound_starts_above_initial_norm() {
    let w = worst_deflated(&aspec(4, 2));
    let cert = solve_discrete_lyapunov(&w).unwrap();
    let b = convergence_rate_bound(&cert, cert.k_const, 2.0, 3);
    assert!(b[0] >= 2.0);
    assert!((b[1] / b[0] - cert.rate.sqrt()).abs() < 1e-14);
}

#[test]
fn rate_bound_dominates_exact_mean() {
    let spec = aspec(4, 2);
    let dist = SwitchingDistribution::uniform(&spec);
    let lam = expected_matrix(&spec, &dist).unwrap();
    let worst = solve_discrete_lyapunov(&worst_deflated(&spec)).unwrap();
    let report = verify_mean_contraction(&lam, &worst, None).unwrap();
    assert!(report.certified());
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for _ in 0..10 {
        let e0 = DVector::from_fn(spec.dim(), |_, _| rng.random_range(-1.0..1.0));
        let bound = convergence_rate_bound(&worst, report.k_const, e0.norm(), 500);
        let exact = exact_mean_curve(&lam, &e0, 500);
        for k in 0..=500 {
            assert!(bound[k] >= exact.norms[k], "k = {k}");
        }
    }
}

#[test]
fn exact_mean_examples() {
    let lam = expected_matrix(&aspec(4, 2), &SwitchingDistribution::uniform(&aspec(4, 2))).unwrap();
    let zero = exact_mean_curve(&lam, &DVector::zeros(8), 20);
    assert!(zero.norms.iter().all(|&x| x == 0.0));
    let e0 = DVector::from_fn(8, |i, _| (i as f64).sin());
    let curve = exact_mean_curve(&lam, &e0, 2);
    assert_eq!(curve.vectors[1], &lam * &e0);
    assert_eq!(curve.vectors[2], &lam * (&lam * &e0));
}

#[test]
fn single_buffer_contraction_uses_solved_p() {
    // For q = 1 the expected matrix is the worst-case mode itself, so P = P_m.
    // ‖A - Psi‖ exceeds 1, so the identity check does not hold.
    let spec = aspec(10, 1);
    let lam = expected_matrix(&spec, &SwitchingDistribution::uniform(&spec)).unwrap();
    let w = worst_deflated(&spec);
    assert_eq!(lam, w);
    let worst = solve_discrete_lyapunov_with(&w, LyapunovMethod::Series, None).unwrap();
    let report = verify_mean_contraction(&lam, &worst, None).unwrap();
    let gram = lam.transpose() * &lam;
    let norm_sq = gram.symmetric_eigenvalues().max();
    assert!((report.identity_margin - (norm_sq - worst.rate)).abs() < 1e-10);
    assert!(!report.identity_holds);
    assert_eq!(report.path, PrefactorPath::SolvedP);
    assert!((report.k_const - worst.k_const).abs() < 1e-9 * worst.k_const);
    // Interior spectrum of the r = 1/2 stencil is cos(jπ/(M-1)).
    let rho = (std::f64::consts::PI / 9.0).cos();
    assert!((report.spectral_radius - rho).abs() < 1e-10);
}

#[test]
fn small_system_contraction_and_singularity() {
    let spec = aspec(3, 2);
    let lam = expected_matrix(&spec, &SwitchingDistribution::uniform(&spec)).unwrap();
    let worst = solve_discrete_lyapunov(&worst_deflated(&spec)).unwrap();
    let report = verify_mean_contraction(&lam, &worst, None).unwrap();
    assert!(report.identity_margin.is_finite());
    assert_eq!(report.identity_holds, report.identity_margin <= 0.0);
    assert!(report.certified());
    assert!(report.singular && report.smallest_singular_value < 1e-10);
}

#[test]
fn tail_constant_examples() {
    let tc = tail_constants(&diag(&[0.9, 0.5]), 10).unwrap();
    assert_eq!(tc.k0, 1);
    assert_eq!(tc.c0, 1.0);
    assert!((tc.c1 - 0.6561).abs() < 1e-12);

    let tc = tail_constants(&diag(&[0.4, -0.2]), 10).unwrap();
    assert_eq!((tc.k0, tc.c0), (1, 1.0));

    let w = worst_deflated(&aspec(3, 2));
    let tc = tail_constants(&w, 100).unwrap();
    let mut power = DMatrix::<f64>::identity(6, 6);
    let mut norms = vec![];
    for _ in 0..=tc.k0 {
        norms.push(spectral_norm(&power));
        power = &power * &w;
    }
    let k0 = norms.iter().position(|&s| s < 1.0).unwrap();
    assert_eq!(tc.k0, k0);
    assert!((tc.c1 - norms[k0].powi(4)).abs() < 1e-12);
    let c0 = norms[..k0].iter().map(|s| s.powi(4)).fold(0.0, f64::max);
    assert!((tc.c0 - c0).abs() < 1e-10 * c0);
    assert!(tc.c0 >= 1.0 && tc.c1 < 1.0);
    assert!(tc.second_moment_rate > 0.0 && tc.second_moment_rate < 1.0);
}

#[test]
fn tail_horizon_exhaustion() {
    let w = DMatrix::from_row_slice(2, 2, &[0.99, 50.0, 0.0, 0.99]);
    match tail_constants(&w, 5) {
        Err(Error::HorizonExhausted { horizon, smallest }) => {
            assert_eq!(horizon, 5);
            assert!(smallest > 1.0);
        }
        other => panic!("unexpected {other:?}"),
    }
}

#[test]
fn second_moment_chain_small_system() {
    let w = worst_deflated(&aspec(3, 2));
    let report = second_moment_bound_check(&w, 500).unwrap();
    assert!(report.lifted_residual < 1e-10);
    assert!(report.first_strict && report.second_strict);
    assert!(report.lambda_max_lifted < report.truncated_sum);
    assert!(report.truncated_sum < report.closed_form_bound);
}

#[test]
fn second_moment_scalar_edge_case() {
    let a: f64 = 0.8;
    let report = second_moment_bound_check(&diag(&[a]), 2000).unwrap();
    let exact = 1.0 / (1.0 - a.powi(4));
    assert!((report.lambda_max_lifted - exact).abs() < 1e-9 * exact);
    assert!((report.truncated_sum - exact).abs() < 1e-9 * exact);
}

#[test]
fn second_moment_guard() {
    let w = DMatrix::<f64>::zeros(51, 51);
    assert!(matches!(second_moment_bound_check(&w, 10), Err(Error::DimensionGuard { .. })));
}

#[test]
fn probability_bound_examples() {
    let tc = TailConstants {
        k0: 2,
        c0: 1.5,
        c1: 0.5,
        second_moment_rate: 1.0 - 0.5 / 3.0,
        norms_fourth: vec![],
    };
    let e0 = DVector::from_vec(vec![1.0, 1.0]);
    let huge = error_probability_bound(&tc, &e0, 1e15, 3, 4, 2.0).unwrap();
    assert!(huge.values[0] < 1e-12);
    let curve = error_probability_bound(&tc, &e0, 0.5, 200, 4, 2.0).unwrap();
    // β(0) = √4 · 2 / 0.5 · ‖e0‖² = 16.
    assert!((curve.beta[0] - 16.0).abs() < 1e-12);
    assert_eq!(curve.values[0], 1.0);
    assert!(curve.values.windows(2).all(|w| w[1] <= w[0]));
    let at = |eps: f64| error_probability_bound(&tc, &e0, eps, 60, 4, 2.0).unwrap().values[60];
    let sweep: Vec<f64> = [0.01, 0.1, 1.0, 10.0].iter().map(|&e| at(e)).collect();
    assert!(sweep.windows(2).all(|w| w[1] <= w[0]));
}

#[test]
fn spectral_norm_examples() {
    assert!((spectral_norm(&DMatrix::identity(7, 7)) - 1.0).abs() < 1e-15);
    assert!((spectral_norm(&diag(&[3.0, -4.0])) - 4.0).abs() < 1e-14);
    let mut rng = ChaCha8Rng::seed_from_u64(50);
    let m = DMatrix::from_fn(50, 50, |_, _| rng.random_range(-1.0..1.0));
    let gram: DMatrix<f64> = m.transpose() * &m;
    let oracle = gram.symmetric_eigenvalues().max().sqrt();
    assert!((spectral_norm(&m) - oracle).abs() < 1e-10 * oracle);
}

#[test]
fn kron_norm_examples() {
    let r = kron_norm_identity_check(&diag(&[0.5, 0.25]), 0).unwrap();
    assert!((r.lifted_norm - 1.0).abs() < 1e-15 && (r.squared_norm - 1.0).abs() < 1e-15);
    let r = kron_norm_identity_check(&diag(&[0.5, 0.25]), 2).unwrap();
    assert!((r.squared_norm - 0.0625).abs() < 1e-15);
    assert!(r.abs_diff < 1e-15);

    let spec = aspec(3, 2);
    let w1 = deflate(
        &build_mode_matrix(&spec, &DelayPattern::zeros(2)).unwrap().w,
        &build_projector(&spec),
    )
    .unwrap();
    for k in [1, 2, 5] {
        assert!(kron_norm_identity_check(&w1, k).unwrap().abs_diff < 1e-12);
    }
    assert!(kron_norm_identity_check(&DMatrix::zeros(31, 31), 1).is_err());
}

#[test]
fn every_mode_certificate_exceeds_one() {
    let spec = aspec(4, 2);
    let proj = build_projector(&spec);
    for mode in async_heat::modes::enumerate_modes(&spec, 100).unwrap() {
        let w = deflate(&mode.w, &proj).unwrap();
        let cert = solve_discrete_lyapunov(&w).unwrap();
        assert!(cert.lambda_max > 1.0 + 1e-12);
        assert!(cert.residual < 1e-8);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn random_four_by_four_chain(seed in any::<u64>(), radius in 0.2f64..0.9) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let w = random_stable(&mut rng, 4, radius);
        let report = second_moment_bound_check(&w, 3000).unwrap();
        prop_assert!(report.lambda_max_lifted <= report.truncated_sum * (1.0 + 1e-12));
        prop_assert!(report.truncated_sum <= report.closed_form_bound * (1.0 + 1e-12));
    }

    #[test]
    fn certificates_have_small_residual(seed in any::<u64>(), n in 2usize..15, radius in 0.1f64..0.97) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let w = random_stable(&mut rng, n, radius);
        for method in [LyapunovMethod::Kronecker, LyapunovMethod::Series] {
            let cert = solve_discrete_lyapunov_with(&w, method, None).unwrap();
            prop_assert!(cert.residual < 1e-8);
            prop_assert!(cert.lambda_min >= 1.0 - 1e-9);
            prop_assert!(cert.lambda_max > 1.0);
        }
    }
}
