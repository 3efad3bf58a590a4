use std::path::Path;

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::config::Experiment;
use super::output::{create_dir, csv_writer, num};
use super::CliError;
use crate::analysis::{certify, CancelToken, Certificate, CertifyOptions};
use crate::modes::{
    build_mode_matrix, build_projector, enumerate_modes, expected_matrix,
    expected_matrix_enumerated, mode_probability, verify_eigenstructure, PROBABILITY_TOL,
    RESIDUAL_TOL,
};
use crate::sim::{
    async_step, derive_seed, run_ensemble, run_sync_reference, run_trajectory, AsyncSimState,
    DelaySampler, EnsembleResult, Trajectory,
};

/// Most modes checked for simulator/matrix equivalence; larger sets are sampled.
const EQUIVALENCE_CHECKS: usize = 64;

/// Agreement required between the factorized and enumerated expected matrices.
const LAMBDA_TOL: f64 = 1e-12;

/// Writes `sync_trajectory.csv`, `async_ensemble.csv`, `exceedance.csv` and `snapshots.csv`.
pub fn simulate(exp: &Experiment, out: &Path, workers: usize) -> Result<String, CliError> {
    let cfg = &exp.run;
    let sync = run_sync_reference(cfg)?;
    let ens = run_ensemble(cfg, exp.config.runs, workers)?;
    let mut first = cfg.clone();
    first.seed = derive_seed(cfg.seed, 0);
    let first = run_trajectory(&first)?;

    create_dir(out)?;
    let mut w = csv_writer(
        &out.join("sync_trajectory.csv"),
        &["step", "error_norm", "error_inf_norm"],
    )?;
    for (k, (e, inf)) in sync.error_norms.iter().zip(&sync.error_inf_norms).enumerate() {
        w.write_record([k.to_string(), num(*e), num(*inf)])?;
    }
    w.flush()?;

    write_ensemble(&out.join("async_ensemble.csv"), &ens, exp.config.record_run_norms)?;

    let mut w = csv_writer(
        &out.join("exceedance.csv"),
        &["step", "epsilon", "empirical_probability"],
    )?;
    for k in 0..=ens.steps() {
        for (j, eps) in ens.epsilons.iter().enumerate() {
            w.write_record([k.to_string(), num(*eps), num(ens.exceedance[j][k])])?;
        }
    }
    w.flush()?;

    let mut w = csv_writer(&out.join("snapshots.csv"), &["source", "step", "point", "value"])?;
    write_snapshots(&mut w, "sync", &sync)?;
    write_snapshots(&mut w, "async_run_0", &first)?;
    w.flush()?;

    let last = ens.steps();
    let worst_inf = ens
        .run_error_inf_norms
        .iter()
        .map(|r| r[last])
        .fold(0.0_f64, f64::max);
    Ok(format!(
        "{} runs x {} steps: final mean error norm {:.3e}, worst final inf-error {:.3e}, sync final inf-error {:.3e}",
        ens.num_runs,
        last,
        ens.mean_error_norm[last],
        worst_inf,
        sync.error_inf_norms[last]
    ))
}

fn write_ensemble(path: &Path, ens: &EnsembleResult, per_run: bool) -> Result<(), CliError> {
    let mut header: Vec<String> = ["step", "mean_error_norm", "mean_sq_error_norm", "max_error_inf_norm"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    if per_run {
        header.extend((0..ens.num_runs).map(|i| format!("run_{i}")));
    }
    let header: Vec<&str> = header.iter().map(String::as_str).collect();
    let mut w = csv_writer(path, &header)?;
    for k in 0..=ens.steps() {
        let max_inf = ens
            .run_error_inf_norms
            .iter()
            .map(|r| r[k])
            .fold(0.0_f64, f64::max);
        let mut row = vec![
            k.to_string(),
            num(ens.mean_error_norm[k]),
            num(ens.mean_sq_error_norm[k]),
            num(max_inf),
        ];
        if per_run {
            row.extend(ens.run_error_norms.iter().map(|r| num(r[k])));
        }
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

fn write_snapshots(
    w: &mut csv::Writer<std::fs::File>,
    source: &str,
    traj: &Trajectory,
) -> Result<(), CliError> {
    for (k, u) in &traj.snapshots {
        for (i, x) in u.iter().enumerate() {
            w.write_record([source.to_string(), k.to_string(), (i + 1).to_string(), num(*x)])?;
        }
    }
    Ok(())
}

/// Writes `rate_bound.csv`, `prob_bound.csv` and `certificate.json`.
pub fn analyze(
    exp: &Experiment,
    out: &Path,
    cancel: Option<CancelToken>,
) -> Result<Certificate, CliError> {
    let cfg = &exp.run;
    let e0 = cfg.initial_error();
    let opts = CertifyOptions {
        horizon: exp.tail_horizon,
        cancel,
    };
    let cert = certify(&cfg.aspec, &cfg.dist, &e0, &opts)?;
    let bound = cert.rate_bound(cfg.steps);

    create_dir(out)?;
    let lambda = expected_matrix(&cfg.aspec, &cfg.dist)?;
    let mut w = csv_writer(
        &out.join("rate_bound.csv"),
        &["step", "mean_error_bound", "exact_mean_norm"],
    )?;
    let mut e = e0.clone();
    let mut next = DVector::zeros(e.len());
    for (k, b) in bound.iter().enumerate() {
        if k > 0 {
            next.gemv(1.0, &lambda, &e, 0.0);
            std::mem::swap(&mut e, &mut next);
        }
        w.write_record([k.to_string(), num(*b), num(e.norm())])?;
    }
    w.flush()?;
    drop(lambda);

    let mut w = csv_writer(&out.join("prob_bound.csv"), &["step", "epsilon", "bound", "beta"])?;
    let curves = cfg
        .epsilons
        .iter()
        .map(|&eps| cert.probability_bound(eps, cfg.steps))
        .collect::<crate::Result<Vec<_>>>()?;
    for k in 0..=cfg.steps {
        for c in &curves {
            w.write_record([k.to_string(), num(c.epsilon), num(c.values[k]), num(c.beta[k])])?;
        }
    }
    w.flush()?;

    let json = serde_json::to_string_pretty(&cert).map_err(|e| CliError::Io(e.to_string()))?;
    std::fs::write(out.join("certificate.json"), format!("{json}\n"))?;
    Ok(cert)
}

/// Empirical exceedance, empirical Markov estimate and analytic bound per `(step, ε)`.
pub fn compare(
    exp: &Experiment,
    out: &Path,
    workers: usize,
    cancel: Option<CancelToken>,
) -> Result<String, CliError> {
    let cfg = &exp.run;
    let ens = run_ensemble(cfg, exp.config.runs, workers)?;
    let opts = CertifyOptions {
        horizon: exp.tail_horizon,
        cancel,
    };
    let cert = certify(&cfg.aspec, &cfg.dist, &cfg.initial_error(), &opts)?;

    create_dir(out)?;
    let header = [
        "step",
        "epsilon",
        "empirical_probability",
        "empirical_markov",
        "analytic_bound",
    ];
    let curves = ens
        .epsilons
        .iter()
        .map(|&eps| cert.probability_bound(eps, cfg.steps))
        .collect::<crate::Result<Vec<_>>>()?;
    let mut w = csv_writer(&out.join("comparison.csv"), &header)?;
    let mut violations = 0usize;
    for k in 0..=ens.steps() {
        for (j, c) in curves.iter().enumerate() {
            let emp = ens.exceedance[j][k];
            if c.values[k] < emp {
                violations += 1;
            }
            w.write_record([
                k.to_string(),
                num(c.epsilon),
                num(emp),
                num(ens.mean_sq_error_norm[k] / c.epsilon),
                num(c.values[k]),
            ])?;
        }
    }
    w.flush()?;

    if let Some(sweep) = &exp.config.sweep {
        let k = sweep.step;
        let mut w = csv_writer(&out.join("sweep.csv"), &header)?;
        for &eps in &sweep.epsilons {
            let emp = empirical_exceedance(&ens, k, eps);
            let bound = cert.probability_bound(eps, k)?.values[k];
            w.write_record([
                k.to_string(),
                num(eps),
                num(emp),
                num(ens.mean_sq_error_norm[k] / eps),
                num(bound),
            ])?;
        }
        w.flush()?;
    }
    Ok(format!(
        "{} runs, {} epsilon(s): analytic bound below empirical exceedance at {} (step, epsilon) pairs",
        ens.num_runs,
        ens.epsilons.len(),
        violations
    ))
}

/// Fraction of runs with `‖e(k)‖² > ε`.
pub(crate) fn empirical_exceedance(ens: &EnsembleResult, step: usize, eps: f64) -> f64 {
    let hits = ens
        .run_error_norms
        .iter()
        .filter(|r| r[step] * r[step] > eps)
        .count();
    hits as f64 / ens.num_runs as f64
}

#[derive(Debug, Clone, Serialize)]
pub struct VerifyReport {
    pub num_modes: usize,
    /// Patterns whose eigenstructure check failed.
    pub eigen_failures: Vec<String>,
    /// Patterns whose infinity norm is not exactly 1.
    pub norm_failures: Vec<String>,
    pub max_eigvec_residual: f64,
    /// Largest `|λ₃|` over all modes.
    pub max_third_modulus: f64,
    /// `max |Λ_factorized - Λ_enumerated|`.
    pub lambda_max_abs_diff: f64,
    pub probability_sum: f64,
    pub equivalence_checks: usize,
    pub equivalence_failures: usize,
    pub passed: bool,
}

impl VerifyReport {
    pub fn summary(&self) -> String {
        format!(
            "{} modes; eigenstructure failures {}, norm failures {}, |Lambda diff| {:.2e}, probability sum {:.15}, simulator mismatches {}/{}",
            self.num_modes,
            self.eigen_failures.len(),
            self.norm_failures.len(),
            self.lambda_max_abs_diff,
            self.probability_sum,
            self.equivalence_failures,
            self.equivalence_checks
        )
    }
}

/// Enumerates every mode and checks the structural claims the analysis relies on.
pub fn verify(exp: &Experiment) -> Result<VerifyReport, CliError> {
    let cfg = &exp.run;
    let aspec = &cfg.aspec;
    let modes = enumerate_modes(aspec, exp.mode_cap).map_err(|e| match e {
        crate::Error::TooManyModes { .. } => {
            CliError::Config(format!("{e}; reduce num_pes or buffer_len, or raise --cap"))
        }
        other => other.into(),
    })?;
    let proj = build_projector(aspec);

    let mut eigen_failures = Vec::new();
    let mut norm_failures = Vec::new();
    let mut max_eigvec_residual = 0.0_f64;
    let mut max_third_modulus = 0.0_f64;
    let mut probability_sum = 0.0;
    for mode in &modes {
        let report = verify_eigenstructure(&mode.w, &proj)?;
        if !report.passed {
            eigen_failures.push(mode.pattern.to_string());
        }
        if report.inf_norm != 1.0 {
            norm_failures.push(mode.pattern.to_string());
        }
        max_eigvec_residual = report
            .right_residuals
            .iter()
            .chain(&report.left_residuals)
            .fold(max_eigvec_residual, |m, &r| m.max(r));
        if let Some(&(re, im)) = report.leading.get(2) {
            max_third_modulus = max_third_modulus.max(re.hypot(im));
        }
        probability_sum += mode_probability(&mode.pattern, &cfg.dist)?;
    }

    let factorized = expected_matrix(aspec, &cfg.dist)?;
    let enumerated = expected_matrix_enumerated(aspec, &cfg.dist, exp.mode_cap)?;
    let lambda_max_abs_diff = (&factorized - &enumerated).amax();

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let sampler = DelaySampler::new(&cfg.dist)?;
    let q = aspec.buffer_len();
    let mut equivalence_checks = 0;
    let mut equivalence_failures = 0;
    let checks = modes.len().min(EQUIVALENCE_CHECKS);
    for i in 0..checks {
        let mode = if modes.len() <= EQUIVALENCE_CHECKS {
            modes[i].clone()
        } else {
            build_mode_matrix(aspec, &crate::sim::sample_delays(&mut rng, &sampler))?
        };
        let x = DVector::from_fn(aspec.dim(), |_, _| rng.random_range(-1.0..1.0));
        let mut state = AsyncSimState::from_augmented(&x, q, 0)?;
        async_step(&mut state, &mode.pattern, aspec);
        equivalence_checks += 1;
        if state.augmented() != &mode.w * &x {
            equivalence_failures += 1;
        }
    }

    let passed = eigen_failures.is_empty()
        && norm_failures.is_empty()
        && max_eigvec_residual < RESIDUAL_TOL
        && lambda_max_abs_diff < LAMBDA_TOL
        && (probability_sum - 1.0).abs() < PROBABILITY_TOL
        && equivalence_failures == 0;
    Ok(VerifyReport {
        num_modes: modes.len(),
        eigen_failures,
        norm_failures,
        max_eigvec_residual,
        max_third_modulus,
        lambda_max_abs_diff,
        probability_sum,
        equivalence_checks,
        equivalence_failures,
        passed,
    })
}
