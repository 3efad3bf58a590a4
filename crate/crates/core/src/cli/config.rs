//! JSON experiment configuration.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::CliError;
use crate::grid::{cos2_initial_condition, steady_state_profile, BoundaryConditions, GridSpec, StateVector};
use crate::modes::{AugmentedSpec, SwitchingDistribution, DEFAULT_MODE_CAP};
use crate::sim::RunConfig;
use crate::analysis::DEFAULT_TAIL_HORIZON;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub num_pes: usize,
    pub points_per_pe: usize,
    pub dx: f64,
    pub dt: f64,
    pub alpha: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoundaryConfig {
    pub left: f64,
    pub right: f64,
}

/// Per-edge delay law. `"uniform"`, `{"shared": [p0, ..]}` or `{"per_edge": [[p0, ..], ..]}`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum DelayDistributionConfig {
    #[default]
    Uniform,
    Shared(Vec<f64>),
    PerEdge(Vec<Vec<f64>>),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NamedInitial {
    Cos2,
    Ramp,
}

/// `"cos2"`, `"ramp"` or an explicit list of `N n` values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum InitialCondition {
    Named(NamedInitial),
    Values(Vec<f64>),
}

/// Error-probability sweep over `ε` at a single step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub step: usize,
    pub epsilons: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub grid: GridConfig,
    pub buffer_len: usize,
    #[serde(default)]
    pub delay_distribution: DelayDistributionConfig,
    pub initial_condition: InitialCondition,
    pub boundary: BoundaryConfig,
    pub steps: usize,
    pub runs: usize,
    pub seed: u64,
    pub epsilons: Vec<f64>,
    /// Defaults to `[0, steps / 2, steps]`.
    #[serde(default)]
    pub snapshot_steps: Option<Vec<usize>>,
    #[serde(default)]
    pub sweep: Option<SweepConfig>,
    /// Relative paths are resolved against the config file's directory.
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
    /// Enumeration cap for `verify`; defaults to 100000.
    #[serde(default)]
    pub mode_cap: Option<u64>,
    /// Powers examined when searching for `k₀`; defaults to 200000.
    #[serde(default)]
    pub tail_horizon: Option<usize>,
    /// Adds one `run_<i>` column per ensemble member to `async_ensemble.csv`.
    #[serde(default)]
    pub record_run_norms: bool,
}

/// A validated configuration with every model object built.
#[derive(Debug, Clone)]
pub struct Experiment {
    pub config: ExperimentConfig,
    pub run: RunConfig,
    pub output_dir: Option<PathBuf>,
    pub mode_cap: u128,
    pub tail_horizon: usize,
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self, CliError> {
        serde_json::from_str(text).map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    /// Checks every invariant and builds the run configuration.
    pub fn build(self, base_dir: Option<&Path>) -> Result<Experiment, CliError> {
        let bad = |msg: String| CliError::Config(msg);
        let g = &self.grid;
        let grid = GridSpec::new(g.num_pes, g.points_per_pe, g.dx, g.dt, g.alpha)
            .map_err(|e| bad(e.to_string()))?;
        let aspec = AugmentedSpec::new(grid, self.buffer_len).map_err(|e| bad(e.to_string()))?;
        let dist = match &self.delay_distribution {
            DelayDistributionConfig::Uniform => SwitchingDistribution::uniform(&aspec),
            DelayDistributionConfig::Shared(p) => SwitchingDistribution::shared(&aspec, p.clone())
                .map_err(|e| bad(e.to_string()))?,
            DelayDistributionConfig::PerEdge(p) => SwitchingDistribution::new(&aspec, p.clone())
                .map_err(|e| bad(e.to_string()))?,
        };
        let b = self.boundary;
        if !(b.left.is_finite() && b.right.is_finite()) {
            return Err(bad("boundary values must be finite".into()));
        }
        let bc = BoundaryConditions::new(b.left, b.right);
        let initial: StateVector = match &self.initial_condition {
            InitialCondition::Named(NamedInitial::Cos2) => cos2_initial_condition(&grid),
            InitialCondition::Named(NamedInitial::Ramp) => steady_state_profile(&grid, &bc),
            InitialCondition::Values(v) => {
                if v.len() != grid.len() {
                    return Err(bad(format!(
                        "initial_condition has {} values, grid has {} points",
                        v.len(),
                        grid.len()
                    )));
                }
                if v.iter().any(|x| !x.is_finite()) {
                    return Err(bad("initial_condition values must be finite".into()));
                }
                StateVector::from_column_slice(v)
            }
        };
        if self.runs == 0 {
            return Err(bad("runs must be at least 1".into()));
        }
        check_epsilons("epsilons", &self.epsilons)?;
        let snapshot_steps = match &self.snapshot_steps {
            Some(s) => {
                if let Some(k) = s.iter().find(|&&k| k > self.steps) {
                    return Err(bad(format!("snapshot step {k} exceeds steps = {}", self.steps)));
                }
                s.clone()
            }
            None => {
                let mut s = vec![0, self.steps / 2, self.steps];
                s.dedup();
                s
            }
        };
        if let Some(sweep) = &self.sweep {
            if sweep.step > self.steps {
                return Err(bad(format!(
                    "sweep step {} exceeds steps = {}",
                    sweep.step, self.steps
                )));
            }
            check_epsilons("sweep.epsilons", &sweep.epsilons)?;
        }
        if self.mode_cap == Some(0) {
            return Err(bad("mode_cap must be positive".into()));
        }
        if self.tail_horizon == Some(0) {
            return Err(bad("tail_horizon must be positive".into()));
        }
        let output_dir = self.output_dir.as_ref().map(|d| match base_dir {
            Some(base) if d.is_relative() => base.join(d),
            _ => d.clone(),
        });
        let run = RunConfig {
            aspec,
            dist,
            initial,
            bc,
            steps: self.steps,
            seed: self.seed,
            epsilons: self.epsilons.clone(),
            snapshot_steps,
        };
        run.validate().map_err(|e| bad(e.to_string()))?;
        Ok(Experiment {
            mode_cap: self.mode_cap.map_or(DEFAULT_MODE_CAP, u128::from),
            tail_horizon: self.tail_horizon.unwrap_or(DEFAULT_TAIL_HORIZON),
            output_dir,
            run,
            config: self,
        })
    }
}

fn check_epsilons(field: &str, eps: &[f64]) -> Result<(), CliError> {
    if eps.is_empty() {
        return Err(CliError::Config(format!("{field} must not be empty")));
    }
    if let Some(e) = eps.iter().find(|e| !(e.is_finite() && **e > 0.0)) {
        return Err(CliError::Config(format!(
            "{field} entries must be positive and finite, got {e}"
        )));
    }
    Ok(())
}

impl Experiment {
    pub fn from_path(path: &Path) -> Result<Self, CliError> {
        ExperimentConfig::load(path)?.build(path.parent())
    }
}
