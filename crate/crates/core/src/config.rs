//! Declarative scenario descriptions.
//!
//! A scenario is a flat JSON document with sections
//! `{coefficients, target, grid, time, initial_conditions, solver, output}`
//! plus a top-level `seed`. The coefficient fields reuse the analytic-family
//! serde forms from [`crate::coeffs`]; initial conditions come from small
//! families that all vanish at r = 0, matching the plant's left boundary
//! condition.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::coeffs::{CoeffField, CoefficientSet, TimeFunction};
use crate::error::{Error, Result};
use crate::grid::{FieldLabel, SpatialGrid, StateField};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CoefficientsSpec {
    pub diffusion: CoeffField,
    #[serde(default)]
    pub advection: CoeffField,
    #[serde(default)]
    pub reaction: CoeffField,
    #[serde(default)]
    pub input: TimeFunction,
}

/// Target decay coefficient: either an explicit value or an offset below the
/// admissible bound computed from the coefficients.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TargetSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mu: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mu_below_bound: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GridSpec {
    pub n: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TimeSpec {
    pub dt: f64,
    pub horizon: f64,
    /// Number of kernel time samples over the horizon (≥ 3 when any
    /// coefficient is time-varying; ignored for time-invariant sets).
    #[serde(default = "default_kernel_samples")]
    pub kernel_samples: usize,
}

fn default_kernel_samples() -> usize {
    9
}

/// Initial-condition families; every member vanishes at r = 0.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IcSpec {
    #[default]
    Zero,
    /// c₁·r + c₂·r² + ... (no constant term by construction).
    Poly(Vec<f64>),
    /// Σ a_k·sin(k·π·r/2).
    Modes(Vec<f64>),
    /// Seeded random mode amplitudes a_k ~ U(−1,1)/k, k = 1..=modes.
    Random { modes: usize },
}

impl IcSpec {
    /// Samples the initial condition on the grid. `seed` feeds the random
    /// family only, so identical configs give identical states.
    pub fn sample(&self, grid: &SpatialGrid, time: f64, label: FieldLabel, seed: u64) -> Result<StateField> {
        match self {
            IcSpec::Zero => Ok(StateField::zeros(*grid, time, label)),
            IcSpec::Poly(coeffs) => StateField::from_fn(*grid, time, label, |r| {
                coeffs.iter().rev().fold(0.0, |acc, &c| (acc + c) * r)
            }),
            IcSpec::Modes(amps) => StateField::from_fn(*grid, time, label, |r| {
                amps.iter()
                    .enumerate()
                    .map(|(k, a)| a * ((k + 1) as f64 * std::f64::consts::FRAC_PI_2 * r).sin())
                    .sum()
            }),
            IcSpec::Random { modes } => {
                if *modes == 0 {
                    return Err(Error::Config("random initial condition needs modes >= 1".into()));
                }
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let amps: Vec<f64> = (1..=*modes)
                    .map(|k| rng.random_range(-1.0..1.0) / k as f64)
                    .collect();
                StateField::from_fn(*grid, time, label, |r| {
                    amps.iter()
                        .enumerate()
                        .map(|(k, a)| a * ((k + 1) as f64 * std::f64::consts::FRAC_PI_2 * r).sin())
                        .sum()
                })
            }
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct InitialConditionsSpec {
    pub plant: IcSpec,
    #[serde(default)]
    pub observer: IcSpec,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SolverSpec {
    #[serde(default = "default_tol")]
    pub tol: f64,
    #[serde(default = "default_max_iter")]
    pub max_iter: usize,
}

fn default_tol() -> f64 {
    1e-10
}

fn default_max_iter() -> usize {
    50
}

impl Default for SolverSpec {
    fn default() -> Self {
        Self {
            tol: default_tol(),
            max_iter: default_max_iter(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OutputSpec {
    /// Record norms every `decimate` steps (1 = every step).
    #[serde(default = "default_decimate")]
    pub decimate: usize,
    /// Emit decimated state snapshots.
    #[serde(default)]
    pub states: bool,
    /// Number of state snapshots over the horizon when `states` is set.
    #[serde(default = "default_snapshots")]
    pub snapshots: usize,
}

fn default_decimate() -> usize {
    50
}

fn default_snapshots() -> usize {
    5
}

impl Default for OutputSpec {
    fn default() -> Self {
        Self {
            decimate: default_decimate(),
            states: false,
            snapshots: default_snapshots(),
        }
    }
}

/// Full declarative description of one estimation run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub coefficients: CoefficientsSpec,
    pub target: TargetSpec,
    pub grid: GridSpec,
    pub time: TimeSpec,
    pub initial_conditions: InitialConditionsSpec,
    #[serde(default)]
    pub solver: SolverSpec,
    #[serde(default)]
    pub output: OutputSpec,
    #[serde(default)]
    pub seed: u64,
}

impl ScenarioConfig {
    /// Structural validation beyond what serde enforces.
    pub fn validate(&self) -> Result<()> {
        if self.time.dt <= 0.0 {
            return Err(Error::Config("time.dt must be positive".into()));
        }
        if self.time.horizon <= 0.0 {
            return Err(Error::Config("time.horizon must be positive".into()));
        }
        let steps = self.time.horizon / self.time.dt;
        if (steps - steps.round()).abs() > 1e-6 * steps.max(1.0) {
            return Err(Error::Config(format!(
                "time.horizon must be an integer number of steps (horizon/dt = {steps})"
            )));
        }
        if self.grid.n < 4 {
            return Err(Error::Config(format!(
                "grid.n must be at least 4, got {}",
                self.grid.n
            )));
        }
        if self.time.kernel_samples < 1 {
            return Err(Error::Config("time.kernel_samples must be >= 1".into()));
        }
        if self.output.decimate == 0 {
            return Err(Error::Config("output.decimate must be >= 1".into()));
        }
        match (self.target.mu, self.target.mu_below_bound) {
            (Some(_), None) | (None, Some(_)) => Ok(()),
            (Some(_), Some(_)) => Err(Error::Config(
                "target: give either mu or mu_below_bound, not both".into(),
            )),
            (None, None) => Err(Error::Config(
                "target: one of mu or mu_below_bound is required".into(),
            )),
        }
    }

    pub fn coefficient_set(&self) -> CoefficientSet {
        CoefficientSet::new(
            self.coefficients.diffusion.clone(),
            self.coefficients.advection.clone(),
            self.coefficients.reaction.clone(),
            self.coefficients.input.clone(),
            self.time.horizon,
        )
    }

    pub fn spatial_grid(&self) -> Result<SpatialGrid> {
        SpatialGrid::new(self.grid.n)
    }

    /// Resolves the target decay coefficient, given the admissible bound.
    pub fn resolve_mu(&self, bound: f64) -> f64 {
        match (self.target.mu, self.target.mu_below_bound) {
            (Some(mu), _) => mu,
            (None, Some(offset)) => bound - offset,
            (None, None) => unreachable!("validated"),
        }
    }

    /// Kernel time samples: uniform over [0, horizon], collapsed to a single
    /// sample for time-invariant coefficient sets.
    pub fn kernel_times(&self, cs: &CoefficientSet) -> Vec<f64> {
        if cs.kernel_time_invariant() {
            return vec![0.0];
        }
        let k = self.time.kernel_samples.max(3);
        (0..k)
            .map(|i| i as f64 * self.time.horizon / (k - 1) as f64)
            .collect()
    }
}
