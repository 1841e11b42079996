//! Single evaluations and parameter scans.

use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::SpecError;
use crate::echo::{echo_cumulant, echo_exact, EchoError, EchoSeries, TimeGrid};
use crate::nonmarkov::{accumulate_pm, NonMarkovError, NonMarkovReport, VolumeSeries};
use crate::trap_gas::{build_model, coupling_from_alpha, solve_chemical_potential, TrapGasConfig, TrapGasError};

/// Trap periods covered by the default time horizon.
pub const DEFAULT_PERIODS: f64 = 10.0;
pub const DEFAULT_STEPS: usize = 2000;

/// Evaluation route used for production runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    #[default]
    Exact,
    Cumulant,
}

impl Method {
    pub fn as_str(&self) -> &'static str {
        match self {
            Method::Exact => "exact",
            Method::Cumulant => "cumulant",
        }
    }
}

impl std::str::FromStr for Method {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "exact" => Ok(Method::Exact),
            "cumulant" => Ok(Method::Cumulant),
            other => Err(format!("unknown method `{other}` (expected exact or cumulant)")),
        }
    }
}

/// Ten trap periods sampled at 2000 points.
pub fn default_grid(omega: f64) -> TimeGrid {
    TimeGrid {
        t_max: DEFAULT_PERIODS * 2.0 * std::f64::consts::PI / omega,
        n_steps: DEFAULT_STEPS,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RunSpec {
    pub gas: TrapGasConfig,
    pub alpha: f64,
    pub method: Method,
    pub grid: TimeGrid,
}

impl RunSpec {
    /// Exact method on the default grid.
    pub fn new(gas: TrapGasConfig, alpha: f64) -> Self {
        Self {
            gas,
            alpha,
            method: Method::Exact,
            grid: default_grid(gas.omega),
        }
    }

    pub fn with_method(mut self, method: Method) -> Self {
        self.method = method;
        self
    }

    pub fn with_grid(mut self, grid: TimeGrid) -> Self {
        self.grid = grid;
        self
    }

    pub fn validate(&self) -> Result<(), SpecError> {
        self.gas.validate().map_err(gas_error_path)?;
        if !(self.alpha.is_finite() && self.alpha >= 0.0) {
            return Err(SpecError::new("alpha", "must be a non-negative number"));
        }
        if !(self.grid.t_max.is_finite() && self.grid.t_max > 0.0) {
            return Err(SpecError::new("grid.t_max", "must be positive"));
        }
        if self.grid.n_steps < 2 {
            return Err(SpecError::new("grid.n_steps", "must be at least 2"));
        }
        Ok(())
    }
}

fn gas_error_path(err: TrapGasError) -> SpecError {
    let key = match err {
        TrapGasError::Omega(_) => "gas.omega",
        TrapGasError::Beta(_) => "gas.beta",
        TrapGasError::NoFermions => "gas.n_fermions",
        TrapGasError::SpinDegeneracy => "gas.spin_degeneracy",
        TrapGasError::Cutoff(_) | TrapGasError::BasisTooSmall { .. } => "gas.cutoff",
        TrapGasError::Alpha(_) => "alpha",
        _ => "gas",
    };
    SpecError::new(key, err.to_string())
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RunError {
    #[error(transparent)]
    Spec(#[from] SpecError),
    #[error("coupling: {0}")]
    Coupling(TrapGasError),
    #[error("model: {0}")]
    Model(TrapGasError),
    #[error("chemical potential: {0}")]
    ChemicalPotential(TrapGasError),
    #[error("echo: {0}")]
    Echo(EchoError),
    #[error("volume: {0}")]
    Volume(NonMarkovError),
}

impl RunError {
    /// Whether the failure comes from the input rather than the computation.
    pub fn is_validation(&self) -> bool {
        matches!(self, RunError::Spec(_))
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunRecord {
    pub spec: RunSpec,
    pub v0: f64,
    pub mu: f64,
    pub echo: EchoSeries,
    pub volumes: VolumeSeries,
    pub report: NonMarkovReport,
    pub wall_time: f64,
}

/// α → V₀ → model → μ → ν(t) → |A_t| → N_V, N±, R.
pub fn run_point(spec: &RunSpec) -> Result<RunRecord, RunError> {
    let start = Instant::now();
    spec.validate()?;
    let v0 = coupling_from_alpha(spec.alpha, spec.gas.omega, spec.gas.n_fermions).map_err(RunError::Coupling)?;
    let model = build_model(&spec.gas, v0).map_err(RunError::Model)?;
    let thermal = solve_chemical_potential(&spec.gas).map_err(RunError::ChemicalPotential)?;
    let echo = match spec.method {
        Method::Exact => echo_exact(&model, &thermal, &spec.grid, spec.gas.spin_degeneracy),
        Method::Cumulant => echo_cumulant(&model, &thermal, &spec.grid, spec.gas.spin_degeneracy),
    }
    .map_err(RunError::Echo)?;
    let volumes = VolumeSeries::new(echo.grid, echo.loschmidt()).map_err(RunError::Volume)?;
    let report = accumulate_pm(&volumes);
    Ok(RunRecord {
        spec: *spec,
        v0,
        mu: thermal.mu,
        echo,
        volumes,
        report,
        wall_time: start.elapsed().as_secs_f64(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Axis {
    Alpha,
    Beta,
    Omega,
}

impl std::str::FromStr for Axis {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "alpha" => Ok(Axis::Alpha),
            "beta" => Ok(Axis::Beta),
            "omega" => Ok(Axis::Omega),
            other => Err(format!("unknown axis `{other}` (expected alpha, beta or omega)")),
        }
    }
}

impl Axis {
    pub fn as_str(&self) -> &'static str {
        match self {
            Axis::Alpha => "alpha",
            Axis::Beta => "beta",
            Axis::Omega => "omega",
        }
    }
}

/// Scan of one parameter. The time grid stays that of `base`, so an ω scan
/// compares the dynamics over a common time window.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSpec {
    pub base: RunSpec,
    pub axis: Axis,
    pub values: Vec<f64>,
    pub parallelism: usize,
}

impl SweepSpec {
    pub fn validate(&self) -> Result<(), SpecError> {
        self.base.validate().map_err(|e| e.nested("base"))?;
        if self.values.is_empty() {
            return Err(SpecError::new("values", "must not be empty"));
        }
        if let Some(i) = self
            .values
            .windows(2)
            .position(|w| w[1].partial_cmp(&w[0]) != Some(std::cmp::Ordering::Greater))
        {
            return Err(SpecError::new(
                format!("values[{}]", i + 1),
                "values must be strictly increasing",
            ));
        }
        if self.parallelism == 0 {
            return Err(SpecError::new("parallelism", "must be at least 1"));
        }
        for (i, &value) in self.values.iter().enumerate() {
            self.point(value)
                .validate()
                .map_err(|e| SpecError::new(format!("values[{i}]"), e.message))?;
        }
        Ok(())
    }

    pub fn point(&self, value: f64) -> RunSpec {
        let mut spec = self.base;
        match self.axis {
            Axis::Alpha => spec.alpha = value,
            Axis::Beta => spec.gas.beta = value,
            Axis::Omega => spec.gas.omega = value,
        }
        spec
    }
}

#[derive(Debug, Clone)]
pub struct SweepPoint {
    pub axis_value: f64,
    pub outcome: Result<RunRecord, RunError>,
}

#[derive(Debug, Error)]
pub enum SweepError {
    #[error(transparent)]
    Spec(#[from] SpecError),
    #[error("could not start worker pool: {0}")]
    Pool(#[from] rayon::ThreadPoolBuildError),
}

/// Runs every point of the scan on a pool of `parallelism` workers. Points
/// come back in axis order; failed points carry their error.
pub fn sweep(spec: &SweepSpec) -> Result<Vec<SweepPoint>, SweepError> {
    use rayon::prelude::*;

    spec.validate()?;
    let pool = rayon::ThreadPoolBuilder::new().num_threads(spec.parallelism).build()?;
    Ok(pool.install(|| {
        spec.values
            .par_iter()
            .map(|&axis_value| SweepPoint {
                axis_value,
                outcome: run_point(&spec.point(axis_value)),
            })
            .collect()
    }))
}
