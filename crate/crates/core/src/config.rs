//! JSON run and sweep configuration.
//!
//! A run document mirrors [`RunSpec`]:
//!
//! ```json
//! { "gas": { "n_fermions": 200, "beta": 3.0 }, "alpha": 0.1 }
//! ```
//!
//! Omitted keys take their defaults (ω = 1, g_s = 2, default cutoff,
//! ten trap periods, 2000 samples, exact method). A sweep document wraps a
//! run document as `base` and adds `axis`, `values` and `parallelism`.
//! Unknown keys are rejected.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::echo::TimeGrid;
use crate::sweep::{default_grid, Axis, Method, RunSpec, SweepSpec};
use crate::trap_gas::{default_cutoff, TrapGasConfig};

/// Invalid value, located by its key path in the configuration document.
#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("{path}: {message}")]
pub struct SpecError {
    pub path: String,
    pub message: String,
}

impl SpecError {
    pub fn new(path: impl Into<String>, message: impl Into<String>) -> Self {
        Self {
            path: path.into(),
            message: message.into(),
        }
    }

    pub fn nested(self, parent: &str) -> Self {
        Self {
            path: format!("{parent}.{}", self.path),
            message: self.message,
        }
    }
}

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}: {message}")]
    Parse { path: String, message: String },
    #[error(transparent)]
    Invalid(#[from] SpecError),
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GasDocument {
    pub omega: Option<f64>,
    pub n_fermions: Option<usize>,
    pub spin_degeneracy: Option<usize>,
    pub beta: Option<f64>,
    pub cutoff: Option<usize>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridDocument {
    pub t_max: Option<f64>,
    pub n_steps: Option<usize>,
}

/// Partially specified [`RunSpec`].
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunDocument {
    #[serde(default)]
    pub gas: GasDocument,
    pub alpha: Option<f64>,
    pub method: Option<Method>,
    #[serde(default)]
    pub grid: GridDocument,
}

impl RunDocument {
    pub fn resolve(&self) -> Result<RunSpec, SpecError> {
        let n_fermions = self
            .gas
            .n_fermions
            .ok_or_else(|| SpecError::new("gas.n_fermions", "missing required key"))?;
        let beta = self
            .gas
            .beta
            .ok_or_else(|| SpecError::new("gas.beta", "missing required key"))?;
        let alpha = self
            .alpha
            .ok_or_else(|| SpecError::new("alpha", "missing required key"))?;
        let omega = self.gas.omega.unwrap_or(1.0);
        let spin_degeneracy = self.gas.spin_degeneracy.unwrap_or(2);
        if spin_degeneracy == 0 {
            return Err(SpecError::new("gas.spin_degeneracy", "must be at least 1"));
        }
        let gas = TrapGasConfig {
            omega,
            n_fermions,
            spin_degeneracy,
            beta,
            cutoff: self
                .gas
                .cutoff
                .unwrap_or_else(|| default_cutoff(n_fermions, spin_degeneracy)),
        };
        // Guard the default horizon against a nonsensical ω before using it.
        if !(omega.is_finite() && omega > 0.0) {
            return Err(SpecError::new("gas.omega", "must be positive"));
        }
        let defaults = default_grid(omega);
        let spec = RunSpec {
            gas,
            alpha,
            method: self.method.unwrap_or_default(),
            grid: TimeGrid {
                t_max: self.grid.t_max.unwrap_or(defaults.t_max),
                n_steps: self.grid.n_steps.unwrap_or(defaults.n_steps),
            },
        };
        spec.validate()?;
        Ok(spec)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepDocument {
    #[serde(default)]
    pub base: RunDocument,
    pub axis: Option<Axis>,
    pub values: Option<Vec<f64>>,
    pub parallelism: Option<usize>,
}

impl SweepDocument {
    /// The swept key may be absent from `base`; it is filled with the first
    /// axis value before resolving.
    pub fn resolve(&self, default_parallelism: usize) -> Result<SweepSpec, SpecError> {
        let axis = self
            .axis
            .ok_or_else(|| SpecError::new("axis", "missing required key"))?;
        let values = self
            .values
            .clone()
            .ok_or_else(|| SpecError::new("values", "missing required key"))?;
        let mut base = self.base.clone();
        if let Some(&first) = values.first() {
            match axis {
                Axis::Alpha => base.alpha = base.alpha.or(Some(first)),
                Axis::Beta => base.gas.beta = base.gas.beta.or(Some(first)),
                Axis::Omega => base.gas.omega = base.gas.omega.or(Some(first)),
            }
        }
        let spec = SweepSpec {
            base: base.resolve().map_err(|e| e.nested("base"))?,
            axis,
            values,
            parallelism: self.parallelism.unwrap_or(default_parallelism),
        };
        spec.validate()?;
        Ok(spec)
    }
}

/// Either kind of configuration document.
#[derive(Debug, Clone, PartialEq)]
pub enum ConfigDocument {
    Run(RunDocument),
    Sweep(SweepDocument),
}

#[derive(Debug, Clone, PartialEq)]
pub enum Config {
    Run(RunSpec),
    Sweep(SweepSpec),
}

fn parse_as<T: serde::de::DeserializeOwned>(value: serde_json::Value) -> Result<T, ConfigError> {
    serde_path_to_error::deserialize(value).map_err(|e| ConfigError::Parse {
        path: e.path().to_string(),
        message: e.into_inner().to_string(),
    })
}

/// Parses a document without applying defaults. Documents with an `axis`,
/// `values`, `base` or `parallelism` key are sweeps.
pub fn parse_document(text: &str) -> Result<ConfigDocument, ConfigError> {
    let value: serde_json::Value = serde_json::from_str(text).map_err(|e| ConfigError::Parse {
        path: ".".into(),
        message: e.to_string(),
    })?;
    let is_sweep = value.as_object().is_some_and(|o| {
        ["axis", "values", "base", "parallelism"]
            .iter()
            .any(|k| o.contains_key(*k))
    });
    if is_sweep {
        Ok(ConfigDocument::Sweep(parse_as(value)?))
    } else {
        Ok(ConfigDocument::Run(parse_as(value)?))
    }
}

pub fn read_document(path: &Path) -> Result<ConfigDocument, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_document(&text)
}

pub fn parse_config(text: &str) -> Result<Config, ConfigError> {
    Ok(match parse_document(text)? {
        ConfigDocument::Run(doc) => Config::Run(doc.resolve()?),
        ConfigDocument::Sweep(doc) => Config::Sweep(doc.resolve(available_workers())?),
    })
}

/// Reads and resolves a configuration file.
pub fn load_config(path: &Path) -> Result<Config, ConfigError> {
    Ok(match read_document(path)? {
        ConfigDocument::Run(doc) => Config::Run(doc.resolve()?),
        ConfigDocument::Sweep(doc) => Config::Sweep(doc.resolve(available_workers())?),
    })
}

pub fn available_workers() -> usize {
    std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1)
}
