//! Dephasing of a two-level impurity in a harmonically trapped ideal Fermi
//! gas, and the geometric (volume) measure of its non-Markovianity.
//!
//! The pipeline runs [`trap_gas`] (spectrum, contact potential, chemical
//! potential) into [`echo`] (decoherence factor ν(t)) into [`nonmarkov`]
//! (Bloch-map volume |ν|², N_V, N±(t), R(t)). [`sweep`] chains the stages for
//! single runs and parameter scans; [`config`] and [`table`] handle the JSON
//! input and CSV output of the `fermi-echo` command-line tool.

pub mod config;
pub mod echo;
pub mod nonmarkov;
pub mod sweep;
pub mod table;
pub mod trap_gas;

pub use config::{load_config, Config, ConfigError, SpecError};
pub use echo::{echo_cumulant, echo_exact, echo_fock_oracle, EchoError, EchoMethod, EchoSeries, TimeGrid};
pub use nonmarkov::{accumulate_pm, bloch_map_at, measure_nv, volume_series, BlochMap, NonMarkovReport, VolumeSeries};
pub use sweep::{run_point, sweep, Axis, Method, RunError, RunRecord, RunSpec, SweepPoint, SweepSpec};
pub use trap_gas::{
    alpha_from_coupling, build_model, coupling_from_alpha, psi0_table, solve_chemical_potential, SingleParticleModel,
    ThermalState, TrapGasConfig, TrapGasError,
};
