//! Volume of accessible Bloch vectors and the non-Markovianity it reveals.
//!
//! A pure-dephasing qubit map acts on the Bloch vector as b(t) = A_t b(0) with
//! no translation. |det A_t| = |ν(t)|² is the fraction of the Bloch ball still
//! reachable at time t; any growth of that volume signals memory effects.
//! All integrals over dv/dt are taken as exact sums of sampled increments.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::echo::{EchoSeries, TimeGrid};

/// Slack on |ν| ≤ 1 and on volumes ≤ 1.
pub const CONTRACTION_SLACK: f64 = 1e-10;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NonMarkovError {
    #[error("decoherence factor {0} is not finite")]
    NonFinite(Complex64),
    #[error("decoherence factor {0} lies outside the unit disk")]
    Expanding(Complex64),
    #[error("volume series needs at least 2 samples matching the grid ({samples} samples, grid {grid})")]
    Length { samples: usize, grid: usize },
    #[error("volume {value} at sample {index} outside [0, 1]")]
    Volume { index: usize, value: f64 },
}

/// Bloch-space matrix of a dephasing map at one instant.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BlochMap {
    pub matrix: [[f64; 3]; 3],
    pub time: f64,
}

impl BlochMap {
    /// Cofactor expansion along the first row.
    pub fn determinant(&self) -> f64 {
        let m = &self.matrix;
        m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1]) - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
            + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
    }

    pub fn apply(&self, bloch: [f64; 3]) -> [f64; 3] {
        let m = &self.matrix;
        [0, 1, 2].map(|r| m[r][0] * bloch[0] + m[r][1] * bloch[1] + m[r][2] * bloch[2])
    }
}

/// [[Re ν, Im ν, 0], [−Im ν, Re ν, 0], [0, 0, 1]].
pub fn bloch_map_at(nu: Complex64, time: f64) -> Result<BlochMap, NonMarkovError> {
    if !(nu.re.is_finite() && nu.im.is_finite()) {
        return Err(NonMarkovError::NonFinite(nu));
    }
    if nu.norm() > 1.0 + CONTRACTION_SLACK {
        return Err(NonMarkovError::Expanding(nu));
    }
    Ok(BlochMap {
        matrix: [[nu.re, nu.im, 0.0], [-nu.im, nu.re, 0.0], [0.0, 0.0, 1.0]],
        time,
    })
}

/// |det A_t| on a time grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VolumeSeries {
    pub grid: TimeGrid,
    pub volumes: Vec<f64>,
}

impl VolumeSeries {
    pub fn new(grid: TimeGrid, volumes: Vec<f64>) -> Result<Self, NonMarkovError> {
        if volumes.len() != grid.n_steps || volumes.len() < 2 {
            return Err(NonMarkovError::Length {
                samples: volumes.len(),
                grid: grid.n_steps,
            });
        }
        if let Some((index, &value)) = volumes
            .iter()
            .enumerate()
            .find(|(_, v)| !(v.is_finite() && **v >= 0.0 && **v <= 1.0 + CONTRACTION_SLACK))
        {
            return Err(NonMarkovError::Volume { index, value });
        }
        Ok(Self { grid, volumes })
    }

    fn increments(&self) -> impl Iterator<Item = f64> + '_ {
        self.volumes.windows(2).map(|w| w[1] - w[0])
    }
}

/// volumes[i] = |ν(t_i)|².
pub fn volume_series(echo: &EchoSeries) -> VolumeSeries {
    VolumeSeries {
        grid: echo.grid,
        volumes: echo.loschmidt(),
    }
}

/// N_V: total positive variation of the volume.
pub fn measure_nv(vol: &VolumeSeries) -> f64 {
    vol.increments().filter(|&d| d > 0.0).sum()
}

/// Time-resolved expansion and contraction of the accessible volume.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NonMarkovReport {
    pub n_v: f64,
    /// N₊(t_i): volume regained up to t_i.
    pub n_plus: Vec<f64>,
    /// N₋(t_i): volume lost up to t_i.
    pub n_minus: Vec<f64>,
    /// R(t_i) = N₊/N₋, zero until the first contraction.
    pub ratio: Vec<f64>,
    /// Maximal runs of strictly growing volume, at sample resolution.
    pub expansion_intervals: Vec<(f64, f64)>,
}

impl NonMarkovReport {
    pub fn is_markovian(&self) -> bool {
        self.n_v == 0.0
    }

    pub fn final_ratio(&self) -> f64 {
        self.ratio.last().copied().unwrap_or(0.0)
    }
}

pub fn accumulate_pm(vol: &VolumeSeries) -> NonMarkovReport {
    let n = vol.volumes.len();
    let mut n_plus = Vec::with_capacity(n);
    let mut n_minus = Vec::with_capacity(n);
    let mut ratio = Vec::with_capacity(n);
    let mut expansion_intervals = Vec::new();
    let (mut plus, mut minus) = (0.0, 0.0);
    let mut open: Option<usize> = None;

    n_plus.push(0.0);
    n_minus.push(0.0);
    ratio.push(0.0);
    for (j, d) in vol.increments().enumerate() {
        if d > 0.0 {
            plus += d;
            open.get_or_insert(j);
        } else {
            if d < 0.0 {
                minus -= d;
            }
            if let Some(start) = open.take() {
                expansion_intervals.push((vol.grid.time(start), vol.grid.time(j)));
            }
        }
        n_plus.push(plus);
        n_minus.push(minus);
        ratio.push(if minus > 0.0 { plus / minus } else { 0.0 });
    }
    if let Some(start) = open {
        expansion_intervals.push((vol.grid.time(start), vol.grid.time(n - 1)));
    }

    NonMarkovReport {
        n_v: plus,
        n_plus,
        n_minus,
        ratio,
        expansion_intervals,
    }
}
