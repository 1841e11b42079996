//! Decoherence factor ν(t) = ⟨e^{iH₀t} e^{−iH₁t}⟩ of the impurity qubit.
//!
//! H₀ is the second-quantized trap Hamiltonian and H₁ = H₀ + V̂ adds the
//! contact potential; the average is over the grand-canonical state of the
//! unperturbed gas. Three evaluations are provided:
//!
//! * [`echo_exact`]: for a quadratic Hamiltonian the many-body trace reduces to
//!   the single-particle determinant det[(1 − n̂) + n̂ e^{ih₀t} e^{−ih₁t}] per
//!   spin channel.
//! * [`echo_cumulant`]: linked-cluster expansion of ln ν truncated after the
//!   two-vertex connected term and exponentiated.
//! * [`echo_fock_oracle`]: brute-force trace over the full Fock space of a
//!   small basis, used to validate the determinant reduction.

use faer::dyn_stack::{MemBuffer, MemStack};
use faer::linalg::lu::partial_pivoting::factor::{lu_in_place, lu_in_place_scratch};
use faer::linalg::matmul::matmul;
use faer::{c64, Accum, Mat, Par, Side};
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::trap_gas::{solve_chemical_potential, SingleParticleModel, ThermalState, TrapGasConfig, TrapGasError};

/// Largest basis accepted by the Fock-space oracle.
pub const FOCK_MAX_MODES: usize = 12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EchoError {
    #[error("time grid needs t_max > 0 and at least 2 samples (t_max = {t_max}, n_steps = {n_steps})")]
    Grid { t_max: f64, n_steps: usize },
    #[error("model has {model} modes but the thermal state has {thermal}")]
    Dimension { model: usize, thermal: usize },
    #[error("spin degeneracy must be at least 1")]
    SpinDegeneracy,
    #[error("non-finite decoherence factor at t = {time}")]
    NonFinite { time: f64 },
    #[error("eigendecomposition of the perturbed Hamiltonian did not converge")]
    Eigen,
    #[error("Fock oracle limited to {FOCK_MAX_MODES} modes, got {0}")]
    FockTooLarge(usize),
    #[error("Fock oracle handles a single spin channel, got g_s = {0}")]
    FockSpin(usize),
    #[error(transparent)]
    Gas(#[from] TrapGasError),
}

/// Uniform time grid on [0, t_max] including both end points.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    pub t_max: f64,
    pub n_steps: usize,
}

impl TimeGrid {
    pub fn new(t_max: f64, n_steps: usize) -> Result<Self, EchoError> {
        let grid = Self { t_max, n_steps };
        grid.validate()?;
        Ok(grid)
    }

    pub fn validate(&self) -> Result<(), EchoError> {
        if !(self.t_max.is_finite() && self.t_max > 0.0) || self.n_steps < 2 {
            return Err(EchoError::Grid {
                t_max: self.t_max,
                n_steps: self.n_steps,
            });
        }
        Ok(())
    }

    pub fn spacing(&self) -> f64 {
        self.t_max / (self.n_steps - 1) as f64
    }

    pub fn time(&self, i: usize) -> f64 {
        self.t_max * i as f64 / (self.n_steps - 1) as f64
    }

    pub fn samples(&self) -> Vec<f64> {
        (0..self.n_steps).map(|i| self.time(i)).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EchoMethod {
    Exact,
    Cumulant,
    FockOracle,
}

impl EchoMethod {
    pub fn as_str(&self) -> &'static str {
        match self {
            EchoMethod::Exact => "exact",
            EchoMethod::Cumulant => "cumulant",
            EchoMethod::FockOracle => "fock_oracle",
        }
    }
}

/// ν(t) sampled on a time grid. `values[i]` belongs to `grid.time(i)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EchoSeries {
    pub grid: TimeGrid,
    pub values: Vec<Complex64>,
    pub method: EchoMethod,
    pub spin_degeneracy: usize,
}

impl EchoSeries {
    pub fn times(&self) -> Vec<f64> {
        self.grid.samples()
    }

    /// Loschmidt echo |ν(t)|².
    pub fn loschmidt(&self) -> Vec<f64> {
        self.values.iter().map(|z| z.norm_sqr()).collect()
    }
}

fn check_inputs(
    model: &SingleParticleModel,
    thermal: &ThermalState,
    grid: &TimeGrid,
    spin_degeneracy: usize,
) -> Result<(), EchoError> {
    grid.validate()?;
    if spin_degeneracy == 0 {
        return Err(EchoError::SpinDegeneracy);
    }
    if model.modes() != thermal.modes() || thermal.holes.len() != thermal.modes() {
        return Err(EchoError::Dimension {
            model: model.modes(),
            thermal: thermal.modes(),
        });
    }
    Ok(())
}

/// Per-worker buffers for the determinant evaluation.
struct DetWorkspace {
    w_re: Mat<f64>,
    w_im: Mat<f64>,
    d_re: Mat<f64>,
    d_im: Mat<f64>,
    a: Mat<c64>,
    perm: Vec<usize>,
    perm_inv: Vec<usize>,
    stack: MemBuffer,
}

impl DetWorkspace {
    fn new(k: usize) -> Self {
        Self {
            w_re: Mat::zeros(k, k),
            w_im: Mat::zeros(k, k),
            d_re: Mat::zeros(k, k),
            d_im: Mat::zeros(k, k),
            a: Mat::zeros(k, k),
            perm: vec![0; k],
            perm_inv: vec![0; k],
            stack: MemBuffer::new(lu_in_place_scratch::<usize, c64>(k, k, Par::Seq, Default::default())),
        }
    }
}

/// The coupled block of h₁ in its eigenbasis, plus the occupations restricted
/// to that block. Modes untouched by V contribute a unit row to the
/// determinant and are dropped.
struct CoupledBlock {
    energies: Vec<f64>,
    occupations: Vec<f64>,
    holes: Vec<f64>,
    eigenvalues: Vec<f64>,
    eigenvectors: Mat<f64>,
}

impl CoupledBlock {
    fn new(model: &SingleParticleModel, thermal: &ThermalState) -> Result<Option<Self>, EchoError> {
        let modes = model.coupled_modes();
        if modes.is_empty() {
            return Ok(None);
        }
        let k = modes.len();
        let e = model.energies();
        let v = model.v_matrix();
        let h1 = Mat::from_fn(k, k, |i, j| {
            let (a, b) = (modes[i], modes[j]);
            v[(a, b)] + if a == b { e[a] } else { 0.0 }
        });
        let evd = h1.self_adjoint_eigen(Side::Lower).map_err(|_| EchoError::Eigen)?;
        let eigenvalues = (0..k).map(|i| evd.S().column_vector()[i]).collect();
        Ok(Some(Self {
            energies: modes.iter().map(|&a| e[a]).collect(),
            occupations: modes.iter().map(|&a| thermal.occupations[a]).collect(),
            holes: modes.iter().map(|&a| thermal.holes[a]).collect(),
            eigenvalues,
            eigenvectors: evd.U().to_owned(),
        }))
    }

    fn size(&self) -> usize {
        self.energies.len()
    }

    /// ln det[(1 − n̂) + n̂ e^{ih₀t} e^{−ih₁t}] on the coupled block.
    fn log_det(&self, t: f64, ws: &mut DetWorkspace) -> Complex64 {
        let k = self.size();
        let u = &self.eigenvectors;
        for col in 0..k {
            let (s, c) = (self.eigenvalues[col] * t).sin_cos();
            for row in 0..k {
                let x = u[(row, col)];
                ws.w_re[(row, col)] = x * c;
                ws.w_im[(row, col)] = -x * s;
            }
        }
        // e^{−ih₁t} = U e^{−iΛt} Uᵀ, split into real and imaginary parts.
        matmul(
            ws.d_re.as_mut(),
            Accum::Replace,
            ws.w_re.as_ref(),
            u.transpose(),
            1.0,
            Par::Seq,
        );
        matmul(
            ws.d_im.as_mut(),
            Accum::Replace,
            ws.w_im.as_ref(),
            u.transpose(),
            1.0,
            Par::Seq,
        );

        for row in 0..k {
            let phase = Complex64::from_polar(self.occupations[row], self.energies[row] * t);
            for col in 0..k {
                ws.a[(row, col)] = phase * c64::new(ws.d_re[(row, col)], ws.d_im[(row, col)]);
            }
            ws.a[(row, row)] += self.holes[row];
        }

        let (info, _) = lu_in_place(
            ws.a.as_mut(),
            &mut ws.perm,
            &mut ws.perm_inv,
            Par::Seq,
            MemStack::new(&mut ws.stack),
            Default::default(),
        );
        let mut log_det = Complex64::new(0.0, 0.0);
        for i in 0..k {
            log_det += ws.a[(i, i)].ln();
        }
        if info.transposition_count % 2 == 1 {
            log_det += Complex64::new(0.0, std::f64::consts::PI);
        }
        log_det
    }
}

/// exp(g_s · ln ν₁), mapping a vanishing determinant to exactly zero.
fn exp_channels(log_nu1: Complex64, spin_degeneracy: usize, time: f64) -> Result<Complex64, EchoError> {
    if log_nu1.re == f64::NEG_INFINITY {
        return Ok(Complex64::new(0.0, 0.0));
    }
    let nu = (log_nu1 * spin_degeneracy as f64).exp();
    if nu.re.is_finite() && nu.im.is_finite() {
        Ok(nu)
    } else {
        Err(EchoError::NonFinite { time })
    }
}

/// ν(t) from the single-particle determinant, raised to the power g_s.
///
/// h₁ is diagonalized once; every time sample then costs two real matrix
/// products and one complex LU factorization. Samples are evaluated in
/// parallel on the current rayon pool and assembled in grid order.
pub fn echo_exact(
    model: &SingleParticleModel,
    thermal: &ThermalState,
    grid: &TimeGrid,
    spin_degeneracy: usize,
) -> Result<EchoSeries, EchoError> {
    check_inputs(model, thermal, grid, spin_degeneracy)?;
    let series = |values| EchoSeries {
        grid: *grid,
        values,
        method: EchoMethod::Exact,
        spin_degeneracy,
    };
    let Some(block) = CoupledBlock::new(model, thermal)? else {
        return Ok(series(vec![Complex64::new(1.0, 0.0); grid.n_steps]));
    };

    let values = (0..grid.n_steps)
        .into_par_iter()
        .map_init(
            || DetWorkspace::new(block.size()),
            |ws, i| {
                if i == 0 {
                    return Ok(Complex64::new(1.0, 0.0));
                }
                let t = grid.time(i);
                exp_channels(block.log_det(t, ws), spin_degeneracy, t)
            },
        )
        .collect::<Result<Vec<_>, _>>()?;
    Ok(series(values))
}

/// I(ω, t) = ∫₀ᵗ dτ₁ ∫₀^{τ₁} dτ₂ e^{iω(τ₁−τ₂)} = (1 + iωt − e^{iωt})/ω².
pub fn two_vertex_kernel(omega: f64, t: f64) -> Complex64 {
    let x = omega * t;
    if x.abs() < 1e-2 {
        let x2 = x * x;
        let re = 0.5 - x2 / 24.0 + x2 * x2 / 720.0;
        let im = x * (1.0 / 6.0 - x2 / 120.0 + x2 * x2 / 5040.0);
        return Complex64::new(re, im) * (t * t);
    }
    let half_sin = (0.5 * x).sin();
    Complex64::new(2.0 * half_sin * half_sin, x - x.sin()) / (omega * omega)
}

/// Connected two-point weights |V_mn|² n_m (1 − n_n), merged by transition
/// frequency ε_m − ε_n.
fn transition_spectrum(model: &SingleParticleModel, thermal: &ThermalState) -> Vec<(f64, f64)> {
    let modes = model.coupled_modes();
    let e = model.energies();
    let v = model.v_matrix();
    let mut lines = Vec::with_capacity(modes.len() * modes.len());
    for &m in &modes {
        for &n in &modes {
            let w = v[(m, n)] * v[(m, n)] * thermal.occupations[m] * thermal.holes[n];
            if w != 0.0 {
                lines.push((e[m] - e[n], w));
            }
        }
    }
    lines.sort_by(|a, b| a.0.total_cmp(&b.0));

    let mut merged: Vec<(f64, f64)> = Vec::new();
    for (freq, w) in lines {
        match merged.last_mut() {
            Some((f, acc)) if (freq - *f).abs() <= 1e-9 * (1.0 + f.abs()) => *acc += w,
            _ => merged.push((freq, w)),
        }
    }
    for line in &mut merged {
        if line.0.abs() <= 1e-9 {
            line.0 = 0.0;
        }
    }
    merged
}

/// ν(t) from the second-order cumulant,
/// ln ν₁ = −itV̄ − Σ_{mn} |V_mn|² n_m (1 − n_n) I(ε_m − ε_n, t), ν = ν₁^{g_s}.
pub fn echo_cumulant(
    model: &SingleParticleModel,
    thermal: &ThermalState,
    grid: &TimeGrid,
    spin_degeneracy: usize,
) -> Result<EchoSeries, EchoError> {
    check_inputs(model, thermal, grid, spin_degeneracy)?;
    let v = model.v_matrix();
    let mean_shift: f64 = (0..model.modes()).map(|m| thermal.occupations[m] * v[(m, m)]).sum();
    let spectrum = transition_spectrum(model, thermal);

    let values = (0..grid.n_steps)
        .map(|i| {
            if i == 0 {
                return Ok(Complex64::new(1.0, 0.0));
            }
            let t = grid.time(i);
            let mut log_nu1 = Complex64::new(0.0, -t * mean_shift);
            for &(freq, w) in &spectrum {
                log_nu1 -= two_vertex_kernel(freq, t) * w;
            }
            exp_channels(log_nu1, spin_degeneracy, t)
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(EchoSeries {
        grid: *grid,
        values,
        method: EchoMethod::Cumulant,
        spin_degeneracy,
    })
}

/// Fermionic sign and target state of c†_to c_from acting on `state`, or
/// `None` when the hop is blocked.
fn hop(state: u32, from: usize, to: usize) -> Option<(u32, f64)> {
    if state & (1 << from) == 0 {
        return None;
    }
    let removed = state & !(1 << from);
    if removed & (1 << to) != 0 {
        return None;
    }
    let below = |s: u32, k: usize| (s & ((1u32 << k) - 1)).count_ones();
    let swaps = below(state, from) + below(removed, to);
    let sign = if swaps % 2 == 0 { 1.0 } else { -1.0 };
    Some((removed | (1 << to), sign))
}

/// ν(t) by explicit trace over all 2^M occupation states of one spin channel.
///
/// H₁ conserves particle number, so each N-particle block is diagonalized
/// separately. μ is taken from [`solve_chemical_potential`] for `config`.
pub fn echo_fock_oracle(
    model: &SingleParticleModel,
    config: &TrapGasConfig,
    grid: &TimeGrid,
) -> Result<EchoSeries, EchoError> {
    grid.validate()?;
    let m = model.modes();
    if m > FOCK_MAX_MODES {
        return Err(EchoError::FockTooLarge(m));
    }
    if config.spin_degeneracy != 1 {
        return Err(EchoError::FockSpin(config.spin_degeneracy));
    }
    if config.cutoff != m {
        return Err(EchoError::Dimension {
            model: m,
            thermal: config.cutoff,
        });
    }
    let thermal = solve_chemical_potential(config)?;
    let beta = config.beta;
    let e = model.energies();
    let v = model.v_matrix();

    let energy0 = |s: u32| (0..m).filter(|&k| s & (1 << k) != 0).map(|k| e[k]).sum::<f64>();
    let n_states = 1u32 << m;
    let log_weight = |s: u32| -beta * (energy0(s) - thermal.mu * s.count_ones() as f64);
    let log_z = {
        let max = (0..n_states).map(log_weight).fold(f64::NEG_INFINITY, f64::max);
        max + (0..n_states).map(|s| (log_weight(s) - max).exp()).sum::<f64>().ln()
    };

    // Per block: eigenvalues λ_k and coefficients Σ_s p_s U_sk² at each energy E0_s.
    struct Block {
        eigenvalues: Vec<f64>,
        energies0: Vec<f64>,
        weights: Mat<f64>,
    }
    let mut blocks = Vec::new();
    for particles in 0..=m as u32 {
        let states: Vec<u32> = (0..n_states).filter(|s| s.count_ones() == particles).collect();
        let dim = states.len();
        let index = |s: u32| states.binary_search(&s).expect("hop preserves particle number");
        let mut h1 = Mat::<f64>::zeros(dim, dim);
        for (col, &s) in states.iter().enumerate() {
            for to in 0..m {
                for from in 0..m {
                    let amp = v[(to, from)];
                    if amp == 0.0 {
                        continue;
                    }
                    if to == from {
                        if s & (1 << from) != 0 {
                            h1[(col, col)] += amp;
                        }
                    } else if let Some((target, sign)) = hop(s, from, to) {
                        h1[(index(target), col)] += sign * amp;
                    }
                }
            }
            h1[(col, col)] += energy0(s);
        }
        let evd = h1.self_adjoint_eigen(Side::Lower).map_err(|_| EchoError::Eigen)?;
        let u = evd.U();
        let p: Vec<f64> = states.iter().map(|&s| (log_weight(s) - log_z).exp()).collect();
        blocks.push(Block {
            eigenvalues: (0..dim).map(|k| evd.S().column_vector()[k]).collect(),
            energies0: states.iter().map(|&s| energy0(s)).collect(),
            weights: Mat::from_fn(dim, dim, |row, k| p[row] * u[(row, k)] * u[(row, k)]),
        });
    }

    let values = (0..grid.n_steps)
        .map(|i| {
            if i == 0 {
                return Complex64::new(1.0, 0.0);
            }
            let t = grid.time(i);
            let mut nu = Complex64::new(0.0, 0.0);
            for block in &blocks {
                let forward: Vec<Complex64> = block
                    .energies0
                    .iter()
                    .map(|&en| Complex64::from_polar(1.0, en * t))
                    .collect();
                for (k, &lambda) in block.eigenvalues.iter().enumerate() {
                    let mut c = Complex64::new(0.0, 0.0);
                    for (row, f) in forward.iter().enumerate() {
                        c += f * block.weights[(row, k)];
                    }
                    nu += c * Complex64::from_polar(1.0, -lambda * t);
                }
            }
            nu
        })
        .collect();
    Ok(EchoSeries {
        grid: *grid,
        values,
        method: EchoMethod::FockOracle,
        spin_degeneracy: 1,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trap_gas::{build_model, coupling_from_alpha};
    use approx::assert_relative_eq;

    fn small_gas(n_fermions: usize, cutoff: usize, beta: f64) -> TrapGasConfig {
        TrapGasConfig {
            omega: 1.0,
            n_fermions,
            spin_degeneracy: 1,
            beta,
            cutoff,
        }
    }

    fn max_diff(a: &EchoSeries, b: &EchoSeries) -> f64 {
        a.values
            .iter()
            .zip(&b.values)
            .map(|(x, y)| (x - y).norm())
            .fold(0.0, f64::max)
    }

    #[test]
    fn grid_endpoints() {
        let grid = TimeGrid::new(2.0, 5).unwrap();
        assert_eq!(grid.samples(), vec![0.0, 0.5, 1.0, 1.5, 2.0]);
        assert_eq!(grid.spacing(), 0.5);
        assert!(TimeGrid::new(0.0, 5).is_err());
        assert!(TimeGrid::new(1.0, 1).is_err());
    }

    #[test]
    fn kernel_limits() {
        assert_eq!(two_vertex_kernel(0.0, 2.0), Complex64::new(2.0, 0.0));
        let (w, t) = (1.3, 0.7);
        let direct = (Complex64::new(1.0, w * t) - Complex64::from_polar(1.0, w * t)) / (w * w);
        assert!((two_vertex_kernel(w, t) - direct).norm() < 1e-14);
        // Series branch joins the closed form continuously.
        let (a, b) = (two_vertex_kernel(0.0099999, 1.0), two_vertex_kernel(0.0100001, 1.0));
        assert!((a - b).norm() < 1e-7);
    }

    #[test]
    fn kernel_matches_nested_quadrature() {
        // Midpoint rule on the inner integral (closed form) and Simpson on the outer.
        let (w, t) = (2.4, 1.9);
        let inner = |tau: f64| (Complex64::from_polar(1.0, w * tau) - 1.0) / Complex64::new(0.0, w);
        let n = 2000;
        let h = t / n as f64;
        let mut acc = inner(0.0) + inner(t);
        for j in 1..n {
            acc += inner(j as f64 * h) * if j % 2 == 1 { 4.0 } else { 2.0 };
        }
        let simpson = acc * (h / 3.0);
        assert!((simpson - two_vertex_kernel(w, t)).norm() < 1e-10);
    }

    #[test]
    fn no_coupling_means_no_decoherence() {
        let config = TrapGasConfig::new(1.0, 20, 3.0).unwrap();
        let model = build_model(&config, 0.0).unwrap();
        let thermal = solve_chemical_potential(&config).unwrap();
        let grid = TimeGrid::new(20.0, 50).unwrap();
        for series in [
            echo_exact(&model, &thermal, &grid, 2).unwrap(),
            echo_cumulant(&model, &thermal, &grid, 2).unwrap(),
        ] {
            assert!(series.values.iter().all(|&z| z == Complex64::new(1.0, 0.0)));
        }
    }

    #[test]
    fn single_mode_closed_form() {
        let config = small_gas(1, 1, 2.0);
        let model = build_model(&config, 0.7).unwrap();
        let thermal = solve_chemical_potential(&config).unwrap();
        let grid = TimeGrid::new(10.0, 41).unwrap();
        let v00 = model.v_matrix()[(0, 0)];
        let exact = echo_exact(&model, &thermal, &grid, 1).unwrap();
        let oracle = echo_fock_oracle(&model, &config, &grid).unwrap();
        for (i, t) in grid.samples().into_iter().enumerate() {
            let expected = Complex64::from_polar(1.0, -v00 * t);
            assert!((exact.values[i] - expected).norm() < 1e-12);
            assert!((oracle.values[i] - expected).norm() < 1e-12);
            assert_relative_eq!(exact.values[i].norm(), 1.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn diagonal_potential_factorizes() {
        let config = small_gas(5, 14, 1.5);
        let model = build_model(&config, 0.9).unwrap().diagonal_part();
        let thermal = solve_chemical_potential(&config).unwrap();
        let grid = TimeGrid::new(15.0, 61).unwrap();
        let exact = echo_exact(&model, &thermal, &grid, 1).unwrap();
        for (i, t) in grid.samples().into_iter().enumerate() {
            let product: Complex64 = (0..model.modes())
                .map(|m| {
                    let n = thermal.occupations[m];
                    Complex64::new(1.0 - n, 0.0) + Complex64::from_polar(n, -model.v_matrix()[(m, m)] * t)
                })
                .product();
            assert!((exact.values[i] - product).norm() < 1e-12, "t = {t}");
        }
    }

    #[test]
    fn determinant_route_matches_fock_space() {
        let config = small_gas(3, 6, 2.0);
        let model = build_model(&config, 0.3).unwrap();
        let thermal = solve_chemical_potential(&config).unwrap();
        let grid = TimeGrid::new(20.0, 200).unwrap();
        let exact = echo_exact(&model, &thermal, &grid, 1).unwrap();
        let oracle = echo_fock_oracle(&model, &config, &grid).unwrap();
        assert_eq!(oracle.values[0], Complex64::new(1.0, 0.0));
        assert!(max_diff(&exact, &oracle) < 1e-9);
    }

    #[test]
    fn fock_oracle_general_hermitian_coupling() {
        // Dense, non-separable coupling exercises every fermionic sign.
        let m = 5;
        let v = Mat::from_fn(m, m, |i, j| 0.1 * ((i * 3 + j * 3 + i * j) % 7) as f64 - 0.25);
        let energies = (0..m).map(|n| n as f64 + 0.5).collect();
        let model = SingleParticleModel::from_parts(energies, v).unwrap();
        let config = small_gas(2, m, 1.3);
        let thermal = solve_chemical_potential(&config).unwrap();
        let grid = TimeGrid::new(12.0, 97).unwrap();
        let exact = echo_exact(&model, &thermal, &grid, 1).unwrap();
        let oracle = echo_fock_oracle(&model, &config, &grid).unwrap();
        assert!(max_diff(&exact, &oracle) < 1e-9);
    }

    #[test]
    fn fock_oracle_rejects_large_or_spinful_inputs() {
        let config = small_gas(3, 13, 1.0);
        let model = build_model(&config, 0.3).unwrap();
        let grid = TimeGrid::new(1.0, 3).unwrap();
        assert_eq!(
            echo_fock_oracle(&model, &config, &grid),
            Err(EchoError::FockTooLarge(13))
        );
        let spinful = TrapGasConfig {
            spin_degeneracy: 2,
            cutoff: 6,
            ..config
        };
        let model = build_model(&spinful, 0.3).unwrap();
        assert_eq!(echo_fock_oracle(&model, &spinful, &grid), Err(EchoError::FockSpin(2)));
    }

    #[test]
    fn dimension_mismatch_is_reported() {
        let config = small_gas(3, 8, 1.0);
        let model = build_model(&config, 0.3).unwrap();
        let thermal = solve_chemical_potential(&small_gas(3, 7, 1.0)).unwrap();
        let grid = TimeGrid::new(1.0, 3).unwrap();
        assert_eq!(
            echo_exact(&model, &thermal, &grid, 1),
            Err(EchoError::Dimension { model: 8, thermal: 7 })
        );
        assert!(echo_cumulant(&model, &thermal, &grid, 1).is_err());
    }

    #[test]
    fn spin_channels_multiply() {
        let config = TrapGasConfig::new(1.0, 12, 2.0).unwrap().with_cutoff(40).unwrap();
        let v0 = coupling_from_alpha(0.05, 1.0, 12).unwrap();
        let model = build_model(&config, v0).unwrap();
        let thermal = solve_chemical_potential(&config).unwrap();
        let grid = TimeGrid::new(12.0, 80).unwrap();
        for echo in [echo_exact, echo_cumulant] {
            let one = echo(&model, &thermal, &grid, 1).unwrap();
            let two = echo(&model, &thermal, &grid, 2).unwrap();
            for (a, b) in one.values.iter().zip(&two.values) {
                assert!((a * a - b).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn cumulant_error_is_third_order_at_weak_coupling() {
        let config = small_gas(20, 80, 3.0);
        let thermal = solve_chemical_potential(&config).unwrap();
        let grid = TimeGrid::new(6.0 * std::f64::consts::PI, 400).unwrap();
        let gap = |alpha: f64| {
            let model = build_model(&config, coupling_from_alpha(alpha, 1.0, 20).unwrap()).unwrap();
            let exact = echo_exact(&model, &thermal, &grid, 1).unwrap();
            let cumulant = echo_cumulant(&model, &thermal, &grid, 1).unwrap();
            for series in [&exact, &cumulant] {
                assert!(series.values.iter().all(|z| z.norm() <= 1.0 + 1e-10));
            }
            max_diff(&exact, &cumulant)
        };
        // alpha / 4 halves V0, so an O(V0^3) remainder shrinks eightfold.
        let ratio = gap(1e-4) / gap(2.5e-5);
        assert!((6.0..10.0).contains(&ratio), "gap ratio {ratio}");
    }
}
