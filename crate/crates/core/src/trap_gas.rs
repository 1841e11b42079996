//! Single-particle description of a harmonically trapped ideal Fermi gas.
//!
//! Units: ħ = m = 1. Lengths are measured in the trap length x₀ = 1/√ω, so
//! oscillator eigenfunctions evaluated at the trap center are dimensionless.
//! The impurity acts on the gas through a contact potential πV₀x₀δ(x) sitting
//! at x = 0; in the dimensionless basis its matrix elements are
//! V_mn = π V₀ ψ_m(0) ψ_n(0).

use std::f64::consts::PI;

use faer::Mat;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Relative tolerance on the particle number reached by the μ solver.
pub const PARTICLE_NUMBER_RTOL: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TrapGasError {
    #[error("trap frequency must be positive and finite, got {0}")]
    Omega(f64),
    #[error("inverse temperature must be positive and finite, got {0}")]
    Beta(f64),
    #[error("the gas needs at least one fermion")]
    NoFermions,
    #[error("spin degeneracy must be at least 1")]
    SpinDegeneracy,
    #[error("mode cutoff must be at least 1, got {0}")]
    Cutoff(usize),
    #[error("{cutoff} modes x {spin_degeneracy} spin states cannot hold {n_fermions} fermions")]
    BasisTooSmall {
        cutoff: usize,
        spin_degeneracy: usize,
        n_fermions: usize,
    },
    #[error("coupling parameter alpha must be non-negative and finite, got {0}")]
    Alpha(f64),
    #[error("coupling strength must be finite, got {0}")]
    Coupling(f64),
    #[error("chemical potential not bracketed: N({lo}) = {n_lo}, N({hi}) = {n_hi}, target {target}")]
    NonBracketing {
        lo: f64,
        hi: f64,
        n_lo: f64,
        n_hi: f64,
        target: f64,
    },
    #[error("model has {energies} energies but a {rows}x{cols} potential matrix")]
    Shape { energies: usize, rows: usize, cols: usize },
    #[error("potential matrix is not symmetric at ({row}, {col})")]
    Asymmetric { row: usize, col: usize },
}

/// Parameters of the trapped gas.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrapGasConfig {
    /// Trap frequency ω.
    pub omega: f64,
    /// Total number of fermions N_F (summed over spin).
    pub n_fermions: usize,
    /// Number of identical spin channels g_s.
    pub spin_degeneracy: usize,
    /// Inverse temperature β.
    pub beta: f64,
    /// Number of retained single-particle modes M.
    pub cutoff: usize,
}

impl TrapGasConfig {
    /// Spin-1/2 gas with the default mode cutoff.
    pub fn new(omega: f64, n_fermions: usize, beta: f64) -> Result<Self, TrapGasError> {
        let config = Self {
            omega,
            n_fermions,
            spin_degeneracy: 2,
            beta,
            cutoff: default_cutoff(n_fermions, 2),
        };
        config.validate()?;
        Ok(config)
    }

    /// Sets g_s and resets the cutoff to the default for the new degeneracy.
    pub fn with_spin_degeneracy(mut self, spin_degeneracy: usize) -> Result<Self, TrapGasError> {
        self.spin_degeneracy = spin_degeneracy;
        self.cutoff = default_cutoff(self.n_fermions, spin_degeneracy.max(1));
        self.validate()?;
        Ok(self)
    }

    pub fn with_cutoff(mut self, cutoff: usize) -> Result<Self, TrapGasError> {
        self.cutoff = cutoff;
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<(), TrapGasError> {
        if !(self.omega.is_finite() && self.omega > 0.0) {
            return Err(TrapGasError::Omega(self.omega));
        }
        if !(self.beta.is_finite() && self.beta > 0.0) {
            return Err(TrapGasError::Beta(self.beta));
        }
        if self.n_fermions == 0 {
            return Err(TrapGasError::NoFermions);
        }
        if self.spin_degeneracy == 0 {
            return Err(TrapGasError::SpinDegeneracy);
        }
        if self.cutoff == 0 {
            return Err(TrapGasError::Cutoff(self.cutoff));
        }
        // A completely filled basis is admitted: μ then sits at the top of
        // the bracket where every occupation rounds to one.
        if self.cutoff * self.spin_degeneracy < self.n_fermions {
            return Err(TrapGasError::BasisTooSmall {
                cutoff: self.cutoff,
                spin_degeneracy: self.spin_degeneracy,
                n_fermions: self.n_fermions,
            });
        }
        Ok(())
    }

    /// ε_F = ω(N_F + 1/2), with the total particle number.
    pub fn fermi_energy(&self) -> f64 {
        fermi_energy(self.omega, self.n_fermions)
    }

    pub fn level_energy(&self, n: usize) -> f64 {
        self.omega * (n as f64 + 0.5)
    }
}

/// Default mode cutoff: max(4⌈N_F/g_s⌉, N_F + 50).
pub fn default_cutoff(n_fermions: usize, spin_degeneracy: usize) -> usize {
    let per_channel = n_fermions.div_ceil(spin_degeneracy.max(1));
    (4 * per_channel).max(n_fermions + 50)
}

pub fn fermi_energy(omega: f64, n_fermions: usize) -> f64 {
    omega * (n_fermions as f64 + 0.5)
}

/// Values ψ_n(0) of the dimensionless oscillator eigenfunctions, n < cutoff.
///
/// Uses ψ₀(0) = π^{-1/4}, ψ₁(0) = 0 and ψ_{n+1}(0) = -√(n/(n+1)) ψ_{n-1}(0).
pub fn psi0_table(cutoff: usize) -> Result<Vec<f64>, TrapGasError> {
    if cutoff == 0 {
        return Err(TrapGasError::Cutoff(cutoff));
    }
    let mut psi = vec![0.0; cutoff];
    psi[0] = PI.powf(-0.25);
    for n in 1..cutoff.saturating_sub(1) {
        let nf = n as f64;
        psi[n + 1] = -(nf / (nf + 1.0)).sqrt() * psi[n - 1];
    }
    Ok(psi)
}

/// Inverse of [`alpha_from_coupling`]: V₀ = √(α ω ε_F).
pub fn coupling_from_alpha(alpha: f64, omega: f64, n_fermions: usize) -> Result<f64, TrapGasError> {
    if !(alpha.is_finite() && alpha >= 0.0) {
        return Err(TrapGasError::Alpha(alpha));
    }
    if !(omega.is_finite() && omega > 0.0) {
        return Err(TrapGasError::Omega(omega));
    }
    Ok((alpha * omega * fermi_energy(omega, n_fermions)).sqrt())
}

/// α = V₀² / (ω ε_F).
pub fn alpha_from_coupling(v0: f64, omega: f64, n_fermions: usize) -> f64 {
    v0 * v0 / (omega * fermi_energy(omega, n_fermions))
}

/// Truncated single-particle Hamiltonians h₀ = diag(ε) and h₁ = h₀ + V.
#[derive(Debug, Clone)]
pub struct SingleParticleModel {
    energies: Vec<f64>,
    psi0: Vec<f64>,
    v_matrix: Mat<f64>,
    v0: f64,
}

impl SingleParticleModel {
    /// Model with an arbitrary symmetric perturbation. `psi0` is left empty and
    /// `v0` is zero since the potential is not a contact term.
    pub fn from_parts(energies: Vec<f64>, v_matrix: Mat<f64>) -> Result<Self, TrapGasError> {
        let m = energies.len();
        if m == 0 {
            return Err(TrapGasError::Cutoff(0));
        }
        if v_matrix.nrows() != m || v_matrix.ncols() != m {
            return Err(TrapGasError::Shape {
                energies: m,
                rows: v_matrix.nrows(),
                cols: v_matrix.ncols(),
            });
        }
        for row in 0..m {
            for col in 0..row {
                if v_matrix[(row, col)] != v_matrix[(col, row)] {
                    return Err(TrapGasError::Asymmetric { row, col });
                }
            }
        }
        Ok(Self {
            energies,
            psi0: Vec::new(),
            v_matrix,
            v0: 0.0,
        })
    }

    /// Same spectrum with every off-diagonal coupling removed.
    pub fn diagonal_part(&self) -> Self {
        let m = self.modes();
        let v = &self.v_matrix;
        Self {
            energies: self.energies.clone(),
            psi0: self.psi0.clone(),
            v_matrix: Mat::from_fn(m, m, |i, j| if i == j { v[(i, i)] } else { 0.0 }),
            v0: self.v0,
        }
    }

    pub fn modes(&self) -> usize {
        self.energies.len()
    }

    pub fn energies(&self) -> &[f64] {
        &self.energies
    }

    pub fn psi0(&self) -> &[f64] {
        &self.psi0
    }

    pub fn v_matrix(&self) -> &Mat<f64> {
        &self.v_matrix
    }

    pub fn v0(&self) -> f64 {
        self.v0
    }

    /// Modes with at least one non-zero matrix element of V. All other modes
    /// evolve identically under h₀ and h₁.
    pub fn coupled_modes(&self) -> Vec<usize> {
        let m = self.modes();
        (0..m)
            .filter(|&i| (0..m).any(|j| self.v_matrix[(i, j)] != 0.0))
            .collect()
    }
}

/// Oscillator spectrum plus contact potential of strength `v0` at the origin.
pub fn build_model(config: &TrapGasConfig, v0: f64) -> Result<SingleParticleModel, TrapGasError> {
    config.validate()?;
    if !v0.is_finite() {
        return Err(TrapGasError::Coupling(v0));
    }
    let m = config.cutoff;
    let psi0 = psi0_table(m)?;
    let energies = (0..m).map(|n| config.level_energy(n)).collect();
    let strength = PI * v0;
    let v_matrix = Mat::from_fn(m, m, |i, j| strength * (psi0[i] * psi0[j]));
    Ok(SingleParticleModel {
        energies,
        psi0,
        v_matrix,
        v0,
    })
}

/// Grand-canonical equilibrium of one spin channel, shared by all channels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThermalState {
    pub mu: f64,
    pub beta: f64,
    /// Fermi–Dirac occupation n_k of each mode.
    pub occupations: Vec<f64>,
    /// 1 − n_k, evaluated without cancellation.
    pub holes: Vec<f64>,
}

impl ThermalState {
    pub fn from_energies(energies: &[f64], beta: f64, mu: f64) -> Self {
        let occupations = energies.iter().map(|&e| fermi_dirac(beta * (e - mu))).collect();
        let holes = energies.iter().map(|&e| fermi_dirac(-beta * (e - mu))).collect();
        Self {
            mu,
            beta,
            occupations,
            holes,
        }
    }

    pub fn modes(&self) -> usize {
        self.occupations.len()
    }

    /// g_s Σ n_k.
    pub fn particle_number(&self, spin_degeneracy: usize) -> f64 {
        spin_degeneracy as f64 * self.occupations.iter().sum::<f64>()
    }
}

/// 1/(eˣ + 1) without overflow for large |x|.
pub fn fermi_dirac(x: f64) -> f64 {
    if x >= 0.0 {
        let e = (-x).exp();
        e / (1.0 + e)
    } else {
        1.0 / (1.0 + x.exp())
    }
}

fn particle_number(energies: &[f64], beta: f64, mu: f64, spin_degeneracy: usize) -> f64 {
    spin_degeneracy as f64 * energies.iter().map(|&e| fermi_dirac(beta * (e - mu))).sum::<f64>()
}

/// Fixes μ so that the gas holds N_F fermions on average, by bisection on the
/// monotone particle-number function over [ε₀ − 50/β, ε_{M−1} + 50/β].
pub fn solve_chemical_potential(config: &TrapGasConfig) -> Result<ThermalState, TrapGasError> {
    config.validate()?;
    let energies: Vec<f64> = (0..config.cutoff).map(|n| config.level_energy(n)).collect();
    let beta = config.beta;
    let gs = config.spin_degeneracy;
    let target = config.n_fermions as f64;
    let tol = PARTICLE_NUMBER_RTOL * target;
    let count = |mu: f64| particle_number(&energies, beta, mu, gs);

    let mut lo = energies[0] - 50.0 / beta;
    let mut hi = energies[energies.len() - 1] + 50.0 / beta;
    let (n_lo, n_hi) = (count(lo), count(hi));
    if n_lo > target + tol || n_hi < target - tol {
        return Err(TrapGasError::NonBracketing {
            lo,
            hi,
            n_lo,
            n_hi,
            target,
        });
    }
    if (n_hi - target).abs() <= tol {
        return Ok(ThermalState::from_energies(&energies, beta, hi));
    }

    let mut mu = 0.5 * (lo + hi);
    // 200 halvings exhaust f64 resolution of any bracket.
    for _ in 0..200 {
        mu = 0.5 * (lo + hi);
        let n = count(mu);
        if (n - target).abs() <= tol {
            break;
        }
        if n < target {
            lo = mu;
        } else {
            hi = mu;
        }
        if hi - lo <= f64::EPSILON * mu.abs().max(1.0) {
            break;
        }
    }
    Ok(ThermalState::from_energies(&energies, beta, mu))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    /// Normalized Hermite function at the origin by direct polynomial
    /// evaluation: ψ_n(0) = H_n(0) / √(2ⁿ n! √π), with H_n(0) from the
    /// explicit formula (−1)^{n/2} n!/(n/2)!.
    fn psi0_direct(n: usize) -> f64 {
        if n % 2 == 1 {
            return 0.0;
        }
        // log |H_n(0)| − ½ log(2ⁿ n! √π) = ½ log n! − log (n/2)! − (n/2) log 2 − ¼ log π
        let ln_fact = |k: usize| (1..=k).map(|i| (i as f64).ln()).sum::<f64>();
        let half = n / 2;
        let ln_abs = 0.5 * ln_fact(n) - ln_fact(half) - half as f64 * 2f64.ln() - 0.25 * PI.ln();
        let sign = if half.is_multiple_of(2) { 1.0 } else { -1.0 };
        sign * ln_abs.exp()
    }

    #[test]
    fn psi0_low_orders() {
        let psi = psi0_table(3).unwrap();
        assert_relative_eq!(psi[0], 0.751_125_544_464_942_5, epsilon = 1e-15);
        assert_eq!(psi[1], 0.0);
        assert_relative_eq!(psi[2], -0.531_125_966_013_598_4, epsilon = 1e-15);
        assert_relative_eq!(psi[2], -PI.powf(-0.25) / 2f64.sqrt(), epsilon = 1e-15);
    }

    #[test]
    fn psi0_recursion_matches_direct_hermite() {
        let psi = psi0_table(61).unwrap();
        for (n, &p) in psi.iter().enumerate() {
            assert!((p - psi0_direct(n)).abs() < 1e-12, "n = {n}: {p} vs {}", psi0_direct(n));
        }
    }

    #[test]
    fn psi0_rejects_empty_table() {
        assert_eq!(psi0_table(0), Err(TrapGasError::Cutoff(0)));
    }

    #[test]
    fn contact_matrix_elements() {
        let config = TrapGasConfig::new(1.7, 4, 1.0).unwrap();
        let model = build_model(&config, 1.0).unwrap();
        assert_relative_eq!(model.v_matrix()[(0, 0)], PI.sqrt(), epsilon = 1e-14);
        assert_eq!(model.v_matrix()[(0, 1)], 0.0);
        assert_relative_eq!(model.energies()[3], 1.7 * 3.5);

        let free = build_model(&config, 0.0).unwrap();
        let m = free.modes();
        for i in 0..m {
            for j in 0..m {
                assert_eq!(free.v_matrix()[(i, j)], 0.0);
            }
        }
        assert!(free.coupled_modes().is_empty());
    }

    #[test]
    fn contact_matrix_parity_and_signs() {
        let config = TrapGasConfig::new(1.0, 20, 2.0).unwrap();
        let model = build_model(&config, 0.8).unwrap();
        let v = model.v_matrix();
        for i in 0..model.modes() {
            for j in 0..model.modes() {
                assert_eq!(v[(i, j)], v[(j, i)]);
                if i % 2 == 1 || j % 2 == 1 {
                    assert_eq!(v[(i, j)], 0.0);
                } else {
                    let sign = if (i / 2 + j / 2) % 2 == 0 { 1.0 } else { -1.0 };
                    assert!(v[(i, j)] * sign > 0.0);
                }
            }
        }
        assert_eq!(model.coupled_modes(), (0..model.modes()).step_by(2).collect::<Vec<_>>());
    }

    #[test]
    fn contact_matrix_is_rank_one() {
        let config = TrapGasConfig::new(1.0, 10, 2.0).unwrap().with_cutoff(24).unwrap();
        let model = build_model(&config, 2.5).unwrap();
        let s = model.v_matrix().singular_values().unwrap();
        assert!(s[0] > 1.0);
        assert!(s[1..].iter().all(|&x| x < 1e-12 * s[0]));
    }

    #[test]
    fn alpha_coupling_conversions() {
        assert_eq!(coupling_from_alpha(0.0, 1.0, 200).unwrap(), 0.0);
        assert_relative_eq!(
            coupling_from_alpha(0.1, 1.0, 200).unwrap(),
            20.05f64.sqrt(),
            epsilon = 1e-14
        );
        assert_relative_eq!(
            coupling_from_alpha(0.1, 1.0, 200).unwrap(),
            4.477_722_635_447_622,
            epsilon = 1e-12
        );
        assert_relative_eq!(coupling_from_alpha(1.0, 2.0, 1).unwrap(), 6f64.sqrt(), epsilon = 1e-15);
        assert_eq!(coupling_from_alpha(-0.1, 1.0, 200), Err(TrapGasError::Alpha(-0.1)));
    }

    #[test]
    fn default_cutoff_rule() {
        assert_eq!(default_cutoff(200, 2), 400);
        assert_eq!(default_cutoff(20, 1), 80);
        assert_eq!(default_cutoff(3, 2), 53);
        assert_eq!(TrapGasConfig::new(1.0, 200, 3.0).unwrap().cutoff, 400);
    }

    #[test]
    fn config_validation() {
        assert_eq!(TrapGasConfig::new(0.0, 10, 1.0), Err(TrapGasError::Omega(0.0)));
        assert_eq!(TrapGasConfig::new(1.0, 10, -1.0), Err(TrapGasError::Beta(-1.0)));
        assert_eq!(TrapGasConfig::new(1.0, 0, 1.0), Err(TrapGasError::NoFermions));
        let small = TrapGasConfig::new(1.0, 10, 1.0).unwrap().with_cutoff(4);
        assert!(matches!(small, Err(TrapGasError::BasisTooSmall { .. })));
        assert!(TrapGasConfig::new(1.0, 10, 1.0).unwrap().with_cutoff(0).is_err());
        assert!(TrapGasConfig::new(1.0, 10, 1.0)
            .unwrap()
            .with_spin_degeneracy(0)
            .is_err());
    }

    #[test]
    fn zero_temperature_filling() {
        let config = TrapGasConfig::new(1.0, 200, 1000.0).unwrap();
        let thermal = solve_chemical_potential(&config).unwrap();
        assert!(thermal.mu > 99.5 && thermal.mu < 100.5, "mu = {}", thermal.mu);
        for (k, &n) in thermal.occupations.iter().enumerate() {
            if k <= 99 {
                assert!((n - 1.0).abs() < 1e-12);
            } else {
                assert!(n < 1e-12);
            }
        }
    }

    #[test]
    fn single_mode_single_fermion() {
        for beta in [0.1, 1.0, 30.0] {
            let config = TrapGasConfig {
                omega: 1.0,
                n_fermions: 1,
                spin_degeneracy: 1,
                beta,
                cutoff: 1,
            };
            let thermal = solve_chemical_potential(&config).unwrap();
            assert!((thermal.occupations[0] - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn small_gas_against_scan() {
        let config = TrapGasConfig {
            omega: 1.0,
            n_fermions: 4,
            spin_degeneracy: 1,
            beta: 2.0,
            cutoff: 50,
        };
        let thermal = solve_chemical_potential(&config).unwrap();
        assert!((thermal.particle_number(1) - 4.0).abs() < 1e-10);

        // Independent oracle: dense scan for the sign change of N(μ) − 4, then
        // secant refinement inside the bracketing cell.
        let energies: Vec<f64> = (0..50).map(|n| n as f64 + 0.5).collect();
        let excess = |mu: f64| {
            energies
                .iter()
                .map(|&e| 1.0 / ((2.0 * (e - mu)).exp() + 1.0))
                .sum::<f64>()
                - 4.0
        };
        let (mut a, mut b) = (0.0, 0.0);
        for i in 0..100_000 {
            let x = -5.0 + i as f64 * 1e-4;
            if excess(x) < 0.0 && excess(x + 1e-4) >= 0.0 {
                a = x;
                b = x + 1e-4;
                break;
            }
        }
        for _ in 0..60 {
            let c = b - excess(b) * (b - a) / (excess(b) - excess(a));
            a = b;
            b = c;
            if excess(b).abs() < 1e-14 {
                break;
            }
        }
        assert_relative_eq!(thermal.mu, b, epsilon = 1e-9);
    }

    #[test]
    fn holes_complement_occupations() {
        let thermal = ThermalState::from_energies(&[0.5, 1.5, 2.5, 40.0], 3.0, 1.2);
        for (n, h) in thermal.occupations.iter().zip(&thermal.holes) {
            assert_relative_eq!(n + h, 1.0, epsilon = 1e-15);
        }
        assert!(thermal.holes[0] > 0.0);
    }

    proptest! {
        #[test]
        fn solved_gas_has_the_right_size(
            n in 1usize..120,
            gs in 1usize..3,
            beta in 0.05f64..20.0,
            omega in 0.2f64..3.0,
        ) {
            let config = TrapGasConfig::new(omega, n, beta).unwrap().with_spin_degeneracy(gs).unwrap();
            let thermal = solve_chemical_potential(&config).unwrap();
            prop_assert!((thermal.particle_number(gs) - n as f64).abs() < 1e-9);
            for w in thermal.occupations.windows(2) {
                prop_assert!(w[1] <= w[0]);
                prop_assert!((0.0..=1.0).contains(&w[1]));
            }
        }

        #[test]
        fn mu_grows_with_particle_number(n in 1usize..100, beta in 0.1f64..10.0) {
            let cfg = |n| TrapGasConfig { omega: 1.0, n_fermions: n, spin_degeneracy: 2, beta, cutoff: 300 };
            let a = solve_chemical_potential(&cfg(n)).unwrap();
            let b = solve_chemical_potential(&cfg(n + 1)).unwrap();
            prop_assert!(b.mu > a.mu);
        }

        #[test]
        fn alpha_round_trip(alpha in 0.0f64..10.0, omega in 0.01f64..10.0, n in 1usize..1000) {
            let v0 = coupling_from_alpha(alpha, omega, n).unwrap();
            let back = alpha_from_coupling(v0, omega, n);
            prop_assert!((back - alpha).abs() <= 1e-12 * alpha.max(f64::MIN_POSITIVE));
        }
    }
}
