//! Grid propagation of the two-mode wavefunction and the quantum linear
//! entropy of the reduced first mode.
//!
//! The propagator is a Strang split: half-step potential phase, full kinetic
//! step applied in momentum space through a 2-D FFT, half-step potential
//! phase. It is exactly unitary up to rounding, so norm and energy drift are
//! pure integration diagnostics. Entropy comes from the partial trace
//! `ρ(Q, Q') = Σ_q ψ(Q, q) ψ*(Q', q) Δq` and `S_q = 1 − Tr ρ²`.

use crate::model::{ProductState, SystemSpec};
use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use std::sync::Arc;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum QuantumError {
    #[error("grid axis {axis} has {n} points; power-of-two sizes required")]
    NotPowerOfTwo { axis: &'static str, n: usize },
    #[error("grid spec invalid: {0}")]
    BadSpec(&'static str),
    #[error(
        "grid too coarse on {axis}: spacing {spacing:.4e} exceeds half the packet width {sigma:.4e}"
    )]
    GridTooCoarse { axis: &'static str, spacing: f64, sigma: f64 },
    #[error(
        "momentum range too small on {axis}: Nyquist bound {nyquist:.3} below required {needed:.3} \
         (energy shell plus packet tails); enlarge the point count or shrink the domain"
    )]
    NyquistViolated { axis: &'static str, nyquist: f64, needed: f64 },
    #[error(
        "domain too small on {axis}: packet center ±5σ reaches {reach:.3} but the half-extent is {half:.3}"
    )]
    DomainTooSmall { axis: &'static str, reach: f64, half: f64 },
    #[error("norm drifted to {norm:.12} at t = {t:.4}; integration is no longer trustworthy")]
    NormDrift { t: f64, norm: f64 },
    #[error(
        "wavepacket reached the domain edge at t = {t:.4} (boundary probability {prob:.3e} > {limit:.1e})"
    )]
    EdgeReached { t: f64, prob: f64, limit: f64 },
}

/// Position-grid geometry and the propagation step.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct GridSpec {
    /// Points along the first (system) axis; power of two.
    pub n1: usize,
    /// Points along the second (bath) axis; power of two.
    pub n2: usize,
    /// Half-extent of the first axis: coordinates span `[-l1, l1)`.
    pub l1: f64,
    /// Half-extent of the second axis.
    pub l2: f64,
    /// Propagation time step.
    pub dt: f64,
}

impl GridSpec {
    pub fn spacing1(&self) -> f64 {
        2.0 * self.l1 / self.n1 as f64
    }

    pub fn spacing2(&self) -> f64 {
        2.0 * self.l2 / self.n2 as f64
    }

    /// Grid coordinates along an axis: `x_i = -l + i Δ` (periodic convention,
    /// the `+l` endpoint is the wrap-around image of `-l`).
    fn coords(n: usize, l: f64) -> Vec<f64> {
        let d = 2.0 * l / n as f64;
        (0..n).map(|i| -l + i as f64 * d).collect()
    }

    /// FFT momentum lattice for an axis: `ħ 2π k / (N Δ)` with signed `k`.
    fn momenta(n: usize, l: f64, hbar: f64) -> Vec<f64> {
        let d = 2.0 * l / n as f64;
        let unit = hbar * std::f64::consts::TAU / (n as f64 * d);
        (0..n)
            .map(|k| {
                let signed = if k < n / 2 { k as isize } else { k as isize - n as isize };
                unit * signed as f64
            })
            .collect()
    }

    pub fn validate(&self) -> Result<(), QuantumError> {
        for (axis, n) in [("Q", self.n1), ("q", self.n2)] {
            if !n.is_power_of_two() || n < 16 {
                return Err(QuantumError::NotPowerOfTwo { axis, n });
            }
        }
        if !(self.l1 > 0.0 && self.l2 > 0.0) {
            return Err(QuantumError::BadSpec("half-extents must be positive"));
        }
        if !(self.dt > 0.0) {
            return Err(QuantumError::BadSpec("time step must be positive"));
        }
        Ok(())
    }

    /// Checks that the grid resolves a given initial state and the momentum
    /// range reachable at total energy `energy`.
    ///
    /// Requirements per axis: spacing at most half the packet position width;
    /// Nyquist momentum `πħ/Δ` at least `√(2E) + 5σ_p`; domain containing the
    /// packet center ±5σ.
    pub fn check_supports(
        &self,
        state: &ProductState,
        hbar: f64,
        energy: f64,
    ) -> Result<(), QuantumError> {
        let p_shell = (2.0 * energy.max(0.0)).sqrt();
        let axes = [
            ("Q", self.spacing1(), self.l1, &state.sys),
            ("q", self.spacing2(), self.l2, &state.bath),
        ];
        for (axis, spacing, half, g) in axes {
            if spacing > 0.5 * g.sigma_q {
                return Err(QuantumError::GridTooCoarse { axis, spacing, sigma: g.sigma_q });
            }
            let nyquist = std::f64::consts::PI * hbar / spacing;
            let needed = p_shell + 5.0 * g.sigma_p;
            if nyquist < needed {
                return Err(QuantumError::NyquistViolated { axis, nyquist, needed });
            }
            let reach = g.center_q.abs() + 5.0 * g.sigma_q;
            if reach > half {
                return Err(QuantumError::DomainTooSmall { axis, reach, half });
            }
        }
        Ok(())
    }
}

/// Complex wavefunction on the grid, row-major: `psi[i1 * n2 + i2]`.
#[derive(Debug, Clone)]
pub struct WaveGrid {
    pub grid: GridSpec,
    pub hbar: f64,
    pub psi: Vec<Complex64>,
}

impl WaveGrid {
    pub fn norm(&self) -> f64 {
        let cell = self.grid.spacing1() * self.grid.spacing2();
        self.psi.iter().map(|a| a.norm_sqr()).sum::<f64>() * cell
    }

    /// Probability mass on the outermost grid line of each boundary.
    pub fn edge_probability(&self) -> f64 {
        let (n1, n2) = (self.grid.n1, self.grid.n2);
        let cell = self.grid.spacing1() * self.grid.spacing2();
        let mut acc = 0.0;
        for i2 in 0..n2 {
            acc += self.psi[i2].norm_sqr();
            acc += self.psi[(n1 - 1) * n2 + i2].norm_sqr();
        }
        for i1 in 1..n1 - 1 {
            acc += self.psi[i1 * n2].norm_sqr();
            acc += self.psi[i1 * n2 + n2 - 1].norm_sqr();
        }
        acc * cell
    }

    /// Marginal probability along the first axis (integrated over the second).
    pub fn marginal1(&self) -> Vec<f64> {
        let (n1, n2) = (self.grid.n1, self.grid.n2);
        let d2 = self.grid.spacing2();
        (0..n1)
            .map(|i1| {
                self.psi[i1 * n2..(i1 + 1) * n2]
                    .iter()
                    .map(|a| a.norm_sqr())
                    .sum::<f64>()
                    * d2
            })
            .collect()
    }

    /// Swaps the two axes (useful for tracing over the first mode instead).
    pub fn transposed(&self) -> WaveGrid {
        let (n1, n2) = (self.grid.n1, self.grid.n2);
        let mut psi = vec![Complex64::default(); n1 * n2];
        for i1 in 0..n1 {
            for i2 in 0..n2 {
                psi[i2 * n1 + i1] = self.psi[i1 * n2 + i2];
            }
        }
        WaveGrid {
            grid: GridSpec { n1: n2, n2: n1, l1: self.grid.l2, l2: self.grid.l1, dt: self.grid.dt },
            hbar: self.hbar,
            psi,
        }
    }
}

/// Minimum-uncertainty product wavefunction matching a Gaussian phase-space
/// state: `ψ ∝ exp[-(x-x₀)²/(4σ²) + i p₀ x / ħ]` per axis, normalized on the
/// grid.
pub fn initial_wavefunction(
    state: &ProductState,
    grid: &GridSpec,
    hbar: f64,
) -> Result<WaveGrid, QuantumError> {
    grid.validate()?;
    let axis = |n: usize, l: f64, g: &crate::model::GaussianState| -> Vec<Complex64> {
        GridSpec::coords(n, l)
            .iter()
            .map(|&x| {
                let u = x - g.center_q;
                let amp = (-u * u / (4.0 * g.sigma_q * g.sigma_q)).exp();
                let phase = g.center_p * x / hbar;
                Complex64::from_polar(amp, phase)
            })
            .collect()
    };
    let a1 = axis(grid.n1, grid.l1, &state.sys);
    let a2 = axis(grid.n2, grid.l2, &state.bath);
    let mut psi = Vec::with_capacity(grid.n1 * grid.n2);
    for v1 in &a1 {
        for v2 in &a2 {
            psi.push(v1 * v2)
        }
    }
    let mut wave = WaveGrid { grid: *grid, hbar, psi };
    let norm = wave.norm();
    if !(norm > 0.0) {
        return Err(QuantumError::BadSpec("initial wavefunction vanishes on the grid"));
    }
    let scale = 1.0 / norm.sqrt();
    for a in &mut wave.psi {
        *a *= scale;
    }
    Ok(wave)
}

/// In-place 2-D FFT built from 1-D row/column transforms.
struct Fft2d {
    n1: usize,
    n2: usize,
    row_fwd: Arc<dyn Fft<f64>>,
    row_inv: Arc<dyn Fft<f64>>,
    col_fwd: Arc<dyn Fft<f64>>,
    col_inv: Arc<dyn Fft<f64>>,
    col_buf: Vec<Complex64>,
    scratch: Vec<Complex64>,
}

impl Fft2d {
    fn new(n1: usize, n2: usize) -> Self {
        let mut planner = FftPlanner::new();
        let row_fwd = planner.plan_fft_forward(n2);
        let row_inv = planner.plan_fft_inverse(n2);
        let col_fwd = planner.plan_fft_forward(n1);
        let col_inv = planner.plan_fft_inverse(n1);
        let scratch_len = row_fwd
            .get_inplace_scratch_len()
            .max(row_inv.get_inplace_scratch_len())
            .max(col_fwd.get_inplace_scratch_len())
            .max(col_inv.get_inplace_scratch_len());
        Self {
            n1,
            n2,
            row_fwd,
            row_inv,
            col_fwd,
            col_inv,
            col_buf: vec![Complex64::default(); n1],
            scratch: vec![Complex64::default(); scratch_len],
        }
    }

    fn transform(&mut self, data: &mut [Complex64], forward: bool) {
        let row = if forward { &self.row_fwd } else { &self.row_inv };
        let col = if forward { &self.col_fwd } else { &self.col_inv };
        for r in data.chunks_exact_mut(self.n2) {
            row.process_with_scratch(r, &mut self.scratch);
        }
        for j in 0..self.n2 {
            for i in 0..self.n1 {
                self.col_buf[i] = data[i * self.n2 + j];
            }
            col.process_with_scratch(&mut self.col_buf, &mut self.scratch);
            for i in 0..self.n1 {
                data[i * self.n2 + j] = self.col_buf[i];
            }
        }
    }
}

/// Split-operator stepper with precomputed phase tables.
pub struct Propagator {
    /// `exp(-i V dt / 2ħ)` over the grid.
    half_potential: Vec<Complex64>,
    /// `exp(-i (P²+p²) dt / 2ħ) / (n1 n2)`; the FFT normalization is folded in.
    kinetic: Vec<Complex64>,
    /// `(P² + p²)/2` over the momentum grid, for energy evaluation.
    kinetic_energy: Vec<f64>,
    /// `V` over the grid.
    potential: Vec<f64>,
    fft: Fft2d,
    energy_buf: Vec<Complex64>,
}

impl Propagator {
    pub fn new(sys: &SystemSpec, grid: &GridSpec) -> Result<Self, QuantumError> {
        grid.validate()?;
        let hbar = sys.hbar_eff;
        let (n1, n2) = (grid.n1, grid.n2);
        let x1 = GridSpec::coords(n1, grid.l1);
        let x2 = GridSpec::coords(n2, grid.l2);
        let p1 = GridSpec::momenta(n1, grid.l1, hbar);
        let p2 = GridSpec::momenta(n2, grid.l2, hbar);
        let mut half_potential = Vec::with_capacity(n1 * n2);
        let mut potential = Vec::with_capacity(n1 * n2);
        for &q1 in &x1 {
            for &q2 in &x2 {
                let v = sys.potential(q1, q2);
                potential.push(v);
                half_potential.push(Complex64::from_polar(1.0, -0.5 * v * grid.dt / hbar));
            }
        }
        let fft_norm = 1.0 / (n1 * n2) as f64;
        let mut kinetic = Vec::with_capacity(n1 * n2);
        let mut kinetic_energy = Vec::with_capacity(n1 * n2);
        for &pa in &p1 {
            for &pb in &p2 {
                let t = 0.5 * (pa * pa + pb * pb);
                kinetic_energy.push(t);
                kinetic.push(Complex64::from_polar(fft_norm, -t * grid.dt / hbar));
            }
        }
        Ok(Self {
            half_potential,
            kinetic,
            kinetic_energy,
            potential,
            fft: Fft2d::new(n1, n2),
            energy_buf: vec![Complex64::default(); n1 * n2],
        })
    }

    /// One Strang step: half potential, kinetic in momentum space, half
    /// potential.
    pub fn step(&mut self, psi: &mut [Complex64]) {
        for (a, ph) in psi.iter_mut().zip(&self.half_potential) {
            *a *= ph;
        }
        self.fft.transform(psi, true);
        for (a, ph) in psi.iter_mut().zip(&self.kinetic) {
            *a *= ph;
        }
        self.fft.transform(psi, false);
        for (a, ph) in psi.iter_mut().zip(&self.half_potential) {
            *a *= ph;
        }
    }

    /// Energy expectation `⟨T⟩ + ⟨V⟩`; kinetic part via one forward FFT.
    pub fn energy(&mut self, wave: &WaveGrid) -> f64 {
        self.energy_buf.copy_from_slice(&wave.psi);
        self.fft.transform(&mut self.energy_buf, true);
        let mut t_num = 0.0;
        let mut t_den = 0.0;
        for (a, &t) in self.energy_buf.iter().zip(&self.kinetic_energy) {
            let w = a.norm_sqr();
            t_num += w * t;
            t_den += w;
        }
        let mut v_num = 0.0;
        let mut v_den = 0.0;
        for (a, &v) in wave.psi.iter().zip(&self.potential) {
            let w = a.norm_sqr();
            v_num += w * v;
            v_den += w;
        }
        t_num / t_den + v_num / v_den
    }
}

/// Reduced density matrix of the first mode with its grid weight.
#[derive(Debug, Clone)]
pub struct ReducedDensity {
    pub n: usize,
    pub dx: f64,
    /// Row-major `ρ[i * n + j] = ρ(Q_i, Q_j)`.
    pub rho: Vec<Complex64>,
}

impl ReducedDensity {
    pub fn trace(&self) -> f64 {
        (0..self.n).map(|i| self.rho[i * self.n + i].re).sum::<f64>() * self.dx
    }

    pub fn purity(&self) -> f64 {
        let w = self.dx * self.dx;
        self.rho.iter().map(|a| a.norm_sqr()).sum::<f64>() * w
    }

    pub fn s_q(&self) -> f64 {
        1.0 - self.purity()
    }
}

/// Partial trace over the second mode: `ρ(Q_i, Q_j) = Σ_k ψ(Q_i, q_k) ψ*(Q_j, q_k) Δq`.
pub fn reduced_density(wave: &WaveGrid) -> ReducedDensity {
    let (n1, n2) = (wave.grid.n1, wave.grid.n2);
    let d2 = wave.grid.spacing2();
    let mut rho = vec![Complex64::default(); n1 * n1];
    for i in 0..n1 {
        let row_i = &wave.psi[i * n2..(i + 1) * n2];
        for j in i..n1 {
            let row_j = &wave.psi[j * n2..(j + 1) * n2];
            let mut re = 0.0;
            let mut im = 0.0;
            for (a, b) in row_i.iter().zip(row_j) {
                // a * conj(b)
                re += a.re * b.re + a.im * b.im;
                im += a.im * b.re - a.re * b.im;
            }
            let val = Complex64::new(re * d2, im * d2);
            rho[i * n1 + j] = val;
            rho[j * n1 + i] = val.conj();
        }
    }
    ReducedDensity { n: n1, dx: wave.grid.spacing1(), rho }
}

/// Quantum linear entropy of the first mode, `1 − Tr ρ²`.
pub fn s_q(wave: &WaveGrid) -> f64 {
    reduced_density(wave).s_q()
}

/// Per-checkpoint quantum record.
#[derive(Debug, Clone, Copy, serde::Serialize)]
pub struct QuantumSample {
    pub t: f64,
    pub s_q: f64,
    pub norm_drift: f64,
    pub energy_drift: f64,
    pub edge_probability: f64,
}

/// Edge-probability abort threshold for propagation.
pub const EDGE_PROBABILITY_LIMIT: f64 = 1e-8;

/// Propagates the state and records `S_q` with conservation diagnostics at
/// each requested time (snapped to whole steps).
///
/// Aborts with an error if the norm drifts beyond 1e-8 or probability reaches
/// the domain boundary, since results past that point are untrustworthy.
pub fn evolve_and_record(
    sys: &SystemSpec,
    state: &ProductState,
    grid: &GridSpec,
    times: &[f64],
) -> Result<Vec<QuantumSample>, QuantumError> {
    let mut wave = initial_wavefunction(state, grid, sys.hbar_eff)?;
    let mut prop = Propagator::new(sys, grid)?;
    let e0 = prop.energy(&wave);
    let mut samples = Vec::with_capacity(times.len());
    let mut done = 0usize;
    for &t in times {
        let target = (t / grid.dt).round().max(0.0) as usize;
        while done < target {
            prop.step(&mut wave.psi);
            done += 1;
        }
        let t_snap = done as f64 * grid.dt;
        let norm = wave.norm();
        if (norm - 1.0).abs() > 1e-8 {
            return Err(QuantumError::NormDrift { t: t_snap, norm });
        }
        let edge = wave.edge_probability();
        if edge > EDGE_PROBABILITY_LIMIT {
            return Err(QuantumError::EdgeReached { t: t_snap, prob: edge, limit: EDGE_PROBABILITY_LIMIT });
        }
        samples.push(QuantumSample {
            t: t_snap,
            s_q: s_q(&wave),
            norm_drift: norm - 1.0,
            energy_drift: prop.energy(&wave) - e0,
            edge_probability: edge,
        });
    }
    Ok(samples)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{CouplingSpec, GaussianState, SystemSpec};
    use approx::{assert_abs_diff_eq, assert_relative_eq};

    /// Free-particle system: β = 0 and an empty polynomial coupling.
    fn free_system(hbar: f64) -> SystemSpec {
        SystemSpec { hbar_eff: hbar, beta: 0.0, coupling: CouplingSpec::PolynomialSum { terms: vec![] } }
    }

    fn large_hbar_system(alpha: f64) -> SystemSpec {
        SystemSpec { hbar_eff: 0.05, beta: 0.01, coupling: CouplingSpec::QuadQuad { alpha } }
    }

    fn symmetric_state(hbar: f64, c: [f64; 4]) -> ProductState {
        ProductState {
            sys: GaussianState::symmetric(c[0], c[1], hbar),
            bath: GaussianState::symmetric(c[2], c[3], hbar),
        }
    }

    fn moments(xs: &[f64], weights: &[f64], dx: f64) -> (f64, f64) {
        let mass: f64 = weights.iter().sum::<f64>() * dx;
        let mean: f64 = xs.iter().zip(weights).map(|(&x, &w)| x * w).sum::<f64>() * dx / mass;
        let var: f64 = xs
            .iter()
            .zip(weights)
            .map(|(&x, &w)| (x - mean) * (x - mean) * w)
            .sum::<f64>()
            * dx
            / mass;
        (mean, var)
    }

    #[test]
    fn initial_state_is_normalized_pure_and_well_placed() {
        let hbar = 0.005;
        let grid = GridSpec { n1: 256, n2: 256, l1: 4.0, l2: 4.0, dt: 5e-4 };
        let state = symmetric_state(hbar, [0.4, 0.2, 0.6, 0.1]);
        let wave = initial_wavefunction(&state, &grid, hbar).unwrap();
        assert_abs_diff_eq!(wave.norm(), 1.0, epsilon = 1e-12);
        assert!(s_q(&wave) < 1e-6, "S_q(0) = {}", s_q(&wave));

        let xs = GridSpec::coords(grid.n1, grid.l1);
        let marg = wave.marginal1();
        let (mean, var) = moments(&xs, &marg, grid.spacing1());
        assert_abs_diff_eq!(mean, 0.4, epsilon = 1e-6);
        assert_abs_diff_eq!(var, 0.5 * hbar, epsilon = 1e-6);
    }

    #[test]
    fn momentum_marginal_has_minimum_uncertainty_width() {
        let hbar = 0.005;
        let grid = GridSpec { n1: 256, n2: 64, l1: 4.0, l2: 4.0, dt: 5e-4 };
        let state = ProductState {
            sys: GaussianState::symmetric(0.3, 0.2, hbar),
            bath: GaussianState::new(0.0, 0.0, 0.4, hbar / (2.0 * 0.4)),
        };
        let mut wave = initial_wavefunction(&state, &grid, hbar).unwrap();
        // Transform to momentum space along axis 1 only: FFT each column.
        let mut fft = Fft2d::new(grid.n1, grid.n2);
        // Kill the axis-2 dependence first by checking axis-1 marginal in P:
        // a full 2-D FFT factorizes for a product state, so marginalizing the
        // transform over axis 2 still gives the axis-1 momentum marginal.
        fft.transform(&mut wave.psi, true);
        let ps = GridSpec::momenta(grid.n1, grid.l1, hbar);
        let dp1 = ps[1] - ps[0];
        let weights: Vec<f64> = (0..grid.n1)
            .map(|i| {
                wave.psi[i * grid.n2..(i + 1) * grid.n2]
                    .iter()
                    .map(|a| a.norm_sqr())
                    .sum::<f64>()
            })
            .collect();
        // Sort by physical momentum for the moment computation.
        let mut pairs: Vec<(f64, f64)> = ps.iter().cloned().zip(weights).collect();
        pairs.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
        let (pss, ws): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
        let (mean, var) = moments(&pss, &ws, dp1);
        let sigma_p = hbar / (2.0 * state.sys.sigma_q);
        assert_abs_diff_eq!(mean, 0.2, epsilon = 1e-6);
        assert_abs_diff_eq!(var, sigma_p * sigma_p, epsilon = 1e-6);
    }

    #[test]
    fn free_packet_moves_and_spreads_analytically() {
        let hbar = 0.005;
        let sys = free_system(hbar);
        let grid = GridSpec { n1: 256, n2: 64, l1: 4.0, l2: 4.0, dt: 5e-4 };
        let state = ProductState {
            sys: GaussianState::symmetric(-0.2, 0.2, hbar),
            bath: GaussianState::new(0.0, 0.0, 0.4, hbar / 0.8),
        };
        let mut wave = initial_wavefunction(&state, &grid, hbar).unwrap();
        let mut prop = Propagator::new(&sys, &grid).unwrap();
        let t = 1.0;
        for _ in 0..(t / grid.dt).round() as usize {
            prop.step(&mut wave.psi);
        }
        let xs = GridSpec::coords(grid.n1, grid.l1);
        let (mean, var) = moments(&xs, &wave.marginal1(), grid.spacing1());
        let sigma_q = state.sys.sigma_q;
        let sigma_p = hbar / (2.0 * sigma_q);
        let expect_var = sigma_q * sigma_q + sigma_p * sigma_p * t * t;
        assert_abs_diff_eq!(mean, -0.2 + 0.2 * t, epsilon = 1e-6);
        assert_abs_diff_eq!(var, expect_var, epsilon = 1e-6);
        // Free product evolution never entangles the modes.
        assert!(s_q(&wave) < 1e-8);
    }

    #[test]
    fn norm_and_energy_are_conserved_over_a_thousand_steps() {
        let sys = large_hbar_system(1.0);
        let grid = GridSpec { n1: 128, n2: 128, l1: 4.0, l2: 4.0, dt: 5e-4 };
        let p0 = sys.solve_momentum_from_energy(0.4, 0.5, 0.6, 0.24).unwrap();
        let state = symmetric_state(0.05, [0.4, 0.5, 0.6, p0]);
        let mut wave = initial_wavefunction(&state, &grid, 0.05).unwrap();
        let mut prop = Propagator::new(&sys, &grid).unwrap();
        let e0 = prop.energy(&wave);
        for _ in 0..1000 {
            prop.step(&mut wave.psi);
        }
        assert!((wave.norm() - 1.0).abs() < 1e-10, "norm drift {}", wave.norm() - 1.0);
        let e1 = prop.energy(&wave);
        assert!(
            ((e1 - e0) / e0).abs() < 1e-6,
            "energy drift {} from {}",
            e1 - e0,
            e0
        );
    }

    #[test]
    fn reduced_density_of_product_state_is_rank_one() {
        let hbar = 0.005;
        let grid = GridSpec { n1: 128, n2: 128, l1: 4.0, l2: 4.0, dt: 5e-4 };
        let state = symmetric_state(hbar, [0.1, 0.3, -0.2, 0.0]);
        let wave = initial_wavefunction(&state, &grid, hbar).unwrap();
        let rho = reduced_density(&wave);
        assert_abs_diff_eq!(rho.trace(), 1.0, epsilon = 1e-8);
        assert_abs_diff_eq!(rho.purity(), 1.0, epsilon = 1e-8);
        // Hermiticity and positivity spot checks.
        for i in (0..rho.n).step_by(17) {
            for j in (0..rho.n).step_by(13) {
                let a = rho.rho[i * rho.n + j];
                let b = rho.rho[j * rho.n + i];
                assert_abs_diff_eq!(a.re, b.re, epsilon = 1e-12);
                assert_abs_diff_eq!(a.im, -b.im, epsilon = 1e-12);
            }
        }
        // v†ρv ≥ 0 for a few deterministic probe vectors.
        for seed in 0..3u64 {
            let v: Vec<Complex64> = (0..rho.n)
                .map(|i| {
                    let x = ((i as u64 + 1) * (seed + 3)) as f64;
                    Complex64::new((x * 0.37).sin(), (x * 0.61).cos())
                })
                .collect();
            let mut quad = Complex64::default();
            for i in 0..rho.n {
                for j in 0..rho.n {
                    quad += v[i].conj() * rho.rho[i * rho.n + j] * v[j];
                }
            }
            assert!(quad.re > -1e-8, "negative expectation {}", quad.re);
            assert!(quad.im.abs() < 1e-8);
        }
    }

    #[test]
    fn synthetic_mixtures_have_known_purity() {
        // Two orthonormal "states" on a 4-point grid with dx = 0.5:
        // purity of the equal mixture is 1/2.
        let dx = 0.5;
        let inv = 1.0 / dx; // normalization: Σ|v|² dx = 1
        let mut rho = vec![Complex64::default(); 16];
        rho[0] = Complex64::new(0.5 * inv, 0.0);
        rho[5] = Complex64::new(0.5 * inv, 0.0);
        let mix = ReducedDensity { n: 4, dx, rho };
        assert_abs_diff_eq!(mix.trace(), 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(mix.s_q(), 0.5, epsilon = 1e-12);

        // Maximally mixed on n grid points: purity 1/n.
        let n = 8;
        let dx = 0.25;
        let mut rho = vec![Complex64::default(); n * n];
        for i in 0..n {
            rho[i * n + i] = Complex64::new(1.0 / (n as f64 * dx), 0.0);
        }
        let mm = ReducedDensity { n, dx, rho };
        assert_abs_diff_eq!(mm.trace(), 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(mm.purity(), 1.0 / n as f64, epsilon = 1e-12);
    }

    #[test]
    fn subsystem_entropies_of_a_pure_state_agree() {
        let sys = large_hbar_system(1.0);
        let grid = GridSpec { n1: 128, n2: 128, l1: 4.0, l2: 4.0, dt: 5e-4 };
        let p0 = sys.solve_momentum_from_energy(0.4, 0.5, 0.6, 0.24).unwrap();
        let state = symmetric_state(0.05, [0.4, 0.5, 0.6, p0]);
        let mut wave = initial_wavefunction(&state, &grid, 0.05).unwrap();
        let mut prop = Propagator::new(&sys, &grid).unwrap();
        for _ in 0..1000 {
            prop.step(&mut wave.psi);
        }
        let s1 = s_q(&wave);
        let s2 = s_q(&wave.transposed());
        assert!(s1 > 0.01, "expected entanglement to develop, S_q = {s1}");
        assert_abs_diff_eq!(s1, s2, epsilon = 1e-8);
    }

    #[test]
    fn recording_run_snaps_times_and_reports_diagnostics() {
        let sys = large_hbar_system(1.0);
        let grid = GridSpec { n1: 128, n2: 128, l1: 4.0, l2: 4.0, dt: 5e-4 };
        let p0 = sys.solve_momentum_from_energy(0.4, 0.5, 0.6, 0.24).unwrap();
        let state = symmetric_state(0.05, [0.4, 0.5, 0.6, p0]);
        let samples = evolve_and_record(&sys, &state, &grid, &[0.0, 0.1, 0.25]).unwrap();
        assert_eq!(samples.len(), 3);
        assert_abs_diff_eq!(samples[0].t, 0.0);
        assert!(samples[0].s_q < 1e-6);
        assert_relative_eq!(samples[1].t, 0.1, max_relative = 1e-12);
        for s in &samples {
            assert!(s.norm_drift.abs() < 1e-10);
            assert!(s.edge_probability < 1e-10);
        }
    }

    #[test]
    fn support_checks_reject_bad_grids() {
        let hbar = 0.005;
        let state = symmetric_state(hbar, [0.4, 0.5, 0.6, 0.4]);
        // 256 points over [-4, 4): spacing 0.031 > σ/2 = 0.025.
        let coarse = GridSpec { n1: 256, n2: 256, l1: 4.0, l2: 4.0, dt: 5e-4 };
        assert!(matches!(
            coarse.check_supports(&state, hbar, 0.24),
            Err(QuantumError::GridTooCoarse { .. })
        ));
        // Wider packet passes the spacing check but not the momentum range:
        // Nyquist 0.503 < energy-shell need ~0.94.
        let wide = ProductState {
            sys: GaussianState::new(0.4, 0.5, 0.1, 0.05),
            bath: GaussianState::new(0.6, 0.4, 0.1, 0.05),
        };
        assert!(matches!(
            coarse.check_supports(&wide, hbar, 0.24),
            Err(QuantumError::NyquistViolated { .. })
        ));
        // 512 points satisfies every bound at this energy.
        let fine = GridSpec { n1: 512, n2: 512, l1: 4.0, l2: 4.0, dt: 5e-4 };
        fine.check_supports(&state, hbar, 0.24).unwrap();
        // Far-off-center packet: domain check trips.
        let off = symmetric_state(hbar, [3.95, 0.0, 0.0, 0.0]);
        assert!(matches!(
            fine.check_supports(&off, hbar, 0.24),
            Err(QuantumError::DomainTooSmall { .. })
        ));
        // Non-power-of-two: validate trips.
        let odd = GridSpec { n1: 300, n2: 256, l1: 4.0, l2: 4.0, dt: 5e-4 };
        assert!(matches!(odd.validate(), Err(QuantumError::NotPowerOfTwo { .. })));
    }
}
