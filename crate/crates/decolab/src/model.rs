//! Physical model shared by every engine: two coupled degrees of freedom
//! with quartic confining wells plus a configurable system-bath coupling,
//! Gaussian phase-space states, and the momentum-space transform of the
//! system state used by the perturbative decoherence rates.
//!
//! Subsystem 1 `(q1, p1)` is the observed system; subsystem 2 `(q2, p2)` is
//! the bath. Units are dimensionless with an effective Planck constant
//! `hbar_eff` carried by [`SystemSpec`].

use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Default quartic well strength for both wells.
pub const DEFAULT_BETA: f64 = 0.01;

/// Errors from model construction and evaluation.
#[derive(Debug, Error)]
pub enum ModelError {
    #[error(
        "state center is energetically inaccessible: needs kinetic energy {required:.6} at the \
         bath coordinate, but target energy {energy:.6} leaves {available:.6}"
    )]
    EnergeticallyInaccessible {
        energy: f64,
        required: f64,
        available: f64,
    },
    #[error("{name} must be positive, got {value}")]
    NonPositive { name: &'static str, value: f64 },
}

/// One-dimensional real function used as a coupling factor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FunctionSpec {
    /// `c * x^n`
    Monomial { c: f64, n: u32 },
    /// `c * sin^2(k x)`
    Sin2 { c: f64, k: f64 },
    /// `sum_m coeffs[m] * x^m`
    Poly { coeffs: Vec<f64> },
}

impl FunctionSpec {
    pub fn eval(&self, x: f64) -> f64 {
        match self {
            Self::Monomial { c, n } => c * x.powi(*n as i32),
            Self::Sin2 { c, k } => {
                let s = (k * x).sin();
                c * s * s
            }
            Self::Poly { coeffs } => horner(coeffs, x),
        }
    }

    pub fn deriv(&self, x: f64) -> f64 {
        self.deriv_n(1, x)
    }

    /// `m`-th derivative. Exact for every variant; `m = 0` is the value.
    pub fn deriv_n(&self, m: u32, x: f64) -> f64 {
        if m == 0 {
            return self.eval(x);
        }
        match self {
            Self::Monomial { c, n } => {
                if m > *n {
                    0.0
                } else {
                    let mut coeff = *c;
                    for j in 0..m {
                        coeff *= (*n - j) as f64;
                    }
                    coeff * x.powi((*n - m) as i32)
                }
            }
            // c sin^2(kx) = c/2 (1 - cos 2kx), so the m-th derivative is
            // -(c/2) (2k)^m cos(2kx + m pi/2).
            Self::Sin2 { c, k } => {
                -(c / 2.0)
                    * (2.0 * k).powi(m as i32)
                    * (2.0 * k * x + m as f64 * std::f64::consts::FRAC_PI_2).cos()
            }
            Self::Poly { coeffs } => {
                let mut acc = 0.0;
                for (deg, &c) in coeffs.iter().enumerate().skip(m as usize) {
                    let mut coeff = c;
                    for j in 0..m as usize {
                        coeff *= (deg - j) as f64;
                    }
                    acc += coeff * x.powi((deg - m as usize) as i32);
                }
                acc
            }
        }
    }

    /// Symmetric finite-difference slope `(f(x + h/2) - f(x - h/2)) / h`.
    ///
    /// `h == 0` falls back to the exact derivative, matching the continuous
    /// limit of the quantum rate kernel.
    pub fn finite_difference(&self, x: f64, h: f64) -> f64 {
        if h == 0.0 {
            self.deriv(x)
        } else {
            (self.eval(x + 0.5 * h) - self.eval(x - 0.5 * h)) / h
        }
    }
}

fn horner(coeffs: &[f64], x: f64) -> f64 {
    coeffs.iter().rev().fold(0.0, |acc, &c| acc * x + c)
}

/// System-bath interaction potential `V12(q1, q2)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CouplingSpec {
    /// `alpha/2 * q1^2 q2^2`; `alpha` tunes integrable (weak) vs chaotic (strong).
    QuadQuad { alpha: f64 },
    /// `f(q1) * g(q2)` for arbitrary factor functions.
    SeparableProduct { f: FunctionSpec, g: FunctionSpec },
    /// `sum_i c_i q1^(m_i) q2^(n_i)`, terms encoded as `(c, m, n)`.
    PolynomialSum { terms: Vec<(f64, u32, u32)> },
}

impl CouplingSpec {
    pub fn eval(&self, q1: f64, q2: f64) -> f64 {
        match self {
            Self::QuadQuad { alpha } => 0.5 * alpha * q1 * q1 * q2 * q2,
            Self::SeparableProduct { f, g } => f.eval(q1) * g.eval(q2),
            Self::PolynomialSum { terms } => terms
                .iter()
                .map(|&(c, m, n)| c * q1.powi(m as i32) * q2.powi(n as i32))
                .sum(),
        }
    }

    /// `(dV12/dq1, dV12/dq2)`.
    pub fn grad(&self, q1: f64, q2: f64) -> (f64, f64) {
        match self {
            Self::QuadQuad { alpha } => (alpha * q1 * q2 * q2, alpha * q1 * q1 * q2),
            Self::SeparableProduct { f, g } => {
                (f.deriv(q1) * g.eval(q2), f.eval(q1) * g.deriv(q2))
            }
            Self::PolynomialSum { terms } => {
                let mut d1 = 0.0;
                let mut d2 = 0.0;
                for &(c, m, n) in terms {
                    if m > 0 {
                        d1 += c * m as f64 * q1.powi(m as i32 - 1) * q2.powi(n as i32);
                    }
                    if n > 0 {
                        d2 += c * q1.powi(m as i32) * n as f64 * q2.powi(n as i32 - 1);
                    }
                }
                (d1, d2)
            }
        }
    }

    /// `(d²V12/dq1², d²V12/dq1 dq2, d²V12/dq2²)`.
    pub fn hessian(&self, q1: f64, q2: f64) -> (f64, f64, f64) {
        match self {
            Self::QuadQuad { alpha } => (
                alpha * q2 * q2,
                2.0 * alpha * q1 * q2,
                alpha * q1 * q1,
            ),
            Self::SeparableProduct { f, g } => (
                f.deriv_n(2, q1) * g.eval(q2),
                f.deriv(q1) * g.deriv(q2),
                f.eval(q1) * g.deriv_n(2, q2),
            ),
            Self::PolynomialSum { terms } => {
                let (mut h11, mut h12, mut h22) = (0.0, 0.0, 0.0);
                for &(c, m, n) in terms {
                    if m > 1 {
                        h11 += c * (m * (m - 1)) as f64 * q1.powi(m as i32 - 2) * q2.powi(n as i32);
                    }
                    if m > 0 && n > 0 {
                        h12 += c * (m * n) as f64 * q1.powi(m as i32 - 1) * q2.powi(n as i32 - 1);
                    }
                    if n > 1 {
                        h22 += c * (n * (n - 1)) as f64 * q1.powi(m as i32) * q2.powi(n as i32 - 2);
                    }
                }
                (h11, h12, h22)
            }
        }
    }

    /// Factors the coupling as `f(q1) * g(q2)` when possible.
    ///
    /// Polynomial sums factor when every term carries the same bath power.
    /// Returns `None` for genuinely non-factorizable couplings.
    pub fn separable_view(&self) -> Option<(FunctionSpec, FunctionSpec)> {
        match self {
            Self::QuadQuad { alpha } => Some((
                FunctionSpec::Monomial { c: 1.0, n: 2 },
                FunctionSpec::Monomial { c: 0.5 * alpha, n: 2 },
            )),
            Self::SeparableProduct { f, g } => Some((f.clone(), g.clone())),
            Self::PolynomialSum { terms } => {
                let n0 = terms.first()?.2;
                if terms.iter().any(|&(_, _, n)| n != n0) {
                    return None;
                }
                let max_m = terms.iter().map(|&(_, m, _)| m).max()? as usize;
                let mut coeffs = vec![0.0; max_m + 1];
                for &(c, m, _) in terms {
                    coeffs[m as usize] += c;
                }
                Some((
                    FunctionSpec::Poly { coeffs },
                    FunctionSpec::Monomial { c: 1.0, n: n0 },
                ))
            }
        }
    }
}

/// Point in the four-dimensional phase space, ordered `(q1, p1, q2, p2)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhasePoint {
    pub q1: f64,
    pub p1: f64,
    pub q2: f64,
    pub p2: f64,
}

impl PhasePoint {
    pub fn new(q1: f64, p1: f64, q2: f64, p2: f64) -> Self {
        Self { q1, p1, q2, p2 }
    }

    /// Coordinates as an array in canonical order.
    pub fn to_array(self) -> [f64; 4] {
        [self.q1, self.p1, self.q2, self.p2]
    }

    pub fn from_array(a: [f64; 4]) -> Self {
        Self::new(a[0], a[1], a[2], a[3])
    }
}

/// Full model: quartic wells of strength `beta` plus a coupling, with an
/// effective Planck constant setting the quantum scale.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SystemSpec {
    pub hbar_eff: f64,
    pub beta: f64,
    pub coupling: CouplingSpec,
}

impl SystemSpec {
    /// Total potential `beta/4 (q1^4 + q2^4) + V12(q1, q2)`.
    pub fn potential(&self, q1: f64, q2: f64) -> f64 {
        0.25 * self.beta * (q1.powi(4) + q2.powi(4)) + self.coupling.eval(q1, q2)
    }

    /// Force `(-dV/dq1, -dV/dq2)`.
    pub fn force(&self, q1: f64, q2: f64) -> (f64, f64) {
        let (c1, c2) = self.coupling.grad(q1, q2);
        (
            -(self.beta * q1.powi(3) + c1),
            -(self.beta * q2.powi(3) + c2),
        )
    }

    /// Potential curvature `(d²V/dq1², d²V/dq1 dq2, d²V/dq2²)`.
    pub fn potential_hessian(&self, q1: f64, q2: f64) -> (f64, f64, f64) {
        let (h11, h12, h22) = self.coupling.hessian(q1, q2);
        (
            3.0 * self.beta * q1 * q1 + h11,
            h12,
            3.0 * self.beta * q2 * q2 + h22,
        )
    }

    /// Hamiltonian `p1²/2 + p2²/2 + V(q1, q2)`.
    pub fn hamiltonian(&self, z: &PhasePoint) -> f64 {
        0.5 * (z.p1 * z.p1 + z.p2 * z.p2) + self.potential(z.q1, z.q2)
    }

    /// Solves `H(q1, p1, q2, p2) = energy` for the nonnegative bath momentum.
    ///
    /// Centers whose potential plus system kinetic energy already exceeds
    /// `energy` are rejected as energetically inaccessible.
    pub fn solve_momentum_from_energy(
        &self,
        q1: f64,
        p1: f64,
        q2: f64,
        energy: f64,
    ) -> Result<f64, ModelError> {
        let fixed = 0.5 * p1 * p1 + self.potential(q1, q2);
        let available = energy - fixed;
        if available < 0.0 {
            return Err(ModelError::EnergeticallyInaccessible {
                energy,
                required: fixed,
                available,
            });
        }
        Ok((2.0 * available).sqrt())
    }
}

/// Gaussian phase-space density for one degree of freedom,
/// `rho(x, y) = exp[-(x-x0)²/2σx² - (y-y0)²/2σy²] / (2π σx σy)`.
///
/// The density integrates to 1 for any widths; it describes a pure state
/// exactly when `σx σy = hbar/2`, in which case the peak value equals
/// `1/(π hbar)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GaussianState {
    pub center_q: f64,
    pub center_p: f64,
    pub sigma_q: f64,
    pub sigma_p: f64,
}

impl GaussianState {
    pub fn new(center_q: f64, center_p: f64, sigma_q: f64, sigma_p: f64) -> Self {
        Self { center_q, center_p, sigma_q, sigma_p }
    }

    /// Minimum-uncertainty state with equal position and momentum widths
    /// `σ = sqrt(hbar/2)`.
    pub fn symmetric(center_q: f64, center_p: f64, hbar: f64) -> Self {
        let s = (0.5 * hbar).sqrt();
        Self::new(center_q, center_p, s, s)
    }

    /// Normalized density at `(q, p)`.
    pub fn density(&self, q: f64, p: f64) -> f64 {
        let uq = (q - self.center_q) / self.sigma_q;
        let up = (p - self.center_p) / self.sigma_p;
        (-0.5 * (uq * uq + up * up)).exp()
            / (2.0 * std::f64::consts::PI * self.sigma_q * self.sigma_p)
    }

    /// Phase-space purity `2π hbar ∫ rho² = hbar / (2 σq σp)`; 1 iff pure.
    pub fn purity(&self, hbar: f64) -> f64 {
        0.5 * hbar / (self.sigma_q * self.sigma_p)
    }

    /// Draws `(q, p)` from the density.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> (f64, f64) {
        let gq: f64 = rng.sample(StandardNormal);
        let gp: f64 = rng.sample(StandardNormal);
        (
            self.center_q + self.sigma_q * gq,
            self.center_p + self.sigma_p * gp,
        )
    }
}

/// Product of a system and a bath Gaussian: the initial classical density
/// and the Weyl symbol of the initial quantum state.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProductState {
    pub sys: GaussianState,
    pub bath: GaussianState,
}

impl ProductState {
    pub fn density(&self, z: &PhasePoint) -> f64 {
        self.sys.density(z.q1, z.p1) * self.bath.density(z.q2, z.p2)
    }

    /// All four widths equal (required by the tangent-kernel entropy engine).
    pub fn is_symmetric(&self) -> bool {
        let s = self.sys.sigma_q;
        self.sys.sigma_p == s && self.bath.sigma_q == s && self.bath.sigma_p == s
    }

    pub fn center(&self) -> PhasePoint {
        PhasePoint::new(
            self.sys.center_q,
            self.sys.center_p,
            self.bath.center_q,
            self.bath.center_p,
        )
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> PhasePoint {
        let (q1, p1) = self.sys.sample(rng);
        let (q2, p2) = self.bath.sample(rng);
        PhasePoint::new(q1, p1, q2, p2)
    }
}

/// Momentum-integrated transform of the system Gaussian,
/// `F(a, b) = ∫ rho_sys((a+b)/2, p) exp(i (a-b) p / hbar) dp`.
///
/// Closed form: `exp[-(m-q0)²/2σq² - σp²d²/2ħ² + i d p0/ħ] / (sqrt(2π) σq)`
/// with midpoint `m = (a+b)/2` and separation `d = a - b`.
pub fn fourier_transform_f(state: &GaussianState, hbar: f64, a: f64, b: f64) -> Complex64 {
    let m = 0.5 * (a + b);
    let d = a - b;
    let um = (m - state.center_q) / state.sigma_q;
    let ud = state.sigma_p * d / hbar;
    let mag = (-0.5 * (um * um + ud * ud)).exp()
        / ((2.0 * std::f64::consts::PI).sqrt() * state.sigma_q);
    let phase = d * state.center_p / hbar;
    Complex64::from_polar(mag, phase)
}

/// `|F(a, b)|²` evaluated directly (no complex intermediate).
pub fn fourier_transform_f_abs2(state: &GaussianState, hbar: f64, a: f64, b: f64) -> f64 {
    let m = 0.5 * (a + b);
    let d = a - b;
    let um = (m - state.center_q) / state.sigma_q;
    let ud = state.sigma_p * d / hbar;
    (-(um * um + ud * ud)).exp() / (2.0 * std::f64::consts::PI * state.sigma_q * state.sigma_q)
}
