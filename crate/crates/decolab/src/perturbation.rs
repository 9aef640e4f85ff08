//! Early-time entropy-growth rates.
//!
//! For a separable coupling `V12 = f(q1) g(q2)` and Gaussian initial states,
//! the linear entropies grow as `S(t) ≈ a t + b t²` with `a = 0` exactly and
//! closed-form quadratic coefficients. The classical coefficient integrates
//! `(df/dQ)²` against the momentum-transform weight `|F|²`; the quantum one
//! replaces the derivative with the finite-difference slope `Δf/ΔQ`, which is
//! what discriminates classical from genuinely quantum early-time behavior.

use crate::model::{fourier_transform_f_abs2, FunctionSpec, GaussianState, ProductState, SystemSpec};
use crate::numerics::{self, pairwise_sum, QuadraticFit};
use gauss_quad::{GaussHermite, GaussLegendre};
use std::num::NonZeroUsize;
use thiserror::Error;

/// Node counts for the rate quadratures and the series cross-check order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct QuadratureConfig {
    /// Gauss-Legendre nodes along the midpoint coordinate.
    pub n_mid: usize,
    /// Gauss-Legendre nodes along the separation coordinate.
    pub n_sep: usize,
    /// Gauss-Hermite nodes for bath-variable moments.
    pub n_bath: usize,
    /// Truncation order of the derivative-series cross-check.
    pub series_order: usize,
}

impl Default for QuadratureConfig {
    fn default() -> Self {
        Self { n_mid: 1024, n_sep: 1024, n_bath: 64, series_order: 10 }
    }
}

impl QuadratureConfig {
    fn validate(&self) -> Result<(), RateError> {
        for n in [self.n_mid, self.n_sep, self.n_bath] {
            if n < 16 {
                return Err(RateError::TooFewNodes(n));
            }
        }
        if self.series_order < 1 {
            return Err(RateError::ZeroSeriesOrder);
        }
        Ok(())
    }
}

/// The two quadratic growth coefficients and their ratio.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct RatePair {
    /// Classical coefficient of `t²` (inverse squared time).
    pub classical: f64,
    /// Quantum coefficient of `t²`.
    pub quantum: f64,
    /// `quantum / classical`; 1 means classical early-time behavior.
    pub classicality_ratio: f64,
}

/// Early-time quadratic fit of an entropy series.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EarlyFit {
    pub linear: f64,
    pub quadratic: f64,
    pub se_linear: f64,
    pub se_quadratic: f64,
    pub residual_rms: f64,
}

#[derive(Debug, Error)]
pub enum RateError {
    #[error("coupling does not factor as f(q1)*g(q2); rate formulas need the product form")]
    NonSeparableCoupling,
    #[error("quadrature node count {0} is below the minimum of 16")]
    TooFewNodes(usize),
    #[error("series truncation order must be at least 1")]
    ZeroSeriesOrder,
    #[error(
        "derivative series not converged: relative change {rel:.3e} from order {} to {order} \
         exceeds 1e-6; raise the truncation order",
        order - 1
    )]
    SeriesNotConverged { order: usize, rel: f64 },
    #[error("early-time fit needs at least 5 samples, got {0}")]
    TooFewSamples(usize),
    #[error(
        "fit window too wide: residual rms {residual:.3e} exceeds 10% of the quadratic \
         contribution {bound:.3e} at the window end"
    )]
    WindowTooWide { residual: f64, bound: f64 },
    #[error(transparent)]
    Fit(#[from] numerics::FitError),
}

/// First-order growth coefficients, identically zero for separable initial
/// states; encoded as a function to make the theorem part of the API.
pub fn first_order_rates() -> (f64, f64) {
    (0.0, 0.0)
}

/// Gauss-Legendre nodes and weights mapped onto `[a, b]`.
fn gl_grid(n: usize, a: f64, b: f64) -> (Vec<f64>, Vec<f64>) {
    let rule = GaussLegendre::new(NonZeroUsize::new(n).expect("node count checked nonzero"));
    let half = 0.5 * (b - a);
    let mid = 0.5 * (b + a);
    let mut nodes = Vec::with_capacity(n);
    let mut weights = Vec::with_capacity(n);
    for &(x, w) in rule.as_node_weight_pairs() {
        nodes.push(mid + half * x);
        weights.push(half * w);
    }
    (nodes, weights)
}

/// Mean and variance of `g` over the bath position marginal.
pub(crate) fn bath_variance(g: &FunctionSpec, bath: &GaussianState, n_nodes: usize) -> f64 {
    let rule = GaussHermite::new(NonZeroUsize::new(n_nodes).expect("node count checked nonzero"));
    let norm = std::f64::consts::PI.sqrt();
    let scale = std::f64::consts::SQRT_2 * bath.sigma_q;
    let mean = rule.integrate(|x| g.eval(bath.center_q + scale * x)) / norm;
    let second = rule.integrate(|x| {
        let v = g.eval(bath.center_q + scale * x);
        v * v
    }) / norm;
    second - mean * mean
}

/// Integration windows: midpoint within ±8 position widths of the center,
/// separation within ±8 ħ/σ_P (where the transform weight has decayed to
/// e⁻³² of its peak).
fn windows(sys: &GaussianState, hbar: f64) -> ((f64, f64), (f64, f64)) {
    let mid = (sys.center_q - 8.0 * sys.sigma_q, sys.center_q + 8.0 * sys.sigma_q);
    let sep_half = 8.0 * hbar / sys.sigma_p;
    (mid, (-sep_half, sep_half))
}

/// Quadratic entropy-growth coefficients for a separable coupling.
///
/// Classical: `Var(g)/ħ² ∬ |F|² Δ² f'(m)² dm dΔ` over midpoint `m` and
/// separation `Δ`; quantum replaces `f'(m)` with `(f(m+Δ/2)-f(m-Δ/2))/Δ`.
pub fn second_order_rates(
    spec: &SystemSpec,
    state: &ProductState,
    cfg: &QuadratureConfig,
) -> Result<RatePair, RateError> {
    cfg.validate()?;
    let (f, g) = spec
        .coupling
        .separable_view()
        .ok_or(RateError::NonSeparableCoupling)?;
    let var_g = bath_variance(&g, &state.bath, cfg.n_bath);
    let hbar = spec.hbar_eff;
    let (mid_win, sep_win) = windows(&state.sys, hbar);
    let (mids, w_mid) = gl_grid(cfg.n_mid, mid_win.0, mid_win.1);
    let (seps, w_sep) = gl_grid(cfg.n_sep, sep_win.0, sep_win.1);

    // Row-wise accumulation then pairwise reduction keeps the two sums
    // deterministic and comparable to full precision.
    let mut rows_c = Vec::with_capacity(mids.len());
    let mut rows_q = Vec::with_capacity(mids.len());
    for (&m, &wm) in mids.iter().zip(&w_mid) {
        let slope = f.deriv(m);
        let mut row_c = 0.0;
        let mut row_q = 0.0;
        for (&d, &wd) in seps.iter().zip(&w_sep) {
            let weight = wm * wd * fourier_transform_f_abs2(&state.sys, hbar, m + 0.5 * d, m - 0.5 * d) * d * d;
            let fd = f.finite_difference(m, d);
            row_c += weight * slope * slope;
            row_q += weight * fd * fd;
        }
        rows_c.push(row_c);
        rows_q.push(row_q);
    }
    let scale = var_g / (hbar * hbar);
    let classical = scale * pairwise_sum(&rows_c);
    let quantum = scale * pairwise_sum(&rows_q);
    Ok(RatePair { classical, quantum, classicality_ratio: quantum / classical })
}

/// Quantum coefficient evaluated through the derivative double series
/// instead of the finite-difference kernel; a truncated cross-check.
///
/// The series expands `(Δf/Δ)²` in odd derivatives of `f`:
/// term `(l₁,l₂)` carries `f^(2l₁+1)(m) f^(2l₂+1)(m) Δ^(2l₁+2l₂+2) /
/// (4^(l₁+l₂) (2l₁+1)! (2l₂+1)!)`; the `(0,0)` term is the classical
/// coefficient. Errors if the last order still moves the total by more
/// than 1e-6 relative.
pub fn second_order_quantum_series(
    spec: &SystemSpec,
    state: &ProductState,
    cfg: &QuadratureConfig,
) -> Result<f64, RateError> {
    cfg.validate()?;
    let (f, g) = spec
        .coupling
        .separable_view()
        .ok_or(RateError::NonSeparableCoupling)?;
    let var_g = bath_variance(&g, &state.bath, cfg.n_bath);
    let hbar = spec.hbar_eff;
    let (mid_win, sep_win) = windows(&state.sys, hbar);
    let (mids, w_mid) = gl_grid(cfg.n_mid, mid_win.0, mid_win.1);
    let (seps, w_sep) = gl_grid(cfg.n_sep, sep_win.0, sep_win.1);
    let l_max = cfg.series_order;

    // |F|² factorizes into midpoint and separation Gaussians, so the series
    // splits into 1-D moments: sep_moment[m] = ∫ R(Δ) Δ^(2m+2) dΔ and
    // mid_cross[l1][l2] = ∫ P(m) f^(2l1+1)(m) f^(2l2+1)(m) dm.
    let sep_moment: Vec<f64> = (0..=2 * l_max)
        .map(|mm| {
            let vals: Vec<f64> = seps
                .iter()
                .zip(&w_sep)
                .map(|(&d, &wd)| {
                    // Separation factor of |F|² at midpoint = center.
                    let ud = state.sys.sigma_p * d / hbar;
                    wd * (-ud * ud).exp() * d.powi(2 * mm as i32 + 2)
                })
                .collect();
            pairwise_sum(&vals)
        })
        .collect();
    let mid_prefactor =
        1.0 / (2.0 * std::f64::consts::PI * state.sys.sigma_q * state.sys.sigma_q);
    let derivs: Vec<Vec<f64>> = (0..=l_max)
        .map(|l| mids.iter().map(|&m| f.deriv_n(2 * l as u32 + 1, m)).collect())
        .collect();
    let mid_weight: Vec<f64> = mids
        .iter()
        .zip(&w_mid)
        .map(|(&m, &wm)| {
            let um = (m - state.sys.center_q) / state.sys.sigma_q;
            wm * mid_prefactor * (-um * um).exp()
        })
        .collect();
    let mid_cross = |l1: usize, l2: usize| -> f64 {
        let vals: Vec<f64> = mid_weight
            .iter()
            .zip(derivs[l1].iter().zip(&derivs[l2]))
            .map(|(&w, (&a, &b))| w * a * b)
            .collect();
        pairwise_sum(&vals)
    };

    let odd_factorial = |l: usize| -> f64 { (1..=2 * l + 1).map(|k| k as f64).product() };
    let scale = var_g / (hbar * hbar);
    let mut total = 0.0;
    for order in 0..=l_max {
        // Add the shell of terms with max(l1, l2) == order.
        let mut shell = 0.0;
        for l1 in 0..=order {
            for l2 in 0..=order {
                if l1.max(l2) != order {
                    continue;
                }
                shell += mid_cross(l1, l2) * sep_moment[l1 + l2]
                    / (4f64.powi((l1 + l2) as i32) * odd_factorial(l1) * odd_factorial(l2));
            }
        }
        total += scale * shell;
        if order == l_max {
            let rel = (scale * shell).abs() / total.abs().max(f64::MIN_POSITIVE);
            if rel > 1e-6 {
                return Err(RateError::SeriesNotConverged { order, rel });
            }
        }
    }
    Ok(total)
}

/// Least-squares quadratic fit `S(t) ≈ S(0) + a t + b t²` over an early
/// window, returning the linear and quadratic coefficients with standard
/// errors.
///
/// Errors if fewer than 5 samples are given or if the residual exceeds 10%
/// of the quadratic term's contribution at the window end (the expansion is
/// then no longer trustworthy over the window).
pub fn fit_early_entropy(times: &[f64], values: &[f64]) -> Result<EarlyFit, RateError> {
    if times.len() < 5 {
        return Err(RateError::TooFewSamples(times.len()));
    }
    let fit: QuadraticFit = numerics::fit_quadratic(times, values)?;
    let t_max = times.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let bound = 0.1 * (fit.quadratic * t_max * t_max).abs();
    if fit.residual_rms > bound {
        return Err(RateError::WindowTooWide { residual: fit.residual_rms, bound });
    }
    Ok(EarlyFit {
        linear: fit.linear,
        quadratic: fit.quadratic,
        se_linear: fit.se_linear,
        se_quadratic: fit.se_quadratic,
        residual_rms: fit.residual_rms,
    })
}
