//! Classical linear entropy of the reduced system, three ways.
//!
//! All three engines estimate `S_c(t) = 1 − 2πħ ∫ ρ̃_c(Q,P,t)² dQ dP`,
//! where `ρ̃_c` is the system marginal of an initial Gaussian product
//! density evolved under the full two-degree-of-freedom flow:
//!
//! * [`s_c_full_mc`] — exact backward-trajectory Monte Carlo. Liouville's
//!   theorem turns the squared marginal into an average of the *initial*
//!   density over backward trajectories launched from `(Q(t), P(t))` with
//!   fresh bath coordinates, which are importance-sampled from a Gaussian
//!   proposal around the forward trajectory's bath position.
//! * [`s_c_histogram`] — a direct binning oracle: propagate an ensemble,
//!   histogram `(Q(t), P(t))`, and sum the squared density. Pair counting
//!   removes the leading self-count bias.
//! * [`s_c_stability`] — the tangent-kernel approximation: linearizes the
//!   backward flow around each sampled trajectory, which reduces the bath
//!   integral to a closed-form Gaussian kernel of the backward stability
//!   matrix. Cheap and noise-free enough for dense output, at the price of
//!   a linearization error.

use crate::classical::{
    propagate_point_backward, propagate_point_visiting, propagate_visiting, IntegratorConfig,
    PropagationError, StabilityMatrix,
};
use crate::model::{PhasePoint, ProductState, SystemSpec};
use crate::numerics::{mean_and_standard_error, pairwise_sum};
use gauss_quad::GaussHermite;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use std::f64::consts::PI;
use std::num::NonZeroUsize;
use thiserror::Error;

/// Outer samples are drawn in antithetic blocks: one Gaussian displacement
/// and all 2⁴ sign combinations of its coordinates.
const SIGN_VARIANTS: usize = 16;

/// Pooled effective sample size below which the importance sampler is
/// declared degenerate.
const MIN_EFFECTIVE_SAMPLES: f64 = 10.0;

/// Histogram trajectories are split into this many blocks for the
/// standard-error estimate.
const HISTOGRAM_BLOCKS: usize = 16;

/// Fraction of lost samples (grid overflow, ill-conditioned kernels) that
/// is tolerated silently.
const LOSS_TOLERANCE: f64 = 1e-3;

// Disjoint RNG stream windows so the engines never share trajectories.
const HISTOGRAM_STREAM_BASE: u64 = 1 << 32;
const STABILITY_STREAM_BASE: u64 = 2 << 32;

#[derive(Debug, Error)]
pub enum CentropyError {
    #[error(transparent)]
    Propagation(#[from] PropagationError),
    /// The importance weights collapsed onto too few samples.
    #[error(
        "degenerate proposal at t = {t}: effective sample size {ess:.3} < {min}; \
         adjust proposal_scale or increase the sample counts",
        min = MIN_EFFECTIVE_SAMPLES
    )]
    DegenerateProposal { t: f64, ess: f64 },
    #[error("Monte-Carlo configuration rejected: {reason}")]
    BadMcConfig { reason: &'static str },
    #[error("histogram configuration rejected: {reason}")]
    BadHistogramConfig { reason: &'static str },
    /// More than `LOSS_TOLERANCE` of the ensemble left the histogram box.
    #[error(
        "{:.2}% of trajectories left the histogram grid at t = {t} (limit {:.2}%); enlarge the box",
        fraction * 100.0,
        LOSS_TOLERANCE * 100.0
    )]
    SupportOverflow { t: f64, fraction: f64 },
    #[error("the tangent-kernel estimator requires a symmetric Gaussian product state")]
    AsymmetricState,
    #[error("output times must be finite, nonnegative and sorted ascending")]
    BadTimes,
    #[error("need at least {needed} samples, got {got}")]
    TooFewSamples { needed: usize, got: usize },
}

/// Sampling parameters for the backward-trajectory Monte-Carlo estimator.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default)]
pub struct McConfig {
    /// Initial phase-space points. Rounded up to a whole number of
    /// antithetic blocks of 16.
    pub n_outer: usize,
    /// Bath samples `(q′, p′)` per outer point and output time.
    pub n_inner: usize,
    /// Width multiplier κ of the Gaussian bath proposal.
    pub proposal_scale: f64,
    pub seed: u64,
}

impl Default for McConfig {
    fn default() -> Self {
        Self {
            n_outer: 20_000,
            n_inner: 64,
            proposal_scale: 3.0,
            seed: 0,
        }
    }
}

impl McConfig {
    pub fn validate(&self) -> Result<(), CentropyError> {
        if self.n_outer == 0 {
            return Err(CentropyError::BadMcConfig {
                reason: "n_outer must be at least 1",
            });
        }
        if self.n_inner == 0 {
            return Err(CentropyError::BadMcConfig {
                reason: "n_inner must be at least 1",
            });
        }
        if !(self.proposal_scale > 0.0) {
            return Err(CentropyError::BadMcConfig {
                reason: "proposal_scale must be positive",
            });
        }
        Ok(())
    }
}

/// A Monte-Carlo entropy value with its uncertainty.
#[derive(Debug, Clone, Copy, serde::Serialize)]
pub struct EntropyEstimate {
    pub value: f64,
    /// Standard error of the mean over independent sampling units.
    pub std_error: f64,
    /// Effective sample size: pooled importance-weight ESS for the MC
    /// engine, in-grid trajectories for the histogram, kept samples for
    /// the tangent-kernel engine.
    pub n_effective: f64,
}

/// One output instant of the full Monte-Carlo engine.
#[derive(Debug, Clone, Copy)]
pub struct McSample {
    /// Requested time snapped to a whole number of integrator steps.
    pub t: f64,
    pub estimate: EntropyEstimate,
}

/// Binning region for the histogram oracle: `bins × bins` cells covering
/// the box `[-half_q, half_q] × [-half_p, half_p]` in the system plane.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default)]
pub struct HistogramGrid {
    /// Cells per axis; must be even so the double-width probe can merge
    /// 2×2 blocks.
    pub bins: usize,
    pub half_q: f64,
    pub half_p: f64,
}

impl Default for HistogramGrid {
    fn default() -> Self {
        Self {
            bins: 400,
            half_q: 4.0,
            half_p: 1.5,
        }
    }
}

impl HistogramGrid {
    pub fn validate(&self) -> Result<(), CentropyError> {
        if self.bins < 4 || self.bins % 2 != 0 {
            return Err(CentropyError::BadHistogramConfig {
                reason: "bins must be an even number of at least 4",
            });
        }
        if !(self.half_q > 0.0) || !(self.half_p > 0.0) {
            return Err(CentropyError::BadHistogramConfig {
                reason: "half extents must be positive",
            });
        }
        Ok(())
    }

    fn cell_area(&self) -> f64 {
        (2.0 * self.half_q / self.bins as f64) * (2.0 * self.half_p / self.bins as f64)
    }

    /// Flat cell index of `(q, p)`, or `None` outside the box.
    fn cell(&self, q: f64, p: f64) -> Option<usize> {
        let fx = (q + self.half_q) / (2.0 * self.half_q) * self.bins as f64;
        let fy = (p + self.half_p) / (2.0 * self.half_p) * self.bins as f64;
        if fx >= 0.0 && fx < self.bins as f64 && fy >= 0.0 && fy < self.bins as f64 {
            Some(fx as usize * self.bins + fy as usize)
        } else {
            None
        }
    }
}

/// One output instant of the histogram oracle.
#[derive(Debug, Clone, Copy)]
pub struct HistogramSample {
    pub t: f64,
    pub estimate: EntropyEstimate,
    /// The same estimator at double bin width; a large gap to `estimate`
    /// flags bin-width sensitivity.
    pub coarse_value: f64,
    pub overflow_fraction: f64,
}

/// One output instant of the tangent-kernel engine.
#[derive(Debug, Clone, Copy)]
pub struct StabilitySample {
    pub t: f64,
    pub estimate: EntropyEstimate,
    /// Samples excluded because rounding made the Gram determinant of the
    /// backward bath columns nonpositive.
    pub excluded: usize,
}

/// Snaps output times to integrator steps, rejecting unsorted input.
fn checkpoint_steps(times: &[f64], integ: &IntegratorConfig) -> Result<Vec<usize>, CentropyError> {
    if times.is_empty() {
        return Err(CentropyError::BadTimes);
    }
    let mut steps = Vec::with_capacity(times.len());
    for &t in times {
        if !t.is_finite() || t < 0.0 {
            return Err(CentropyError::BadTimes);
        }
        steps.push(integ.steps_for(t));
    }
    if steps.windows(2).any(|w| w[0] > w[1]) {
        return Err(CentropyError::BadTimes);
    }
    Ok(steps)
}

#[inline]
fn standard_normal<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    rng.sample(StandardNormal)
}

fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

// ---------------------------------------------------------------------------
// Full Monte-Carlo estimator
// ---------------------------------------------------------------------------

struct McGroupResult {
    /// Mean importance weight per output time, averaged over the block's
    /// variants and inner samples.
    value: Vec<f64>,
    sum_w: Vec<f64>,
    sum_w2: Vec<f64>,
}

/// Backward-trajectory Monte-Carlo estimate of `S_c` at every requested
/// time, sharing one forward propagation per outer sample.
///
/// By Liouville's theorem the squared system marginal integrates to
/// `E_{z∼ρ₀}[∫ ρ₀(back_t(Q(t), P(t), q′, p′)) dq′ dp′]`; the inner integral
/// is importance-sampled from a Gaussian proposal centered on the forward
/// trajectory's bath point `(q(t), p(t))` with widths `κ·(σ_q, σ_p)`. The
/// same standard-normal inner offsets are reused at every output time, so
/// each weight varies smoothly in `t` and consecutive outputs are strongly
/// correlated rather than independently noisy. Outer points are drawn in
/// antithetic blocks (one displacement, all 16 sign flips); the standard
/// error is taken over block means.
pub fn s_c_full_mc_series(
    spec: &SystemSpec,
    state: &ProductState,
    times: &[f64],
    integ: &IntegratorConfig,
    cfg: &McConfig,
) -> Result<Vec<McSample>, CentropyError> {
    cfg.validate()?;
    let checkpoints = checkpoint_steps(times, integ)?;
    let n_times = checkpoints.len();
    let n_groups = cfg.n_outer.div_ceil(SIGN_VARIANTS);
    let center = state.center();
    let prop_sq = cfg.proposal_scale * state.bath.sigma_q;
    let prop_sp = cfg.proposal_scale * state.bath.sigma_p;
    let prop_norm = 1.0 / (2.0 * PI * prop_sq * prop_sp);

    let groups: Vec<Result<McGroupResult, CentropyError>> = (0..n_groups)
        .into_par_iter()
        .map(|g| {
            let mut rng = stream_rng(cfg.seed, g as u64);
            let disp = [
                state.sys.sigma_q * standard_normal(&mut rng),
                state.sys.sigma_p * standard_normal(&mut rng),
                state.bath.sigma_q * standard_normal(&mut rng),
                state.bath.sigma_p * standard_normal(&mut rng),
            ];
            let xi: Vec<(f64, f64)> = (0..cfg.n_inner)
                .map(|_| (standard_normal(&mut rng), standard_normal(&mut rng)))
                .collect();

            let mut out = McGroupResult {
                value: vec![0.0; n_times],
                sum_w: vec![0.0; n_times],
                sum_w2: vec![0.0; n_times],
            };
            let mut weights = vec![0.0; cfg.n_inner];
            let mut weights_sq = vec![0.0; cfg.n_inner];
            let norm = (SIGN_VARIANTS * cfg.n_inner) as f64;
            for variant in 0..SIGN_VARIANTS {
                let mut z = PhasePoint::new(
                    center.q1 + flip(variant, 0) * disp[0],
                    center.p1 + flip(variant, 1) * disp[1],
                    center.q2 + flip(variant, 2) * disp[2],
                    center.p2 + flip(variant, 3) * disp[3],
                );
                let mut slot = 0usize;
                let mut inner_err: Option<PropagationError> = None;
                propagate_point_visiting(spec, &mut z, integ.dt, &checkpoints, |steps, zt| {
                    if inner_err.is_some() {
                        return;
                    }
                    for (j, &(x1, x2)) in xi.iter().enumerate() {
                        let end = PhasePoint::new(
                            zt.q1,
                            zt.p1,
                            zt.q2 + prop_sq * x1,
                            zt.p2 + prop_sp * x2,
                        );
                        match propagate_point_backward(spec, &end, steps, integ.dt) {
                            Ok(back) => {
                                let proposal = prop_norm * (-0.5 * (x1 * x1 + x2 * x2)).exp();
                                weights[j] = state.density(&back) / proposal;
                                weights_sq[j] = weights[j] * weights[j];
                            }
                            Err(e) => {
                                inner_err = Some(e);
                                return;
                            }
                        }
                    }
                    out.value[slot] += pairwise_sum(&weights) / norm;
                    out.sum_w[slot] += pairwise_sum(&weights);
                    out.sum_w2[slot] += pairwise_sum(&weights_sq);
                    slot += 1;
                })?;
                if let Some(e) = inner_err {
                    return Err(e.into());
                }
            }
            Ok(out)
        })
        .collect();

    let mut collected = Vec::with_capacity(n_groups);
    for g in groups {
        collected.push(g?);
    }

    let hbar = spec.hbar_eff;
    let mut samples = Vec::with_capacity(n_times);
    let mut group_values = vec![0.0; n_groups];
    for (k, &steps) in checkpoints.iter().enumerate() {
        let t = steps as f64 * integ.dt;
        for (g, out) in collected.iter().enumerate() {
            group_values[g] = out.value[k];
        }
        let sum_w = pairwise_sum(&collected.iter().map(|o| o.sum_w[k]).collect::<Vec<_>>());
        let sum_w2 = pairwise_sum(&collected.iter().map(|o| o.sum_w2[k]).collect::<Vec<_>>());
        let ess = sum_w * sum_w / sum_w2;
        if !(ess >= MIN_EFFECTIVE_SAMPLES) {
            return Err(CentropyError::DegenerateProposal { t, ess });
        }
        let (mean, se) = mean_and_standard_error(&group_values);
        samples.push(McSample {
            t,
            estimate: EntropyEstimate {
                value: 1.0 - 2.0 * PI * hbar * mean,
                std_error: 2.0 * PI * hbar * se,
                n_effective: ess,
            },
        });
    }
    Ok(samples)
}

/// Single-time convenience wrapper around [`s_c_full_mc_series`].
pub fn s_c_full_mc(
    spec: &SystemSpec,
    state: &ProductState,
    t: f64,
    integ: &IntegratorConfig,
    cfg: &McConfig,
) -> Result<EntropyEstimate, CentropyError> {
    Ok(s_c_full_mc_series(spec, state, &[t], integ, cfg)?[0].estimate)
}

#[inline]
fn flip(variant: usize, coord: usize) -> f64 {
    if variant >> coord & 1 == 1 {
        -1.0
    } else {
        1.0
    }
}

// ---------------------------------------------------------------------------
// Histogram oracle
// ---------------------------------------------------------------------------

/// Unbiased estimate of `∫ ρ̃_c² dQ dP` from bin counts: the pair-count
/// form `Σ nᵢ(nᵢ−1) / (N(N−1)·cell_area)` has no self-count bias.
pub(crate) fn pair_purity(counts: &[u32], n_in_grid: u64, cell_area: f64) -> f64 {
    if n_in_grid < 2 {
        return 0.0;
    }
    let pairs: u64 = counts
        .iter()
        .map(|&c| {
            let c = c as u64;
            c * c.saturating_sub(1)
        })
        .sum();
    pairs as f64 / (n_in_grid as f64 * (n_in_grid - 1) as f64 * cell_area)
}

/// Direct-binning estimate of `S_c` at every requested time from one
/// propagated ensemble of `n_traj` points.
///
/// The headline value uses all trajectories; the standard error comes from
/// splitting them into [`HISTOGRAM_BLOCKS`] round-robin blocks, each with
/// its own unbiased pair-count estimate. `coarse_value` re-bins the full
/// histogram at double bin width as a discretization probe. Errors out if
/// more than 0.1% of the ensemble leaves the box at any output time.
pub fn s_c_histogram_series(
    spec: &SystemSpec,
    state: &ProductState,
    times: &[f64],
    integ: &IntegratorConfig,
    grid: &HistogramGrid,
    n_traj: usize,
    seed: u64,
) -> Result<Vec<HistogramSample>, CentropyError> {
    grid.validate()?;
    if n_traj < 2 * HISTOGRAM_BLOCKS {
        return Err(CentropyError::BadHistogramConfig {
            reason: "n_traj must cover at least two points per error block",
        });
    }
    let checkpoints = checkpoint_steps(times, integ)?;
    let n_times = checkpoints.len();

    let tracks: Vec<Result<Vec<(f64, f64)>, CentropyError>> = (0..n_traj)
        .into_par_iter()
        .map(|i| {
            let mut rng = stream_rng(seed, HISTOGRAM_STREAM_BASE + i as u64);
            let mut z = state.sample(&mut rng);
            let mut positions = Vec::with_capacity(n_times);
            propagate_point_visiting(spec, &mut z, integ.dt, &checkpoints, |_, zt| {
                positions.push((zt.q1, zt.p1));
            })?;
            Ok(positions)
        })
        .collect();
    let mut ensemble = Vec::with_capacity(n_traj);
    for t in tracks {
        ensemble.push(t?);
    }

    let hbar = spec.hbar_eff;
    let bins = grid.bins;
    let area = grid.cell_area();
    let mut samples = Vec::with_capacity(n_times);
    let mut counts = vec![0u32; bins * bins];
    let mut block_counts = vec![vec![0u32; bins * bins]; HISTOGRAM_BLOCKS];
    let mut block_n = [0u64; HISTOGRAM_BLOCKS];
    for (k, &steps) in checkpoints.iter().enumerate() {
        let t = steps as f64 * integ.dt;
        counts.fill(0);
        for b in &mut block_counts {
            b.fill(0);
        }
        block_n.fill(0);
        let mut in_grid = 0u64;
        for (i, track) in ensemble.iter().enumerate() {
            let (q, p) = track[k];
            if let Some(cell) = grid.cell(q, p) {
                counts[cell] += 1;
                let b = i % HISTOGRAM_BLOCKS;
                block_counts[b][cell] += 1;
                block_n[b] += 1;
                in_grid += 1;
            }
        }
        let overflow = (n_traj as u64 - in_grid) as f64 / n_traj as f64;
        if overflow > LOSS_TOLERANCE {
            return Err(CentropyError::SupportOverflow {
                t,
                fraction: overflow,
            });
        }

        let purity = pair_purity(&counts, in_grid, area);
        let block_values: Vec<f64> = block_counts
            .iter()
            .zip(&block_n)
            .map(|(c, &n)| 1.0 - 2.0 * PI * hbar * pair_purity(c, n, area))
            .collect();
        let (_, se) = mean_and_standard_error(&block_values);

        let coarse = coarse_counts(&counts, bins);
        let coarse_purity = pair_purity(&coarse, in_grid, 4.0 * area);

        samples.push(HistogramSample {
            t,
            estimate: EntropyEstimate {
                value: 1.0 - 2.0 * PI * hbar * purity,
                std_error: se,
                n_effective: in_grid as f64,
            },
            coarse_value: 1.0 - 2.0 * PI * hbar * coarse_purity,
            overflow_fraction: overflow,
        });
    }
    Ok(samples)
}

/// Single-time convenience wrapper around [`s_c_histogram_series`].
pub fn s_c_histogram(
    spec: &SystemSpec,
    state: &ProductState,
    t: f64,
    integ: &IntegratorConfig,
    grid: &HistogramGrid,
    n_traj: usize,
    seed: u64,
) -> Result<HistogramSample, CentropyError> {
    Ok(s_c_histogram_series(spec, state, &[t], integ, grid, n_traj, seed)?[0])
}

/// Merges 2×2 cell blocks into a half-resolution histogram.
fn coarse_counts(counts: &[u32], bins: usize) -> Vec<u32> {
    let half = bins / 2;
    let mut out = vec![0u32; half * half];
    for ix in 0..bins {
        for iy in 0..bins {
            out[(ix / 2) * half + iy / 2] += counts[ix * bins + iy];
        }
    }
    out
}

// ---------------------------------------------------------------------------
// Tangent-kernel (stability-matrix) approximation
// ---------------------------------------------------------------------------

/// Gram–Schmidt data of the bath columns `m₃, m₄` of a backward matrix:
/// the squared projection of the displacement `r` onto their span and the
/// log square root of their Gram determinant.
///
/// In terms of the Gram entries `X = |m₃|²`, `Y = |m₄|²`, `Z = m₃·m₄` and
/// the contractions `U = r·m₄`, `V = r·m₃`, the projection is
/// `|r_par|² = (XU² + YV² − 2ZUV)/(XY − Z²)`; orthogonalizing the column
/// vectors first keeps both quantities stable when the columns grow
/// exponentially and nearly align, where the direct Gram expressions lose
/// all significant digits. `None` flags samples whose Gram determinant
/// degenerates to nonpositive within rounding.
fn bath_projection(backward: &StabilityMatrix, r: &[f64; 4]) -> Option<(f64, f64)> {
    let m3 = backward.col(2);
    let m4 = backward.col(3);
    let x = dot(&m3, &m3);
    if !(x > 0.0) || !x.is_finite() {
        return None;
    }
    let n3 = x.sqrt();
    let e1 = [m3[0] / n3, m3[1] / n3, m3[2] / n3, m3[3] / n3];
    let c = dot(&m4, &e1);
    let u = [
        m4[0] - c * e1[0],
        m4[1] - c * e1[1],
        m4[2] - c * e1[2],
        m4[3] - c * e1[3],
    ];
    let u2 = dot(&u, &u);
    if !(u2 > 0.0) || !u2.is_finite() {
        return None;
    }
    let n4 = u2.sqrt();
    let a = dot(r, &e1);
    let b = dot(r, &u) / n4;
    Some((a * a + b * b, n3.ln() + n4.ln()))
}

/// Squared-density-weighted form of the tangent kernel,
/// `exp(|r_par|²/2σ²)/sqrt(det G)`, whose average over the squared and
/// renormalized initial density gives `2(1 − S_c)/purity`. Only used to
/// cross-check [`bounded_kernel`]: its positive exponent gives the sample
/// mean an infinite variance, so it is unsuitable for estimation.
#[cfg_attr(not(test), allow(dead_code))]
pub(crate) fn tangent_kernel(backward: &StabilityMatrix, r: &[f64; 4], sigma: f64) -> Option<f64> {
    let (r_par_sq, log_sqrt_det) = bath_projection(backward, r)?;
    let kernel = (r_par_sq / (2.0 * sigma * sigma) - log_sqrt_det).exp();
    kernel.is_finite().then_some(kernel)
}

/// Production form of the tangent kernel, averaged over the plain initial
/// density: `exp(−|r_perp|²/2σ²)/sqrt(det G)`, with `r_perp` the part of
/// the displacement orthogonal to the backward bath columns. Identical
/// integral to [`tangent_kernel`] (it differs by exactly the density ratio
/// `exp(−|r|²/2σ²)`), but bounded above by `1/sqrt(det G)`, so the sample
/// mean has finite variance.
fn bounded_kernel(backward: &StabilityMatrix, r: &[f64; 4], sigma: f64) -> Option<f64> {
    let (r_par_sq, log_sqrt_det) = bath_projection(backward, r)?;
    let r_perp_sq = (dot(r, r) - r_par_sq).max(0.0);
    let kernel = (-r_perp_sq / (2.0 * sigma * sigma) - log_sqrt_det).exp();
    kernel.is_finite().then_some(kernel)
}

#[inline]
fn dot(a: &[f64; 4], b: &[f64; 4]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2] + a[3] * b[3]
}

/// Tangent-kernel approximation of `S_c` at every requested time.
///
/// Samples trajectories from the initial density itself, carries the
/// forward tangent matrix along each one, and averages the bounded
/// closed-form kernel of the backward matrix (see [`bounded_kernel`]):
/// `S_c = 1 − (ħ/σ²)·mean`. At `t = 0` the backward matrix is the
/// identity, the average is exactly `1/2`, and the estimate reduces to one
/// minus the system purity. Restricted to symmetric Gaussian states;
/// squeezed states are rejected.
pub fn s_c_stability_series(
    spec: &SystemSpec,
    state: &ProductState,
    times: &[f64],
    integ: &IntegratorConfig,
    n_samples: usize,
    seed: u64,
) -> Result<Vec<StabilitySample>, CentropyError> {
    if !state.is_symmetric() {
        return Err(CentropyError::AsymmetricState);
    }
    if n_samples < 2 {
        return Err(CentropyError::TooFewSamples {
            needed: 2,
            got: n_samples,
        });
    }
    let checkpoints = checkpoint_steps(times, integ)?;
    let n_times = checkpoints.len();
    let sigma = state.sys.sigma_q;
    let center = state.center();

    let rows: Vec<Result<Vec<Option<f64>>, CentropyError>> = (0..n_samples)
        .into_par_iter()
        .map(|i| {
            let mut rng = stream_rng(seed, STABILITY_STREAM_BASE + i as u64);
            let mut z = state.sample(&mut rng);
            let r = [
                z.q1 - center.q1,
                z.p1 - center.p1,
                z.q2 - center.q2,
                z.p2 - center.p2,
            ];
            let mut m = StabilityMatrix::identity();
            let mut kernels = Vec::with_capacity(n_times);
            propagate_visiting(spec, &mut z, &mut m, integ.dt, &checkpoints, |_, _, mt| {
                kernels.push(bounded_kernel(&mt.symplectic_inverse(), &r, sigma));
            })?;
            Ok(kernels)
        })
        .collect();
    let mut all = Vec::with_capacity(n_samples);
    for r in rows {
        all.push(r?);
    }

    let scale = spec.hbar_eff / (sigma * sigma);
    let mut samples = Vec::with_capacity(n_times);
    let mut kept = Vec::with_capacity(n_samples);
    for (k, &steps) in checkpoints.iter().enumerate() {
        let t = steps as f64 * integ.dt;
        kept.clear();
        kept.extend(all.iter().filter_map(|row| row[k]));
        let excluded = n_samples - kept.len();
        if kept.len() < 2 {
            return Err(CentropyError::TooFewSamples {
                needed: 2,
                got: kept.len(),
            });
        }
        if excluded as f64 > LOSS_TOLERANCE * n_samples as f64 {
            log::warn!(
                "tangent-kernel estimator excluded {excluded}/{n_samples} ill-conditioned samples at t = {t}"
            );
        }
        let (mean, se) = mean_and_standard_error(&kept);
        samples.push(StabilitySample {
            t,
            estimate: EntropyEstimate {
                value: 1.0 - scale * mean,
                std_error: scale * se,
                n_effective: kept.len() as f64,
            },
            excluded,
        });
    }
    Ok(samples)
}

/// Single-time convenience wrapper around [`s_c_stability_series`].
pub fn s_c_stability(
    spec: &SystemSpec,
    state: &ProductState,
    t: f64,
    integ: &IntegratorConfig,
    n_samples: usize,
    seed: u64,
) -> Result<StabilitySample, CentropyError> {
    Ok(s_c_stability_series(spec, state, &[t], integ, n_samples, seed)?[0])
}

/// Deterministic variant of the tangent-kernel estimator: replaces the
/// initial-density sample average with a tensor Gauss–Hermite quadrature
/// over the four initial coordinates. Noise-free, so suited to resolving
/// the tiny early-time entropy used by short-window growth fits. Returns
/// `(t, S_c)` pairs.
pub fn s_c_stability_quadrature(
    spec: &SystemSpec,
    state: &ProductState,
    times: &[f64],
    integ: &IntegratorConfig,
    n_axis: usize,
) -> Result<Vec<(f64, f64)>, CentropyError> {
    if !state.is_symmetric() {
        return Err(CentropyError::AsymmetricState);
    }
    if n_axis < 2 {
        return Err(CentropyError::TooFewSamples {
            needed: 2,
            got: n_axis,
        });
    }
    let checkpoints = checkpoint_steps(times, integ)?;
    let n_times = checkpoints.len();
    let sigma = state.sys.sigma_q;
    let center = state.center();
    let rule = GaussHermite::new(NonZeroUsize::new(n_axis).expect("n_axis checked nonzero"));
    // Under the e^{-x²} weight an initial-density coordinate of width σ
    // sits at center + σ√2·x; each axis weight picks up the 1/√π
    // normalization.
    let pairs: Vec<(f64, f64)> = rule
        .as_node_weight_pairs()
        .iter()
        .map(|&(x, w)| (sigma * std::f64::consts::SQRT_2 * x, w / PI.sqrt()))
        .collect();

    let total = n_axis * n_axis * n_axis * n_axis;
    let rows: Vec<Result<(f64, Vec<Option<f64>>), CentropyError>> = (0..total)
        .into_par_iter()
        .map(|flat| {
            let i = [
                flat / (n_axis * n_axis * n_axis),
                flat / (n_axis * n_axis) % n_axis,
                flat / n_axis % n_axis,
                flat % n_axis,
            ];
            let d = [pairs[i[0]].0, pairs[i[1]].0, pairs[i[2]].0, pairs[i[3]].0];
            let weight = pairs[i[0]].1 * pairs[i[1]].1 * pairs[i[2]].1 * pairs[i[3]].1;
            let mut z = PhasePoint::new(
                center.q1 + d[0],
                center.p1 + d[1],
                center.q2 + d[2],
                center.p2 + d[3],
            );
            let mut m = StabilityMatrix::identity();
            let mut kernels = Vec::with_capacity(n_times);
            propagate_visiting(spec, &mut z, &mut m, integ.dt, &checkpoints, |_, _, mt| {
                kernels.push(bounded_kernel(&mt.symplectic_inverse(), &d, sigma));
            })?;
            Ok((weight, kernels))
        })
        .collect();
    let mut nodes = Vec::with_capacity(total);
    for r in rows {
        nodes.push(r?);
    }

    let scale = spec.hbar_eff / (sigma * sigma);
    let mut out = Vec::with_capacity(n_times);
    for (k, &steps) in checkpoints.iter().enumerate() {
        let t = steps as f64 * integ.dt;
        let weighted: Vec<f64> = nodes
            .iter()
            .filter_map(|(w, kernels)| kernels[k].map(|v| w * v))
            .collect();
        let kept_weight: Vec<f64> = nodes
            .iter()
            .filter(|(_, kernels)| kernels[k].is_some())
            .map(|(w, _)| *w)
            .collect();
        let norm = pairwise_sum(&kept_weight);
        if !(norm > 0.0) {
            return Err(CentropyError::TooFewSamples { needed: 1, got: 0 });
        }
        out.push((t, 1.0 - scale * pairwise_sum(&weighted) / norm));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::classical::step;
    use crate::model::{CouplingSpec, GaussianState, DEFAULT_BETA};
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use rand::Rng;

    const HBAR: f64 = 0.005;

    fn quartic(alpha: f64) -> SystemSpec {
        SystemSpec {
            hbar_eff: HBAR,
            beta: DEFAULT_BETA,
            coupling: CouplingSpec::QuadQuad { alpha },
        }
    }

    fn symmetric_state(spec: &SystemSpec, q1: f64, p1: f64, q2: f64, p2: f64) -> ProductState {
        ProductState {
            sys: GaussianState::symmetric(q1, p1, spec.hbar_eff),
            bath: GaussianState::symmetric(q2, p2, spec.hbar_eff),
        }
    }

    /// Coupling-strength variants of the reference center (0.4, 0.5, 0.6)
    /// on the E = 0.24 shell, bath momentum solved from the energy.
    fn quartic_setup(alpha: f64) -> (SystemSpec, ProductState) {
        let spec = quartic(alpha);
        let p2 = spec.solve_momentum_from_energy(0.4, 0.5, 0.6, 0.24).unwrap();
        let state = symmetric_state(&spec, 0.4, 0.5, 0.6, p2);
        (spec, state)
    }

    fn chaotic_setup() -> (SystemSpec, ProductState) {
        quartic_setup(1.0)
    }

    fn integrable_setup() -> (SystemSpec, ProductState) {
        quartic_setup(0.03)
    }

    #[test]
    fn tangent_kernel_matches_direct_bath_integral() {
        // The closed-form kernel claims a value for the 2-D Gaussian
        // integral over the backward bath columns; check it against brute
        // quadrature for a nontrivial exactly-symplectic matrix.
        let spec = quartic(1.0);
        let mut m = StabilityMatrix::identity();
        let mut z = PhasePoint::new(0.4, 0.2, -0.3, 0.5);
        for _ in 0..1_700 {
            step(&spec, &mut z, &mut m, 1e-3);
        }
        let backward = m.symplectic_inverse();
        let m3 = backward.col(2);
        let m4 = backward.col(3);

        let sigma = (0.5 * HBAR).sqrt();
        let state = symmetric_state(&spec, 0.1, -0.2, 0.05, 0.3);
        let center = state.center();
        // A displacement of about one width in every coordinate.
        let zs = PhasePoint::new(
            center.q1 + 0.8 * sigma,
            center.p1 - 1.1 * sigma,
            center.q2 + 0.4 * sigma,
            center.p2 + 0.9 * sigma,
        );
        let r = [
            zs.q1 - center.q1,
            zs.p1 - center.p1,
            zs.q2 - center.q2,
            zs.p2 - center.p2,
        ];

        // Brute force: integrate rho0(z + d1 m3 + d2 m4) over (d1, d2) with
        // Gauss-Legendre in coordinates aligned with the integrand.
        let precision = |a: &[f64; 4], b: &[f64; 4]| dot(a, b) / (sigma * sigma);
        let a11 = precision(&m3, &m3);
        let a12 = precision(&m3, &m4);
        let a22 = precision(&m4, &m4);
        let b1 = dot(&m3, &r) / (sigma * sigma);
        let b2 = dot(&m4, &r) / (sigma * sigma);
        let det = a11 * a22 - a12 * a12;
        let center_d = [(-b1 * a22 + b2 * a12) / det, (-b2 * a11 + b1 * a12) / det];
        let tr = a11 + a22;
        let lam_min = 0.5 * (tr - (tr * tr - 4.0 * det).sqrt());
        let w = 14.0 / lam_min.sqrt();
        let rule = gauss_quad::GaussLegendre::new(NonZeroUsize::new(400).unwrap());
        let nodes: Vec<(f64, f64)> = rule
            .as_node_weight_pairs()
            .iter()
            .map(|&(x, wt)| (w * x, w * wt))
            .collect();
        let mut total = 0.0;
        for &(d1, w1) in &nodes {
            let mut row = 0.0;
            for &(d2, w2) in &nodes {
                let u1 = center_d[0] + d1;
                let u2 = center_d[1] + d2;
                let zb = PhasePoint::new(
                    zs.q1 + u1 * m3[0] + u2 * m4[0],
                    zs.p1 + u1 * m3[1] + u2 * m4[1],
                    zs.q2 + u1 * m3[2] + u2 * m4[2],
                    zs.p2 + u1 * m3[3] + u2 * m4[3],
                );
                row += w2 * state.density(&zb);
            }
            total += w1 * row;
        }

        // Closed form: kernel/(2πσ²) · exp(-|r|²/2σ²).
        let kernel = tangent_kernel(&backward, &r, sigma).unwrap();
        let closed = kernel / (2.0 * PI * sigma * sigma) * (-0.5 * dot(&r, &r) / (sigma * sigma)).exp();
        assert_abs_diff_eq!(total, closed, epsilon = 1e-8 * closed.abs());
    }

    #[test]
    fn tangent_kernel_identity_matrix_is_paper_form() {
        // At M = I the exponent must be exactly (U² + V²)/2σ² with
        // U = p − p0, V = q − q0, and the determinant factor must be 1.
        let sigma = 0.05;
        let d = [0.3, -0.2, 0.011, -0.007];
        let kernel = tangent_kernel(&StabilityMatrix::identity(), &d, sigma).unwrap();
        let expected = ((d[2] * d[2] + d[3] * d[3]) / (2.0 * sigma * sigma)).exp();
        assert_abs_diff_eq!(kernel, expected, epsilon = 1e-14 * expected);
    }

    #[test]
    fn stability_estimate_vanishes_at_time_zero() {
        let (spec, state) = chaotic_setup();
        let integ = IntegratorConfig::default();
        let sample = s_c_stability(&spec, &state, 0.0, &integ, 20_000, 7).unwrap();
        assert_eq!(sample.excluded, 0);
        // The kernel average is exactly 1/2 at t = 0; sampling noise only.
        assert!(sample.estimate.value.abs() < 3.0 * sample.estimate.std_error + 1e-3);
        assert!(sample.estimate.value.abs() < 0.005);
        assert!(sample.estimate.std_error < 0.005);
    }

    #[test]
    fn bounded_and_weighted_kernel_forms_integrate_identically() {
        // The production kernel averaged over the initial density must
        // reproduce the squared-density-weighted average of the positive-
        // exponent form: both by 4-D tensor quadrature over a nontrivial
        // symplectic matrix.
        let spec = quartic(1.0);
        let mut m = StabilityMatrix::identity();
        let mut z = PhasePoint::new(0.35, -0.15, 0.55, 0.3);
        for _ in 0..2_300 {
            step(&spec, &mut z, &mut m, 1e-3);
        }
        let backward = m.symplectic_inverse();
        let sigma = (0.5 * HBAR).sqrt();

        let rule = GaussHermite::new(NonZeroUsize::new(24).unwrap());
        let pairs: Vec<(f64, f64)> = rule
            .as_node_weight_pairs()
            .iter()
            .map(|&(x, w)| (x, w / PI.sqrt()))
            .collect();
        let mut mean_bounded = 0.0;
        let mut mean_weighted = 0.0;
        for &(x1, w1) in &pairs {
            for &(x2, w2) in &pairs {
                for &(x3, w3) in &pairs {
                    for &(x4, w4) in &pairs {
                        let w = w1 * w2 * w3 * w4;
                        // Initial-density coordinates have width σ.
                        let r0 = [
                            sigma * std::f64::consts::SQRT_2 * x1,
                            sigma * std::f64::consts::SQRT_2 * x2,
                            sigma * std::f64::consts::SQRT_2 * x3,
                            sigma * std::f64::consts::SQRT_2 * x4,
                        ];
                        mean_bounded += w * bounded_kernel(&backward, &r0, sigma).unwrap();
                        // Squared-density coordinates have width σ/√2.
                        let r1 = [sigma * x1, sigma * x2, sigma * x3, sigma * x4];
                        mean_weighted += w * tangent_kernel(&backward, &r1, sigma).unwrap();
                    }
                }
            }
        }
        // rho0·exp(−|r|²/2σ²) = (1/4)·normalized(rho0²), so
        // E_{rho0}[bounded] = (1/4)·E_{rho0²}[weighted].
        assert_abs_diff_eq!(4.0 * mean_bounded, mean_weighted, epsilon = 1e-6 * mean_weighted);
    }

    #[test]
    fn full_mc_is_exact_at_zero_coupling() {
        // With the coupling switched off the marginal purity is conserved,
        // so S_c(t) = 0 at any t; a significant nonzero value would flag an
        // estimator bias.
        let (spec, state) = quartic_setup(0.0);
        let integ = IntegratorConfig::default();
        let cfg = McConfig {
            n_outer: 512,
            n_inner: 16,
            ..McConfig::default()
        };
        let est = s_c_full_mc(&spec, &state, 2.0, &integ, &cfg).unwrap();
        assert!(
            est.value.abs() <= 4.0 * est.std_error + 2e-3,
            "decoupled S_c(2) = {} ± {}",
            est.value,
            est.std_error
        );

        let stab = s_c_stability(&spec, &state, 2.0, &integ, 4_000, 3).unwrap();
        assert!(
            stab.estimate.value.abs() <= 4.0 * stab.estimate.std_error + 2e-3,
            "decoupled tangent-kernel S_c(2) = {} ± {}",
            stab.estimate.value,
            stab.estimate.std_error
        );
    }

    #[test]
    fn full_mc_vanishes_at_time_zero() {
        let (spec, state) = chaotic_setup();
        let integ = IntegratorConfig::default();
        let cfg = McConfig {
            n_outer: 2_048,
            n_inner: 16,
            ..McConfig::default()
        };
        let est = s_c_full_mc(&spec, &state, 0.0, &integ, &cfg).unwrap();
        assert!(est.n_effective > 100.0);
        assert!(est.value.abs() < 3.0 * est.std_error + 2e-3);
    }

    #[test]
    fn histogram_vanishes_at_time_zero_on_adapted_box() {
        // 400 × 400 bins over roughly ±6σ around an origin-centered state.
        let spec = quartic(1.0);
        let state = symmetric_state(&spec, 0.0, 0.0, 0.0, 0.0);
        let sigma = state.sys.sigma_q;
        let grid = HistogramGrid {
            bins: 400,
            half_q: 6.0 * sigma,
            half_p: 6.0 * sigma,
        };
        let integ = IntegratorConfig::default();
        let sample = s_c_histogram(&spec, &state, 0.0, &integ, &grid, 100_000, 3).unwrap();
        assert_eq!(sample.overflow_fraction, 0.0);
        assert!(
            sample.estimate.value.abs() < 0.02,
            "histogram entropy at t = 0 came out {} ± {}",
            sample.estimate.value,
            sample.estimate.std_error
        );
        assert!(
            sample.coarse_value.abs() < 0.02,
            "coarse histogram entropy at t = 0 came out {}",
            sample.coarse_value
        );
    }

    #[test]
    fn pair_counting_recovers_uniform_density_purity() {
        // Uniform density over a unit box: S_c = 1 − 2πħ / A exactly.
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let unit = rand::distributions::Uniform::new(0.0f64, 1.0);
        let bins = 50usize;
        let mut counts = vec![0u32; bins * bins];
        let n = 100_000u64;
        for _ in 0..n {
            let x = rng.sample(unit);
            let y = rng.sample(unit);
            let ix = (x * bins as f64) as usize;
            let iy = (y * bins as f64) as usize;
            counts[ix * bins + iy] += 1;
        }
        let cell_area = 1.0 / (bins * bins) as f64;
        let s = 1.0 - 2.0 * PI * HBAR * pair_purity(&counts, n, cell_area);
        let expected = 1.0 - 2.0 * PI * HBAR;
        assert_abs_diff_eq!(s, expected, epsilon = 2e-4);
    }

    #[test]
    fn full_mc_agrees_with_histogram_in_chaotic_regime() {
        let (spec, state) = chaotic_setup();
        let integ = IntegratorConfig::default();
        let cfg = McConfig {
            n_outer: 512,
            n_inner: 16,
            ..McConfig::default()
        };
        let times = [1.0, 2.0];
        let mc = s_c_full_mc_series(&spec, &state, &times, &integ, &cfg).unwrap();
        let hist =
            s_c_histogram_series(&spec, &state, &times, &integ, &HistogramGrid::default(), 8_192, 5)
                .unwrap();
        for (m, h) in mc.iter().zip(&hist) {
            let gap = (m.estimate.value - h.estimate.value).abs();
            let band = 2.0
                * (m.estimate.std_error.powi(2) + h.estimate.std_error.powi(2)).sqrt()
                + 0.01;
            assert!(
                gap <= band,
                "t = {}: mc {} vs hist {} (band {band})",
                m.t,
                m.estimate.value,
                h.estimate.value
            );
        }
    }

    #[test]
    fn stability_agrees_with_unbiased_estimators_in_integrable_regime() {
        // Weak coupling, t = 2. The histogram is the unbiased arbiter here:
        // its only systematic error is the O(Δ²) smoothing bias, kept small
        // by adapting the box to the energy shell. The full-MC estimator is
        // unbiased too but has a large intrinsic outer variance at weak
        // coupling, so it only gets a standard-error-scaled band.
        let (spec, state) = integrable_setup();
        let integ = IntegratorConfig::default();
        let t = 2.0;

        let stab = s_c_stability(&spec, &state, t, &integ, 8_000, 9).unwrap();
        assert!(
            stab.estimate.value > 0.03 && stab.estimate.value < 0.065,
            "tangent-kernel estimate drifted: {} ± {}",
            stab.estimate.value,
            stab.estimate.std_error
        );

        // Energy shell of the quartic at E = 0.24: |q| ≤ (4E/β)^¼ ≈ 3.13,
        // |p| ≤ √(2E) ≈ 0.69.
        let grid = HistogramGrid { bins: 400, half_q: 3.2, half_p: 0.75 };
        let hist = s_c_histogram(&spec, &state, t, &integ, &grid, 30_000, 5).unwrap();
        let gap = (stab.estimate.value - hist.estimate.value).abs();
        let band = 2.0 * hist.estimate.std_error + 0.015;
        assert!(
            gap <= band,
            "tangent-kernel {} vs histogram {} ± {} (band {band})",
            stab.estimate.value,
            hist.estimate.value,
            hist.estimate.std_error
        );

        let cfg = McConfig {
            n_outer: 2_048,
            n_inner: 32,
            ..McConfig::default()
        };
        let mc = s_c_full_mc(&spec, &state, t, &integ, &cfg).unwrap();
        let mc_band = 2.5 * mc.std_error + 0.01;
        assert!(
            (mc.value - stab.estimate.value).abs() <= mc_band,
            "mc {} ± {} vs tangent-kernel {} (band {mc_band})",
            mc.value,
            mc.std_error,
            stab.estimate.value
        );
    }

    /// Manual cross-estimator scan of the weak-coupling point; run with
    /// `cargo test -- --ignored --nocapture diagnostic_integrable_scan`.
    #[test]
    #[ignore]
    fn diagnostic_integrable_scan() {
        let (spec, state) = integrable_setup();
        let integ = IntegratorConfig::default();
        let rates = crate::perturbation::second_order_rates(
            &spec,
            &state,
            &crate::perturbation::QuadratureConfig::default(),
        )
        .unwrap();
        println!("perturbative classical coefficient b = {:.6e}", rates.classical);

        let times = [0.25, 0.5, 1.0, 2.0];
        let quad = s_c_stability_quadrature(&spec, &state, &times, &integ, 16).unwrap();
        for (t, v) in &quad {
            println!(
                "t = {t:5.2}: quadrature stability {v:+.6e}   b t^2 = {:+.6e}",
                rates.classical * t * t
            );
        }

        let stab = s_c_stability_series(&spec, &state, &times, &integ, 20_000, 9).unwrap();
        for s in &stab {
            println!(
                "t = {:5.2}: sampled stability {:+.6e} ± {:.2e} (excluded {})",
                s.t, s.estimate.value, s.estimate.std_error, s.excluded
            );
        }

        let cfg = McConfig { n_outer: 4_096, n_inner: 32, ..McConfig::default() };
        let mc = s_c_full_mc_series(&spec, &state, &[1.0, 2.0], &integ, &cfg).unwrap();
        for m in &mc {
            println!(
                "t = {:5.2}: full mc {:+.6e} ± {:.2e} (ess {:.0})",
                m.t, m.estimate.value, m.estimate.std_error, m.estimate.n_effective
            );
        }

        let hist = s_c_histogram_series(
            &spec,
            &state,
            &[1.0, 2.0],
            &integ,
            &HistogramGrid::default(),
            40_000,
            5,
        )
        .unwrap();
        for h in &hist {
            println!(
                "t = {:5.2}: histogram {:+.6e} ± {:.2e} (coarse {:+.6e}, overflow {:.2e})",
                h.t, h.estimate.value, h.estimate.std_error, h.coarse_value, h.overflow_fraction
            );
        }
    }

    #[test]
    fn quadrature_variant_matches_sampled_stability() {
        let (spec, state) = chaotic_setup();
        let integ = IntegratorConfig::default();
        let times = [0.5];
        let quad = s_c_stability_quadrature(&spec, &state, &times, &integ, 8).unwrap();
        let sampled = s_c_stability_series(&spec, &state, &times, &integ, 8_000, 2).unwrap();
        assert_abs_diff_eq!(
            quad[0].1,
            sampled[0].estimate.value,
            epsilon = 3.0 * sampled[0].estimate.std_error + 1e-3
        );
    }

    #[test]
    fn estimates_are_deterministic_across_seeds_and_thread_counts() {
        let (spec, state) = chaotic_setup();
        let integ = IntegratorConfig::default();
        let cfg = McConfig {
            n_outer: 64,
            n_inner: 4,
            ..McConfig::default()
        };
        let times = [0.0, 0.5];
        let run = || s_c_full_mc_series(&spec, &state, &times, &integ, &cfg).unwrap();
        let base = run();
        let again = run();
        let pool1 = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let pool3 = rayon::ThreadPoolBuilder::new().num_threads(3).build().unwrap();
        let serial = pool1.install(run);
        let threaded = pool3.install(run);
        for k in 0..times.len() {
            for other in [&again, &serial, &threaded] {
                assert_eq!(
                    base[k].estimate.value.to_bits(),
                    other[k].estimate.value.to_bits()
                );
                assert_eq!(
                    base[k].estimate.std_error.to_bits(),
                    other[k].estimate.std_error.to_bits()
                );
            }
        }
    }

    #[test]
    fn estimate_is_stable_under_proposal_width() {
        let (spec, state) = chaotic_setup();
        let integ = IntegratorConfig::default();
        let t = 1.0;
        let mut runs = Vec::new();
        for kappa in [2.0, 3.0, 5.0] {
            let cfg = McConfig {
                n_outer: 512,
                n_inner: 16,
                proposal_scale: kappa,
                ..McConfig::default()
            };
            runs.push(s_c_full_mc(&spec, &state, t, &integ, &cfg).unwrap());
        }
        for pair in runs.windows(2) {
            let shift = (pair[0].value - pair[1].value).abs();
            assert!(
                shift <= pair[0].std_error + pair[1].std_error,
                "width sensitivity: {} vs {}",
                pair[0].value,
                pair[1].value
            );
        }
    }

    #[test]
    fn degenerate_proposal_is_detected() {
        let (spec, state) = chaotic_setup();
        let integ = IntegratorConfig::default();
        let cfg = McConfig {
            n_outer: 16,
            n_inner: 8,
            proposal_scale: 80.0,
            ..McConfig::default()
        };
        let err = s_c_full_mc(&spec, &state, 0.0, &integ, &cfg).unwrap_err();
        assert!(matches!(err, CentropyError::DegenerateProposal { .. }), "{err}");
    }

    #[test]
    fn stability_rejects_squeezed_states() {
        let spec = quartic(1.0);
        let state = ProductState {
            sys: GaussianState::new(0.5, 0.5, 1.25, 0.002),
            bath: GaussianState::symmetric(0.0, 0.479, spec.hbar_eff),
        };
        let integ = IntegratorConfig::default();
        let err = s_c_stability(&spec, &state, 0.0, &integ, 100, 0).unwrap_err();
        assert!(matches!(err, CentropyError::AsymmetricState));
        let err = s_c_stability_quadrature(&spec, &state, &[0.0], &integ, 4).unwrap_err();
        assert!(matches!(err, CentropyError::AsymmetricState));
    }

    #[test]
    fn histogram_overflow_is_reported() {
        let (spec, state) = chaotic_setup();
        let grid = HistogramGrid {
            bins: 100,
            half_q: 0.2,
            half_p: 0.2,
        };
        let integ = IntegratorConfig::default();
        let err = s_c_histogram(&spec, &state, 0.0, &integ, &grid, 2_048, 0).unwrap_err();
        match err {
            CentropyError::SupportOverflow { fraction, .. } => assert!(fraction > 0.5),
            other => panic!("expected overflow, got {other}"),
        }
    }

    #[test]
    fn configuration_errors_are_reported() {
        let (spec, state) = chaotic_setup();
        let integ = IntegratorConfig::default();
        let bad = McConfig {
            n_outer: 0,
            ..McConfig::default()
        };
        assert!(matches!(
            s_c_full_mc(&spec, &state, 0.0, &integ, &bad),
            Err(CentropyError::BadMcConfig { .. })
        ));
        let bad = McConfig {
            proposal_scale: 0.0,
            ..McConfig::default()
        };
        assert!(matches!(
            s_c_full_mc(&spec, &state, 0.0, &integ, &bad),
            Err(CentropyError::BadMcConfig { .. })
        ));
        let odd = HistogramGrid {
            bins: 401,
            ..HistogramGrid::default()
        };
        assert!(matches!(
            s_c_histogram(&spec, &state, 0.0, &integ, &odd, 1_024, 0),
            Err(CentropyError::BadHistogramConfig { .. })
        ));
        let cfg = McConfig::default();
        assert!(matches!(
            s_c_full_mc_series(&spec, &state, &[1.0, 0.5], &integ, &cfg),
            Err(CentropyError::BadTimes)
        ));
        assert!(matches!(
            s_c_full_mc_series(&spec, &state, &[-1.0], &integ, &cfg),
            Err(CentropyError::BadTimes)
        ));
    }

    #[test]
    fn backward_weights_recover_forward_density_late() {
        // Sanity anchor for the Liouville rewrite: at a late chaotic time
        // the three engines still bracket each other.
        let (spec, state) = chaotic_setup();
        let integ = IntegratorConfig::default();
        let t = 5.0;
        let cfg = McConfig {
            n_outer: 512,
            n_inner: 16,
            ..McConfig::default()
        };
        let mc = s_c_full_mc(&spec, &state, t, &integ, &cfg).unwrap();
        let hist = s_c_histogram(&spec, &state, t, &integ, &HistogramGrid::default(), 8_192, 5)
            .unwrap();
        let gap = (mc.value - hist.estimate.value).abs();
        let band =
            2.0 * (mc.std_error.powi(2) + hist.estimate.std_error.powi(2)).sqrt() + 0.02;
        assert!(gap <= band, "mc {} vs hist {}", mc.value, hist.estimate.value);
        assert!(mc.value > 0.5, "chaotic entropy should be well developed by t = 5");
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(6))]
        #[test]
        fn all_engines_vanish_at_time_zero_for_pure_states(
            q1 in -0.5f64..0.5,
            p1 in -0.5f64..0.5,
            q2 in -0.5f64..0.5,
            p2 in -0.5f64..0.5,
        ) {
            let spec = quartic(1.0);
            let state = symmetric_state(&spec, q1, p1, q2, p2);
            let integ = IntegratorConfig::default();
            let cfg = McConfig { n_outer: 256, n_inner: 8, ..McConfig::default() };
            let mc = s_c_full_mc(&spec, &state, 0.0, &integ, &cfg).unwrap();
            prop_assert!(mc.value.abs() < 4.0 * mc.std_error + 5e-3);
            prop_assert!(mc.value <= 1.0 + 3.0 * mc.std_error);

            let stab = s_c_stability(&spec, &state, 0.0, &integ, 2_000, 1).unwrap();
            prop_assert!(stab.estimate.value.abs() < 4.0 * stab.estimate.std_error + 5e-3);

            let sigma = state.sys.sigma_q;
            let grid = HistogramGrid {
                bins: 200,
                half_q: q1.abs() + 8.0 * sigma,
                half_p: p1.abs() + 8.0 * sigma,
            };
            let hist = s_c_histogram(&spec, &state, 0.0, &integ, &grid, 10_000, 2).unwrap();
            prop_assert!(hist.estimate.value.abs() < 0.05);
        }
    }
}
