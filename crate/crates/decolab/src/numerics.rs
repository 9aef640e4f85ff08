//! Small numerical utilities shared across engines: order-stable summation,
//! quadratic least squares, and seed/hash derivation helpers.

use thiserror::Error;

/// Errors from the fitting helpers.
#[derive(Debug, Error)]
pub enum FitError {
    #[error("quadratic fit needs at least {min} samples, got {got}")]
    TooFewSamples { min: usize, got: usize },
    #[error("quadratic fit design matrix is singular (degenerate time grid?)")]
    SingularDesign,
}

/// Sums `values` by pairwise (cascade) reduction.
///
/// The reduction tree depends only on the slice length, so results are
/// bit-reproducible for a given input order and carry an O(log n) error
/// bound instead of the O(n) bound of naive left-to-right accumulation.
pub fn pairwise_sum(values: &[f64]) -> f64 {
    const LEAF: usize = 32;
    if values.len() <= LEAF {
        return values.iter().sum();
    }
    let mid = values.len() / 2;
    pairwise_sum(&values[..mid]) + pairwise_sum(&values[mid..])
}

/// Mean and standard error of the mean, both via pairwise reduction.
///
/// Returns `(0.0, 0.0)` for an empty slice and `(x, 0.0)` for a singleton.
pub fn mean_and_standard_error(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    if n == 0 {
        return (0.0, 0.0);
    }
    let mean = pairwise_sum(values) / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let sq: Vec<f64> = values.iter().map(|v| (v - mean) * (v - mean)).collect();
    let var = pairwise_sum(&sq) / (n - 1) as f64;
    (mean, (var / n as f64).sqrt())
}

/// Result of a least-squares fit of `y ≈ c0 + c1 t + c2 t²`.
#[derive(Debug, Clone, Copy)]
pub struct QuadraticFit {
    pub constant: f64,
    pub linear: f64,
    pub quadratic: f64,
    /// Standard errors of the three coefficients, from the residual variance.
    pub se_constant: f64,
    pub se_linear: f64,
    pub se_quadratic: f64,
    /// Root-mean-square fit residual.
    pub residual_rms: f64,
}

/// Fits `y ≈ c0 + c1 t + c2 t²` by ordinary least squares.
///
/// Times are rescaled internally to their maximum magnitude so the normal
/// equations stay well conditioned for windows much shorter than 1.
pub fn fit_quadratic(t: &[f64], y: &[f64]) -> Result<QuadraticFit, FitError> {
    assert_eq!(t.len(), y.len(), "time and value slices must match");
    let n = t.len();
    if n < 3 {
        return Err(FitError::TooFewSamples { min: 3, got: n });
    }
    let scale = t.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(f64::MIN_POSITIVE);
    let ts: Vec<f64> = t.iter().map(|v| v / scale).collect();

    // Normal equations A c = b with A = XᵀX for the basis {1, t, t²}.
    let mut a = [[0.0f64; 3]; 3];
    let mut b = [0.0f64; 3];
    for (&ti, &yi) in ts.iter().zip(y) {
        let row = [1.0, ti, ti * ti];
        for i in 0..3 {
            b[i] += row[i] * yi;
            for j in 0..3 {
                a[i][j] += row[i] * row[j];
            }
        }
    }
    let inv = invert3(&a).ok_or(FitError::SingularDesign)?;
    let mut c = [0.0f64; 3];
    for i in 0..3 {
        for j in 0..3 {
            c[i] += inv[i][j] * b[j];
        }
    }

    let residuals: Vec<f64> = ts
        .iter()
        .zip(y)
        .map(|(&ti, &yi)| yi - (c[0] + c[1] * ti + c[2] * ti * ti))
        .collect();
    let ss_res = pairwise_sum(&residuals.iter().map(|r| r * r).collect::<Vec<_>>());
    let dof = (n as f64 - 3.0).max(1.0);
    let sigma2 = ss_res / dof;
    let se = [
        (sigma2 * inv[0][0]).sqrt(),
        (sigma2 * inv[1][1]).sqrt(),
        (sigma2 * inv[2][2]).sqrt(),
    ];

    Ok(QuadraticFit {
        constant: c[0],
        linear: c[1] / scale,
        quadratic: c[2] / (scale * scale),
        se_constant: se[0],
        se_linear: se[1] / scale,
        se_quadratic: se[2] / (scale * scale),
        residual_rms: (ss_res / n as f64).sqrt(),
    })
}

fn invert3(a: &[[f64; 3]; 3]) -> Option<[[f64; 3]; 3]> {
    let m = a;
    let c00 = m[1][1] * m[2][2] - m[1][2] * m[2][1];
    let c01 = m[1][2] * m[2][0] - m[1][0] * m[2][2];
    let c02 = m[1][0] * m[2][1] - m[1][1] * m[2][0];
    let det = m[0][0] * c00 + m[0][1] * c01 + m[0][2] * c02;
    if det == 0.0 || !det.is_finite() {
        return None;
    }
    let inv_det = 1.0 / det;
    Some([
        [
            c00 * inv_det,
            (m[0][2] * m[2][1] - m[0][1] * m[2][2]) * inv_det,
            (m[0][1] * m[1][2] - m[0][2] * m[1][1]) * inv_det,
        ],
        [
            c01 * inv_det,
            (m[0][0] * m[2][2] - m[0][2] * m[2][0]) * inv_det,
            (m[0][2] * m[1][0] - m[0][0] * m[1][2]) * inv_det,
        ],
        [
            c02 * inv_det,
            (m[0][1] * m[2][0] - m[0][0] * m[2][1]) * inv_det,
            (m[0][0] * m[1][1] - m[0][1] * m[1][0]) * inv_det,
        ],
    ])
}

/// FNV-1a 64-bit hash; used for stable, platform-independent run metadata.
pub fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// SplitMix64 step; used to derive independent sub-seeds from a master seed.
pub fn splitmix64(state: u64) -> u64 {
    let mut z = state.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}
