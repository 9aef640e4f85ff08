//! Classical propagation: fixed-step fourth-order symplectic integration of
//! phase-space trajectories jointly with their 4x4 tangent (stability)
//! matrices, plus the exactly time-reversed backward map.
//!
//! Each elementary drift/kick is a shear whose exact Jacobian multiplies the
//! tangent matrix, so the propagated matrix is symplectic to rounding and is
//! the exact derivative of the discrete flow.

use crate::model::{PhasePoint, SystemSpec};
use thiserror::Error;

/// Coordinate magnitude beyond which a trajectory counts as escaped.
pub const BLOW_UP_LIMIT: f64 = 1e6;

/// Fourth-order composition coefficients over the position-Verlet kernel.
const CBRT2: f64 = 1.259_921_049_894_873_2;
const W1: f64 = 1.0 / (2.0 - CBRT2);
const W0: f64 = 1.0 - 2.0 * W1;

/// Errors raised during propagation.
#[derive(Debug, Error)]
pub enum PropagationError {
    #[error(
        "trajectory blew up at t = {t:.6}: |{coord}| = {value:.3e} exceeds {limit:.1e} \
         (started from q1={q1:.4}, p1={p1:.4}, q2={q2:.4}, p2={p2:.4})"
    )]
    BlowUp {
        t: f64,
        coord: &'static str,
        value: f64,
        limit: f64,
        q1: f64,
        p1: f64,
        q2: f64,
        p2: f64,
    },
}

/// Fixed-step integrator parameters.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct IntegratorConfig {
    /// Step size; trajectories snap requested times to whole steps.
    pub dt: f64,
}

impl Default for IntegratorConfig {
    fn default() -> Self {
        Self { dt: 1e-3 }
    }
}

impl IntegratorConfig {
    /// Number of whole steps closest to duration `t`.
    pub fn steps_for(&self, t: f64) -> usize {
        (t / self.dt).round().max(0.0) as usize
    }
}

/// Potential-energy surface seen by the integrator.
///
/// The production surface is [`SystemSpec`]; tests substitute analytic wells
/// (harmonic, inverted) with known flows.
pub trait PotentialSurface {
    fn potential(&self, q1: f64, q2: f64) -> f64;
    /// `(-dV/dq1, -dV/dq2)`.
    fn force(&self, q1: f64, q2: f64) -> (f64, f64);
    /// `(d²V/dq1², d²V/dq1 dq2, d²V/dq2²)`.
    fn hessian(&self, q1: f64, q2: f64) -> (f64, f64, f64);

    fn hamiltonian(&self, z: &PhasePoint) -> f64 {
        0.5 * (z.p1 * z.p1 + z.p2 * z.p2) + self.potential(z.q1, z.q2)
    }
}

impl PotentialSurface for SystemSpec {
    fn potential(&self, q1: f64, q2: f64) -> f64 {
        SystemSpec::potential(self, q1, q2)
    }
    fn force(&self, q1: f64, q2: f64) -> (f64, f64) {
        SystemSpec::force(self, q1, q2)
    }
    fn hessian(&self, q1: f64, q2: f64) -> (f64, f64, f64) {
        self.potential_hessian(q1, q2)
    }
}

/// Tangent matrix in `(q1, p1, q2, p2)` ordering.
///
/// Propagated forward it holds `M[i][j] = dz_i(t) / dz_j(0)`; the backward
/// variant returned by [`propagate_backward`] holds the derivative of the
/// initial point with respect to the final one.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StabilityMatrix(pub [[f64; 4]; 4]);

impl StabilityMatrix {
    pub fn identity() -> Self {
        let mut m = [[0.0; 4]; 4];
        for (i, row) in m.iter_mut().enumerate() {
            row[i] = 1.0;
        }
        Self(m)
    }

    /// Column `j` as an array.
    pub fn col(&self, j: usize) -> [f64; 4] {
        [self.0[0][j], self.0[1][j], self.0[2][j], self.0[3][j]]
    }

    pub fn matmul(&self, rhs: &Self) -> Self {
        let mut out = [[0.0; 4]; 4];
        for i in 0..4 {
            for k in 0..4 {
                let a = self.0[i][k];
                if a != 0.0 {
                    for j in 0..4 {
                        out[i][j] += a * rhs.0[k][j];
                    }
                }
            }
        }
        Self(out)
    }

    /// Inverse via the symplectic identity `M⁻¹ = -J Mᵀ J`.
    pub fn symplectic_inverse(&self) -> Self {
        // J has 2x2 blocks [[0, 1], [-1, 0]] on the diagonal; for
        // M⁻¹ = -J Mᵀ J the entries regroup pairwise with sign flips.
        let m = &self.0;
        let mut out = [[0.0; 4]; 4];
        // Index pairs (position, momentum) per degree of freedom.
        const PAIR: [(usize, usize); 2] = [(0, 1), (2, 3)];
        for &(qi, pi) in &PAIR {
            for &(qj, pj) in &PAIR {
                out[qi][qj] = m[pj][pi];
                out[qi][pj] = -m[qj][pi];
                out[pi][qj] = -m[pj][qi];
                out[pi][pj] = m[qj][qi];
            }
        }
        Self(out)
    }

    /// Max-norm departure from symplecticity, `max |MᵀJM - J|`.
    pub fn symplectic_defect(&self) -> f64 {
        let j = [
            [0.0, 1.0, 0.0, 0.0],
            [-1.0, 0.0, 0.0, 0.0],
            [0.0, 0.0, 0.0, 1.0],
            [0.0, 0.0, -1.0, 0.0],
        ];
        let mut defect = 0.0f64;
        for a in 0..4 {
            for b in 0..4 {
                // (MᵀJM)[a][b] = sum_{i,k} M[i][a] J[i][k] M[k][b]
                let mut acc = 0.0;
                for i in 0..4 {
                    for k in 0..4 {
                        if j[i][k] != 0.0 {
                            acc += self.0[i][a] * j[i][k] * self.0[k][b];
                        }
                    }
                }
                defect = defect.max((acc - j[a][b]).abs());
            }
        }
        defect
    }

    /// Largest absolute entry; a cheap growth proxy for Lyapunov estimates.
    pub fn max_abs(&self) -> f64 {
        self.0
            .iter()
            .flatten()
            .fold(0.0f64, |m, &v| m.max(v.abs()))
    }
}

#[inline]
fn drift(z: &mut PhasePoint, m: &mut StabilityMatrix, h: f64) {
    z.q1 += h * z.p1;
    z.q2 += h * z.p2;
    for j in 0..4 {
        m.0[0][j] += h * m.0[1][j];
        m.0[2][j] += h * m.0[3][j];
    }
}

#[inline]
fn kick<P: PotentialSurface + ?Sized>(pot: &P, z: &mut PhasePoint, m: &mut StabilityMatrix, h: f64) {
    let (f1, f2) = pot.force(z.q1, z.q2);
    let (h11, h12, h22) = pot.hessian(z.q1, z.q2);
    z.p1 += h * f1;
    z.p2 += h * f2;
    for j in 0..4 {
        m.0[1][j] -= h * (h11 * m.0[0][j] + h12 * m.0[2][j]);
        m.0[3][j] -= h * (h12 * m.0[0][j] + h22 * m.0[2][j]);
    }
}

/// One fourth-order step of size `dt` for the point and its tangent matrix.
///
/// Composition of three position-Verlet (drift-kick-drift) stages with
/// weights `(W1, W0, W1)`; the palindromic layout makes the discrete map
/// exactly time-reversible.
pub fn step<P: PotentialSurface + ?Sized>(
    pot: &P,
    z: &mut PhasePoint,
    m: &mut StabilityMatrix,
    dt: f64,
) {
    for w in [W1, W0, W1] {
        let h = w * dt;
        drift(z, m, 0.5 * h);
        kick(pot, z, m, h);
        drift(z, m, 0.5 * h);
    }
}

fn check_blow_up(z: &PhasePoint, start: &PhasePoint, t: f64) -> Result<(), PropagationError> {
    let coords = [
        ("q1", z.q1),
        ("p1", z.p1),
        ("q2", z.q2),
        ("p2", z.p2),
    ];
    for (name, v) in coords {
        if !(v.abs() <= BLOW_UP_LIMIT) {
            return Err(PropagationError::BlowUp {
                t,
                coord: name,
                value: v,
                limit: BLOW_UP_LIMIT,
                q1: start.q1,
                p1: start.p1,
                q2: start.q2,
                p2: start.p2,
            });
        }
    }
    Ok(())
}

/// Advances `(z, m)` in place through ascending step-count `checkpoints`,
/// invoking `visit` at each one (step count, state, tangent).
///
/// A checkpoint of 0 reports the initial condition. Errors out if any
/// coordinate leaves the `BLOW_UP_LIMIT` box.
pub fn propagate_visiting<P, F>(
    pot: &P,
    z: &mut PhasePoint,
    m: &mut StabilityMatrix,
    dt: f64,
    checkpoints: &[usize],
    mut visit: F,
) -> Result<(), PropagationError>
where
    P: PotentialSurface + ?Sized,
    F: FnMut(usize, &PhasePoint, &StabilityMatrix),
{
    debug_assert!(checkpoints.windows(2).all(|w| w[0] <= w[1]));
    let start = *z;
    let mut done = 0usize;
    for &target in checkpoints {
        while done < target {
            step(pot, z, m, dt);
            done += 1;
            check_blow_up(z, &start, done as f64 * dt)?;
        }
        visit(target, z, m);
    }
    Ok(())
}

/// Point-only counterpart of [`propagate_visiting`]: advances `z` through
/// ascending step-count `checkpoints` without carrying the tangent matrix.
pub fn propagate_point_visiting<P, F>(
    pot: &P,
    z: &mut PhasePoint,
    dt: f64,
    checkpoints: &[usize],
    mut visit: F,
) -> Result<(), PropagationError>
where
    P: PotentialSurface + ?Sized,
    F: FnMut(usize, &PhasePoint),
{
    debug_assert!(checkpoints.windows(2).all(|w| w[0] <= w[1]));
    let start = *z;
    let mut done = 0usize;
    for &target in checkpoints {
        while done < target {
            step_point(pot, z, dt);
            done += 1;
            check_blow_up(z, &start, done as f64 * dt)?;
        }
        visit(target, z);
    }
    Ok(())
}

/// Propagates `z0` forward for `n_steps`; returns the endpoint and the
/// forward tangent matrix `dz(t)/dz(0)`.
pub fn propagate<P: PotentialSurface + ?Sized>(
    pot: &P,
    z0: &PhasePoint,
    n_steps: usize,
    dt: f64,
) -> Result<(PhasePoint, StabilityMatrix), PropagationError> {
    let mut z = *z0;
    let mut m = StabilityMatrix::identity();
    propagate_visiting(pot, &mut z, &mut m, dt, &[n_steps], |_, _, _| {})?;
    Ok((z, m))
}

/// One fourth-order step of the point alone (no tangent matrix); used by
/// inner Monte-Carlo loops where the Jacobian is not needed.
#[inline]
pub fn step_point<P: PotentialSurface + ?Sized>(pot: &P, z: &mut PhasePoint, dt: f64) {
    for w in [W1, W0, W1] {
        let h = w * dt;
        let hh = 0.5 * h;
        z.q1 += hh * z.p1;
        z.q2 += hh * z.p2;
        let (f1, f2) = pot.force(z.q1, z.q2);
        z.p1 += h * f1;
        z.p2 += h * f2;
        z.q1 += hh * z.p1;
        z.q2 += hh * z.p2;
    }
}

/// Point-only forward propagation for `n_steps`.
pub fn propagate_point<P: PotentialSurface + ?Sized>(
    pot: &P,
    z0: &PhasePoint,
    n_steps: usize,
    dt: f64,
) -> Result<PhasePoint, PropagationError> {
    let mut z = *z0;
    for k in 0..n_steps {
        step_point(pot, &mut z, dt);
        check_blow_up(&z, z0, (k + 1) as f64 * dt)?;
    }
    Ok(z)
}

/// Point-only backward propagation: momentum-reversed forward integration.
pub fn propagate_point_backward<P: PotentialSurface + ?Sized>(
    pot: &P,
    z: &PhasePoint,
    n_steps: usize,
    dt: f64,
) -> Result<PhasePoint, PropagationError> {
    let flipped = PhasePoint::new(z.q1, -z.p1, z.q2, -z.p2);
    let end = propagate_point(pot, &flipped, n_steps, dt)?;
    Ok(PhasePoint::new(end.q1, -end.p1, end.q2, -end.p2))
}

/// Runs the flow backward for `n_steps` from endpoint `z`.
///
/// Returns the pre-image point and the backward tangent matrix (derivative
/// of the pre-image with respect to the endpoint). Implemented as the
/// momentum-reversed forward integration, which for this palindromic
/// integrator inverts the discrete forward map exactly (to rounding).
pub fn propagate_backward<P: PotentialSurface + ?Sized>(
    pot: &P,
    z: &PhasePoint,
    n_steps: usize,
    dt: f64,
) -> Result<(PhasePoint, StabilityMatrix), PropagationError> {
    let flipped = PhasePoint::new(z.q1, -z.p1, z.q2, -z.p2);
    let (end, m) = propagate(pot, &flipped, n_steps, dt)?;
    let back = PhasePoint::new(end.q1, -end.p1, end.q2, -end.p2);
    // D(R ∘ Φ_t ∘ R) = R M R with R = diag(1, -1, 1, -1).
    let mut rm = m.0;
    for i in 0..4 {
        for j in 0..4 {
            if (i % 2 == 1) != (j % 2 == 1) {
                rm[i][j] = -rm[i][j];
            }
        }
    }
    Ok((back, StabilityMatrix(rm)))
}
