//! Kernels, canonical systems, the moving goal, forcing terms and the
//! critically damped transformation system.
//!
//! Time scaling follows one convention throughout: `tau` dilates time, so a
//! primitive of duration `T` plays out over `tau * T` seconds. The
//! transformation system is integrated in the form
//!
//! ```text
//! tau * dv/dt = alpha_m * (beta_m * (r - d) - v) + f
//! tau * dd/dt = v
//! ```
//!
//! so `v` is the velocity the primitive would have at `tau = 1`, and the
//! forcing enters without any `(g - b)` scaling.

use nalgebra::DMatrix;

use crate::error::{MpError, Result};
use crate::types::{DynamicsParams, KernelBank, Vec2};

/// Smallest kernel-sum denominator used in normalized forcing terms.
pub const DENOMINATOR_FLOOR: f64 = 1e-300;

/// `rows` identical rows of `n` equally spaced kernels on [0, 1]. Each kernel
/// has activation 0.5 at its neighbour's center: `p = ln 2 / spacing^2`.
pub fn make_kernel_bank(n: usize, rows: usize) -> Result<KernelBank> {
    if n < 2 {
        return Err(MpError::invalid(format!(
            "need at least 2 kernels per row, got {n}"
        )));
    }
    if rows < 1 {
        return Err(MpError::invalid("need at least one kernel row"));
    }
    let spacing = 1.0 / (n - 1) as f64;
    let centers_row: Vec<f64> = (0..n).map(|i| i as f64 / (n - 1) as f64).collect();
    // Uniform spacing, so the last kernel's width equals its neighbour's.
    let widths_row = vec![std::f64::consts::LN_2 / (spacing * spacing); n];
    Ok(KernelBank {
        rows,
        cols: n,
        centers: centers_row.repeat(rows),
        widths: widths_row.repeat(rows),
    })
}

#[inline]
pub fn gaussian(width: f64, center: f64, x: f64) -> f64 {
    let d = x - center;
    (-width * d * d).exp()
}

/// Activations of every kernel in `row` at normalized time `t_norm`.
pub fn kernel_activations(bank: &KernelBank, row: usize, t_norm: f64) -> Vec<f64> {
    bank.row_centers(row)
        .iter()
        .zip(bank.row_widths(row))
        .map(|(&c, &w)| gaussian(w, c, t_norm))
        .collect()
}

/// Explicit Euler step of the exponential phase `dz/dt = -tau * alpha_z * z`.
pub fn canonical_step_original(z: f64, alpha_z: f64, tau: f64, dt: f64) -> f64 {
    z - tau * alpha_z * z * dt
}

/// `e^a / (1 + e^a)^2` without overflow.
#[inline]
pub fn logistic_slope(a: f64) -> f64 {
    let e = (-a.abs()).exp();
    e / ((1.0 + e) * (1.0 + e))
}

/// Rate of the logistic-derivative phase:
/// `tau * dz/dt = -alpha_z * e^a / (1 + e^a)^2` with
/// `a = alpha_z * (tau*T - t) / (tau * sample_dt)`, so the phase dilates with
/// the rest of the system.
pub fn modified_phase_rate(alpha_z: f64, tau: f64, duration: f64, t: f64, sample_dt: f64) -> f64 {
    let a = alpha_z * (tau * duration - t) / (tau * sample_dt);
    -alpha_z * logistic_slope(a) / tau
}

/// One Euler step of the logistic-derivative phase starting from `z` at time
/// `t`. `sample_dt` is the primitive's sampling interval `T / 100` inside the
/// logistic; `dt` is the integration step. The phase is clamped at zero.
pub fn canonical_step_modified(
    z: f64,
    alpha_z: f64,
    tau: f64,
    duration: f64,
    t: f64,
    sample_dt: f64,
    dt: f64,
) -> f64 {
    (z + dt * modified_phase_rate(alpha_z, tau, duration, t, sample_dt)).max(0.0)
}

/// Goal velocity: `(g - b) / (tau * T)` while `t < tau * T`, zero afterwards.
pub fn goal_rate(start: Vec2, goal: Vec2, duration: f64, tau: f64, t: f64) -> Vec2 {
    if t < tau * duration {
        (goal - start) / (tau * duration)
    } else {
        Vec2::zeros()
    }
}

/// Advances the moving goal over `[t, t + dt]`. The piecewise-constant rate is
/// integrated exactly, so after `T / dt` steps the goal sits at `g`.
pub fn goal_step(
    r: Vec2,
    start: Vec2,
    goal: Vec2,
    duration: f64,
    tau: f64,
    t: f64,
    dt: f64,
) -> Vec2 {
    let end = tau * duration;
    let active = (t + dt).min(end) - t.max(0.0);
    if active <= 0.0 {
        return r;
    }
    r + (goal - start) * (active / end)
}

/// Forcing term of one axis of the modified primitive:
/// `alpha_w * sum_j [ sum_i w_ji psi_ji s_j / sum_i psi_ji ] * z`.
pub fn forcing_modified(
    weights: &DMatrix<f64>,
    s: &[f64],
    bank: &KernelBank,
    t_norm: f64,
    z: f64,
    alpha_w: f64,
) -> f64 {
    let mut total = 0.0;
    for (j, &sj) in s.iter().enumerate() {
        let mut num = 0.0;
        let mut den = 0.0;
        for (i, (&c, &w)) in bank
            .row_centers(j)
            .iter()
            .zip(bank.row_widths(j))
            .enumerate()
        {
            let psi = gaussian(w, c, t_norm);
            num += weights[(j, i)] * psi;
            den += psi;
        }
        total += sj * num / den.max(DENOMINATOR_FLOOR);
    }
    alpha_w * total * z
}

/// Forcing term of the exponential-phase primitive, kernels placed over the
/// phase variable (row 0 of `bank_z`).
pub fn forcing_original(weights: &[f64], bank_z: &KernelBank, z: f64) -> f64 {
    let mut num = 0.0;
    let mut den = 0.0;
    for ((&c, &w), &wt) in bank_z
        .row_centers(0)
        .iter()
        .zip(bank_z.row_widths(0))
        .zip(weights)
    {
        let psi = gaussian(w, c, z);
        num += wt * psi;
        den += psi;
    }
    num * z / den.max(DENOMINATOR_FLOOR)
}

/// Integrator state of the transformation system.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IntegratorState {
    pub position: Vec2,
    /// Scaled velocity `v = tau * dd/dt`.
    pub velocity: Vec2,
    /// Moving goal.
    pub goal: Vec2,
    pub phase: f64,
    pub time: f64,
}

impl IntegratorState {
    pub fn at_rest(position: Vec2) -> Self {
        IntegratorState {
            position,
            velocity: Vec2::zeros(),
            goal: position,
            phase: 1.0,
            time: 0.0,
        }
    }

    /// Velocity in seconds of wall time.
    pub fn physical_velocity(&self, tau: f64) -> Vec2 {
        self.velocity / tau
    }
}

/// Acceleration of the scaled velocity, `dv/dt`.
pub fn transform_rate(
    state: &IntegratorState,
    force: Vec2,
    params: &DynamicsParams,
    tau: f64,
) -> Vec2 {
    (params.alpha_m * (params.beta_m * (state.goal - state.position) - state.velocity) + force)
        / tau
}

/// Semi-implicit Euler step of position and velocity against the state's
/// current goal. Goal and phase are left for the caller to advance.
pub fn transform_step(
    state: &IntegratorState,
    force: Vec2,
    params: &DynamicsParams,
    tau: f64,
    dt: f64,
) -> IntegratorState {
    let velocity = state.velocity + transform_rate(state, force, params, tau) * dt;
    let position = state.position + velocity * (dt / tau);
    IntegratorState {
        position,
        velocity,
        time: state.time + dt,
        ..*state
    }
}
