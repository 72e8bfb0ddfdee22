//! Regenerating a learned primitive for a new start, goal, duration, shape
//! and time scale.

use log::warn;

use crate::dynamics::{
    canonical_step_modified, forcing_modified, goal_step, transform_rate, transform_step,
    IntegratorState,
};
use crate::error::{MpError, Result};
use crate::types::{AdjustmentSet, DynamicsParams, LearnedMp, Trajectory, Vec2};

/// Largest `alpha_m * dt / tau` taken in one semi-implicit Euler step. The
/// scheme diverges for critically damped systems above roughly 1.66, so
/// longer output intervals are split into equal substeps.
pub const MAX_STABLE_STEP: f64 = 1.5;

/// Per-step inputs of the transformation system.
pub(crate) trait Schedule {
    fn forcing(&self, t: f64, z: f64) -> Vec2;
    fn goal_step(&self, r: Vec2, t: f64, dt: f64) -> Vec2;
    fn phase_step(&self, z: f64, t: f64, dt: f64) -> f64;
}

/// Integrator states and physical accelerations at each output time.
pub(crate) struct Trace {
    pub states: Vec<IntegratorState>,
    pub accelerations: Vec<Vec2>,
}

impl Trace {
    pub fn into_trajectory(self, tau: f64) -> Result<Trajectory> {
        let times = self.states.iter().map(|s| s.time).collect();
        let points = self.states.iter().map(|s| s.position).collect();
        let vel = self
            .states
            .iter()
            .map(|s| s.physical_velocity(tau))
            .collect();
        Trajectory::new(times, points)?
            .with_velocities(vel)?
            .with_accelerations(self.accelerations)
    }
}

/// Integrates from rest at `start` and records the state at every entry of
/// `times` (the first entry is the start time).
pub(crate) fn integrate<S: Schedule>(
    schedule: &S,
    params: &DynamicsParams,
    tau: f64,
    start: Vec2,
    times: &[f64],
) -> Trace {
    let mut state = IntegratorState::at_rest(start);
    state.time = times[0];
    let mut states = Vec::with_capacity(times.len());
    let mut accelerations = Vec::with_capacity(times.len());
    let record =
        |state: &IntegratorState, states: &mut Vec<IntegratorState>, acc: &mut Vec<Vec2>| {
            let f = schedule.forcing(state.time, state.phase);
            acc.push(transform_rate(state, f, params, tau) / tau);
            states.push(*state);
        };
    record(&state, &mut states, &mut accelerations);
    for w in times.windows(2) {
        let span = w[1] - w[0];
        let substeps = ((params.alpha_m * span / tau) / MAX_STABLE_STEP)
            .ceil()
            .max(1.0) as usize;
        let dt = span / substeps as f64;
        for k in 0..substeps {
            let t = w[0] + k as f64 * dt;
            state.time = t;
            let f = schedule.forcing(t, state.phase);
            let mut next = transform_step(&state, f, params, tau, dt);
            next.goal = schedule.goal_step(state.goal, t, dt);
            next.phase = schedule.phase_step(state.phase, t, dt);
            state = next;
        }
        state.time = w[1];
        record(&state, &mut states, &mut accelerations);
    }
    Trace {
        states,
        accelerations,
    }
}

struct SingleSchedule<'a> {
    mp: &'a LearnedMp,
    adj: &'a AdjustmentSet,
    params: &'a DynamicsParams,
}

impl Schedule for SingleSchedule<'_> {
    fn forcing(&self, t: f64, z: f64) -> Vec2 {
        let t_norm = t / (self.adj.tau * self.adj.duration);
        let mp = self.mp;
        Vec2::new(
            forcing_modified(
                &mp.x.weights,
                &self.adj.s_x,
                &mp.bank,
                t_norm,
                z,
                mp.forcing_scale,
            ),
            forcing_modified(
                &mp.y.weights,
                &self.adj.s_y,
                &mp.bank,
                t_norm,
                z,
                mp.forcing_scale,
            ),
        )
    }

    fn goal_step(&self, r: Vec2, t: f64, dt: f64) -> Vec2 {
        goal_step(
            r,
            self.adj.start,
            self.adj.goal,
            self.adj.duration,
            self.adj.tau,
            t,
            dt,
        )
    }

    fn phase_step(&self, z: f64, t: f64, dt: f64) -> f64 {
        let p = self.params;
        canonical_step_modified(
            z,
            p.alpha_z,
            self.adj.tau,
            self.adj.duration,
            t,
            p.sample_interval(self.adj.duration),
            dt,
        )
    }
}

fn warn_outside_cloud(mp: &LearnedMp, adj: &AdjustmentSet) {
    for (axis, shape, s) in [("x", &mp.x, &adj.s_x), ("y", &mp.y, &adj.s_y)] {
        let mean = shape.mean_s();
        let std = shape.std_s();
        for (j, v) in s.iter().enumerate() {
            if (v - mean[j]).abs() > 3.0 * std[j].max(1e-12) {
                warn!(
                    "`{}` coefficient s_{axis}[{j}] = {v} lies outside three standard deviations of the training demonstrations",
                    mp.id
                );
            }
        }
    }
}

/// Rollout with the default `params.samples` steps over `tau * T`.
pub fn regenerate(
    mp: &LearnedMp,
    adj: &AdjustmentSet,
    params: &DynamicsParams,
) -> Result<Trajectory> {
    regenerate_with_steps(mp, adj, params, params.samples)
}

/// Rollout over `tau * T` recorded at `steps + 1` equally spaced samples.
pub fn regenerate_with_steps(
    mp: &LearnedMp,
    adj: &AdjustmentSet,
    params: &DynamicsParams,
    steps: usize,
) -> Result<Trajectory> {
    params.validate()?;
    adj.check_against(mp)?;
    if steps < 1 {
        return Err(MpError::invalid("need at least one integration step"));
    }
    warn_outside_cloud(mp, adj);
    let horizon = adj.tau * adj.duration;
    let times: Vec<f64> = (0..=steps)
        .map(|n| horizon * n as f64 / steps as f64)
        .collect();
    let schedule = SingleSchedule { mp, adj, params };
    integrate(&schedule, params, adj.tau, adj.start, &times).into_trajectory(adj.tau)
}

/// Which coordinate of a fine-tuning vector a sweep changes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Axis {
    X,
    Y,
}

/// One varied parameter and its values; everything else comes from the base
/// adjustment.
#[derive(Debug, Clone, PartialEq)]
pub enum Variation {
    Goal(Vec<Vec2>),
    Duration(Vec<f64>),
    Coefficient {
        axis: Axis,
        index: usize,
        values: Vec<f64>,
    },
}

impl Variation {
    pub fn len(&self) -> usize {
        match self {
            Variation::Goal(v) => v.len(),
            Variation::Duration(v) => v.len(),
            Variation::Coefficient { values, .. } => values.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// The adjustment for the `k`-th value.
    pub fn apply(&self, base: &AdjustmentSet, k: usize) -> AdjustmentSet {
        let mut adj = base.clone();
        match self {
            Variation::Goal(v) => adj.goal = v[k],
            Variation::Duration(v) => adj.duration = v[k],
            Variation::Coefficient {
                axis,
                index,
                values,
            } => {
                let s = match axis {
                    Axis::X => &mut adj.s_x,
                    Axis::Y => &mut adj.s_y,
                };
                if let Some(slot) = s.get_mut(*index) {
                    *slot = values[k];
                }
            }
        }
        adj
    }
}

/// One rollout per value, in order.
pub fn sweep(
    mp: &LearnedMp,
    base: &AdjustmentSet,
    variation: &Variation,
    params: &DynamicsParams,
) -> Result<Vec<Trajectory>> {
    if variation.is_empty() {
        return Err(MpError::invalid("sweep needs at least one value"));
    }
    if let Variation::Coefficient { index, .. } = variation {
        if *index >= mp.rank() {
            return Err(MpError::invalid(format!(
                "coefficient index {index} out of range for rank {}",
                mp.rank()
            )));
        }
    }
    (0..variation.len())
        .map(|k| regenerate(mp, &variation.apply(base, k), params))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::make_kernel_bank;
    use crate::types::AxisShape;
    use nalgebra::DMatrix;

    fn toy_mp() -> LearnedMp {
        let bank = make_kernel_bank(10, 2).unwrap();
        let wx = DMatrix::from_fn(2, 10, |r, c| ((r + 1) as f64 * c as f64 * 0.4).sin() * 20.0);
        let wy = DMatrix::from_fn(2, 10, |r, c| {
            ((r as f64 + 0.5) * c as f64 * 0.7).cos() * 15.0
        });
        let shape = |w: DMatrix<f64>| AxisShape {
            weights: w,
            singular_values: vec![2.0, 1.0],
            demo_s: DMatrix::from_row_slice(3, 2, &[0.5, 0.1, 0.6, -0.2, 0.55, 0.0]),
        };
        LearnedMp {
            id: "toy".into(),
            bank,
            mean_duration: 4.0,
            forcing_scale: 1.0,
            x: shape(wx),
            y: shape(wy),
            demo_goals: vec![Vec2::new(20.0, 3.0); 3],
            demo_durations: vec![4.0; 3],
        }
    }

    #[test]
    fn sample_count_and_anchoring() {
        let mp = toy_mp();
        let params = DynamicsParams::default();
        let mut adj = AdjustmentSet::defaults_for(&mp);
        adj.start = Vec2::new(1.0, -2.0);
        let traj = regenerate(&mp, &adj, &params).unwrap();
        assert_eq!(traj.len(), 101);
        assert_eq!(traj.first(), adj.start);
        assert_eq!(traj.velocities().unwrap()[0], Vec2::zeros());
        assert!((traj.times()[100] - adj.duration).abs() < 1e-12);
    }

    #[test]
    fn rejects_bad_adjustments() {
        let mp = toy_mp();
        let params = DynamicsParams::default();
        let mut adj = AdjustmentSet::defaults_for(&mp);
        adj.s_x.push(1.0);
        assert!(regenerate(&mp, &adj, &params).is_err());
        let mut adj = AdjustmentSet::defaults_for(&mp);
        adj.duration = 0.0;
        assert!(regenerate(&mp, &adj, &params).is_err());
        let adj = AdjustmentSet::defaults_for(&mp);
        assert!(sweep(&mp, &adj, &Variation::Duration(vec![]), &params).is_err());
        let v = Variation::Coefficient {
            axis: Axis::X,
            index: 5,
            values: vec![1.0],
        };
        assert!(sweep(&mp, &adj, &v, &params).is_err());
    }

    #[test]
    fn long_durations_stay_stable() {
        let mp = toy_mp();
        let params = DynamicsParams::default();
        let mut adj = AdjustmentSet::defaults_for(&mp);
        adj.s_x = vec![0.0; 2];
        adj.s_y = vec![0.0; 2];
        adj.duration = 60.0;
        adj.goal = Vec2::new(100.0, 0.0);
        let traj = regenerate(&mp, &adj, &params).unwrap();
        assert!(traj.points().iter().all(|p| p.norm() < 101.0));
        assert!((traj.last() - adj.goal).norm() < 1.0);
    }
}
