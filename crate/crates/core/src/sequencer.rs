//! Joining several primitives into one sequence.
//!
//! The proposed method runs a single integration over the total duration
//! `T'`. Every segment's kernels are re-centered on its share of `[0, 1]`
//! (normalized by `T'`) and their widths rescaled by `T' / T_k`, so near a
//! switch the normalized forcing blends the outgoing and incoming shapes.
//! Each segment's forcing is rotated by its switch angle, the course angle
//! of the realized velocity at the end of the previous segment. The moving
//! goal follows the chain of targets and the phase runs once over `T'`.
//!
//! The baseline regenerates each segment on its own and concatenates the
//! pieces, so the velocity restarts from zero at every switch.

use log::{debug, warn};
use nalgebra::{DMatrix, Matrix2};

use crate::dynamics::{canonical_step_modified, gaussian, DENOMINATOR_FLOOR};
use crate::error::{MpError, Result};
use crate::evalbench::{second_difference_accelerations, target_misses};
use crate::rollout::{integrate, regenerate, Schedule};
use crate::types::{
    positive_finite, rotation, AdjustmentSet, DynamicsParams, InitialCondition, KernelBank,
    MpLibrary, Trajectory, Vec2,
};

/// Largest allowed gap between a segment's stated start and the previous
/// segment's goal in strict mode.
pub const STRICT_CHAIN_TOLERANCE: f64 = 0.01;

const MAX_ANGLE_PASSES: usize = 50;
const ANGLE_TOLERANCE: f64 = 1e-12;

/// One segment of a planned sequence, in the global frame.
#[derive(Debug, Clone, PartialEq)]
pub struct SegmentPlan {
    pub id: String,
    pub start: Vec2,
    pub goal: Vec2,
    pub duration: f64,
    /// Start time of the segment at `tau = 1`.
    pub offset: f64,
    pub s_x: Vec<f64>,
    pub s_y: Vec<f64>,
    pub weights_x: DMatrix<f64>,
    pub weights_y: DMatrix<f64>,
    pub forcing_scale: f64,
    /// First row of this segment in the sequence kernel bank.
    pub first_row: usize,
}

impl SegmentPlan {
    fn effective_weights(&self, weights: &DMatrix<f64>, s: &[f64]) -> Vec<f64> {
        (0..weights.ncols())
            .map(|i| {
                self.forcing_scale
                    * s.iter()
                        .enumerate()
                        .map(|(j, sj)| sj * weights[(j, i)])
                        .sum::<f64>()
            })
            .collect()
    }
}

/// Everything needed to run a sequence.
#[derive(Debug, Clone, PartialEq)]
pub struct SequencePlan {
    pub segments: Vec<SegmentPlan>,
    pub total_duration: f64,
    /// `K * J` rows, segment `k` owning rows `first_row .. first_row + J`.
    pub bank: KernelBank,
    /// Rotation applied to each segment's forcing; the first is always zero.
    pub switch_angles: Vec<f64>,
}

impl SequencePlan {
    pub fn len(&self) -> usize {
        self.segments.len()
    }

    pub fn is_empty(&self) -> bool {
        self.segments.is_empty()
    }

    pub fn segment_offsets(&self) -> Vec<f64> {
        self.segments.iter().map(|s| s.offset).collect()
    }

    /// Index of the segment owning time `t` (at `tau = 1`). Windows are
    /// half-open so a boundary belongs to the later segment; times past the
    /// end have no owner.
    pub fn active_segment(&self, t: f64) -> Option<usize> {
        if t < 0.0 {
            return None;
        }
        self.segments
            .iter()
            .position(|s| t >= s.offset && t < s.offset + s.duration)
    }
}

/// Fine-tuning coefficients for one segment, replacing the type's mean.
#[derive(Debug, Clone, PartialEq)]
pub struct ShapeOverride {
    pub s_x: Vec<f64>,
    pub s_y: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SequenceOptions {
    pub tau: f64,
    /// Reject a segment whose start is more than 1 cm from the previous goal
    /// instead of chaining from that goal.
    pub strict: bool,
    /// Per-segment overrides; missing entries use the type's mean coefficients.
    pub overrides: Vec<Option<ShapeOverride>>,
}

impl Default for SequenceOptions {
    fn default() -> Self {
        SequenceOptions {
            tau: 1.0,
            strict: false,
            overrides: Vec::new(),
        }
    }
}

/// Builds the sequence kernel bank, chains the goals and collects each
/// segment's weights and coefficients.
pub fn plan_sequence(
    lib: &MpLibrary,
    conditions: &[InitialCondition],
    options: &SequenceOptions,
) -> Result<SequencePlan> {
    if conditions.is_empty() {
        return Err(MpError::invalid(
            "a sequence needs at least one initial condition",
        ));
    }
    if !positive_finite(options.tau) {
        return Err(MpError::invalid(format!(
            "tau must be positive, got {}",
            options.tau
        )));
    }
    if options.overrides.len() > conditions.len() {
        return Err(MpError::invalid(format!(
            "{} shape overrides for {} segments",
            options.overrides.len(),
            conditions.len()
        )));
    }
    for (k, c) in conditions.iter().enumerate() {
        if !positive_finite(c.duration) {
            return Err(MpError::invalid(format!(
                "segment {k} (`{}`): duration must be positive",
                c.id
            )));
        }
        if !c.start.iter().chain(c.goal.iter()).all(|v| v.is_finite()) {
            return Err(MpError::invalid(format!(
                "segment {k} (`{}`): non-finite start or goal",
                c.id
            )));
        }
    }
    let total: f64 = conditions.iter().map(|c| c.duration).sum();

    let mut segments = Vec::with_capacity(conditions.len());
    let mut centers = Vec::new();
    let mut widths = Vec::new();
    let mut rows = 0;
    let mut cols = None;
    let mut offset = 0.0;
    let mut prev_goal: Option<Vec2> = None;
    for (k, c) in conditions.iter().enumerate() {
        let mp = lib.get(&c.id)?;
        if !mp.bank.has_identical_rows() {
            return Err(MpError::invalid(format!(
                "`{}` has differing kernel rows; sequencing needs one kernel layout per primitive",
                mp.id
            )));
        }
        match cols {
            None => cols = Some(mp.bank.cols),
            Some(n) if n != mp.bank.cols => {
                return Err(MpError::ShapeMismatch(format!(
                    "`{}` has {} kernels per row, earlier segments have {n}",
                    mp.id, mp.bank.cols
                )))
            }
            _ => {}
        }
        let start = match prev_goal {
            None => c.start,
            Some(g) => {
                let gap = (c.start - g).norm();
                if options.strict && gap > STRICT_CHAIN_TOLERANCE {
                    return Err(MpError::invalid(format!(
                        "segment {k} (`{}`) starts {gap:.3} m away from the previous goal",
                        c.id
                    )));
                }
                g
            }
        };
        let (s_x, s_y) = match options.overrides.get(k).cloned().flatten() {
            Some(o) => {
                if o.s_x.len() != mp.rank() || o.s_y.len() != mp.rank() {
                    return Err(MpError::ShapeMismatch(format!(
                        "segment {k} (`{}`) expects {} coefficients per axis",
                        c.id,
                        mp.rank()
                    )));
                }
                (o.s_x, o.s_y)
            }
            None => (mp.x.mean_s(), mp.y.mean_s()),
        };
        let share = c.duration / total;
        let scale = total / c.duration;
        for j in 0..mp.bank.rows {
            centers.extend(
                mp.bank
                    .row_centers(j)
                    .iter()
                    .map(|mu| mu * share + offset / total),
            );
            widths.extend(mp.bank.row_widths(j).iter().map(|p| p * scale));
        }
        segments.push(SegmentPlan {
            id: c.id.clone(),
            start,
            goal: c.goal,
            duration: c.duration,
            offset,
            s_x,
            s_y,
            weights_x: mp.x.weights.clone(),
            weights_y: mp.y.weights.clone(),
            forcing_scale: mp.forcing_scale,
            first_row: rows,
        });
        rows += mp.bank.rows;
        offset += c.duration;
        prev_goal = Some(c.goal);
    }
    Ok(SequencePlan {
        switch_angles: vec![0.0; segments.len()],
        segments,
        total_duration: total,
        bank: KernelBank {
            rows,
            cols: cols.unwrap_or(0),
            centers,
            widths,
        },
    })
}

/// Goal velocity at time `t`: `(g_k - b_k) / (tau * T_k)` inside segment
/// `k`'s window, zero outside every window.
pub fn sequence_goal_rate(plan: &SequencePlan, tau: f64, t: f64) -> Vec2 {
    match plan.active_segment(t / tau) {
        Some(k) => {
            let s = &plan.segments[k];
            (s.goal - s.start) / (tau * s.duration)
        }
        None => Vec2::zeros(),
    }
}

/// Advances the sequence goal over `[t, t + dt]`, integrating the piecewise
/// constant rate exactly.
pub fn sequence_goal_step(plan: &SequencePlan, tau: f64, r: Vec2, t: f64, dt: f64) -> Vec2 {
    let mut r = r;
    for s in &plan.segments {
        let lo = tau * s.offset;
        let hi = tau * (s.offset + s.duration);
        let overlap = (t + dt).min(hi) - t.max(lo);
        if overlap > 0.0 {
            r += (s.goal - s.start) * (overlap / (tau * s.duration));
        }
    }
    r
}

/// Logistic-derivative phase over the whole sequence, with the active
/// segment's sampling interval inside the logistic.
pub fn sequence_canonical_step(
    z: f64,
    alpha_z: f64,
    tau: f64,
    total: f64,
    t: f64,
    sample_dt: f64,
    dt: f64,
) -> f64 {
    canonical_step_modified(z, alpha_z, tau, total, t, sample_dt, dt)
}

/// Rotates a forcing vector by `delta`.
pub fn rotate_forcing(fx: f64, fy: f64, delta: f64) -> (f64, f64) {
    let (sin, cos) = delta.sin_cos();
    (cos * fx - sin * fy, sin * fx + cos * fy)
}

struct SequenceSchedule<'a> {
    plan: &'a SequencePlan,
    params: &'a DynamicsParams,
    tau: f64,
    rotations: Vec<Matrix2<f64>>,
    /// Per segment, `forcing_scale * sum_j s_j w_ji` for each kernel.
    effective: Vec<(Vec<f64>, Vec<f64>)>,
}

impl<'a> SequenceSchedule<'a> {
    fn new(plan: &'a SequencePlan, params: &'a DynamicsParams, tau: f64, angles: &[f64]) -> Self {
        SequenceSchedule {
            plan,
            params,
            tau,
            rotations: angles
                .iter()
                .map(|&a| {
                    let (s, c) = a.sin_cos();
                    Matrix2::new(c, -s, s, c)
                })
                .collect(),
            effective: plan
                .segments
                .iter()
                .map(|s| {
                    (
                        s.effective_weights(&s.weights_x, &s.s_x),
                        s.effective_weights(&s.weights_y, &s.s_y),
                    )
                })
                .collect(),
        }
    }

    fn sample_interval(&self, t: f64) -> f64 {
        let k = self
            .plan
            .active_segment(t / self.tau)
            .unwrap_or(self.plan.len() - 1);
        self.params.sample_interval(self.plan.segments[k].duration)
    }
}

impl Schedule for SequenceSchedule<'_> {
    fn forcing(&self, t: f64, z: f64) -> Vec2 {
        let u = t / (self.tau * self.plan.total_duration);
        let bank = &self.plan.bank;
        let mut den = 0.0;
        let mut total = Vec2::zeros();
        for (k, seg) in self.plan.segments.iter().enumerate() {
            let (wx, wy) = &self.effective[k];
            let mut num = Vec2::zeros();
            for (i, (&c, &p)) in bank
                .row_centers(seg.first_row)
                .iter()
                .zip(bank.row_widths(seg.first_row))
                .enumerate()
            {
                let psi = gaussian(p, c, u);
                num += Vec2::new(wx[i], wy[i]) * psi;
                den += psi;
            }
            total += self.rotations[k] * num;
        }
        total * (z / den.max(DENOMINATOR_FLOOR))
    }

    fn goal_step(&self, r: Vec2, t: f64, dt: f64) -> Vec2 {
        sequence_goal_step(self.plan, self.tau, r, t, dt)
    }

    fn phase_step(&self, z: f64, t: f64, dt: f64) -> f64 {
        sequence_canonical_step(
            z,
            self.params.alpha_z,
            self.tau,
            self.plan.total_duration,
            t,
            self.sample_interval(t),
            dt,
        )
    }
}

/// Switch and target metrics of a joined trajectory.
#[derive(Debug, Clone, PartialEq)]
pub struct SwitchReport {
    /// Times of the switches between consecutive segments.
    pub switch_times: Vec<f64>,
    /// Rotation applied to each segment's forcing.
    pub switch_angles: Vec<f64>,
    /// Speed difference between the velocity leaving one segment and the
    /// velocity entering the next.
    pub velocity_jumps: Vec<f64>,
    /// Largest acceleration magnitude over the switch windows, each running
    /// from the middle of one segment to the middle of the next; the whole
    /// trajectory for a single segment.
    pub a_max: f64,
    /// Largest acceleration magnitude over the whole trajectory.
    pub a_max_global: f64,
    /// Minimum distance from the trajectory to each segment's goal.
    pub misses: Vec<f64>,
    /// Passes needed to settle the switch angles.
    pub angle_passes: usize,
}

fn segment_bounds(durations: &[f64], tau: f64) -> Vec<(f64, f64)> {
    let mut out = Vec::with_capacity(durations.len());
    let mut t = 0.0;
    for d in durations {
        out.push((tau * t, tau * (t + d)));
        t += d;
    }
    out
}

fn build_report(
    traj: &Trajectory,
    bounds: &[(f64, f64)],
    goals: &[Vec2],
    switch_angles: Vec<f64>,
    velocity_jumps: Vec<f64>,
    angle_passes: usize,
) -> SwitchReport {
    let acc = second_difference_accelerations(traj);
    let times = traj.times();
    let interior = 1..times.len().saturating_sub(1);
    let a_max_global = interior.clone().map(|i| acc[i].norm()).fold(0.0, f64::max);
    let a_max = if bounds.len() < 2 {
        a_max_global
    } else {
        bounds
            .windows(2)
            .map(|w| {
                let lo = 0.5 * (w[0].0 + w[0].1);
                let hi = 0.5 * (w[1].0 + w[1].1);
                interior
                    .clone()
                    .filter(|&i| times[i] >= lo && times[i] <= hi)
                    .map(|i| acc[i].norm())
                    .fold(0.0, f64::max)
            })
            .fold(0.0, f64::max)
    };
    SwitchReport {
        switch_times: bounds.iter().skip(1).map(|b| b.0).collect(),
        switch_angles,
        velocity_jumps,
        a_max,
        a_max_global,
        misses: target_misses(traj, goals),
        angle_passes,
    }
}

fn sequence_times(plan: &SequencePlan, tau: f64, steps: usize) -> Vec<f64> {
    let mut times = vec![0.0];
    for s in &plan.segments {
        for n in 1..=steps {
            times.push(tau * (s.offset + s.duration * n as f64 / steps as f64));
        }
    }
    times
}

/// Proposed joining: one continuous integration over the whole sequence.
pub fn generate_sequence(
    lib: &MpLibrary,
    conditions: &[InitialCondition],
    params: &DynamicsParams,
    options: &SequenceOptions,
) -> Result<(Trajectory, SwitchReport)> {
    params.validate()?;
    let mut plan = plan_sequence(lib, conditions, options)?;
    let tau = options.tau;
    let steps = params.samples;
    let times = sequence_times(&plan, tau, steps);
    let start = plan.segments[0].start;

    let mut angles: Vec<f64> = standalone_pieces(lib, &plan, params, tau)?
        .iter()
        .map(|(_, h)| *h)
        .collect();
    let mut passes = 0;
    let trace = loop {
        passes += 1;
        let schedule = SequenceSchedule::new(&plan, params, tau, &angles);
        let trace = integrate(&schedule, params, tau, start, &times);
        let mut realized = angles.clone();
        for k in 1..plan.len() {
            let v = trace.states[k * steps].velocity;
            realized[k] = if v.norm() > 1e-9 {
                v.y.atan2(v.x)
            } else {
                realized[k - 1]
            };
        }
        let change = realized
            .iter()
            .zip(&angles)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        angles = realized;
        if change <= ANGLE_TOLERANCE {
            break trace;
        }
        if passes >= MAX_ANGLE_PASSES {
            warn!("switch angles still moving by {change:.3e} rad after {passes} passes");
            let schedule = SequenceSchedule::new(&plan, params, tau, &angles);
            break integrate(&schedule, params, tau, start, &times);
        }
    };
    debug!("switch angles settled after {passes} passes: {angles:?}");
    plan.switch_angles = angles.clone();

    // the integrator state carries straight through every switch
    let jumps = vec![0.0; plan.len() - 1];
    let traj = trace.into_trajectory(tau)?;
    let durations: Vec<f64> = plan.segments.iter().map(|s| s.duration).collect();
    let goals: Vec<Vec2> = plan.segments.iter().map(|s| s.goal).collect();
    let report = build_report(
        &traj,
        &segment_bounds(&durations, tau),
        &goals,
        angles,
        jumps,
        passes,
    );
    Ok((traj, report))
}

/// Each segment regenerated on its own, starting at rest from the previous
/// piece's end in a frame aligned with that piece's final course. Returns
/// the pieces in the global frame and the frame heading of each.
fn standalone_pieces(
    lib: &MpLibrary,
    plan: &SequencePlan,
    params: &DynamicsParams,
    tau: f64,
) -> Result<Vec<(Trajectory, f64)>> {
    let mut out = Vec::with_capacity(plan.len());
    let mut origin = plan.segments[0].start;
    let mut heading: f64 = 0.0;
    for seg in &plan.segments {
        let mp = lib.get(&seg.id)?;
        let adj = AdjustmentSet {
            start: Vec2::zeros(),
            goal: rotation(-heading) * (seg.goal - origin),
            duration: seg.duration,
            s_x: seg.s_x.clone(),
            s_y: seg.s_y.clone(),
            tau,
        };
        let piece = regenerate(mp, &adj, params)?.transformed(heading, origin, tau * seg.offset);
        let end_v = piece
            .velocities()
            .map(|v| v[v.len() - 1])
            .unwrap_or_default();
        let frame = heading;
        origin = piece.last();
        if end_v.norm() > 1e-9 {
            heading = end_v.y.atan2(end_v.x);
        }
        out.push((piece, frame));
    }
    Ok(out)
}

/// Baseline joining: each segment regenerated on its own, starting at rest
/// from the previous segment's end in a frame aligned with its final course.
pub fn simple_join(
    lib: &MpLibrary,
    conditions: &[InitialCondition],
    params: &DynamicsParams,
    options: &SequenceOptions,
) -> Result<(Trajectory, SwitchReport)> {
    params.validate()?;
    let plan = plan_sequence(lib, conditions, options)?;
    let tau = options.tau;
    let pieces = standalone_pieces(lib, &plan, params, tau)?;
    let mut times: Vec<f64> = Vec::new();
    let mut points = Vec::new();
    let mut vels = Vec::new();
    let mut accs = Vec::new();
    let mut jumps = Vec::with_capacity(plan.len().saturating_sub(1));
    for (k, (piece, _)) in pieces.iter().enumerate() {
        let pv = piece.velocities().unwrap_or_default();
        let pa = piece.accelerations().unwrap_or_default();
        let skip = usize::from(k > 0);
        if k > 0 {
            let leaving = *vels.last().unwrap_or(&Vec2::zeros());
            jumps.push((leaving - pv[0]).norm());
        }
        times.extend_from_slice(&piece.times()[skip..]);
        points.extend_from_slice(&piece.points()[skip..]);
        vels.extend_from_slice(&pv[skip..]);
        accs.extend_from_slice(&pa[skip..]);
    }
    let angles = pieces.iter().map(|(_, h)| *h).collect();
    let traj = Trajectory::new(times, points)?
        .with_velocities(vels)?
        .with_accelerations(accs)?;
    let durations: Vec<f64> = plan.segments.iter().map(|s| s.duration).collect();
    let goals: Vec<Vec2> = plan.segments.iter().map(|s| s.goal).collect();
    let report = build_report(
        &traj,
        &segment_bounds(&durations, tau),
        &goals,
        angles,
        jumps,
        1,
    );
    Ok((traj, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::{AxisShape, LearnedMp};
    use std::f64::consts::FRAC_PI_2;

    fn three_kernel_mp(id: &str) -> LearnedMp {
        let bank = KernelBank {
            rows: 1,
            cols: 3,
            centers: vec![0.0, 0.5, 1.0],
            widths: vec![4.0; 3],
        };
        let shape = |w: &[f64]| AxisShape {
            weights: DMatrix::from_row_slice(1, 3, w),
            singular_values: vec![1.0],
            demo_s: DMatrix::from_row_slice(2, 1, &[1.0, 1.0]),
        };
        LearnedMp {
            id: id.into(),
            bank,
            mean_duration: 1.0,
            forcing_scale: 1.0,
            x: shape(&[1.0, 2.0, 3.0]),
            y: shape(&[0.0, -1.0, 0.5]),
            demo_goals: vec![Vec2::new(1.0, 0.0); 2],
            demo_durations: vec![1.0; 2],
        }
    }

    fn condition(id: &str, duration: f64, start: (f64, f64), goal: (f64, f64)) -> InitialCondition {
        InitialCondition {
            id: id.into(),
            duration,
            start: Vec2::new(start.0, start.1),
            goal: Vec2::new(goal.0, goal.1),
        }
    }

    #[test]
    fn two_unit_segments_reparameterize_by_hand() {
        let mut lib = MpLibrary::new();
        lib.insert(three_kernel_mp("a"));
        let conds = [
            condition("a", 1.0, (0.0, 0.0), (1.0, 0.0)),
            condition("a", 1.0, (1.0, 0.0), (2.0, 0.0)),
        ];
        let plan = plan_sequence(&lib, &conds, &SequenceOptions::default()).unwrap();
        assert_eq!(plan.bank.centers, vec![0.0, 0.25, 0.5, 0.5, 0.75, 1.0]);
        assert_eq!(plan.bank.widths, vec![8.0; 6]);
        assert_eq!(plan.total_duration, 2.0);
        assert_eq!(plan.segment_offsets(), vec![0.0, 1.0]);
        assert_eq!(plan.segments[1].first_row, 1);
    }

    #[test]
    fn unequal_durations_shift_and_widen() {
        let mut lib = MpLibrary::new();
        lib.insert(three_kernel_mp("a"));
        let conds = [
            condition("a", 1.0, (0.0, 0.0), (1.0, 0.0)),
            condition("a", 3.0, (1.0, 0.0), (2.0, 0.0)),
        ];
        let plan = plan_sequence(&lib, &conds, &SequenceOptions::default()).unwrap();
        let expect_c = [0.0, 0.125, 0.25, 0.25, 0.625, 1.0];
        for (c, e) in plan.bank.centers.iter().zip(expect_c) {
            assert!((c - e).abs() < 1e-15);
        }
        assert_eq!(&plan.bank.widths[..3], &[16.0; 3]);
        for w in &plan.bank.widths[3..] {
            assert!((w - 16.0 / 3.0).abs() < 1e-12);
        }
    }

    #[test]
    fn boundaries_belong_to_the_later_segment() {
        let mut lib = MpLibrary::new();
        lib.insert(three_kernel_mp("a"));
        let conds = [
            condition("a", 1.0, (0.0, 0.0), (2.0, 0.0)),
            condition("a", 2.0, (2.0, 0.0), (2.0, 4.0)),
        ];
        let plan = plan_sequence(&lib, &conds, &SequenceOptions::default()).unwrap();
        assert_eq!(plan.active_segment(0.0), Some(0));
        assert_eq!(plan.active_segment(1.0), Some(1));
        assert_eq!(plan.active_segment(3.0), None);
        assert_eq!(plan.active_segment(-0.1), None);
        assert_eq!(sequence_goal_rate(&plan, 1.0, 0.5), Vec2::new(2.0, 0.0));
        assert_eq!(sequence_goal_rate(&plan, 1.0, 1.0), Vec2::new(0.0, 2.0));
        assert_eq!(sequence_goal_rate(&plan, 1.0, 3.0), Vec2::zeros());
        assert_eq!(sequence_goal_rate(&plan, 2.0, 2.0), Vec2::new(0.0, 1.0));
        let r = sequence_goal_step(&plan, 1.0, Vec2::zeros(), 0.75, 0.5);
        assert!((r - Vec2::new(0.5, 0.5)).norm() < 1e-12);
        let r = sequence_goal_step(&plan, 1.0, Vec2::new(2.0, 4.0), 3.0, 0.5);
        assert_eq!(r, Vec2::new(2.0, 4.0));
    }

    #[test]
    fn chaining_and_strict_mode() {
        let mut lib = MpLibrary::new();
        lib.insert(three_kernel_mp("a"));
        let conds = [
            condition("a", 1.0, (0.0, 0.0), (1.0, 0.0)),
            condition("a", 1.0, (1.005, 0.0), (2.0, 0.0)),
        ];
        let plan = plan_sequence(&lib, &conds, &SequenceOptions::default()).unwrap();
        assert_eq!(plan.segments[1].start, Vec2::new(1.0, 0.0));
        let strict = SequenceOptions {
            strict: true,
            ..SequenceOptions::default()
        };
        assert!(plan_sequence(&lib, &conds, &strict).is_ok());
        let far = [
            conds[0].clone(),
            condition("a", 1.0, (1.5, 0.0), (2.0, 0.0)),
        ];
        assert!(plan_sequence(&lib, &far, &SequenceOptions::default()).is_ok());
        assert!(plan_sequence(&lib, &far, &strict)
            .unwrap_err()
            .is_validation());
    }

    #[test]
    fn plan_rejects_bad_input() {
        let mut lib = MpLibrary::new();
        lib.insert(three_kernel_mp("a"));
        let opts = SequenceOptions::default();
        assert!(plan_sequence(&lib, &[], &opts).is_err());
        let missing = [condition("b", 1.0, (0.0, 0.0), (1.0, 0.0))];
        assert!(
            matches!(plan_sequence(&lib, &missing, &opts), Err(MpError::UnknownId(id)) if id == "b")
        );
        let zero = [condition("a", 0.0, (0.0, 0.0), (1.0, 0.0))];
        assert!(plan_sequence(&lib, &zero, &opts).is_err());
        let bad_tau = SequenceOptions {
            tau: -1.0,
            ..SequenceOptions::default()
        };
        assert!(plan_sequence(
            &lib,
            &[condition("a", 1.0, (0.0, 0.0), (1.0, 0.0))],
            &bad_tau
        )
        .is_err());
        let wrong = SequenceOptions {
            overrides: vec![Some(ShapeOverride {
                s_x: vec![1.0, 2.0],
                s_y: vec![1.0],
            })],
            ..SequenceOptions::default()
        };
        assert!(
            plan_sequence(&lib, &[condition("a", 1.0, (0.0, 0.0), (1.0, 0.0))], &wrong).is_err()
        );
    }

    #[test]
    fn rotation_cases() {
        assert_eq!(rotate_forcing(1.5, -2.0, 0.0), (1.5, -2.0));
        let (x, y) = rotate_forcing(1.0, 0.0, FRAC_PI_2);
        assert!(x.abs() < 1e-15 && (y - 1.0).abs() < 1e-15);
        for k in 0..20 {
            let d = k as f64 * 0.77 - 5.0;
            let (x, y) = rotate_forcing(3.0, -4.0, d);
            assert!(((x * x + y * y).sqrt() - 5.0).abs() < 1e-12);
        }
    }
}
