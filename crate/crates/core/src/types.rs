//! Domain types shared by every stage of the pipeline, plus library validation.

use std::collections::BTreeMap;
use std::fmt;

use nalgebra::{DMatrix, Vector2};
use serde::{Deserialize, Serialize};

use crate::error::{MpError, Result};

pub type Vec2 = Vector2<f64>;

pub(crate) fn positive_finite(x: f64) -> bool {
    x.is_finite() && x > 0.0
}

pub(crate) fn nonnegative_finite(x: f64) -> bool {
    x.is_finite() && x >= 0.0
}

/// A sampled planar path.
///
/// Samples carry explicit timestamps. Demonstrations and single-primitive
/// rollouts are uniformly spaced; a joined sequence steps through segments
/// with each segment's own interval, so its spacing is piecewise uniform.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    times: Vec<f64>,
    points: Vec<Vec2>,
    velocities: Option<Vec<Vec2>>,
    accelerations: Option<Vec<Vec2>>,
}

impl Trajectory {
    pub fn new(times: Vec<f64>, points: Vec<Vec2>) -> Result<Self> {
        if points.len() < 2 {
            return Err(MpError::invalid(format!(
                "trajectory needs at least 2 points, got {}",
                points.len()
            )));
        }
        if times.len() != points.len() {
            return Err(MpError::ShapeMismatch(format!(
                "{} timestamps for {} points",
                times.len(),
                points.len()
            )));
        }
        if let Some(bad) = points
            .iter()
            .position(|p| !p.x.is_finite() || !p.y.is_finite())
        {
            return Err(MpError::invalid(format!(
                "non-finite position at sample {bad}"
            )));
        }
        for (i, w) in times.windows(2).enumerate() {
            if !w[0].is_finite() || !w[1].is_finite() || w[1] <= w[0] {
                return Err(MpError::invalid(format!(
                    "timestamps must be finite and strictly increasing (sample {})",
                    i + 1
                )));
            }
        }
        Ok(Trajectory {
            times,
            points,
            velocities: None,
            accelerations: None,
        })
    }

    /// Uniformly sampled trajectory starting at t = 0.
    pub fn uniform(dt: f64, points: Vec<Vec2>) -> Result<Self> {
        if !positive_finite(dt) {
            return Err(MpError::invalid(format!("dt must be positive, got {dt}")));
        }
        let times = (0..points.len()).map(|i| i as f64 * dt).collect();
        Trajectory::new(times, points)
    }

    pub fn with_velocities(mut self, velocities: Vec<Vec2>) -> Result<Self> {
        if velocities.len() != self.points.len() {
            return Err(MpError::ShapeMismatch(format!(
                "{} velocities for {} points",
                velocities.len(),
                self.points.len()
            )));
        }
        self.velocities = Some(velocities);
        Ok(self)
    }

    pub fn with_accelerations(mut self, accelerations: Vec<Vec2>) -> Result<Self> {
        if accelerations.len() != self.points.len() {
            return Err(MpError::ShapeMismatch(format!(
                "{} accelerations for {} points",
                accelerations.len(),
                self.points.len()
            )));
        }
        self.accelerations = Some(accelerations);
        Ok(self)
    }

    /// Replaces velocities and accelerations with finite-difference estimates
    /// from the positions (central in the interior, second-order one-sided at
    /// the ends).
    pub fn with_finite_differences(mut self) -> Self {
        let (v, a) = finite_differences(&self.times, &self.points);
        self.velocities = Some(v);
        self.accelerations = Some(a);
        self
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn points(&self) -> &[Vec2] {
        &self.points
    }

    pub fn velocities(&self) -> Option<&[Vec2]> {
        self.velocities.as_deref()
    }

    pub fn accelerations(&self) -> Option<&[Vec2]> {
        self.accelerations.as_deref()
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn start_time(&self) -> f64 {
        self.times[0]
    }

    pub fn duration(&self) -> f64 {
        self.times[self.times.len() - 1] - self.times[0]
    }

    /// Mean sampling interval.
    pub fn dt(&self) -> f64 {
        self.duration() / (self.len() - 1) as f64
    }

    /// Whether every interval matches the mean interval within `rel_tol`.
    pub fn is_uniform(&self, rel_tol: f64) -> bool {
        let dt = self.dt();
        self.times
            .windows(2)
            .all(|w| ((w[1] - w[0]) - dt).abs() <= rel_tol * dt)
    }

    pub fn first(&self) -> Vec2 {
        self.points[0]
    }

    pub fn last(&self) -> Vec2 {
        self.points[self.points.len() - 1]
    }

    /// Polyline length.
    pub fn path_length(&self) -> f64 {
        self.points.windows(2).map(|w| (w[1] - w[0]).norm()).sum()
    }

    /// Applies `p -> rotation(angle) * p + offset` to positions and rotates
    /// velocities and accelerations. Timestamps are shifted by `time_offset`.
    pub fn transformed(&self, angle: f64, offset: Vec2, time_offset: f64) -> Trajectory {
        let rot = rotation(angle);
        Trajectory {
            times: self.times.iter().map(|t| t + time_offset).collect(),
            points: self.points.iter().map(|p| rot * p + offset).collect(),
            velocities: self
                .velocities
                .as_ref()
                .map(|v| v.iter().map(|x| rot * x).collect()),
            accelerations: self
                .accelerations
                .as_ref()
                .map(|v| v.iter().map(|x| rot * x).collect()),
        }
    }
}

pub(crate) fn rotation(angle: f64) -> nalgebra::Matrix2<f64> {
    let (s, c) = angle.sin_cos();
    nalgebra::Matrix2::new(c, -s, s, c)
}

/// First and second derivative estimates on a (possibly non-uniform) grid.
pub fn finite_differences(times: &[f64], points: &[Vec2]) -> (Vec<Vec2>, Vec<Vec2>) {
    let n = points.len();
    let mut vel = vec![Vec2::zeros(); n];
    let mut acc = vec![Vec2::zeros(); n];
    if n < 2 {
        return (vel, acc);
    }
    if n == 2 {
        let v = (points[1] - points[0]) / (times[1] - times[0]);
        return (vec![v, v], acc);
    }
    for i in 1..n - 1 {
        let h1 = times[i] - times[i - 1];
        let h2 = times[i + 1] - times[i];
        let (pm, p, pp) = (points[i - 1], points[i], points[i + 1]);
        vel[i] =
            (pp * (h1 * h1) - pm * (h2 * h2) + p * (h2 * h2 - h1 * h1)) / (h1 * h2 * (h1 + h2));
        acc[i] = ((pp - p) / h2 - (p - pm) / h1) * (2.0 / (h1 + h2));
    }
    // quadratic through the three end samples
    vel[0] = quadratic_slope(
        [times[0], times[1], times[2]],
        [points[0], points[1], points[2]],
        times[0],
    );
    vel[n - 1] = quadratic_slope(
        [times[n - 3], times[n - 2], times[n - 1]],
        [points[n - 3], points[n - 2], points[n - 1]],
        times[n - 1],
    );
    if n == 3 {
        acc[0] = acc[1];
        acc[2] = acc[1];
    } else {
        acc[0] = extrapolate(times[1], acc[1], times[2], acc[2], times[0]);
        acc[n - 1] = extrapolate(
            times[n - 2],
            acc[n - 2],
            times[n - 3],
            acc[n - 3],
            times[n - 1],
        );
    }
    (vel, acc)
}

fn quadratic_slope(t: [f64; 3], p: [Vec2; 3], at: f64) -> Vec2 {
    // derivative of the Lagrange interpolant
    let l0 = ((at - t[1]) + (at - t[2])) / ((t[0] - t[1]) * (t[0] - t[2]));
    let l1 = ((at - t[0]) + (at - t[2])) / ((t[1] - t[0]) * (t[1] - t[2]));
    let l2 = ((at - t[0]) + (at - t[1])) / ((t[2] - t[0]) * (t[2] - t[1]));
    p[0] * l0 + p[1] * l1 + p[2] * l2
}

fn extrapolate(t1: f64, a1: Vec2, t2: f64, a2: Vec2, at: f64) -> Vec2 {
    a1 + (a1 - a2) * ((at - t1) / (t1 - t2))
}

/// Gaussian kernel layout: `rows` basis rows of `cols` kernels each, stored
/// row-major. Centers live in normalized time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelBank {
    pub rows: usize,
    pub cols: usize,
    pub centers: Vec<f64>,
    pub widths: Vec<f64>,
}

impl KernelBank {
    pub fn row_centers(&self, row: usize) -> &[f64] {
        &self.centers[row * self.cols..(row + 1) * self.cols]
    }

    pub fn row_widths(&self, row: usize) -> &[f64] {
        &self.widths[row * self.cols..(row + 1) * self.cols]
    }

    /// True when every row repeats the first row's centers and widths.
    pub fn has_identical_rows(&self) -> bool {
        (1..self.rows).all(|r| {
            self.row_centers(r) == self.row_centers(0) && self.row_widths(r) == self.row_widths(0)
        })
    }

    pub fn violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        let expected = self.rows * self.cols;
        if self.centers.len() != expected || self.widths.len() != expected {
            out.push(format!(
                "bank: expected {expected} centers and widths ({}x{}), got {} and {}",
                self.rows,
                self.cols,
                self.centers.len(),
                self.widths.len()
            ));
            return out;
        }
        if let Some(i) = self.widths.iter().position(|w| !positive_finite(*w)) {
            out.push(format!(
                "bank.widths[{i}] = {} is not strictly positive",
                self.widths[i]
            ));
        }
        if let Some(i) = self.centers.iter().position(|c| !c.is_finite()) {
            out.push(format!("bank.centers[{i}] is not finite"));
        }
        for r in 0..self.rows {
            if self.row_centers(r).windows(2).any(|w| w[1] < w[0]) {
                out.push(format!("bank.centers row {r} is not non-decreasing"));
            }
        }
        out
    }
}

/// Learned shape data of one axis: fitted weights per basis row, the
/// singular-value spectrum of the forcing matrix, and the fine-tuning
/// coefficients observed for each training demonstration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AxisShape {
    /// J x N kernel weights.
    #[serde(with = "row_major")]
    pub weights: DMatrix<f64>,
    /// Full spectrum, descending.
    pub singular_values: Vec<f64>,
    /// Q x J coefficients, one row per demonstration.
    #[serde(with = "row_major")]
    pub demo_s: DMatrix<f64>,
}

impl AxisShape {
    pub fn rank(&self) -> usize {
        self.weights.nrows()
    }

    /// Column means of `demo_s`.
    pub fn mean_s(&self) -> Vec<f64> {
        let q = self.demo_s.nrows().max(1) as f64;
        (0..self.demo_s.ncols())
            .map(|j| self.demo_s.column(j).sum() / q)
            .collect()
    }

    /// Column standard deviations of `demo_s` (population).
    pub fn std_s(&self) -> Vec<f64> {
        let mean = self.mean_s();
        let q = self.demo_s.nrows().max(1) as f64;
        (0..self.demo_s.ncols())
            .map(|j| {
                let var = self
                    .demo_s
                    .column(j)
                    .iter()
                    .map(|v| (v - mean[j]).powi(2))
                    .sum::<f64>()
                    / q;
                var.sqrt()
            })
            .collect()
    }
}

/// One learned motion-primitive type.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LearnedMp {
    pub id: String,
    pub bank: KernelBank,
    pub mean_duration: f64,
    /// Global gain on the forcing term.
    pub forcing_scale: f64,
    pub x: AxisShape,
    pub y: AxisShape,
    /// Goal minus start of every training demonstration, in the primitive frame.
    pub demo_goals: Vec<Vec2>,
    pub demo_durations: Vec<f64>,
}

impl LearnedMp {
    pub fn rank(&self) -> usize {
        self.x.rank()
    }

    pub fn demo_count(&self) -> usize {
        self.x.demo_s.nrows()
    }

    pub fn mean_goal(&self) -> Vec2 {
        if self.demo_goals.is_empty() {
            return Vec2::zeros();
        }
        self.demo_goals.iter().sum::<Vec2>() / self.demo_goals.len() as f64
    }

    /// Fine-tuning coefficients of training demonstration `q`.
    pub fn demo_coefficients(&self, q: usize) -> Option<(Vec<f64>, Vec<f64>)> {
        if q >= self.demo_count() {
            return None;
        }
        Some((
            self.x.demo_s.row(q).iter().copied().collect(),
            self.y.demo_s.row(q).iter().copied().collect(),
        ))
    }

    /// Every invariant violation of this entry, phrased `"<id>: <field>: ..."`.
    pub fn violations(&self) -> Vec<String> {
        let mut out: Vec<String> = self.bank.violations();
        let (jx, nx) = self.x.weights.shape();
        let (jy, ny) = self.y.weights.shape();
        if (jx, nx) != (jy, ny) {
            out.push(format!(
                "weights: shape mismatch, weights_x is {jx}x{nx} but weights_y is {jy}x{ny}"
            ));
        }
        if jx != self.bank.rows || nx != self.bank.cols {
            out.push(format!(
                "weights_x: {jx}x{nx} does not match bank {}x{}",
                self.bank.rows, self.bank.cols
            ));
        }
        for (name, axis) in [("x", &self.x), ("y", &self.y)] {
            if axis.weights.iter().any(|v| !v.is_finite()) {
                out.push(format!("weights_{name}: non-finite entry"));
            }
            let sv = &axis.singular_values;
            if sv.iter().any(|v| !nonnegative_finite(*v)) {
                out.push(format!(
                    "singular_values_{name}: negative or non-finite value"
                ));
            }
            if sv.windows(2).any(|w| w[1] > w[0]) {
                out.push(format!("singular_values_{name}: not sorted descending"));
            }
            let q = axis.demo_s.nrows();
            let j = axis.weights.nrows();
            if j > q {
                out.push(format!(
                    "demo_s_{name}: rank {j} exceeds demonstration count {q}"
                ));
            }
            if axis.demo_s.ncols() != j {
                out.push(format!(
                    "demo_s_{name}: has {} columns, expected rank {j}",
                    axis.demo_s.ncols()
                ));
            }
        }
        if self.x.demo_s.nrows() != self.y.demo_s.nrows() {
            out.push("demo_s: x and y disagree on demonstration count".to_string());
        }
        if !positive_finite(self.mean_duration) {
            out.push(format!(
                "mean_duration: {} is not positive",
                self.mean_duration
            ));
        }
        if !positive_finite(self.forcing_scale) {
            out.push(format!(
                "forcing_scale: {} is not positive",
                self.forcing_scale
            ));
        }
        let q = self.demo_count();
        if self.demo_goals.len() != q {
            out.push(format!(
                "demo_goals: {} entries for {q} demonstrations",
                self.demo_goals.len()
            ));
        }
        if self.demo_durations.len() != q {
            out.push(format!(
                "demo_durations: {} entries for {q} demonstrations",
                self.demo_durations.len()
            ));
        }
        if self.demo_durations.iter().any(|d| !positive_finite(*d)) {
            out.push("demo_durations: non-positive duration".to_string());
        }
        out.into_iter()
            .map(|m| format!("{}: {m}", self.id))
            .collect()
    }
}

/// Collection of learned primitives keyed by id.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct MpLibrary {
    pub primitives: BTreeMap<String, LearnedMp>,
}

impl MpLibrary {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, mp: LearnedMp) -> Option<LearnedMp> {
        self.primitives.insert(mp.id.clone(), mp)
    }

    pub fn get(&self, id: &str) -> Result<&LearnedMp> {
        self.primitives
            .get(id)
            .ok_or_else(|| MpError::UnknownId(id.to_string()))
    }

    pub fn len(&self) -> usize {
        self.primitives.len()
    }

    pub fn is_empty(&self) -> bool {
        self.primitives.is_empty()
    }
}

/// A single invariant violation found by [`validate_library`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    pub id: String,
    pub message: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

/// Lists every invariant violation in the library. Empty means valid.
pub fn validate_library(lib: &MpLibrary) -> Vec<Violation> {
    let mut out = Vec::new();
    for (key, mp) in &lib.primitives {
        if key != &mp.id {
            out.push(Violation {
                id: key.clone(),
                message: format!("{key}: id: stored under key `{key}` but named `{}`", mp.id),
            });
        }
        out.extend(mp.violations().into_iter().map(|message| Violation {
            id: mp.id.clone(),
            message,
        }));
    }
    out
}

/// Regeneration parameters for one primitive: start, goal, duration,
/// fine-tuning coefficients per axis and time dilation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdjustmentSet {
    pub start: Vec2,
    pub goal: Vec2,
    pub duration: f64,
    pub s_x: Vec<f64>,
    pub s_y: Vec<f64>,
    /// Time dilation: the rollout spans `tau * duration` seconds.
    #[serde(default = "one")]
    pub tau: f64,
}

fn one() -> f64 {
    1.0
}

impl AdjustmentSet {
    /// Mean training coefficients, mean duration and mean goal, starting at the origin.
    pub fn defaults_for(mp: &LearnedMp) -> Self {
        AdjustmentSet {
            start: Vec2::zeros(),
            goal: mp.mean_goal(),
            duration: mp.mean_duration,
            s_x: mp.x.mean_s(),
            s_y: mp.y.mean_s(),
            tau: 1.0,
        }
    }

    pub fn check_against(&self, mp: &LearnedMp) -> Result<()> {
        if !positive_finite(self.duration) {
            return Err(MpError::invalid(format!(
                "duration must be positive, got {}",
                self.duration
            )));
        }
        if !positive_finite(self.tau) {
            return Err(MpError::invalid(format!(
                "tau must be positive, got {}",
                self.tau
            )));
        }
        let j = mp.rank();
        if self.s_x.len() != j || self.s_y.len() != j {
            return Err(MpError::ShapeMismatch(format!(
                "`{}` expects {j} fine-tuning coefficients per axis, got {} (x) and {} (y)",
                mp.id,
                self.s_x.len(),
                self.s_y.len()
            )));
        }
        let finite = self.s_x.iter().chain(&self.s_y).all(|v| v.is_finite())
            && self
                .start
                .iter()
                .chain(self.goal.iter())
                .all(|v| v.is_finite());
        if !finite {
            return Err(MpError::invalid("adjustment contains non-finite values"));
        }
        Ok(())
    }
}

/// One element of a requested primitive sequence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InitialCondition {
    pub id: String,
    pub duration: f64,
    pub start: Vec2,
    pub goal: Vec2,
}

/// Constants of the transformation and canonical systems.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DynamicsParams {
    pub alpha_m: f64,
    pub beta_m: f64,
    pub alpha_z: f64,
    /// Samples per primitive; the model's sampling interval is `T / samples`.
    pub samples: usize,
}

impl Default for DynamicsParams {
    fn default() -> Self {
        DynamicsParams::critically_damped(25.0, 8.0)
    }
}

impl DynamicsParams {
    /// `beta_m = alpha_m / 4`.
    pub fn critically_damped(alpha_m: f64, alpha_z: f64) -> Self {
        DynamicsParams {
            alpha_m,
            beta_m: alpha_m / 4.0,
            alpha_z,
            samples: 100,
        }
    }

    pub fn sample_interval(&self, duration: f64) -> f64 {
        duration / self.samples as f64
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |v: f64| v > 0.0 && v.is_finite();
        if !positive(self.alpha_m) || !positive(self.beta_m) || !positive(self.alpha_z) {
            return Err(MpError::invalid(
                "dynamics constants must be strictly positive",
            ));
        }
        if (self.beta_m - self.alpha_m / 4.0).abs() > 1e-12 * self.alpha_m {
            return Err(MpError::invalid(format!(
                "beta_m must equal alpha_m / 4 for critical damping (alpha_m = {}, beta_m = {})",
                self.alpha_m, self.beta_m
            )));
        }
        if self.samples < 2 {
            return Err(MpError::invalid("samples per primitive must be at least 2"));
        }
        Ok(())
    }
}

/// Row-major matrix serialization with explicit dimensions.
pub(crate) mod row_major {
    use nalgebra::DMatrix;
    use serde::de::Error;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    #[derive(Serialize, Deserialize)]
    struct Repr {
        rows: usize,
        cols: usize,
        data: Vec<f64>,
    }

    pub fn serialize<S: Serializer>(m: &DMatrix<f64>, s: S) -> Result<S::Ok, S::Error> {
        let data = (0..m.nrows())
            .flat_map(|r| (0..m.ncols()).map(move |c| (r, c)))
            .map(|(r, c)| m[(r, c)])
            .collect();
        Repr {
            rows: m.nrows(),
            cols: m.ncols(),
            data,
        }
        .serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<DMatrix<f64>, D::Error> {
        let r = Repr::deserialize(d)?;
        if r.data.len() != r.rows * r.cols {
            return Err(D::Error::custom(format!(
                "matrix declares {}x{} but holds {} values",
                r.rows,
                r.cols,
                r.data.len()
            )));
        }
        Ok(DMatrix::from_row_slice(r.rows, r.cols, &r.data))
    }
}
