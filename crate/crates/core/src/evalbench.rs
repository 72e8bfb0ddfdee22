//! Synthetic demonstrations, evaluation metrics and the benchmark runner.

use std::f64::consts::PI;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::dynamics::{canonical_step_modified, goal_step};
use crate::error::{MpError, Result};
use crate::learning::{prepare_demo, resample, train_type, TrainOptions};
use crate::rollout::{integrate, regenerate, Schedule};
use crate::sequencer::{generate_sequence, simple_join, SequenceOptions, SwitchReport};
use crate::types::{
    finite_differences, nonnegative_finite, positive_finite, rotation, AdjustmentSet,
    DynamicsParams, InitialCondition, LearnedMp, MpLibrary, Trajectory, Vec2,
};

/// Shape family of a synthetic corpus.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SynthKind {
    /// Constant-curvature arc with a speed dip; `amplitude_range` is the
    /// radius and `angle_range` the turn angle.
    SharpTurn,
    /// Quintic smoothstep lateral shift of `amplitude_range` while the speed
    /// changes linearly.
    LaneChange,
    Straight,
    /// Rollout of the transformation system driven by `forcing`, scaled by
    /// a factor drawn from `amplitude_range`.
    CustomForcing,
}

/// Recipe for a synthetic corpus. Every demonstration draws its parameters
/// uniformly from the ranges.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthSpec {
    pub kind: SynthKind,
    pub q: usize,
    pub duration_range: (f64, f64),
    pub amplitude_range: (f64, f64),
    /// Entry speed (m/s); for custom forcing, the mean speed toward the goal.
    #[serde(default = "default_speed_range")]
    pub speed_range: (f64, f64),
    /// Turn angle (rad) for sharp turns; positive turns left.
    #[serde(default = "default_angle_range")]
    pub angle_range: (f64, f64),
    #[serde(default)]
    pub noise_sd: f64,
    #[serde(default)]
    pub seed: u64,
    /// Forcing samples `(fx, fy)` spread evenly over the duration.
    #[serde(default)]
    pub forcing: Vec<(f64, f64)>,
}

fn default_speed_range() -> (f64, f64) {
    (10.0, 10.0)
}

fn default_angle_range() -> (f64, f64) {
    (PI / 2.0, PI / 2.0)
}

impl SynthSpec {
    pub fn new(kind: SynthKind, q: usize) -> Self {
        SynthSpec {
            kind,
            q,
            duration_range: (4.0, 6.0),
            amplitude_range: (3.0, 4.0),
            speed_range: default_speed_range(),
            angle_range: default_angle_range(),
            noise_sd: 0.0,
            seed: 0,
            forcing: Vec::new(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.q < 1 {
            return Err(MpError::invalid("synthetic corpus needs q >= 1"));
        }
        if !nonnegative_finite(self.noise_sd) {
            return Err(MpError::invalid("noise_sd must be finite and non-negative"));
        }
        for (name, (lo, hi)) in [
            ("duration_range", self.duration_range),
            ("amplitude_range", self.amplitude_range),
            ("speed_range", self.speed_range),
            ("angle_range", self.angle_range),
        ] {
            if !lo.is_finite() || !hi.is_finite() || lo > hi {
                return Err(MpError::invalid(format!(
                    "{name} must be a finite range with low <= high"
                )));
            }
        }
        if !positive_finite(self.duration_range.0) {
            return Err(MpError::invalid("durations must be positive"));
        }
        if self.kind == SynthKind::SharpTurn && !positive_finite(self.amplitude_range.0) {
            return Err(MpError::invalid("turn radius must be positive"));
        }
        if self.kind == SynthKind::CustomForcing && self.forcing.len() < 2 {
            return Err(MpError::invalid(
                "custom forcing needs at least two forcing samples",
            ));
        }
        Ok(())
    }
}

const SYNTH_SAMPLES: usize = 100;

fn draw(rng: &mut ChaCha8Rng, (lo, hi): (f64, f64)) -> f64 {
    if lo == hi {
        lo
    } else {
        rng.random_range(lo..=hi)
    }
}

fn smoothstep5(u: f64) -> f64 {
    u * u * u * (10.0 + u * (-15.0 + 6.0 * u))
}

struct ProfileSchedule<'a> {
    profile: &'a [(f64, f64)],
    scale: f64,
    start: Vec2,
    goal: Vec2,
    duration: f64,
    params: &'a DynamicsParams,
}

impl Schedule for ProfileSchedule<'_> {
    fn forcing(&self, t: f64, z: f64) -> Vec2 {
        let n = self.profile.len() - 1;
        let u = (t / self.duration).clamp(0.0, 1.0) * n as f64;
        let i = (u.floor() as usize).min(n - 1);
        let w = u - i as f64;
        let (a, b) = (self.profile[i], self.profile[i + 1]);
        Vec2::new(a.0 + (b.0 - a.0) * w, a.1 + (b.1 - a.1) * w) * (self.scale * z)
    }

    fn goal_step(&self, r: Vec2, t: f64, dt: f64) -> Vec2 {
        goal_step(r, self.start, self.goal, self.duration, 1.0, t, dt)
    }

    fn phase_step(&self, z: f64, t: f64, dt: f64) -> f64 {
        let p = self.params;
        canonical_step_modified(
            z,
            p.alpha_z,
            1.0,
            self.duration,
            t,
            p.sample_interval(self.duration),
            dt,
        )
    }
}

/// Rollout of the transformation system from rest at the origin toward
/// `goal`, driven by a piecewise-linear forcing profile times the phase.
pub fn forced_rollout(
    profile: &[(f64, f64)],
    scale: f64,
    goal: Vec2,
    duration: f64,
    samples: usize,
    params: &DynamicsParams,
) -> Result<Trajectory> {
    if profile.len() < 2 || samples < 2 || !positive_finite(duration) {
        return Err(MpError::invalid(
            "forced rollout needs two profile samples, two output samples and a positive duration",
        ));
    }
    let schedule = ProfileSchedule {
        profile,
        scale,
        start: Vec2::zeros(),
        goal,
        duration,
        params,
    };
    let times: Vec<f64> = (0..samples)
        .map(|k| duration * k as f64 / (samples - 1) as f64)
        .collect();
    integrate(&schedule, params, 1.0, Vec2::zeros(), &times).into_trajectory(1.0)
}

/// Generates `spec.q` demonstrations in the primitive frame. Deterministic
/// in `spec.seed`.
pub fn synth_demos(spec: &SynthSpec) -> Result<Vec<Trajectory>> {
    spec.validate()?;
    let params = DynamicsParams::default();
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let noise = Normal::new(0.0, spec.noise_sd).map_err(|e| MpError::invalid(e.to_string()))?;
    let mut out = Vec::with_capacity(spec.q);
    for _ in 0..spec.q {
        let duration = draw(&mut rng, spec.duration_range);
        let amplitude = draw(&mut rng, spec.amplitude_range);
        let speed = draw(&mut rng, spec.speed_range);
        let angle = draw(&mut rng, spec.angle_range);
        let shape = rng.random_range(-1.0..=1.0);
        let dt = duration / (SYNTH_SAMPLES - 1) as f64;
        let clean: Vec<Vec2> = match spec.kind {
            SynthKind::LaneChange | SynthKind::Straight => {
                // exit speed within 15% of entry speed
                let dv = 0.15 * speed * shape;
                (0..SYNTH_SAMPLES)
                    .map(|k| {
                        let t = k as f64 * dt;
                        let u = t / duration;
                        let x = speed * t + 0.5 * dv * t * u;
                        let y = if spec.kind == SynthKind::LaneChange {
                            amplitude * smoothstep5(u)
                        } else {
                            0.0
                        };
                        Vec2::new(x, y)
                    })
                    .collect()
            }
            SynthKind::SharpTurn => {
                let dip = 0.15 + 0.15 * shape;
                let length = amplitude * angle.abs();
                let mean_speed = length / (duration * (1.0 - 2.0 * dip / PI));
                (0..SYNTH_SAMPLES)
                    .map(|k| {
                        let t = k as f64 * dt;
                        // arc length under v(t) = c (1 - dip sin(pi t / T))
                        let s = mean_speed
                            * (t - dip * duration / PI * (1.0 - (PI * t / duration).cos()));
                        let phi = s / amplitude * angle.signum();
                        Vec2::new(
                            amplitude * phi.abs().sin(),
                            angle.signum() * amplitude * (1.0 - phi.cos()),
                        )
                    })
                    .collect()
            }
            SynthKind::CustomForcing => {
                let goal = Vec2::new(speed * duration, 0.0);
                forced_rollout(
                    &spec.forcing,
                    amplitude,
                    goal,
                    duration,
                    SYNTH_SAMPLES,
                    &params,
                )?
                .points()
                .to_vec()
            }
        };
        let noisy = clean
            .into_iter()
            .map(|p| {
                if spec.noise_sd > 0.0 {
                    p + Vec2::new(noise.sample(&mut rng), noise.sample(&mut rng))
                } else {
                    p
                }
            })
            .collect();
        let traj = Trajectory::uniform(dt, noisy)?;
        out.push(prepare_demo(&traj, SYNTH_SAMPLES)?);
    }
    Ok(out)
}

/// Pooled mean Euclidean deviation of positions and velocities over every
/// sample of every pair. Velocities come from finite differences of the
/// positions on both sides.
pub fn pooled_deviation(pairs: &[(&Trajectory, &Trajectory)]) -> Result<(f64, f64)> {
    let mut dd = 0.0;
    let mut dv = 0.0;
    let mut n = 0usize;
    for (k, (a, b)) in pairs.iter().enumerate() {
        if a.len() != b.len() {
            return Err(MpError::ShapeMismatch(format!(
                "pair {k}: {} samples against {}",
                a.len(),
                b.len()
            )));
        }
        let (va, _) = finite_differences(a.times(), a.points());
        let (vb, _) = finite_differences(b.times(), b.points());
        for i in 0..a.len() {
            dd += (a.points()[i] - b.points()[i]).norm();
            dv += (va[i] - vb[i]).norm();
        }
        n += a.len();
    }
    if n == 0 {
        return Err(MpError::invalid("no samples to compare"));
    }
    Ok((dd / n as f64, dv / n as f64))
}

/// Regenerates demonstration `q` from its stored coefficients, goal and
/// duration, in the primitive frame.
pub fn regenerate_demo(mp: &LearnedMp, q: usize, params: &DynamicsParams) -> Result<Trajectory> {
    let (s_x, s_y) = mp
        .demo_coefficients(q)
        .ok_or_else(|| MpError::invalid(format!("`{}` has no demonstration {q}", mp.id)))?;
    let adj = AdjustmentSet {
        start: Vec2::zeros(),
        goal: mp.demo_goals[q],
        duration: mp.demo_durations[q],
        s_x,
        s_y,
        tau: 1.0,
    };
    regenerate(mp, &adj, params)
}

/// Average position and velocity deviation between the demonstrations and
/// their regenerations.
pub fn representation_deviation(
    demos: &[Trajectory],
    mp: &LearnedMp,
    params: &DynamicsParams,
) -> Result<(f64, f64)> {
    if demos.len() != mp.demo_count() {
        return Err(MpError::ShapeMismatch(format!(
            "{} demonstrations for a primitive trained on {}",
            demos.len(),
            mp.demo_count()
        )));
    }
    let mut prepared = Vec::with_capacity(demos.len());
    let mut regenerated = Vec::with_capacity(demos.len());
    for (q, demo) in demos.iter().enumerate() {
        let local = prepare_demo(demo, params.samples)?;
        let regen = resample(&regenerate_demo(mp, q, params)?, local.len())?;
        prepared.push(local);
        regenerated.push(regen);
    }
    let pairs: Vec<(&Trajectory, &Trajectory)> = prepared.iter().zip(&regenerated).collect();
    pooled_deviation(&pairs)
}

/// Acceleration at every sample from second differences of the positions.
pub fn second_difference_accelerations(traj: &Trajectory) -> Vec<Vec2> {
    finite_differences(traj.times(), traj.points()).1
}

/// Minimum distance from any sample of the trajectory to each target.
pub fn target_misses(traj: &Trajectory, targets: &[Vec2]) -> Vec<f64> {
    targets
        .iter()
        .map(|g| {
            traj.points()
                .iter()
                .map(|p| (p - g).norm())
                .fold(f64::INFINITY, f64::min)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct JoinMetrics {
    pub a_max: f64,
    pub misses: Vec<f64>,
}

/// Largest central-difference acceleration over the interior samples and the
/// miss distance of each target.
pub fn join_metrics(traj: &Trajectory, targets: &[Vec2]) -> Result<JoinMetrics> {
    if traj.len() < 3 {
        return Err(MpError::invalid("join metrics need at least 3 samples"));
    }
    let acc = second_difference_accelerations(traj);
    let a_max = acc[1..acc.len() - 1]
        .iter()
        .map(|a| a.norm())
        .fold(0.0, f64::max);
    Ok(JoinMetrics {
        a_max,
        misses: target_misses(traj, targets),
    })
}

/// Course angle of a primitive's regenerated end velocity under its default
/// adjustment.
pub fn nominal_heading_change(mp: &LearnedMp, params: &DynamicsParams) -> Result<f64> {
    let traj = regenerate(mp, &AdjustmentSet::defaults_for(mp), params)?;
    let v = traj
        .velocities()
        .map(|v| v[v.len() - 1])
        .unwrap_or_default();
    Ok(if v.norm() > 1e-9 { v.y.atan2(v.x) } else { 0.0 })
}

/// Initial conditions chaining each primitive's mean goal and duration,
/// starting at the origin heading along +x. Each later segment is rotated by
/// the heading change its predecessors produce.
pub fn chain_conditions(
    lib: &MpLibrary,
    ids: &[String],
    params: &DynamicsParams,
) -> Result<Vec<InitialCondition>> {
    let mut out = Vec::with_capacity(ids.len());
    let mut start = Vec2::zeros();
    let mut heading = 0.0;
    for id in ids {
        let mp = lib.get(id)?;
        let goal = start + rotation(heading) * mp.mean_goal();
        out.push(InitialCondition {
            id: id.clone(),
            duration: mp.mean_duration,
            start,
            goal,
        });
        start = goal;
        heading += nominal_heading_change(mp, params)?;
    }
    Ok(out)
}

/// One synthetic corpus to train and score.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CorpusConfig {
    pub name: String,
    pub synth: SynthSpec,
    #[serde(default = "default_kernels")]
    pub kernels: usize,
    /// Ranks scored for representation fidelity.
    #[serde(default = "default_ranks")]
    pub ranks: Vec<usize>,
}

fn default_kernels() -> usize {
    20
}

fn default_ranks() -> Vec<usize> {
    vec![1, 3, 5]
}

/// A chain of trained corpora joined by both methods.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SequenceConfig {
    pub name: String,
    /// Corpus names in execution order.
    pub segments: Vec<String>,
    /// Rank of the primitives used for joining; defaults to the largest
    /// scored rank of each corpus.
    #[serde(default)]
    pub rank: Option<usize>,
}

/// Pass/fail thresholds of the benchmark.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Gates {
    pub max_accel_ratio: f64,
    pub min_simple_jump: f64,
    pub max_proposed_jump: f64,
    pub max_miss_fraction: f64,
}

impl Default for Gates {
    fn default() -> Self {
        Gates {
            max_accel_ratio: 0.10,
            min_simple_jump: 1.0,
            max_proposed_jump: 0.05,
            max_miss_fraction: 0.05,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BenchConfig {
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub corpora: Vec<CorpusConfig>,
    #[serde(default)]
    pub sequences: Vec<SequenceConfig>,
    #[serde(default)]
    pub gates: Gates,
}

/// High-speed lane change of about 3.5 m.
pub fn lane_change_corpus(q: usize, seed: u64) -> SynthSpec {
    SynthSpec {
        kind: SynthKind::LaneChange,
        q,
        duration_range: (4.0, 5.5),
        amplitude_range: (3.0, 4.0),
        speed_range: (12.0, 16.0),
        angle_range: default_angle_range(),
        noise_sd: 0.002,
        seed,
        forcing: Vec::new(),
    }
}

/// Low-speed left turn of roughly ninety degrees.
pub fn sharp_turn_corpus(q: usize, seed: u64) -> SynthSpec {
    SynthSpec {
        kind: SynthKind::SharpTurn,
        q,
        duration_range: (4.0, 6.0),
        amplitude_range: (8.0, 12.0),
        speed_range: default_speed_range(),
        angle_range: (0.42 * PI, 0.58 * PI),
        noise_sd: 0.002,
        seed,
        forcing: Vec::new(),
    }
}

impl BenchConfig {
    /// Sharp-turn and lane-change corpora, each scored at ranks 1, 3 and 5,
    /// and one two-segment chain of each.
    pub fn standard() -> Self {
        BenchConfig {
            seed: 0,
            corpora: vec![
                CorpusConfig {
                    name: "sharp_turn".into(),
                    synth: sharp_turn_corpus(10, 11),
                    kernels: default_kernels(),
                    ranks: default_ranks(),
                },
                CorpusConfig {
                    name: "lane_change".into(),
                    synth: lane_change_corpus(10, 23),
                    kernels: default_kernels(),
                    ranks: default_ranks(),
                },
            ],
            sequences: vec![
                SequenceConfig {
                    name: "low_speed_turn_chain".into(),
                    segments: vec!["sharp_turn".into(), "sharp_turn".into()],
                    rank: None,
                },
                SequenceConfig {
                    name: "high_speed_lane_change_chain".into(),
                    segments: vec!["lane_change".into(), "lane_change".into()],
                    rank: None,
                },
            ],
            gates: Gates::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let mut names = std::collections::BTreeSet::new();
        for c in &self.corpora {
            if !names.insert(c.name.as_str()) {
                return Err(MpError::invalid(format!(
                    "duplicate corpus name `{}`",
                    c.name
                )));
            }
            c.synth.validate()?;
            if c.ranks.is_empty() {
                return Err(MpError::invalid(format!(
                    "corpus `{}` lists no ranks",
                    c.name
                )));
            }
            if c.ranks.iter().any(|&j| j < 1 || j > c.synth.q) {
                return Err(MpError::invalid(format!(
                    "corpus `{}`: ranks must lie in 1..={}",
                    c.name, c.synth.q
                )));
            }
        }
        for s in &self.sequences {
            if s.segments.is_empty() {
                return Err(MpError::invalid(format!(
                    "sequence `{}` has no segments",
                    s.name
                )));
            }
            for seg in &s.segments {
                let corpus = self
                    .corpora
                    .iter()
                    .find(|c| &c.name == seg)
                    .ok_or_else(|| MpError::UnknownId(seg.clone()))?;
                if let Some(j) = s.rank {
                    if j < 1 || j > corpus.synth.q {
                        return Err(MpError::invalid(format!(
                            "sequence `{}`: rank {j} out of range",
                            s.name
                        )));
                    }
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RankRow {
    pub rank: usize,
    pub position_deviation: f64,
    pub velocity_deviation: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CorpusReport {
    pub name: String,
    pub seed: u64,
    pub mean_path_length: f64,
    pub mean_speed: f64,
    pub spectrum_x: Vec<f64>,
    pub spectrum_y: Vec<f64>,
    pub rows: Vec<RankRow>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MethodReport {
    pub a_max: f64,
    pub a_max_global: f64,
    pub velocity_jumps: Vec<f64>,
    pub misses: Vec<f64>,
    pub switch_angles: Vec<f64>,
}

impl From<&SwitchReport> for MethodReport {
    fn from(r: &SwitchReport) -> Self {
        MethodReport {
            a_max: r.a_max,
            a_max_global: r.a_max_global,
            velocity_jumps: r.velocity_jumps.clone(),
            misses: r.misses.clone(),
            switch_angles: r.switch_angles.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SequenceReport {
    pub name: String,
    pub conditions: Vec<InitialCondition>,
    pub displacements: Vec<f64>,
    pub proposed: MethodReport,
    pub simple: MethodReport,
    pub accel_ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GateResult {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Report {
    pub config: BenchConfig,
    pub corpora: Vec<CorpusReport>,
    pub sequences: Vec<SequenceReport>,
    pub gates: Vec<GateResult>,
    pub passed: bool,
}

impl Report {
    pub fn to_json(&self) -> Result<String> {
        let mut s =
            serde_json::to_string_pretty(self).map_err(|e| MpError::Numerical(e.to_string()))?;
        s.push('\n');
        Ok(s)
    }
}

/// Trained artifacts kept alongside the report.
#[derive(Debug, Clone)]
pub struct BenchOutput {
    pub report: Report,
    pub demos: Vec<(String, Vec<Trajectory>)>,
    /// `(sequence name, proposed trajectory, simple trajectory)`.
    pub joins: Vec<(String, Trajectory, Trajectory)>,
}

fn non_increasing(values: &[f64]) -> bool {
    values
        .windows(2)
        .all(|w| w[1] <= w[0] * (1.0 + 1e-9) + 1e-12)
}

/// Trains every corpus, scores representation fidelity per rank, joins
/// every sequence both ways and evaluates the gates.
pub fn run_benchmark(config: &BenchConfig, params: &DynamicsParams) -> Result<BenchOutput> {
    config.validate()?;
    params.validate()?;
    let mut corpora = Vec::new();
    let mut demos_out = Vec::new();
    let mut gates = Vec::new();
    let mut lib_for_rank: Vec<(String, usize, LearnedMp)> = Vec::new();
    for corpus in &config.corpora {
        let mut spec = corpus.synth.clone();
        spec.seed = spec.seed.wrapping_add(config.seed);
        let demos = synth_demos(&spec)?;
        let mean_path_length =
            demos.iter().map(|d| d.path_length()).sum::<f64>() / demos.len() as f64;
        let mean_speed = demos
            .iter()
            .map(|d| d.path_length() / d.duration())
            .sum::<f64>()
            / demos.len() as f64;
        let mut rows = Vec::new();
        let mut spectrum = (Vec::new(), Vec::new());
        for &rank in &corpus.ranks {
            let options = TrainOptions {
                kernels: corpus.kernels,
                rank,
                ..TrainOptions::default()
            };
            let trained = train_type(&corpus.name, &demos, &options, params)?;
            let (dd, dv) = representation_deviation(&demos, &trained.mp, params)?;
            spectrum = (
                trained.mp.x.singular_values.clone(),
                trained.mp.y.singular_values.clone(),
            );
            rows.push(RankRow {
                rank,
                position_deviation: dd,
                velocity_deviation: dv,
            });
            lib_for_rank.push((corpus.name.clone(), rank, trained.mp));
        }
        let dd: Vec<f64> = rows.iter().map(|r| r.position_deviation).collect();
        let dv: Vec<f64> = rows.iter().map(|r| r.velocity_deviation).collect();
        let ordered = corpus.ranks.windows(2).all(|w| w[0] < w[1]);
        gates.push(GateResult {
            name: format!("{}: fidelity non-increasing in rank", corpus.name),
            passed: !ordered || (non_increasing(&dd) && non_increasing(&dv)),
            detail: format!("position {dd:?}, velocity {dv:?}"),
        });
        corpora.push(CorpusReport {
            name: corpus.name.clone(),
            seed: spec.seed,
            mean_path_length,
            mean_speed,
            spectrum_x: spectrum.0,
            spectrum_y: spectrum.1,
            rows,
        });
        demos_out.push((corpus.name.clone(), demos));
    }

    let mut sequences = Vec::new();
    let mut joins = Vec::new();
    for seq in &config.sequences {
        let mut lib = MpLibrary::new();
        for name in &seq.segments {
            let corpus = config
                .corpora
                .iter()
                .find(|c| &c.name == name)
                .ok_or_else(|| MpError::UnknownId(name.clone()))?;
            let rank = seq
                .rank
                .unwrap_or_else(|| corpus.ranks.iter().copied().max().unwrap_or(1));
            let mp = match lib_for_rank
                .iter()
                .find(|(n, j, _)| n == name && *j == rank)
            {
                Some((_, _, mp)) => mp.clone(),
                None => {
                    let demos = &demos_out
                        .iter()
                        .find(|(n, _)| n == name)
                        .ok_or_else(|| MpError::UnknownId(name.clone()))?
                        .1;
                    let options = TrainOptions {
                        kernels: corpus.kernels,
                        rank,
                        ..TrainOptions::default()
                    };
                    train_type(name, demos, &options, params)?.mp
                }
            };
            lib.insert(mp);
        }
        let conditions = chain_conditions(&lib, &seq.segments, params)?;
        let options = SequenceOptions::default();
        let (proposed_traj, proposed) = generate_sequence(&lib, &conditions, params, &options)?;
        let (simple_traj, simple) = simple_join(&lib, &conditions, params, &options)?;
        let displacements: Vec<f64> = conditions
            .iter()
            .map(|c| (c.goal - c.start).norm())
            .collect();
        let accel_ratio = if simple.a_max > 0.0 {
            proposed.a_max / simple.a_max
        } else {
            f64::INFINITY
        };
        let g = &config.gates;
        let simple_jump = simple.velocity_jumps.iter().copied().fold(0.0, f64::max);
        let proposed_jump = proposed.velocity_jumps.iter().copied().fold(0.0, f64::max);
        if conditions.len() > 1 && simple_jump >= g.min_simple_jump {
            gates.push(GateResult {
                name: format!("{}: acceleration ratio", seq.name),
                passed: accel_ratio <= g.max_accel_ratio,
                detail: format!(
                    "proposed {:.4} / simple {:.4} = {accel_ratio:.4}",
                    proposed.a_max, simple.a_max
                ),
            });
        }
        gates.push(GateResult {
            name: format!("{}: velocity continuity", seq.name),
            passed: proposed_jump <= g.max_proposed_jump,
            detail: format!("proposed jump {proposed_jump:.4}, simple jump {simple_jump:.4}"),
        });
        let worst = proposed
            .misses
            .iter()
            .zip(&displacements)
            .map(|(m, d)| if *d > 0.0 { m / d } else { *m })
            .fold(0.0, f64::max);
        gates.push(GateResult {
            name: format!("{}: target tracking", seq.name),
            passed: worst.is_finite() && worst <= g.max_miss_fraction,
            detail: format!("largest miss fraction {worst:.4}"),
        });
        sequences.push(SequenceReport {
            name: seq.name.clone(),
            conditions,
            displacements,
            proposed: MethodReport::from(&proposed),
            simple: MethodReport::from(&simple),
            accel_ratio,
        });
        joins.push((seq.name.clone(), proposed_traj, simple_traj));
    }
    let passed = gates.iter().all(|g| g.passed);
    Ok(BenchOutput {
        report: Report {
            config: config.clone(),
            corpora,
            sequences,
            gates,
            passed,
        },
        demos: demos_out,
        joins,
    })
}

/// Random `rows x cols` matrix with entries uniform in [-1, 1].
pub fn random_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| rng.random_range(-1.0..=1.0))
}
