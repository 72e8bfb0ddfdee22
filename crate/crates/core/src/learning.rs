//! Learning one primitive type from several demonstrations.
//!
//! Each demonstration is resampled to a fixed number of samples and moved
//! into the primitive frame (start at the origin, initial heading along +x).
//! Inverting the transformation system gives the forcing each demonstration
//! implies; stacking those per axis gives a `Q x C` matrix whose truncated SVD
//! separates a few shared basis rows from per-demonstration coefficients. The
//! basis rows are then fitted with normalized Gaussian kernels.

use log::warn;
use nalgebra::{DMatrix, DVector};

use crate::dynamics::{kernel_activations, make_kernel_bank, DENOMINATOR_FLOOR};
use crate::error::{MpError, Result};
use crate::types::{
    finite_differences, nonnegative_finite, positive_finite, AxisShape, DynamicsParams, KernelBank,
    LearnedMp, Trajectory, Vec2,
};

/// Samples per demonstration after resampling.
pub const DEFAULT_SAMPLES: usize = 100;

/// Resamples to `count` uniformly spaced samples over the original time span
/// by linear interpolation; derivatives are recomputed by finite differences.
pub fn resample(traj: &Trajectory, count: usize) -> Result<Trajectory> {
    if count < 2 {
        return Err(MpError::invalid(format!(
            "resample count must be at least 2, got {count}"
        )));
    }
    let times = traj.times();
    let pts = traj.points();
    let t0 = times[0];
    let span = traj.duration();
    let mut out_t = Vec::with_capacity(count);
    let mut out_p = Vec::with_capacity(count);
    let mut seg = 0;
    for k in 0..count {
        let t = if k == count - 1 {
            times[times.len() - 1]
        } else {
            t0 + span * k as f64 / (count - 1) as f64
        };
        while seg + 2 < times.len() && times[seg + 1] <= t {
            seg += 1;
        }
        let (ta, tb) = (times[seg], times[seg + 1]);
        let u = ((t - ta) / (tb - ta)).clamp(0.0, 1.0);
        out_t.push(t);
        out_p.push(pts[seg] + (pts[seg + 1] - pts[seg]) * u);
    }
    Ok(Trajectory::new(out_t, out_p)?.with_finite_differences())
}

/// Rigid transform that moves a trajectory into the primitive frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrameTransform {
    /// Heading of the original trajectory at its first sample.
    pub heading: f64,
    pub origin: Vec2,
    pub start_time: f64,
}

impl FrameTransform {
    /// Maps a primitive-frame trajectory back to the original frame.
    pub fn restore(&self, traj: &Trajectory) -> Trajectory {
        traj.transformed(self.heading, self.origin, self.start_time)
    }
}

/// Translates the first sample to the origin at t = 0 and rotates so the
/// initial velocity points along +x. A trajectory starting at rest is only
/// translated.
pub fn normalize_frame(traj: &Trajectory) -> (Trajectory, FrameTransform) {
    let origin = traj.first();
    let v0 = match traj.velocities() {
        Some(v) => v[0],
        None => finite_differences(traj.times(), traj.points()).0[0],
    };
    let heading = if v0.norm() > 1e-9 {
        v0.y.atan2(v0.x)
    } else {
        0.0
    };
    let tf = FrameTransform {
        heading,
        origin,
        start_time: traj.start_time(),
    };
    let local =
        traj.transformed(0.0, -origin, -tf.start_time)
            .transformed(-heading, Vec2::zeros(), 0.0);
    (local, tf)
}

/// Resample plus frame normalization, the form every learning step expects.
pub fn prepare_demo(traj: &Trajectory, samples: usize) -> Result<Trajectory> {
    let resampled = resample(traj, samples)?;
    let (local, _) = normalize_frame(&resampled);
    Ok(local.with_finite_differences())
}

/// Forcing implied by a demonstration, per axis:
/// `f = tau^2 * a - alpha_m * (beta_m * (r - x) - tau * v)`, where `r` is the
/// moving goal ramping from `start` to `goal` over `tau * duration`.
pub fn inverse_forcing(
    demo: &Trajectory,
    params: &DynamicsParams,
    start: Vec2,
    goal: Vec2,
    duration: f64,
    tau: f64,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let vel = demo
        .velocities()
        .ok_or_else(|| MpError::invalid("inverse forcing needs velocities"))?;
    let acc = demo
        .accelerations()
        .ok_or_else(|| MpError::invalid("inverse forcing needs accelerations"))?;
    if !positive_finite(duration) || !positive_finite(tau) {
        return Err(MpError::invalid("duration and tau must be positive"));
    }
    let t0 = demo.start_time();
    let horizon = tau * duration;
    let mut fx = Vec::with_capacity(demo.len());
    let mut fy = Vec::with_capacity(demo.len());
    for (i, (&t, &x)) in demo.times().iter().zip(demo.points()).enumerate() {
        let progress = ((t - t0) / horizon).clamp(0.0, 1.0);
        let r = start + (goal - start) * progress;
        let f = acc[i] * (tau * tau) - (params.beta_m * (r - x) - vel[i] * tau) * params.alpha_m;
        fx.push(f.x);
        fy.push(f.y);
    }
    Ok((fx, fy))
}

/// Stacked forcing targets of one axis, one row per demonstration.
#[derive(Debug, Clone, PartialEq)]
pub struct ForcingMatrix {
    pub values: DMatrix<f64>,
}

impl ForcingMatrix {
    pub fn demos(&self) -> usize {
        self.values.nrows()
    }

    pub fn samples(&self) -> usize {
        self.values.ncols()
    }
}

/// Builds the x and y forcing matrices. Every demonstration must already be
/// prepared with the same sample count; each uses its own duration, first
/// point and last point as `T`, `b` and `g`.
pub fn build_forcing_matrix(
    demos: &[Trajectory],
    params: &DynamicsParams,
    tau: f64,
) -> Result<(ForcingMatrix, ForcingMatrix)> {
    let first = demos
        .first()
        .ok_or_else(|| MpError::invalid("need at least one demonstration"))?;
    let c = first.len();
    let mut fx = DMatrix::zeros(demos.len(), c);
    let mut fy = DMatrix::zeros(demos.len(), c);
    for (q, demo) in demos.iter().enumerate() {
        if demo.len() != c {
            return Err(MpError::ShapeMismatch(format!(
                "demonstration {q} has {} samples, expected {c}",
                demo.len()
            )));
        }
        let (rx, ry) = inverse_forcing(
            demo,
            params,
            demo.first(),
            demo.last(),
            demo.duration(),
            tau,
        )?;
        if rx.iter().chain(&ry).any(|v| !v.is_finite()) {
            return Err(MpError::Numerical(format!(
                "non-finite forcing in demonstration {q}"
            )));
        }
        fx.row_mut(q).copy_from_slice(&rx);
        fy.row_mut(q).copy_from_slice(&ry);
    }
    Ok((ForcingMatrix { values: fx }, ForcingMatrix { values: fy }))
}

/// Rank-`J` split `F ~ coefficients * basis`.
#[derive(Debug, Clone, PartialEq)]
pub struct ShapeDecomposition {
    /// J x C, first J rows of `Sigma V^T`.
    pub basis: DMatrix<f64>,
    /// Q x J, first J columns of `U`.
    pub coefficients: DMatrix<f64>,
    /// All min(Q, C) singular values, descending.
    pub spectrum: Vec<f64>,
}

impl ShapeDecomposition {
    pub fn reconstruction(&self) -> DMatrix<f64> {
        &self.coefficients * &self.basis
    }
}

/// Truncated SVD. Each (coefficient column, basis row) pair is signed so the
/// largest-magnitude entry of the basis row is positive.
pub fn svd_decompose(forcing: &ForcingMatrix, rank: usize) -> Result<ShapeDecomposition> {
    let (q, c) = forcing.values.shape();
    let k = q.min(c);
    if rank < 1 || rank > k {
        return Err(MpError::invalid(format!(
            "rank must be in 1..={k}, got {rank}"
        )));
    }
    let svd = forcing.values.clone().svd(true, true);
    let u = svd
        .u
        .as_ref()
        .ok_or_else(|| MpError::Numerical("SVD did not produce U".into()))?;
    let v_t = svd
        .v_t
        .as_ref()
        .ok_or_else(|| MpError::Numerical("SVD did not produce V".into()))?;
    let spectrum: Vec<f64> = svd.singular_values.iter().copied().collect();
    let mut basis = DMatrix::zeros(rank, c);
    let mut coefficients = DMatrix::zeros(q, rank);
    for (j, &singular) in spectrum.iter().enumerate().take(rank) {
        let mut row = v_t.row(j) * singular;
        let mut col = u.column(j).into_owned();
        let peak = row
            .iter()
            .copied()
            .fold(0.0f64, |m, v| if v.abs() > m.abs() { v } else { m });
        if peak < 0.0 {
            row.neg_mut();
            col.neg_mut();
        }
        basis.row_mut(j).copy_from(&row);
        coefficients.column_mut(j).copy_from(&col);
    }
    Ok(ShapeDecomposition {
        basis,
        coefficients,
        spectrum,
    })
}

/// Smallest `J` whose leading singular values hold `energy_fraction` of the
/// total squared energy.
pub fn suggest_rank(spectrum: &[f64], energy_fraction: f64) -> Result<usize> {
    if spectrum.is_empty() {
        return Err(MpError::invalid("empty spectrum"));
    }
    if !(energy_fraction > 0.0 && energy_fraction <= 1.0) {
        return Err(MpError::invalid(format!(
            "energy fraction must be in (0, 1], got {energy_fraction}"
        )));
    }
    if spectrum.iter().any(|s| !nonnegative_finite(*s)) {
        return Err(MpError::invalid(
            "singular values must be finite and non-negative",
        ));
    }
    if spectrum.windows(2).any(|w| w[1] > w[0]) {
        return Err(MpError::invalid(
            "singular values must be sorted descending",
        ));
    }
    let total: f64 = spectrum.iter().map(|s| s * s).sum();
    if total == 0.0 {
        return Ok(1);
    }
    let mut acc = 0.0;
    for (j, s) in spectrum.iter().enumerate() {
        acc += s * s;
        if acc >= energy_fraction * total {
            return Ok(j + 1);
        }
    }
    Ok(spectrum.len())
}

/// Phase of the logistic-derivative canonical system at `t`, from its
/// closed-form solution with `z(0) = 1`.
pub fn phase_at(params: &DynamicsParams, duration: f64, tau: f64, t: f64) -> f64 {
    let sample_dt = params.sample_interval(duration);
    let a = |t: f64| params.alpha_z * (tau * duration - t) / (tau * sample_dt);
    let sigma = |a: f64| {
        if a >= 0.0 {
            1.0 / (1.0 + (-a).exp())
        } else {
            let e = a.exp();
            e / (1.0 + e)
        }
    };
    (1.0 + sample_dt * (sigma(a(t)) - sigma(a(0.0)))).max(0.0)
}

/// Result of fitting one basis row.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightFit {
    pub weights: Vec<f64>,
    pub residual_rms: f64,
    /// The design matrix was numerically rank deficient; `weights` is the
    /// minimum-norm solution.
    pub rank_deficient: bool,
}

/// Least-squares kernel weights for one basis row:
/// minimizes `sum_c (target_c - [sum_i w_i psi_i(t_c) / sum_i psi_i(t_c)] z_c)^2`.
pub fn fit_weights(
    target: &[f64],
    bank: &KernelBank,
    row: usize,
    phase: &[f64],
    t_norm: &[f64],
) -> Result<WeightFit> {
    let c = target.len();
    if phase.len() != c || t_norm.len() != c {
        return Err(MpError::ShapeMismatch(format!(
            "target has {c} samples, phase {} and time {}",
            phase.len(),
            t_norm.len()
        )));
    }
    if row >= bank.rows {
        return Err(MpError::invalid(format!(
            "row {row} outside a {}-row bank",
            bank.rows
        )));
    }
    let n = bank.cols;
    let mut design = DMatrix::zeros(c, n);
    for k in 0..c {
        let act = kernel_activations(bank, row, t_norm[k]);
        let den = act.iter().sum::<f64>().max(DENOMINATOR_FLOOR);
        for i in 0..n {
            design[(k, i)] = act[i] / den * phase[k];
        }
    }
    let y = DVector::from_column_slice(target);
    let svd = design.clone().svd(true, true);
    let smax = svd.singular_values.max();
    let tol = smax * 1e-12 * (c.max(n) as f64);
    let rank_deficient = smax == 0.0 || n > c || svd.singular_values.iter().any(|&s| s <= tol);
    let w = if smax == 0.0 {
        DVector::zeros(n)
    } else {
        svd.solve(&y, tol)
            .map_err(|e| MpError::Numerical(e.to_string()))?
    };
    let resid = &design * &w - &y;
    let residual_rms = (resid.norm_squared() / c as f64).sqrt();
    if rank_deficient {
        warn!("kernel design matrix is rank deficient; using the minimum-norm weights");
    }
    Ok(WeightFit {
        weights: w.iter().copied().collect(),
        residual_rms,
        rank_deficient,
    })
}

/// Training options for one primitive type.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainOptions {
    pub kernels: usize,
    pub rank: usize,
    pub samples: usize,
    pub forcing_scale: f64,
}

impl Default for TrainOptions {
    fn default() -> Self {
        TrainOptions {
            kernels: 20,
            rank: 5,
            samples: DEFAULT_SAMPLES,
            forcing_scale: 1.0,
        }
    }
}

/// Learned primitive plus fit diagnostics.
#[derive(Debug, Clone)]
pub struct TrainReport {
    pub mp: LearnedMp,
    /// Residual RMS of each basis-row fit, per axis.
    pub residuals_x: Vec<f64>,
    pub residuals_y: Vec<f64>,
    pub rank_deficient: bool,
}

/// Full learning pipeline for one type.
pub fn train_type(
    id: &str,
    demos: &[Trajectory],
    options: &TrainOptions,
    params: &DynamicsParams,
) -> Result<TrainReport> {
    params.validate()?;
    if demos.is_empty() {
        return Err(MpError::invalid("need at least one demonstration"));
    }
    if options.rank < 1 || options.rank > demos.len() {
        return Err(MpError::invalid(format!(
            "rank J must be in 1..={} (the demonstration count), got {}",
            demos.len(),
            options.rank
        )));
    }
    if options.rank > options.samples {
        return Err(MpError::invalid("rank cannot exceed the sample count"));
    }
    if !positive_finite(options.forcing_scale) {
        return Err(MpError::invalid("forcing scale must be positive"));
    }
    let bank = make_kernel_bank(options.kernels, options.rank)?;
    let prepared = demos
        .iter()
        .map(|d| prepare_demo(d, options.samples))
        .collect::<Result<Vec<_>>>()?;
    let (fx, fy) = build_forcing_matrix(&prepared, params, 1.0)?;
    let dec_x = svd_decompose(&fx, options.rank)?;
    let dec_y = svd_decompose(&fy, options.rank)?;

    let durations: Vec<f64> = prepared.iter().map(|d| d.duration()).collect();
    let mean_duration = durations.iter().sum::<f64>() / durations.len() as f64;
    let c = options.samples;
    let t_norm: Vec<f64> = (0..c).map(|k| k as f64 / (c - 1) as f64).collect();
    let phase: Vec<f64> = t_norm
        .iter()
        .map(|u| phase_at(params, mean_duration, 1.0, u * mean_duration))
        .collect();

    let mut rank_deficient = false;
    let mut fit_axis = |dec: &ShapeDecomposition| -> Result<(DMatrix<f64>, Vec<f64>)> {
        let mut weights = DMatrix::zeros(options.rank, options.kernels);
        let mut residuals = Vec::with_capacity(options.rank);
        for j in 0..options.rank {
            let target: Vec<f64> = dec
                .basis
                .row(j)
                .iter()
                .map(|v| v / options.forcing_scale)
                .collect();
            let fit = fit_weights(&target, &bank, j, &phase, &t_norm)?;
            rank_deficient |= fit.rank_deficient;
            weights.row_mut(j).copy_from_slice(&fit.weights);
            residuals.push(fit.residual_rms * options.forcing_scale);
        }
        Ok((weights, residuals))
    };
    let (wx, residuals_x) = fit_axis(&dec_x)?;
    let (wy, residuals_y) = fit_axis(&dec_y)?;

    let mp = LearnedMp {
        id: id.to_string(),
        bank,
        mean_duration,
        forcing_scale: options.forcing_scale,
        x: AxisShape {
            weights: wx,
            singular_values: dec_x.spectrum,
            demo_s: dec_x.coefficients,
        },
        y: AxisShape {
            weights: wy,
            singular_values: dec_y.spectrum,
            demo_s: dec_y.coefficients,
        },
        demo_goals: prepared.iter().map(|d| d.last()).collect(),
        demo_durations: durations,
    };
    Ok(TrainReport {
        mp,
        residuals_x,
        residuals_y,
        rank_deficient,
    })
}
