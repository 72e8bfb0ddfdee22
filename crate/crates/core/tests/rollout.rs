mod common;

use mpjoin::rollout::{regenerate, regenerate_with_steps, sweep, Axis, Variation};
use mpjoin::{AdjustmentSet, DynamicsParams, LearnedMp, Trajectory, Vec2};
use proptest::prelude::*;
use std::sync::OnceLock;

fn lane_mp() -> &'static LearnedMp {
    static MP: OnceLock<LearnedMp> = OnceLock::new();
    MP.get_or_init(|| common::train("lane", &common::lane_demos(), 5))
}

/// Response of the critically damped system, from rest at zero, to a unit
/// ramp in the goal starting at `t = 0`.
fn ramp_response(omega: f64, t: f64) -> f64 {
    if t <= 0.0 {
        0.0
    } else {
        t - 2.0 / omega + (-omega * t).exp() * (2.0 / omega + t)
    }
}

fn max_gap(a: &Trajectory, b: &Trajectory) -> f64 {
    a.points()
        .iter()
        .zip(b.points())
        .map(|(p, q)| (p - q).norm())
        .fold(0.0, f64::max)
}

#[test]
fn zero_shape_follows_the_ramp_closed_form() {
    let params = DynamicsParams::default();
    let omega = params.alpha_m / 2.0;
    let mut adj = AdjustmentSet::defaults_for(lane_mp());
    adj.s_x = vec![0.0; 5];
    adj.s_y = vec![0.0; 5];
    adj.start = Vec2::new(2.0, -1.0);
    adj.goal = Vec2::new(62.0, 5.0);
    adj.duration = 4.0;
    for tau in [1.0, 2.0] {
        adj.tau = tau;
        let traj = regenerate_with_steps(lane_mp(), &adj, &params, 20_000).unwrap();
        let span = adj.goal - adj.start;
        let rate = span / (tau * adj.duration);
        let mut worst: f64 = 0.0;
        for (t, p) in traj.times().iter().zip(traj.points()) {
            let along = rate
                * (ramp_response(omega / tau, *t)
                    - ramp_response(omega / tau, t - tau * adj.duration));
            worst = worst.max((p - (adj.start + along)).norm());
            let cross = (p - adj.start).perp(&span) / span.norm();
            assert!(cross.abs() < 1e-9);
        }
        assert!(worst < 1e-3 * span.norm(), "tau {tau}: {worst}");
        let lag = (traj.last() - adj.goal).norm();
        let expected = span.norm() / adj.duration
            * (2.0 / omega)
            * (1.0 - (-omega * adj.duration).exp() * (1.0 + omega * adj.duration / 2.0));
        assert!(
            (lag - expected).abs() < 1e-3 * span.norm(),
            "lag {lag} vs {expected}"
        );
    }
}

#[test]
fn doubling_tau_dilates_time() {
    let params = DynamicsParams::default();
    let base = AdjustmentSet::defaults_for(lane_mp());
    let slow = AdjustmentSet {
        tau: 2.0,
        ..base.clone()
    };
    let a = regenerate(lane_mp(), &base, &params).unwrap();
    let b = regenerate(lane_mp(), &slow, &params).unwrap();
    assert_eq!(a.len(), b.len());
    assert!((b.duration() - 2.0 * a.duration()).abs() < 1e-12);
    assert!(max_gap(&a, &b) < 1e-9);
    let (va, vb) = (a.velocities().unwrap(), b.velocities().unwrap());
    for (p, q) in va.iter().zip(vb) {
        assert!((p - 2.0 * q).norm() < 1e-9);
    }
}

#[test]
fn rollouts_are_deterministic() {
    let params = DynamicsParams::default();
    let adj = AdjustmentSet::defaults_for(lane_mp());
    let a = regenerate(lane_mp(), &adj, &params).unwrap();
    let b = regenerate(lane_mp(), &adj, &params).unwrap();
    assert_eq!(a, b);
}

#[test]
fn sweeps_apply_each_value() {
    let params = DynamicsParams::default();
    let mp = lane_mp();
    let base = AdjustmentSet::defaults_for(mp);
    let goals = vec![
        Vec2::new(55.0, 3.0),
        Vec2::new(60.0, -3.0),
        Vec2::new(70.0, 0.0),
    ];
    let out = sweep(mp, &base, &Variation::Goal(goals.clone()), &params).unwrap();
    assert_eq!(out.len(), 3);
    for (traj, g) in out.iter().zip(&goals) {
        let single = regenerate(
            mp,
            &AdjustmentSet {
                goal: *g,
                ..base.clone()
            },
            &params,
        )
        .unwrap();
        assert_eq!(traj, &single);
    }
    let durations = vec![3.0, 4.5, 6.0];
    let out = sweep(mp, &base, &Variation::Duration(durations.clone()), &params).unwrap();
    for (traj, d) in out.iter().zip(&durations) {
        assert!((traj.duration() - d).abs() < 1e-12);
        assert_eq!(traj.len(), params.samples + 1);
    }
    let v = Variation::Coefficient {
        axis: Axis::Y,
        index: 1,
        values: vec![-0.5, 0.5],
    };
    let out = sweep(mp, &base, &v, &params).unwrap();
    assert_ne!(out[0], out[1]);
    assert!((out[0].first() - out[1].first()).norm() < 1e-15);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn rollout_is_affine_in_goal(gx in 30.0f64..90.0, gy in -10.0f64..10.0, hx in 30.0f64..90.0, hy in -10.0f64..10.0) {
        let params = DynamicsParams::default();
        let base = AdjustmentSet::defaults_for(lane_mp());
        let run = |g: Vec2| regenerate(lane_mp(), &AdjustmentSet { goal: g, ..base.clone() }, &params).unwrap();
        let (g, h) = (Vec2::new(gx, gy), Vec2::new(hx, hy));
        let a = run(g);
        let b = run(h);
        let mid = run((g + h) / 2.0);
        for k in 0..a.len() {
            prop_assert!(((a.points()[k] + b.points()[k]) / 2.0 - mid.points()[k]).norm() < 1e-9);
        }
    }

    #[test]
    fn rollout_is_affine_in_coefficients(seed in proptest::collection::vec(-1.0f64..1.0, 10)) {
        let params = DynamicsParams::default();
        let base = AdjustmentSet::defaults_for(lane_mp());
        let with = |sx: Vec<f64>, sy: Vec<f64>| {
            regenerate(lane_mp(), &AdjustmentSet { s_x: sx, s_y: sy, ..base.clone() }, &params).unwrap()
        };
        let (sa, sb) = seed.split_at(5);
        let zero = with(vec![0.0; 5], vec![0.0; 5]);
        let a = with(sa.to_vec(), sb.to_vec());
        let b = with(sb.to_vec(), sa.to_vec());
        let sum: Vec<f64> = sa.iter().zip(sb).map(|(x, y)| x + y).collect();
        let ab = with(sum.clone(), sum);
        for k in 0..a.len() {
            let lhs = a.points()[k] + b.points()[k];
            let rhs = ab.points()[k] + zero.points()[k];
            prop_assert!((lhs - rhs).norm() < 1e-8 * (1.0 + rhs.norm()));
        }
    }

    #[test]
    fn translating_start_and_goal_translates_the_rollout(ox in -100.0f64..100.0, oy in -100.0f64..100.0) {
        let params = DynamicsParams::default();
        let base = AdjustmentSet::defaults_for(lane_mp());
        let offset = Vec2::new(ox, oy);
        let moved = AdjustmentSet { start: base.start + offset, goal: base.goal + offset, ..base.clone() };
        let a = regenerate(lane_mp(), &base, &params).unwrap();
        let b = regenerate(lane_mp(), &moved, &params).unwrap();
        for k in 0..a.len() {
            prop_assert!((a.points()[k] + offset - b.points()[k]).norm() < 1e-9);
        }
    }
}

#[test]
fn refined_grids_converge_at_first_order() {
    let params = DynamicsParams::default();
    let mp = lane_mp();
    let adj = AdjustmentSet {
        goal: Vec2::new(58.0, 4.5),
        duration: 4.6,
        s_x: mp.demo_coefficients(2).unwrap().0,
        s_y: mp.demo_coefficients(2).unwrap().1,
        ..AdjustmentSet::defaults_for(mp)
    };
    let end = |steps| {
        regenerate_with_steps(mp, &adj, &params, steps)
            .unwrap()
            .last()
    };
    let reference = end(64_000);
    let errors: Vec<f64> = [800, 1600, 3200]
        .iter()
        .map(|&n| (end(n) - reference).norm())
        .collect();
    for w in errors.windows(2) {
        let ratio = w[0] / w[1];
        assert!((1.8..=2.3).contains(&ratio), "{errors:?}");
    }
}
