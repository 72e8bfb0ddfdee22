mod common;

use mpjoin::evalbench::chain_conditions;
use mpjoin::rollout::regenerate;
use mpjoin::sequencer::{
    generate_sequence, plan_sequence, simple_join, SequenceOptions, ShapeOverride,
};
use mpjoin::{AdjustmentSet, DynamicsParams, InitialCondition, MpLibrary, Vec2};
use proptest::prelude::*;
use std::sync::OnceLock;

fn lane_lib() -> &'static MpLibrary {
    static LIB: OnceLock<MpLibrary> = OnceLock::new();
    LIB.get_or_init(|| common::library(vec![common::train("lane", &common::lane_demos(), 5)]))
}

fn lane_chain() -> Vec<InitialCondition> {
    chain_conditions(
        lane_lib(),
        &["lane".to_string(), "lane".to_string()],
        &DynamicsParams::default(),
    )
    .unwrap()
}

#[test]
fn single_segment_matches_regenerate() {
    let params = DynamicsParams::default();
    let mp = lane_lib().get("lane").unwrap();
    let cond = InitialCondition {
        id: "lane".into(),
        duration: 4.3,
        start: Vec2::new(1.0, 2.0),
        goal: Vec2::new(60.0, 6.0),
    };
    for tau in [1.0, 1.5] {
        let options = SequenceOptions {
            tau,
            ..SequenceOptions::default()
        };
        let (seq, report) =
            generate_sequence(lane_lib(), std::slice::from_ref(&cond), &params, &options).unwrap();
        let adj = AdjustmentSet {
            start: cond.start,
            goal: cond.goal,
            duration: cond.duration,
            tau,
            ..AdjustmentSet::defaults_for(mp)
        };
        let single = regenerate(mp, &adj, &params).unwrap();
        assert_eq!(seq.len(), single.len());
        for k in 0..seq.len() {
            assert!((seq.times()[k] - single.times()[k]).abs() < 1e-9);
            assert!((seq.points()[k] - single.points()[k]).norm() < 1e-9);
        }
        assert!(report.switch_times.is_empty());
        assert!(report.velocity_jumps.is_empty());
        let (simple, _) =
            simple_join(lane_lib(), std::slice::from_ref(&cond), &params, &options).unwrap();
        for k in 0..seq.len() {
            assert!((seq.points()[k] - simple.points()[k]).norm() < 1e-9);
        }
    }
}

#[test]
fn switch_velocity_is_continuous_and_baseline_jumps() {
    let params = DynamicsParams::default();
    let conds = lane_chain();
    let options = SequenceOptions::default();
    let (traj, report) = generate_sequence(lane_lib(), &conds, &params, &options).unwrap();
    let (simple, baseline) = simple_join(lane_lib(), &conds, &params, &options).unwrap();
    assert_eq!(traj.len(), simple.len());
    assert_eq!(report.switch_times.len(), 1);
    let switch = report.switch_times[0];
    let k = traj
        .times()
        .iter()
        .position(|t| (t - switch).abs() < 1e-9)
        .unwrap();
    let v = traj.velocities().unwrap();
    let a = traj.accelerations().unwrap();
    let dt = traj.times()[k + 1] - traj.times()[k];
    // a semi-implicit Euler step moves the velocity by dt times the acceleration at its start
    assert!((v[k + 1] - v[k] - a[k] * dt).norm() < 1e-9);
    assert!((v[k + 1] - v[k]).norm() <= report.a_max * dt + 1e-12);
    assert!(baseline.velocity_jumps[0] >= 1.0);
    assert!(report.a_max < 0.1 * baseline.a_max);
}

#[test]
fn switch_angles_follow_the_realized_course() {
    let params = DynamicsParams::default();
    let (traj, report) = generate_sequence(
        lane_lib(),
        &lane_chain(),
        &params,
        &SequenceOptions::default(),
    )
    .unwrap();
    assert_eq!(report.switch_angles[0], 0.0);
    let switch = report.switch_times[0];
    let k = traj
        .times()
        .iter()
        .position(|t| (t - switch).abs() < 1e-9)
        .unwrap();
    let v = traj.velocities().unwrap()[k];
    assert!((v.y.atan2(v.x) - report.switch_angles[1]).abs() < 1e-9);
    assert!(report.angle_passes >= 1);
}

#[test]
fn overrides_change_only_their_segment() {
    let params = DynamicsParams::default();
    let conds = lane_chain();
    let mp = lane_lib().get("lane").unwrap();
    let (sx, sy) = mp.demo_coefficients(0).unwrap();
    let options = SequenceOptions {
        overrides: vec![
            None,
            Some(ShapeOverride {
                s_x: sx.clone(),
                s_y: sy.clone(),
            }),
        ],
        ..SequenceOptions::default()
    };
    let plan = plan_sequence(lane_lib(), &conds, &options).unwrap();
    assert_eq!(plan.segments[1].s_x, sx);
    assert_eq!(plan.segments[0].s_x, mp.x.mean_s());
    let (a, _) =
        generate_sequence(lane_lib(), &conds, &params, &SequenceOptions::default()).unwrap();
    let (b, _) = generate_sequence(lane_lib(), &conds, &params, &options).unwrap();
    assert_ne!(a, b);
}

#[test]
fn joining_is_deterministic() {
    let params = DynamicsParams::default();
    let conds = lane_chain();
    let a = generate_sequence(lane_lib(), &conds, &params, &SequenceOptions::default()).unwrap();
    let b = generate_sequence(lane_lib(), &conds, &params, &SequenceOptions::default()).unwrap();
    assert_eq!(a.0, b.0);
    assert_eq!(a.1, b.1);
}

#[test]
fn sequence_tau_dilates_time() {
    let params = DynamicsParams::default();
    let conds = lane_chain();
    let (a, ra) =
        generate_sequence(lane_lib(), &conds, &params, &SequenceOptions::default()).unwrap();
    let slow = SequenceOptions {
        tau: 2.0,
        ..SequenceOptions::default()
    };
    let (b, rb) = generate_sequence(lane_lib(), &conds, &params, &slow).unwrap();
    for k in 0..a.len() {
        assert!((a.points()[k] - b.points()[k]).norm() < 1e-9);
        assert!((2.0 * a.times()[k] - b.times()[k]).abs() < 1e-9);
    }
    assert!((ra.switch_angles[1] - rb.switch_angles[1]).abs() < 1e-9);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn translating_the_chain_translates_the_sequence(ox in -200.0f64..200.0, oy in -200.0f64..200.0) {
        let params = DynamicsParams::default();
        let offset = Vec2::new(ox, oy);
        let conds = lane_chain();
        let moved: Vec<InitialCondition> = conds
            .iter()
            .map(|c| InitialCondition { start: c.start + offset, goal: c.goal + offset, ..c.clone() })
            .collect();
        let options = SequenceOptions::default();
        let (a, ra) = generate_sequence(lane_lib(), &conds, &params, &options).unwrap();
        let (b, rb) = generate_sequence(lane_lib(), &moved, &params, &options).unwrap();
        for k in 0..a.len() {
            prop_assert!((a.points()[k] + offset - b.points()[k]).norm() < 1e-8);
        }
        for (m, n) in ra.misses.iter().zip(&rb.misses) {
            prop_assert!((m - n).abs() < 1e-8);
        }
    }
}
