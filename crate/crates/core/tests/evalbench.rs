mod common;

use mpjoin::evalbench::{
    join_metrics, lane_change_corpus, representation_deviation, run_benchmark, sharp_turn_corpus,
    synth_demos, BenchConfig, SequenceConfig, SynthKind, SynthSpec,
};
use mpjoin::{DynamicsParams, Trajectory, Vec2};
use proptest::prelude::*;
use std::f64::consts::PI;

#[test]
fn corpora_are_deterministic_in_seed() {
    for spec in [lane_change_corpus(4, 3), sharp_turn_corpus(4, 3)] {
        assert_eq!(synth_demos(&spec).unwrap(), synth_demos(&spec).unwrap());
        let other = SynthSpec {
            seed: 4,
            ..spec.clone()
        };
        assert_ne!(synth_demos(&spec).unwrap(), synth_demos(&other).unwrap());
    }
}

#[test]
fn demos_sit_in_the_primitive_frame() {
    for spec in [lane_change_corpus(5, 1), sharp_turn_corpus(5, 1)] {
        for d in synth_demos(&spec).unwrap() {
            assert_eq!(d.len(), 100);
            assert!(d.first().norm() < 1e-9);
            assert!(d.start_time().abs() < 1e-12);
            let v = d.velocities().unwrap()[0];
            assert!(v.y.abs() < 1e-6 * v.norm());
            assert!(v.x > 0.0);
        }
    }
}

#[test]
fn noiseless_turn_matches_its_arc() {
    let spec = SynthSpec {
        amplitude_range: (10.0, 10.0),
        angle_range: (PI / 2.0, PI / 2.0),
        ..SynthSpec::new(SynthKind::SharpTurn, 1)
    };
    let d = &synth_demos(&spec).unwrap()[0];
    let (a, b, c) = (d.first(), d.points()[50], d.last());
    let center = circumcenter(a, b, c);
    for p in d.points() {
        assert!(((p - center).norm() - 10.0).abs() < 1e-9);
    }
    let swept = (a - center).angle(&(c - center));
    assert!((swept - PI / 2.0).abs() < 1e-9);
}

fn circumcenter(a: Vec2, b: Vec2, c: Vec2) -> Vec2 {
    let d = 2.0 * (a.x * (b.y - c.y) + b.x * (c.y - a.y) + c.x * (a.y - b.y));
    let (a2, b2, c2) = (a.norm_squared(), b.norm_squared(), c.norm_squared());
    Vec2::new(
        (a2 * (b.y - c.y) + b2 * (c.y - a.y) + c2 * (a.y - b.y)) / d,
        (a2 * (c.x - b.x) + b2 * (a.x - c.x) + c2 * (b.x - a.x)) / d,
    )
}

#[test]
fn custom_forcing_corpus_rolls_out() {
    let spec = SynthSpec {
        forcing: vec![(0.0, 0.0), (50.0, 120.0), (0.0, -120.0), (0.0, 0.0)],
        amplitude_range: (0.5, 1.5),
        ..SynthSpec::new(SynthKind::CustomForcing, 3)
    };
    let demos = synth_demos(&spec).unwrap();
    assert_eq!(demos.len(), 3);
    assert!(demos
        .iter()
        .all(|d| d.points().iter().all(|p| p.iter().all(|v| v.is_finite()))));
}

#[test]
fn metrics_of_a_circle() {
    let w: f64 = 0.5;
    let r = 8.0;
    let dt = 0.01;
    let pts: Vec<Vec2> = (0..400)
        .map(|k| {
            let a = w * k as f64 * dt;
            Vec2::new(r * a.cos(), r * a.sin())
        })
        .collect();
    let traj = Trajectory::uniform(dt, pts).unwrap();
    let m = join_metrics(&traj, &[Vec2::new(0.0, r), Vec2::new(20.0, 0.0)]).unwrap();
    let centripetal = r * w * w;
    assert!((m.a_max - centripetal).abs() < 1e-4 * centripetal);
    assert!(m.misses[0] < 0.05);
    assert!((m.misses[1] - 12.0).abs() < 1e-9);
}

#[test]
fn empty_config_gives_an_empty_passing_report() {
    let out = run_benchmark(&BenchConfig::default(), &DynamicsParams::default()).unwrap();
    assert!(out.report.corpora.is_empty());
    assert!(out.report.sequences.is_empty());
    assert!(out.report.passed);
}

#[test]
fn config_errors_are_reported() {
    let mut config = BenchConfig::standard();
    config.sequences.push(SequenceConfig {
        name: "bad".into(),
        segments: vec!["nope".into()],
        rank: None,
    });
    assert!(config.validate().is_err());
    let mut config = BenchConfig::standard();
    config.corpora[0].ranks = vec![0];
    assert!(config.validate().is_err());
    let text = r#"{"corpora": [{"name": "a", "synth": {"kind": "zigzag", "q": 2,
        "duration_range": [1, 2], "amplitude_range": [1, 2]}}]}"#;
    assert!(serde_json::from_str::<BenchConfig>(text).is_err());
}

#[test]
fn standard_report_is_deterministic_and_complete() {
    let params = DynamicsParams::default();
    let a = run_benchmark(&BenchConfig::standard(), &params)
        .unwrap()
        .report;
    let b = run_benchmark(&BenchConfig::standard(), &params)
        .unwrap()
        .report;
    assert_eq!(a.to_json().unwrap(), b.to_json().unwrap());
    assert_eq!(a.corpora.len(), 2);
    assert_eq!(a.sequences.len(), 2);
    for s in &a.sequences {
        assert_eq!(s.proposed.misses.len(), 2);
        assert!(s.simple.a_max > 0.0);
    }
    let json: serde_json::Value = serde_json::from_str(&a.to_json().unwrap()).unwrap();
    assert_eq!(json["config"]["seed"], 0);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn deviation_ignores_where_demos_were_recorded(angle in -3.0f64..3.0, ox in -500.0f64..500.0, oy in -500.0f64..500.0) {
        let params = DynamicsParams::default();
        let demos = synth_demos(&lane_change_corpus(4, 8)).unwrap();
        let mp = common::train("lane", &demos, 3);
        let moved: Vec<Trajectory> = demos.iter().map(|d| d.transformed(angle, Vec2::new(ox, oy), 2.0)).collect();
        let (dd, dv) = representation_deviation(&demos, &mp, &params).unwrap();
        let (md, mv) = representation_deviation(&moved, &mp, &params).unwrap();
        prop_assert!((dd - md).abs() < 1e-7);
        prop_assert!((dv - mv).abs() < 1e-6);
    }
}
