#![allow(dead_code)]

use mpjoin::evalbench::{lane_change_corpus, sharp_turn_corpus, synth_demos};
use mpjoin::learning::{train_type, TrainOptions};
use mpjoin::{DynamicsParams, LearnedMp, MpLibrary, Trajectory};

pub fn lane_demos() -> Vec<Trajectory> {
    synth_demos(&lane_change_corpus(10, 23)).unwrap()
}

pub fn turn_demos() -> Vec<Trajectory> {
    synth_demos(&sharp_turn_corpus(10, 11)).unwrap()
}

pub fn train(id: &str, demos: &[Trajectory], rank: usize) -> LearnedMp {
    let options = TrainOptions {
        rank,
        ..TrainOptions::default()
    };
    train_type(id, demos, &options, &DynamicsParams::default())
        .unwrap()
        .mp
}

pub fn library(mps: Vec<LearnedMp>) -> MpLibrary {
    let mut lib = MpLibrary::new();
    for mp in mps {
        lib.insert(mp);
    }
    lib
}
