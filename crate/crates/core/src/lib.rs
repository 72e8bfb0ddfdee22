//! Learning, regeneration and joining of planar motion primitives.
//!
//! Demonstrations of one manoeuvre type are turned into a forcing matrix,
//! split by SVD into a few basis rows (fitted once with Gaussian kernels) and
//! per-demonstration fine-tuning coefficients. A learned primitive can then be
//! regenerated for a new start, goal, duration and shape, and several
//! primitives can be joined into one sequence whose velocity stays
//! continuous across switch points.

pub mod cli;
pub mod dynamics;
pub mod error;
pub mod evalbench;
pub mod format;
pub mod learning;
pub mod rollout;
pub mod sequencer;
pub mod types;

pub use error::{MpError, Result};
pub use types::{
    validate_library, AdjustmentSet, AxisShape, DynamicsParams, InitialCondition, KernelBank,
    LearnedMp, MpLibrary, Trajectory, Vec2, Violation,
};
