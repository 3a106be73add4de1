//! Learning emotive motion style for a simulated 2-D vacuum robot.
//!
//! A style discriminator maps trajectories into valence-arousal-dominance
//! space; its squared distance to a target emotion is added to the task cost
//! when optimizing trajectories. Labels come from a simulated human or from a
//! live labeling session.
//!
//! Numeric modules are generic over [`Real`] (`f32` or `f64`); the aliases
//! below fix the scalar for the common case.

// `!(x >= 0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod active;
pub mod adam;
pub mod baselines;
pub mod evaluation;
pub mod human;
pub mod lang;
pub mod net;
pub mod opt;
pub mod scalar;
pub mod seed;
pub mod sim;
pub mod vad;

pub use scalar::Real;
pub use vad::{EmotionLexicon, EvalEmotionSet, Vad};

pub type Vad64 = Vad<f64>;
pub type Vad32 = Vad<f32>;
pub use sim::{DynamicsParams, RobotState, Task, Trajectory};

pub type Trajectory64 = Trajectory<f64>;
pub type Trajectory32 = Trajectory<f32>;
pub type Task64 = Task<f64>;
