//! Learned directional inverse-sensitivity and guided state-space exploration
//! for closed-loop control systems.
//!
//! The pipeline: simulate a [`dynamics::ClosedLoopSystem`], build
//! [`dataset::SensitivityDataset`]s from neighbouring trajectories, train an
//! [`approximator::MlpModel`] that predicts the direction of the inverse
//! sensitivity, then use it in [`explorer::reach_destination`] to steer a
//! trajectory towards a target state, to estimate reachable-set coverage, or
//! to falsify a safety property with [`falsification::falsify_rd`].

// `!(x > 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod approximator;
pub mod dataset;
pub mod dynamics;
pub mod error;
pub mod explorer;
pub mod falsification;
pub mod linalg;
pub mod parallel;
pub mod region;
pub mod sensitivity;
mod serde_state;

/// A point in state space.
pub type State = nalgebra::DVector<f64>;

pub use error::{Error, Result};
pub use region::Hyperbox;
