//! Gait kinematics from paired camera and motion-capture skeletons, with
//! learned corrections that bring the camera estimates closer to the
//! reference system.

// `!(x > 0.0)` style checks are meant to reject NaN too
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod descriptors;
pub mod evaluate;
pub mod events;
pub mod exec;
pub mod ingest;
pub mod kinematics;
pub mod learning;
pub mod model;
pub mod neuralnet;
pub mod pipeline;
pub mod synth;

pub use exec::Execution;
