//! Trajectory-based driving behavior classification.
//!
//! A Bi-LSTM + multi-scale CNN fusion classifier over 5-point trajectory
//! windows, three baselines (per-class Gaussian HMM, Conv1D, vanilla LSTM),
//! imbalance handling (random over/under-sampling, class-weighted loss) and
//! imbalance-aware evaluation. All numerics are implemented here on a small
//! reverse-mode tape; see [`tape`].

pub mod checkpoint;
pub mod cli;
pub mod container;
pub mod data;
pub mod error;
pub mod gradcheck;
pub mod hmm;
pub mod metrics;
pub mod models;
pub mod nn;
pub mod optim;
pub mod param;
pub mod report;
pub mod rng;
pub mod synth;
pub mod tape;
pub mod tensor;
pub mod train;

pub use error::{Error, Result};
