//! Online learning for neural networks through near-convex online
//! optimization, with an episodic control application.
//!
//! Modules, bottom up:
//! - [`oco`]: projected online gradient descent and AdaGrad over Frobenius
//!   balls, regret traces, and the linearization wrapper for nearly-convex
//!   losses.
//! - [`neural`]: the two-layer symmetric-initialization network and the deep
//!   ReLU network, with analytic gradients and theory constants.
//! - [`rf_teacher`]: random-feature target functions and an NTK estimator.
//! - [`control`]: linear time-varying control episodes, disturbance-feedback
//!   neural policies and adjoint gradients.
//! - [`harness`]: configuration, experiments, comparators and trace output.

pub mod container;
pub mod control;
pub mod error;
pub mod harness;
pub mod neural;
pub mod oco;
pub mod rf_teacher;
pub mod rng;
pub mod tensor;

pub use error::{Error, Result};
pub use tensor::Tensor;
