//! A small feed-forward classifier: ReLU hidden layers, softmax output,
//! deterministic mini-batch SGD with weight decay and an optional DP-SGD step.

mod model;
mod train;

use std::fmt::Debug;

pub use model::{logit, Architecture, ModelParams, Prediction};
pub use train::{
    apply_sgd_step, batch_loss_and_gradient, clip_gradient, clip_gradient_in_place, train, DpConfig,
    TrainConfig,
};

use crate::error::Result;

/// Floating-point types the network can run in.
pub trait Real: num_traits::Float + Default + Debug + Send + Sync + 'static {
    fn from_f64(v: f64) -> Self;
    fn from_f32(v: f32) -> Self;
    fn as_f64(self) -> f64;
}

impl Real for f32 {
    fn from_f64(v: f64) -> Self {
        v as f32
    }
    fn from_f32(v: f32) -> Self {
        v
    }
    fn as_f64(self) -> f64 {
        self as f64
    }
}

impl Real for f64 {
    fn from_f64(v: f64) -> Self {
        v
    }
    fn from_f32(v: f32) -> Self {
        v as f64
    }
    fn as_f64(self) -> f64 {
        self
    }
}

/// Anything that can classify a feature vector and report class confidences.
///
/// Shadow models are accessed through this trait. Target models are only
/// ever reached through [`crate::attack::LabelOnly`], which hides confidences.
pub trait Classifier: Send + Sync {
    fn predict(&self, x: &[f32]) -> Result<Prediction>;

    fn confidence(&self, x: &[f32], label: usize) -> Result<f64> {
        let p = self.predict(x)?;
        p.confidences.get(label).copied().ok_or(crate::Error::DimensionMismatch {
            expected: p.confidences.len(),
            actual: label,
            context: "confidence label index",
        })
    }
}
