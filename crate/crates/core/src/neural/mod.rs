//! Drift distillation into a small feedforward network.
//!
//! A network `b_θ(z, t)` is regressed onto Brownian-bridge displacement
//! targets `(x₁ − x_t)/(1 − t)` with pairs drawn from an entropic coupling.
//! Gradients are derived by hand (reverse mode over dense layers) and the
//! optimizer is AdamW.

mod mlp;
mod optim;
mod train;

pub use mlp::{Activation, Gradients, MlpModel, CHECKPOINT_MAGIC};
pub use optim::AdamW;
pub use train::{
    grad_params, loss_eval, sample_training_batch, train, write_loss_curve, write_loss_curve_to, PairSampler, TrainBatch, TrainConfig,
    TrainOutcome,
};
