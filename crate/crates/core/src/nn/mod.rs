//! Minimal differentiable MLP stack: forward/backward, Adam, Polyak
//! averaging and a text checkpoint format.

mod checkpoint;
mod mlp;
mod optim;

pub use checkpoint::{Checkpoint, Tensor, FORMAT_HEADER, FORMAT_VERSION};
pub use mlp::{Backprop, Dense, Gradients, Mlp, Tape};
pub use optim::{adam_step, check_tau, polyak_update, AdamConfig, AdamState};
