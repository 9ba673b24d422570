//! Neural forward-variance curve trained under the empirical W1 loss.

mod adam;
mod grad_check;
mod mlp;
mod tape;
mod train;

pub use adam::{adam_step, AdamState};
pub use grad_check::{grad_check, GradCheckConfig, GradCheckReport};
pub use mlp::{softplus, Mlp, LEAKY_SLOPE, WIDTHS};
pub use tape::{simulate_neural, w1_loss_and_grad, NeuralNoise, Tape};
pub use train::{
    max_price_error, read_checkpoint, train, write_checkpoint, write_history_csv, Checkpoint,
    EpochReport, HistoryRow, TrainConfig, TrainOutcome,
};
