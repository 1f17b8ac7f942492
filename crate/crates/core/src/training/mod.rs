//! L1 training with Adam and step-halving learning rates, in scratch,
//! pre-training and fine-tuning phases, with resumable checkpoints.

mod optim;
mod schedule;
mod trainer;

pub use optim::{l1_loss, Adam};
pub use schedule::{Phase, Schedule};
pub use trainer::{RunOutputs, StepRecord, TrainConfig, Trainer};
