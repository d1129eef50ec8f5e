//! Analytic backpropagation through the fusion head, Adam, and the
//! epoch/batch training loop.

mod adam;
mod backward;
mod gradcheck;
mod objective;
mod train;

pub use adam::{adam_step, AdamConfig, AdamState};
pub use backward::{backward, HeadGrads};
pub use gradcheck::{gradcheck, GradcheckConfig, GradcheckResult};
pub use objective::{batch_objective, sample_negatives, Batch, LossConfig, StepOutput};
pub use train::{history_csv, train, EpochRecord, TrainConfig, TrainOutcome};
