//! Masking, the joint objective `L_mp + λ·L_cp`, and the training loop.

mod loss;
mod masking;
mod optim;
mod train;

pub use loss::{batch_loss, compute_loss, loss_and_gradients, LossBreakdown, MaskedEntry};
pub use masking::{mask_tokens, Corruption, MaskedInput, MaskingConfig};
pub use optim::Adam;
pub use train::{
    prepare_corpus, train, train_from, write_step_log, Mode, PreparedCorpus, Preset, StepRecord,
    TrainingConfig, TrainingOutcome,
};
