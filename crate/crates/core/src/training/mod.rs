//! Negative-SNR objective, permutation-invariant training, Adam and the
//! dual-mode training strategies.

mod loss;
mod optim;
mod pit;
mod train;

pub use loss::{neg_snr, neg_snr_loss, SNR_EPS};
pub use optim::{clip_gradients, Adam, EarlyStopper, PlateauSchedule};
pub use pit::{neg_snr_matrix, permutations, pit_loss, pit_neg_snr, MAX_PIT_SOURCES};
pub use train::{
    batch_gradients, evaluate_loss, gradient_snapshot, multitask_step, train_loop, write_history, EpochRecord,
    MultitaskWeights, Objective, PathLosses, Strategy, TrainConfig, TrainOutcome,
};
