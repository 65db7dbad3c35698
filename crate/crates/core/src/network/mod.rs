//! Joint-axis prediction network: Siamese per-part encoders (per-kind MLPs
//! plus two graph-attention layers) and a pairwise scoring head over the
//! dense part1 × part2 entity product, with the two-term training loss.

mod gradcheck;
mod loss;
mod model;
mod train;

pub use gradcheck::{gradcheck_suite, gradient_check, GradCheckReport};
pub use loss::{loss_ce, loss_sym, Labels};
pub use model::{Model, ModelParams, NetworkConfig, DEFAULT_WIDTH};
pub use train::{train, EpochLog, TrainConfig, TrainSample};

use thiserror::Error as ThisError;

#[derive(Debug, ThisError)]
pub enum Error {
    #[error("label matrix has no positive entries")]
    NoPositiveLabels,

    #[error("label ({u}, {v}) outside the {n}x{m} matrix")]
    LabelOutOfRange { u: usize, v: usize, n: usize, m: usize },

    #[error("training dataset is empty")]
    EmptyDataset,

    #[error("both loss terms disabled")]
    NoLossTerms,

    #[error("graph has no vertices")]
    EmptyGraph,

    #[error("checkpoint does not hold this model: {0}")]
    BadCheckpoint(String),

    #[error(transparent)]
    Autodiff(#[from] jf_autodiff::Error),
}
