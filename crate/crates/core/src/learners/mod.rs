//! Slide-level learners: L2 logistic regression on cluster histograms and
//! gated-attention MIL on patch embeddings. All arithmetic is `f64`.

pub mod abmil;
mod logreg;
mod optim;
mod train;

pub use abmil::{bce_with_logit, read_mil_model, write_mil_model, Gradients, Layout, MilModel, MilShape};
pub use logreg::{logreg_fit, LogisticModel, DEFAULT_L2, DEFAULT_MAX_ITER};
pub use optim::{cyclic_lr, Adam, AdamConfig, CyclicLr};
pub use train::{train_abmil, write_history_csv, Bag, EpochRecord, TrainConfig, TrainOutcome};

#[derive(Debug, thiserror::Error)]
pub enum LearnError {
    #[error("both classes must be present")]
    SingleClass,
    #[error("bag has no instances")]
    EmptyBag,
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("non-finite values in {0}")]
    NonFinite(String),
    #[error("{0}")]
    InvalidInput(String),
    #[error(transparent)]
    Eval(#[from] crate::evaluation::EvalError),
}

pub type Result<T, E = LearnError> = std::result::Result<T, E>;

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `ln(1 + eˣ)` without overflow.
pub fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}
