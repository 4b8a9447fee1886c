//! The three classifiers: multinomial naive Bayes over counts, and two
//! one-vs-rest linear models over TF-IDF (L2 logistic regression and a
//! hinge-loss SGD classifier).
//!
//! Every model scores the four labels; [`predict`] turns scores into a
//! label.

mod linear;
mod logistic;
mod naive_bayes;
mod sgd;

pub use linear::{LinearKind, LinearModel};
pub use logistic::{fit_binary_logistic, lr_fit, BinaryFit, BinaryLogistic};
pub use naive_bayes::{nb_fit, NbModel};
pub use sgd::{sgd_fit, sgd_learning_rate, ShuffleRng};

use thiserror::Error;

use crate::corpus::Label;
use crate::features::SparseVector;
use crate::scalar::Scalar;

/// Scores in label-code order.
pub type Scores<T> = [T; 4];

#[derive(Debug, Error, PartialEq)]
pub enum ModelError {
    #[error("training set is empty")]
    EmptyTrainingSet,
    #[error("{features} feature rows but {labels} labels")]
    LengthMismatch { features: usize, labels: usize },
    #[error("feature dimension {got} does not match model dimension {expected}")]
    DimMismatch { expected: usize, got: usize },
    #[error("smoothing constant must be positive, got {0}")]
    InvalidAlpha(f64),
    #[error("training data contains a single class ({0}); one-vs-rest needs at least two")]
    SingleClass(Label),
    #[error("no finite score to choose from")]
    NoFiniteScore,
    #[error("invalid training configuration: {0}")]
    InvalidConfig(String),
    #[error("invalid model parameters: {0}")]
    InvalidParameters(String),
}

/// Hyperparameters for all three trainers.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    /// Naive Bayes additive smoothing.
    pub nb_alpha: f64,
    /// Logistic regression inverse regularization strength.
    pub lr_c: f64,
    /// Stop once the gradient max-norm falls to this value.
    pub lr_tol: f64,
    /// Newton iterations per one-vs-rest subproblem.
    pub lr_max_iter: usize,
    /// SGD L2 penalty.
    pub sgd_alpha: f64,
    pub sgd_max_epochs: usize,
    /// Minimum per-epoch improvement of the mean training objective.
    pub sgd_tol: f64,
    /// Consecutive epochs below `sgd_tol` before stopping.
    pub sgd_patience: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            nb_alpha: 1.0,
            lr_c: 100.0,
            lr_tol: 1e-4,
            lr_max_iter: 100,
            sgd_alpha: 1e-4,
            sgd_max_epochs: 1000,
            sgd_tol: 1e-3,
            sgd_patience: 5,
            seed: 42,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), ModelError> {
        let positive = [
            ("nb_alpha", self.nb_alpha),
            ("lr_c", self.lr_c),
            ("lr_tol", self.lr_tol),
            ("sgd_alpha", self.sgd_alpha),
            ("sgd_tol", self.sgd_tol),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(ModelError::InvalidConfig(format!(
                    "{name} must be positive, got {v}"
                )));
            }
        }
        if self.lr_max_iter == 0 || self.sgd_max_epochs == 0 || self.sgd_patience == 0 {
            return Err(ModelError::InvalidConfig(
                "iteration, epoch and patience limits must be at least 1".into(),
            ));
        }
        Ok(())
    }
}

/// Highest score wins; ties go to the lowest label code. NaN never wins.
pub fn predict<T: Scalar>(scores: &Scores<T>) -> Result<Label, ModelError> {
    let mut best: Option<(Label, T)> = None;
    for label in Label::ALL {
        let s = scores[label.index()];
        if s.is_nan() || s == T::neg_infinity() {
            continue;
        }
        if best.is_none_or(|(_, b)| s > b) {
            best = Some((label, s));
        }
    }
    best.map(|(l, _)| l).ok_or(ModelError::NoFiniteScore)
}

/// Shared shape checks; returns the common dimension and which labels occur.
fn check_training<T: Scalar>(
    x: &[SparseVector<T>],
    y: &[Label],
) -> Result<(usize, [usize; 4]), ModelError> {
    if x.is_empty() {
        return Err(ModelError::EmptyTrainingSet);
    }
    if x.len() != y.len() {
        return Err(ModelError::LengthMismatch {
            features: x.len(),
            labels: y.len(),
        });
    }
    let dim = x[0].dim();
    if let Some(bad) = x.iter().find(|v| v.dim() != dim) {
        return Err(ModelError::DimMismatch {
            expected: dim,
            got: bad.dim(),
        });
    }
    let mut counts = [0usize; 4];
    for l in y {
        counts[l.index()] += 1;
    }
    Ok((dim, counts))
}

fn require_two_classes(y: &[Label], counts: &[usize; 4]) -> Result<(), ModelError> {
    if counts.iter().filter(|&&c| c > 0).count() < 2 {
        return Err(ModelError::SingleClass(y[0]));
    }
    Ok(())
}
