use crate::corpus::Label;
use crate::features::SparseVector;
use crate::scalar::Scalar;

use super::{ModelError, Scores};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum LinearKind {
    Logistic,
    Hinge,
}

/// One-vs-rest linear model: `score[c] = weights[c] . x + bias[c]`.
///
/// Labels absent from the training data are marked inactive and score
/// `-inf`, so they are never predicted.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearModel<T> {
    weights: Vec<Vec<T>>,
    bias: Scores<T>,
    active: [bool; 4],
    kind: LinearKind,
    converged: bool,
}

impl<T: Scalar> LinearModel<T> {
    pub fn from_parts(
        weights: Vec<Vec<T>>,
        bias: Scores<T>,
        active: [bool; 4],
        kind: LinearKind,
        converged: bool,
    ) -> Result<Self, ModelError> {
        let dim = weights.first().map_or(0, Vec::len);
        if weights.len() != 4 || weights.iter().any(|w| w.len() != dim) {
            return Err(ModelError::InvalidParameters(
                "weights must be 4 rows of equal length".into(),
            ));
        }
        let finite = weights
            .iter()
            .flatten()
            .chain(bias.iter())
            .all(|v| v.is_finite());
        if !finite {
            return Err(ModelError::InvalidParameters(
                "non-finite weight or bias".into(),
            ));
        }
        if !active.iter().any(|&a| a) {
            return Err(ModelError::InvalidParameters("no active class".into()));
        }
        Ok(LinearModel {
            weights,
            bias,
            active,
            kind,
            converged,
        })
    }

    pub fn dim(&self) -> usize {
        self.weights[0].len()
    }

    pub fn weights(&self) -> &[Vec<T>] {
        &self.weights
    }

    pub fn bias(&self) -> &Scores<T> {
        &self.bias
    }

    pub fn active(&self) -> &[bool; 4] {
        &self.active
    }

    pub fn is_active(&self, label: Label) -> bool {
        self.active[label.index()]
    }

    pub fn kind(&self) -> LinearKind {
        self.kind
    }

    /// False when some subproblem hit its iteration limit.
    pub fn converged(&self) -> bool {
        self.converged
    }

    pub fn decision(&self, x: &SparseVector<T>) -> Result<Scores<T>, ModelError> {
        if x.dim() != self.dim() {
            return Err(ModelError::DimMismatch {
                expected: self.dim(),
                got: x.dim(),
            });
        }
        Ok(std::array::from_fn(|c| {
            if self.active[c] {
                x.dot(&self.weights[c]) + self.bias[c]
            } else {
                T::neg_infinity()
            }
        }))
    }
}
