use crate::corpus::Label;
use crate::features::SparseVector;
use crate::scalar::Scalar;

use super::{check_training, ModelError, Scores};

/// Multinomial naive Bayes with additive smoothing.
///
/// `feature_log_prob[c][t]` is `ln((T_ct + alpha) / (sum_t' T_ct' + alpha * V))`
/// where `T_ct` is the total count of term `t` over class-`c` documents.
/// A class with no training documents gets a prior of `-inf` and is
/// never predicted.
#[derive(Debug, Clone, PartialEq)]
pub struct NbModel<T> {
    class_log_prior: Scores<T>,
    feature_log_prob: Vec<Vec<T>>,
    alpha: T,
    vocab_size: usize,
}

pub fn nb_fit<T: Scalar>(
    x: &[SparseVector<T>],
    y: &[Label],
    alpha: T,
) -> Result<NbModel<T>, ModelError> {
    if !(alpha > T::zero() && alpha.is_finite()) {
        return Err(ModelError::InvalidAlpha(alpha.widen()));
    }
    let (v, class_docs) = check_training(x, y)?;
    let mut totals = vec![vec![T::zero(); v]; 4];
    for (row, label) in x.iter().zip(y) {
        let acc = &mut totals[label.index()];
        for (t, w) in row.iter() {
            acc[t] = acc[t] + w;
        }
    }
    let n = T::count(x.len());
    let mut class_log_prior = [T::neg_infinity(); 4];
    for c in 0..4 {
        class_log_prior[c] = (T::count(class_docs[c]) / n).ln();
    }
    let vocab = T::count(v);
    let feature_log_prob = totals
        .into_iter()
        .map(|row| {
            let denom = row.iter().copied().sum::<T>() + alpha * vocab;
            row.into_iter()
                .map(|cnt| ((cnt + alpha) / denom).ln())
                .collect()
        })
        .collect();
    Ok(NbModel {
        class_log_prior,
        feature_log_prob,
        alpha,
        vocab_size: v,
    })
}

impl<T: Scalar> NbModel<T> {
    /// Rebuilds a model from stored parameters, re-checking that every
    /// distribution is normalized.
    pub fn from_parts(
        class_log_prior: Scores<T>,
        feature_log_prob: Vec<Vec<T>>,
        alpha: T,
        vocab_size: usize,
    ) -> Result<Self, ModelError> {
        let bad = |m: String| Err(ModelError::InvalidParameters(m));
        if !(alpha > T::zero() && alpha.is_finite()) {
            return bad(format!("alpha {alpha} is not positive"));
        }
        if feature_log_prob.len() != 4 || feature_log_prob.iter().any(|r| r.len() != vocab_size) {
            return bad(format!("feature_log_prob must be 4 x {vocab_size}"));
        }
        let tol = (4.0 * T::epsilon().widen() * (vocab_size as f64 + 4.0)).max(1e-9);
        let prior_mass: f64 = class_log_prior.iter().map(|p| p.widen().exp()).sum();
        if class_log_prior
            .iter()
            .any(|p| p.is_nan() || *p == T::infinity())
            || (prior_mass - 1.0).abs() > tol
        {
            return bad(format!("class priors sum to {prior_mass}"));
        }
        if vocab_size > 0 {
            for (c, row) in feature_log_prob.iter().enumerate() {
                if row.iter().any(|v| !v.is_finite()) {
                    return bad(format!("feature_log_prob row {c} has a non-finite entry"));
                }
                let mass: f64 = row.iter().map(|v| v.widen().exp()).sum();
                if (mass - 1.0).abs() > tol {
                    return bad(format!("feature_log_prob row {c} sums to {mass}"));
                }
            }
        }
        Ok(NbModel {
            class_log_prior,
            feature_log_prob,
            alpha,
            vocab_size,
        })
    }

    pub fn class_log_prior(&self) -> &Scores<T> {
        &self.class_log_prior
    }

    pub fn feature_log_prob(&self) -> &[Vec<T>] {
        &self.feature_log_prob
    }

    pub fn alpha(&self) -> T {
        self.alpha
    }

    pub fn vocab_size(&self) -> usize {
        self.vocab_size
    }

    /// Unnormalized log posterior: `prior[c] + sum_t x_t * feature_log_prob[c][t]`.
    pub fn log_posterior(&self, x: &SparseVector<T>) -> Result<Scores<T>, ModelError> {
        if x.dim() != self.vocab_size {
            return Err(ModelError::DimMismatch {
                expected: self.vocab_size,
                got: x.dim(),
            });
        }
        let mut scores = self.class_log_prior;
        for (c, s) in scores.iter_mut().enumerate() {
            *s = *s + x.dot(&self.feature_log_prob[c]);
        }
        Ok(scores)
    }
}
