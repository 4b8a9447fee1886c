//! One-vs-rest linear SVM trained by plain stochastic gradient descent.
//!
//! Per example the update minimizes `max(0, 1 - y s) + (alpha / 2) |w|^2`
//! with step size `eta_t = 1 / (alpha * (t0 + t))`. The offset follows
//! the usual "optimal" schedule heuristic: `eta0 = alpha^(-1/4)` and
//! `t0 = 1 / (alpha * eta0)`, i.e. `t0 = 1000` for `alpha = 1e-4`.
//!
//! Examples are visited in a fresh permutation every epoch. The
//! permutation comes from ChaCha8 (`rand_chacha` 0.3) seeded with the
//! configured seed, one stream per label, fed through a fixed
//! Fisher-Yates routine, so models are bit-identical across runs,
//! thread counts and platforms.

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};
use rayon::prelude::*;

use crate::corpus::Label;
use crate::features::SparseVector;
use crate::scalar::Scalar;

use super::logistic::assemble;
use super::{
    check_training, require_two_classes, BinaryFit, LinearKind, LinearModel, ModelError,
    TrainConfig,
};

// Below this the weight scale is folded back into the weights.
const MIN_SCALE: f64 = 1e-9;

/// `(eta0, t0)` for the step-size schedule at a given L2 penalty.
pub fn sgd_learning_rate(alpha: f64) -> (f64, f64) {
    let eta0 = alpha.powf(-0.25);
    (eta0, 1.0 / (alpha * eta0))
}

/// Deterministic shuffler: ChaCha8 with a per-label stream.
pub struct ShuffleRng(ChaCha8Rng);

impl ShuffleRng {
    pub fn new(seed: u64, stream: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream);
        ShuffleRng(rng)
    }

    /// Uniform-ish index in `0..n` by 128-bit multiply-shift.
    fn below(&mut self, n: usize) -> usize {
        ((u128::from(self.0.next_u64()) * n as u128) >> 64) as usize
    }

    pub fn shuffle<X>(&mut self, items: &mut [X]) {
        for i in (1..items.len()).rev() {
            let j = self.below(i + 1);
            items.swap(i, j);
        }
    }
}

fn fit_binary_hinge<T: Scalar>(
    xs: &[SparseVector<T>],
    positive: &[bool],
    cfg: &TrainConfig,
    stream: u64,
) -> BinaryFit<T> {
    let dim = xs[0].dim();
    let alpha = T::lit(cfg.sgd_alpha);
    let (_, t0) = sgd_learning_rate(cfg.sgd_alpha);
    let t0 = T::lit(t0);
    let n = T::count(xs.len());
    let targets: Vec<T> = positive
        .iter()
        .map(|&p| if p { T::one() } else { -T::one() })
        .collect();

    // w = scale * v, so the L2 decay is O(1) per step
    let mut v = vec![T::zero(); dim];
    let mut scale = T::one();
    let mut bias = T::zero();
    let mut t = T::zero();
    let mut order: Vec<usize> = (0..xs.len()).collect();
    let mut rng = ShuffleRng::new(cfg.seed, stream);
    let mut best = T::infinity();
    let mut stalled = 0;
    let mut converged = false;
    let mut trace = Vec::new();
    let mut epochs = 0;

    while epochs < cfg.sgd_max_epochs {
        rng.shuffle(&mut order);
        let mut hinge_sum = T::zero();
        for &i in &order {
            let eta = T::one() / (alpha * (t0 + t));
            let y = targets[i];
            let margin = y * (scale * xs[i].dot(&v) + bias);
            hinge_sum = hinge_sum + (T::one() - margin).max(T::zero());

            let decay = T::one() - eta * alpha;
            if decay <= T::zero() {
                v.iter_mut().for_each(|w| *w = T::zero());
                scale = T::one();
            } else {
                scale = scale * decay;
            }
            if margin < T::one() {
                let step = eta * y / scale;
                for (j, x) in xs[i].iter() {
                    v[j] = v[j] + step * x;
                }
                bias = bias + eta * y;
            }
            if scale < T::lit(MIN_SCALE) {
                v.iter_mut().for_each(|w| *w = *w * scale);
                scale = T::one();
            }
            t = t + T::one();
        }
        epochs += 1;

        let sq = v.iter().fold(T::zero(), |acc, &w| acc + w * w) * scale * scale;
        let objective = hinge_sum / n + T::lit(0.5) * alpha * sq;
        trace.push(objective);
        if objective > best - T::lit(cfg.sgd_tol) {
            stalled += 1;
        } else {
            stalled = 0;
        }
        best = best.min(objective);
        if stalled >= cfg.sgd_patience {
            converged = true;
            break;
        }
    }

    let mut theta: Vec<T> = v.into_iter().map(|w| w * scale).collect();
    theta.push(bias);
    BinaryFit {
        theta,
        converged,
        iterations: epochs,
        trace,
    }
}

/// Trains one hinge-loss model per label present in `y`.
pub fn sgd_fit<T: Scalar>(
    x: &[SparseVector<T>],
    y: &[Label],
    cfg: &TrainConfig,
) -> Result<LinearModel<T>, ModelError> {
    cfg.validate()?;
    let (dim, counts) = check_training(x, y)?;
    require_two_classes(y, &counts)?;
    let fits: Vec<Option<BinaryFit<T>>> = Label::ALL
        .par_iter()
        .map(|&label| {
            (counts[label.index()] > 0).then(|| {
                let positive: Vec<bool> = y.iter().map(|&l| l == label).collect();
                fit_binary_hinge(x, &positive, cfg, u64::from(label.code()))
            })
        })
        .collect();
    assemble(fits, dim, LinearKind::Hinge)
}
