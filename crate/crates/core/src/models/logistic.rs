//! One-vs-rest L2 logistic regression.
//!
//! Each binary subproblem minimizes
//! `F(w, b) = 0.5 |w|^2 + C * sum_i ln(1 + exp(-y_i (w . x_i + b)))`
//! with `y_i` in {-1, +1}. The bias is not penalized. The solver is a
//! line-searched truncated Newton method whose inner linear solve is
//! conjugate gradients on Hessian-vector products; each accepted step
//! satisfies the Armijo condition, so `F` never increases.

use rayon::prelude::*;

use crate::corpus::Label;
use crate::features::SparseVector;
use crate::scalar::Scalar;

use super::{
    check_training, require_two_classes, LinearKind, LinearModel, ModelError, TrainConfig,
};

const ARMIJO: f64 = 1e-4;
const MAX_HALVINGS: usize = 40;
const MAX_CG_ITER: usize = 500;

/// The binary objective over parameters `theta = [w_0 .. w_{V-1}, b]`.
pub struct BinaryLogistic<'a, T> {
    xs: &'a [SparseVector<T>],
    targets: Vec<T>,
    c: T,
    dim: usize,
}

fn softplus_neg<T: Scalar>(m: T) -> T {
    // ln(1 + exp(-m)) without overflow
    if m > T::zero() {
        (-m).exp().ln_1p()
    } else {
        -m + m.exp().ln_1p()
    }
}

fn sigmoid<T: Scalar>(m: T) -> T {
    if m >= T::zero() {
        T::one() / (T::one() + (-m).exp())
    } else {
        let e = m.exp();
        e / (T::one() + e)
    }
}

impl<'a, T: Scalar> BinaryLogistic<'a, T> {
    pub fn new(xs: &'a [SparseVector<T>], positive: &[bool], c: T) -> Self {
        assert_eq!(xs.len(), positive.len(), "one target per row");
        let dim = xs.first().map_or(0, SparseVector::dim);
        let targets = positive
            .iter()
            .map(|&p| if p { T::one() } else { -T::one() })
            .collect();
        BinaryLogistic {
            xs,
            targets,
            c,
            dim,
        }
    }

    /// Number of parameters: feature weights plus the bias.
    pub fn n_params(&self) -> usize {
        self.dim + 1
    }

    fn margins(&self, theta: &[T]) -> Vec<T> {
        let (w, b) = theta.split_at(self.dim);
        self.xs
            .iter()
            .zip(&self.targets)
            .map(|(x, &y)| y * (x.dot(w) + b[0]))
            .collect()
    }

    fn penalty(&self, theta: &[T]) -> T {
        let half = T::lit(0.5);
        half * theta[..self.dim]
            .iter()
            .fold(T::zero(), |acc, &v| acc + v * v)
    }

    /// Data term `sum_i ln(1 + exp(-y_i s_i))`, without `C` or the penalty.
    pub fn loss(&self, theta: &[T]) -> T {
        self.margins(theta).into_iter().map(softplus_neg).sum()
    }

    pub fn value(&self, theta: &[T]) -> T {
        self.penalty(theta) + self.c * self.loss(theta)
    }

    pub fn gradient(&self, theta: &[T]) -> Vec<T> {
        self.gradient_from_margins(theta, &self.margins(theta))
    }

    fn gradient_from_margins(&self, theta: &[T], margins: &[T]) -> Vec<T> {
        let mut g = theta.to_vec();
        g[self.dim] = T::zero();
        for ((x, &y), &m) in self.xs.iter().zip(&self.targets).zip(margins) {
            let coef = self.c * (sigmoid(m) - T::one()) * y;
            for (i, v) in x.iter() {
                g[i] = g[i] + coef * v;
            }
            g[self.dim] = g[self.dim] + coef;
        }
        g
    }

    fn hessian_vec(&self, curvature: &[T], v: &[T]) -> Vec<T> {
        let (vw, vb) = v.split_at(self.dim);
        let mut out = vw.to_vec();
        out.push(T::zero());
        for (x, &d) in self.xs.iter().zip(curvature) {
            let coef = self.c * d * (x.dot(vw) + vb[0]);
            for (i, xv) in x.iter() {
                out[i] = out[i] + coef * xv;
            }
            out[self.dim] = out[self.dim] + coef;
        }
        out
    }
}

fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).fold(T::zero(), |acc, (&x, &y)| acc + x * y)
}

fn max_abs<T: Scalar>(v: &[T]) -> T {
    v.iter().fold(T::zero(), |acc, x| acc.max(x.abs()))
}

// Approximately solves H d = -g; falls back to -g if no progress is made.
fn newton_direction<T: Scalar>(hv: impl Fn(&[T]) -> Vec<T>, g: &[T]) -> Vec<T> {
    let g_norm = dot(g, g).sqrt();
    let forcing = T::lit(0.5).min(g_norm.sqrt());
    let target = forcing * g_norm;
    let mut d = vec![T::zero(); g.len()];
    let mut r: Vec<T> = g.iter().map(|&v| -v).collect();
    let mut p = r.clone();
    let mut rr = dot(&r, &r);
    let limit = g.len().clamp(1, MAX_CG_ITER);
    let mut moved = false;
    for _ in 0..limit {
        if rr.sqrt() <= target {
            break;
        }
        let hp = hv(&p);
        let php = dot(&p, &hp);
        if php.is_nan() || php <= T::zero() {
            break;
        }
        let a = rr / php;
        for i in 0..d.len() {
            d[i] = d[i] + a * p[i];
            r[i] = r[i] - a * hp[i];
        }
        moved = true;
        let rr_next = dot(&r, &r);
        let beta = rr_next / rr;
        rr = rr_next;
        for i in 0..p.len() {
            p[i] = r[i] + beta * p[i];
        }
    }
    if moved {
        d
    } else {
        g.iter().map(|&v| -v).collect()
    }
}

/// Outcome of one binary logistic fit.
#[derive(Debug, Clone)]
pub struct BinaryFit<T> {
    pub theta: Vec<T>,
    pub converged: bool,
    pub iterations: usize,
    /// Objective value at the start and after every accepted step.
    pub trace: Vec<T>,
}

pub fn fit_binary_logistic<T: Scalar>(
    xs: &[SparseVector<T>],
    positive: &[bool],
    c: T,
    tol: T,
    max_iter: usize,
) -> BinaryFit<T> {
    let obj = BinaryLogistic::new(xs, positive, c);
    let mut theta = vec![T::zero(); obj.n_params()];
    let mut f = obj.value(&theta);
    let mut trace = vec![f];
    let mut converged = false;
    let mut iterations = 0;

    while iterations < max_iter {
        let margins = obj.margins(&theta);
        let g = obj.gradient_from_margins(&theta, &margins);
        if max_abs(&g) <= tol {
            converged = true;
            break;
        }
        let curvature: Vec<T> = margins
            .iter()
            .map(|&m| {
                let s = sigmoid(m);
                s * (T::one() - s)
            })
            .collect();
        let newton = newton_direction(|v| obj.hessian_vec(&curvature, v), &g);
        let steepest: Vec<T> = g.iter().map(|&v| -v).collect();

        let mut accepted = None;
        for dir in [newton, steepest] {
            let slope = dot(&g, &dir);
            if slope.is_nan() || slope >= T::zero() {
                continue;
            }
            let mut step = T::one();
            for _ in 0..MAX_HALVINGS {
                let cand: Vec<T> = theta
                    .iter()
                    .zip(&dir)
                    .map(|(&t, &d)| t + step * d)
                    .collect();
                let fc = obj.value(&cand);
                if fc <= f + T::lit(ARMIJO) * step * slope {
                    accepted = Some((cand, fc));
                    break;
                }
                step = step * T::lit(0.5);
            }
            if accepted.is_some() {
                break;
            }
        }
        let Some((next, fnext)) = accepted else { break };
        theta = next;
        f = fnext;
        trace.push(f);
        iterations += 1;
    }
    if !converged {
        converged = max_abs(&obj.gradient(&theta)) <= tol;
    }
    BinaryFit {
        theta,
        converged,
        iterations,
        trace,
    }
}

/// Trains one binary logistic model per label present in `y`.
pub fn lr_fit<T: Scalar>(
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
                fit_binary_logistic(
                    x,
                    &positive,
                    T::lit(cfg.lr_c),
                    T::lit(cfg.lr_tol),
                    cfg.lr_max_iter,
                )
            })
        })
        .collect();
    assemble(fits, dim, LinearKind::Logistic)
}

pub(super) fn assemble<T: Scalar>(
    fits: Vec<Option<BinaryFit<T>>>,
    dim: usize,
    kind: LinearKind,
) -> Result<LinearModel<T>, ModelError> {
    let mut weights = Vec::with_capacity(4);
    let mut bias = [T::zero(); 4];
    let mut active = [false; 4];
    let mut converged = true;
    for (c, fit) in fits.into_iter().enumerate() {
        match fit {
            Some(mut f) => {
                bias[c] = f.theta.pop().expect("bias parameter");
                weights.push(f.theta);
                active[c] = true;
                converged &= f.converged;
            }
            None => weights.push(vec![T::zero(); dim]),
        }
    }
    LinearModel::from_parts(weights, bias, active, kind, converged)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::predict;

    fn xs(rows: &[&[f64]]) -> Vec<SparseVector<f64>> {
        rows.iter().map(|r| SparseVector::from_dense(r)).collect()
    }

    #[test]
    fn separable_pair() {
        let x = xs(&[&[1.0, 0.0], &[0.0, 1.0]]);
        let y = [Label::False, Label::True];
        let m = lr_fit(&x, &y, &TrainConfig::default()).unwrap();
        assert!(m.converged());
        assert_eq!(m.kind(), LinearKind::Logistic);
        assert_eq!(predict(&m.decision(&x[0]).unwrap()).unwrap(), Label::False);
        assert_eq!(predict(&m.decision(&x[1]).unwrap()).unwrap(), Label::True);
        assert!(!m.is_active(Label::Other));
    }

    #[test]
    fn larger_c_fits_training_data_tighter() {
        let x = xs(&[&[1.0, 0.2], &[0.9, 0.0], &[0.1, 1.0], &[0.0, 0.8]]);
        let positive = [true, true, false, false];
        let obj = BinaryLogistic::new(&x, &positive, 1.0);
        let weak = fit_binary_logistic(&x, &positive, 1.0, 1e-8, 100);
        let strong = fit_binary_logistic(&x, &positive, 100.0, 1e-8, 100);
        assert!(weak.converged && strong.converged);
        assert!(obj.loss(&strong.theta) < obj.loss(&weak.theta));
    }

    #[test]
    fn objective_never_increases() {
        let x = xs(&[
            &[1.0, 0.5, 0.0],
            &[0.3, 0.0, 1.0],
            &[0.0, 1.0, 1.0],
            &[0.7, 0.7, 0.0],
            &[0.0, 0.0, 0.2],
        ]);
        let positive = [true, false, false, true, true];
        let fit = fit_binary_logistic(&x, &positive, 100.0, 1e-10, 100);
        assert!(
            fit.trace.windows(2).all(|w| w[1] <= w[0]),
            "{:?}",
            fit.trace
        );
        assert!(fit.converged);
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let x = xs(&[&[1.0, -0.5], &[0.25, 2.0], &[-1.0, 0.0]]);
        let obj = BinaryLogistic::new(&x, &[true, false, true], 3.0);
        let theta = [0.3, -0.7, 0.1];
        let g = obj.gradient(&theta);
        let h = 1e-6;
        for k in 0..3 {
            let mut up = theta;
            let mut dn = theta;
            up[k] += h;
            dn[k] -= h;
            let fd = (obj.value(&up) - obj.value(&dn)) / (2.0 * h);
            assert!(
                (fd - g[k]).abs() <= 1e-6 * g[k].abs().max(1.0),
                "k={k} fd={fd} g={}",
                g[k]
            );
        }
    }

    #[test]
    fn single_class_is_an_error() {
        let x = xs(&[&[1.0], &[2.0]]);
        assert_eq!(
            lr_fit(&x, &[Label::True, Label::True], &TrainConfig::default()),
            Err(ModelError::SingleClass(Label::True))
        );
    }

    #[test]
    fn iteration_cap_flags_non_convergence() {
        let x = xs(&[&[1.0, 0.0], &[0.0, 1.0], &[0.5, 0.5]]);
        let cfg = TrainConfig {
            lr_max_iter: 1,
            lr_tol: 1e-12,
            ..TrainConfig::default()
        };
        let m = lr_fit(&x, &[Label::False, Label::True, Label::Other], &cfg).unwrap();
        assert!(!m.converged());
    }

    #[test]
    fn stable_for_extreme_margins() {
        assert_eq!(softplus_neg(1000.0f64), 0.0);
        assert_eq!(softplus_neg(-1000.0f64), 1000.0);
        assert_eq!(sigmoid(-1000.0f64), 0.0);
        assert_eq!(sigmoid(1000.0f64), 1.0);
    }
}
