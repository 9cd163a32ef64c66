//! L2-regularised logistic regression fitted by damped Newton steps.

use serde::{Deserialize, Serialize};

use super::{sigmoid, softplus, LearnError, Result};

pub const DEFAULT_L2: f64 = 1.0;
pub const DEFAULT_MAX_ITER: usize = 1000;
const GRAD_TOL: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogisticModel {
    pub weights: Vec<f64>,
    pub bias: f64,
    pub l2_penalty: f64,
    pub max_iter: usize,
    pub iterations_run: usize,
    /// Euclidean norm of the objective gradient at the returned parameters.
    pub grad_norm: f64,
    /// Objective after each accepted step, starting from the initial point.
    pub loss_history: Vec<f64>,
}

impl LogisticModel {
    pub fn logit(&self, x: &[f64]) -> f64 {
        self.bias + self.weights.iter().zip(x).map(|(w, v)| w * v).sum::<f64>()
    }

    pub fn predict_proba(&self, x: &[f64]) -> f64 {
        sigmoid(self.logit(x))
    }
}

/// `Σ BCE + (l2/2)‖w‖²` with the bias unpenalised; `theta = [w..., b]`.
fn objective(x: &[Vec<f64>], y: &[bool], theta: &[f64], l2: f64) -> f64 {
    let k = theta.len() - 1;
    let mut f = 0.0;
    for (xi, &yi) in x.iter().zip(y) {
        let z = theta[k] + xi.iter().zip(theta).map(|(a, b)| a * b).sum::<f64>();
        f += softplus(z) - if yi { z } else { 0.0 };
    }
    f + 0.5 * l2 * theta[..k].iter().map(|w| w * w).sum::<f64>()
}

fn grad_hess(x: &[Vec<f64>], y: &[bool], theta: &[f64], l2: f64) -> (Vec<f64>, Vec<Vec<f64>>) {
    let k = theta.len() - 1;
    let mut g = vec![0.0; k + 1];
    let mut h = vec![vec![0.0; k + 1]; k + 1];
    let mut xt = vec![1.0; k + 1];
    for (xi, &yi) in x.iter().zip(y) {
        xt[..k].copy_from_slice(xi);
        let z = theta[k] + xi.iter().zip(theta).map(|(a, b)| a * b).sum::<f64>();
        let p = sigmoid(z);
        let r = p - yi as u8 as f64;
        let s = p * (1.0 - p);
        for a in 0..=k {
            g[a] += r * xt[a];
            for b in 0..=a {
                h[a][b] += s * xt[a] * xt[b];
            }
        }
    }
    for a in 0..k {
        g[a] += l2 * theta[a];
        h[a][a] += l2;
    }
    for a in 0..=k {
        for b in a + 1..=k {
            h[a][b] = h[b][a];
        }
    }
    (g, h)
}

/// Solves `h · x = g` by Gaussian elimination with partial pivoting.
fn solve(mut h: Vec<Vec<f64>>, mut g: Vec<f64>) -> Option<Vec<f64>> {
    let n = g.len();
    for col in 0..n {
        let piv = (col..n).max_by(|&a, &b| h[a][col].abs().total_cmp(&h[b][col].abs()))?;
        if h[piv][col].abs() < 1e-300 {
            return None;
        }
        h.swap(col, piv);
        g.swap(col, piv);
        for r in col + 1..n {
            let f = h[r][col] / h[col][col];
            if f != 0.0 {
                for c in col..n {
                    h[r][c] -= f * h[col][c];
                }
                g[r] -= f * g[col];
            }
        }
    }
    let mut x = vec![0.0; n];
    for r in (0..n).rev() {
        let s: f64 = (r + 1..n).map(|c| h[r][c] * x[c]).sum();
        x[r] = (g[r] - s) / h[r][r];
    }
    x.iter().all(|v| v.is_finite()).then_some(x)
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Fits weights and bias until the gradient norm is at most `1e-6` or
/// `max_iter` Newton steps have run.
///
/// Each step is the Newton direction (with diagonal damping added if the
/// Hessian is numerically singular), shortened by backtracking until the
/// Armijo condition holds, so the objective never increases.
pub fn logreg_fit(x: &[Vec<f64>], y: &[bool], l2: f64, max_iter: usize) -> Result<LogisticModel> {
    if x.len() != y.len() || x.is_empty() {
        return Err(LearnError::InvalidInput("need one label per row and at least one row".into()));
    }
    if y.iter().all(|&v| v) || y.iter().all(|&v| !v) {
        return Err(LearnError::SingleClass);
    }
    let k = x[0].len();
    if let Some(r) = x.iter().find(|r| r.len() != k) {
        return Err(LearnError::DimensionMismatch {
            expected: k,
            got: r.len(),
        });
    }
    if x.iter().flatten().any(|v| !v.is_finite()) {
        return Err(LearnError::NonFinite("input features".into()));
    }
    if !(l2 >= 0.0 && l2.is_finite()) {
        return Err(LearnError::InvalidInput(format!("l2 penalty {l2}")));
    }
    let mut theta = vec![0.0; k + 1];
    let mut f = objective(x, y, &theta, l2);
    let mut history = vec![f];
    let mut iterations = 0;
    let (mut g, mut h) = grad_hess(x, y, &theta, l2);
    while norm(&g) > GRAD_TOL && iterations < max_iter {
        iterations += 1;
        let mut damping = 0.0;
        let dir = loop {
            let mut hd = h.clone();
            for (i, row) in hd.iter_mut().enumerate() {
                row[i] += damping;
            }
            if let Some(d) = solve(hd, g.clone()) {
                break d;
            }
            damping = if damping == 0.0 { 1e-10 } else { damping * 10.0 };
        };
        let slope: f64 = -g.iter().zip(&dir).map(|(a, b)| a * b).sum::<f64>();
        let mut t = 1.0;
        let mut accepted = None;
        for _ in 0..60 {
            let cand: Vec<f64> = theta.iter().zip(&dir).map(|(p, d)| p - t * d).collect();
            let fc = objective(x, y, &cand, l2);
            if fc <= f + 1e-4 * t * slope {
                accepted = Some((cand, fc));
                break;
            }
            t *= 0.5;
        }
        let Some((cand, fc)) = accepted else {
            // no decrease representable in floating point: at the optimum
            break;
        };
        theta = cand;
        f = fc;
        history.push(f);
        (g, h) = grad_hess(x, y, &theta, l2);
    }
    if !f.is_finite() || theta.iter().any(|v| !v.is_finite()) {
        return Err(LearnError::NonFinite("logistic parameters".into()));
    }
    Ok(LogisticModel {
        weights: theta[..k].to_vec(),
        bias: theta[k],
        l2_penalty: l2,
        max_iter,
        iterations_run: iterations,
        grad_norm: norm(&g),
        loss_history: history,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn separable_one_dimensional() {
        let mut x = Vec::new();
        let mut y = Vec::new();
        for _ in 0..10 {
            x.push(vec![0.0]);
            y.push(false);
            x.push(vec![1.0]);
            y.push(true);
        }
        let m = logreg_fit(&x, &y, DEFAULT_L2, DEFAULT_MAX_ITER).unwrap();
        assert!(m.weights[0] > 0.0);
        assert!(m.predict_proba(&[1.0]) > m.predict_proba(&[0.5]));
        assert!(m.predict_proba(&[0.5]) > m.predict_proba(&[0.0]));
        assert!(m.grad_norm <= 1e-6);
    }

    #[test]
    fn huge_penalty_predicts_the_prior() {
        let x: Vec<Vec<f64>> = (0..40).map(|i| vec![(i % 7) as f64 / 7.0, (i % 3) as f64]).collect();
        let y: Vec<bool> = (0..40).map(|i| i % 4 == 0 || i % 5 == 0).collect();
        let prior = y.iter().filter(|&&v| v).count() as f64 / 40.0;
        let m = logreg_fit(&x, &y, 1e6, DEFAULT_MAX_ITER).unwrap();
        for xi in &x {
            assert!((m.predict_proba(xi) - prior).abs() < 1e-3);
        }
    }

    #[test]
    fn independent_balanced_feature_gets_no_weight() {
        // every feature value appears once with each label
        let mut x = Vec::new();
        let mut y = Vec::new();
        for v in [-2.0, -0.5, 0.3, 1.7] {
            for label in [false, true] {
                x.push(vec![v]);
                y.push(label);
            }
        }
        let m = logreg_fit(&x, &y, DEFAULT_L2, DEFAULT_MAX_ITER).unwrap();
        assert!(m.weights[0].abs() <= 1e-3);
    }

    #[test]
    fn loss_never_increases() {
        let x: Vec<Vec<f64>> = (0..30).map(|i| vec![(i as f64 * 0.37).sin(), (i as f64 * 0.11).cos()]).collect();
        let y: Vec<bool> = (0..30).map(|i| (i as f64 * 0.37).sin() + 0.3 * (i as f64).cos() > 0.0).collect();
        let m = logreg_fit(&x, &y, 0.5, DEFAULT_MAX_ITER).unwrap();
        assert!(m.loss_history.windows(2).all(|w| w[1] <= w[0]));
        assert!(m.grad_norm <= 1e-6);
    }

    #[test]
    fn single_class_rejected() {
        assert!(matches!(
            logreg_fit(&[vec![1.0], vec![2.0]], &[true, true], 1.0, 10),
            Err(LearnError::SingleClass)
        ));
    }
}
