//! Linear classifiers: L2-regularized logistic regression and a hinge-loss
//! (linear SVM style) model.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LogisticParams {
    pub l2: f64,
    /// Stop once the gradient's max-norm falls below this.
    pub tolerance: f64,
    pub max_epochs: usize,
}

impl Default for LogisticParams {
    fn default() -> Self {
        Self {
            l2: 1e-3,
            tolerance: 1e-6,
            max_epochs: 10_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MarginParams {
    pub l2: f64,
    pub epochs: usize,
}

impl Default for MarginParams {
    fn default() -> Self {
        Self {
            l2: 1e-3,
            epochs: 2_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearModel {
    pub weights: Vec<f64>,
    pub bias: f64,
}

impl LinearModel {
    pub fn zeros(d: usize) -> Self {
        Self {
            weights: vec![0.0; d],
            bias: 0.0,
        }
    }

    pub fn decision(&self, row: &[f64]) -> f64 {
        self.bias + self.weights.iter().zip(row).map(|(w, x)| w * x).sum::<f64>()
    }

    pub fn probability(&self, row: &[f64]) -> f64 {
        sigmoid(self.decision(row))
    }
}

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// ln(1 + e^z) without overflow.
fn softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

/// Mean log-loss plus `l2/2 · |w|²` (bias unpenalized) and its gradient
/// `(d/dw, d/db)`.
pub fn logistic_objective(
    model: &LinearModel,
    rows: &[&[f64]],
    labels: &[bool],
    l2: f64,
) -> (f64, Vec<f64>, f64) {
    let n = rows.len() as f64;
    let mut loss = 0.0;
    let mut grad = vec![0.0; model.weights.len()];
    let mut grad_b = 0.0;
    for (row, &y) in rows.iter().zip(labels) {
        let z = model.decision(row);
        let y = if y { 1.0 } else { 0.0 };
        loss += softplus(z) - y * z;
        let r = sigmoid(z) - y;
        for (g, x) in grad.iter_mut().zip(row.iter()) {
            *g += r * x;
        }
        grad_b += r;
    }
    let sq: f64 = model.weights.iter().map(|w| w * w).sum();
    loss = loss / n + 0.5 * l2 * sq;
    for (g, w) in grad.iter_mut().zip(&model.weights) {
        *g = *g / n + l2 * w;
    }
    (loss, grad, grad_b / n)
}

#[derive(Debug, Clone, PartialEq)]
pub struct LogisticFit {
    pub model: LinearModel,
    /// Objective after each accepted epoch, starting with the initial value.
    pub loss_trace: Vec<f64>,
    pub epochs: usize,
    pub grad_max_norm: f64,
}

/// Full-batch gradient descent with backtracking (Armijo) line search, so
/// the objective never increases between epochs.
pub fn fit_logistic(rows: &[&[f64]], labels: &[bool], params: &LogisticParams) -> Result<LogisticFit> {
    if params.l2 < 0.0 || !params.l2.is_finite() {
        return Err(Error::Config(format!("l2 must be a finite non-negative number, got {}", params.l2)));
    }
    let d = rows.first().map_or(0, |r| r.len());
    let mut model = LinearModel::zeros(d);
    let (mut loss, mut grad, mut grad_b) = logistic_objective(&model, rows, labels, params.l2);
    let mut trace = vec![loss];
    let mut step = 1.0;
    let mut epochs = 0;
    let max_norm = |g: &[f64], gb: f64| g.iter().fold(gb.abs(), |m, v| m.max(v.abs()));
    let mut gnorm = max_norm(&grad, grad_b);

    while epochs < params.max_epochs && gnorm >= params.tolerance {
        if !loss.is_finite() {
            return Err(Error::Numerical(format!("logistic loss became {loss}")));
        }
        let sq: f64 = grad.iter().map(|g| g * g).sum::<f64>() + grad_b * grad_b;
        let mut accepted = None;
        for _ in 0..60 {
            let trial = LinearModel {
                weights: model.weights.iter().zip(&grad).map(|(w, g)| w - step * g).collect(),
                bias: model.bias - step * grad_b,
            };
            let (tl, tg, tgb) = logistic_objective(&trial, rows, labels, params.l2);
            if tl.is_finite() && tl <= loss - 1e-4 * step * sq {
                accepted = Some((trial, tl, tg, tgb));
                break;
            }
            step *= 0.5;
        }
        let Some((m, l, g, gb)) = accepted else {
            // no descent possible at machine precision
            break;
        };
        model = m;
        loss = l;
        grad = g;
        grad_b = gb;
        gnorm = max_norm(&grad, grad_b);
        trace.push(loss);
        epochs += 1;
        step = (step * 2.0).min(1e6);
    }
    if !loss.is_finite() {
        return Err(Error::Numerical(format!("logistic loss became {loss}")));
    }
    Ok(LogisticFit {
        model,
        loss_trace: trace,
        epochs,
        grad_max_norm: gnorm,
    })
}

/// Mean hinge loss plus `l2/2 · |w|²`.
pub fn hinge_objective(model: &LinearModel, rows: &[&[f64]], labels: &[bool], l2: f64) -> f64 {
    let n = rows.len() as f64;
    let hinge: f64 = rows
        .iter()
        .zip(labels)
        .map(|(r, &y)| {
            let s = if y { 1.0 } else { -1.0 };
            (1.0 - s * model.decision(r)).max(0.0)
        })
        .sum();
    hinge / n + 0.5 * l2 * model.weights.iter().map(|w| w * w).sum::<f64>()
}

/// Full-batch subgradient descent with step `1/√t`, keeping the best iterate.
pub fn fit_margin(rows: &[&[f64]], labels: &[bool], params: &MarginParams) -> Result<LinearModel> {
    if params.l2 < 0.0 || !params.l2.is_finite() || params.epochs == 0 {
        return Err(Error::Config("margin model needs l2 >= 0 and epochs >= 1".into()));
    }
    let d = rows.first().map_or(0, |r| r.len());
    let n = rows.len() as f64;
    let mut model = LinearModel::zeros(d);
    let mut best = model.clone();
    let mut best_obj = hinge_objective(&model, rows, labels, params.l2);
    for t in 1..=params.epochs {
        let mut grad: Vec<f64> = model.weights.iter().map(|w| params.l2 * w).collect();
        let mut grad_b = 0.0;
        for (r, &y) in rows.iter().zip(labels) {
            let s = if y { 1.0 } else { -1.0 };
            if s * model.decision(r) < 1.0 {
                for (g, x) in grad.iter_mut().zip(r.iter()) {
                    *g -= s * x / n;
                }
                grad_b -= s / n;
            }
        }
        let step = 1.0 / (t as f64).sqrt();
        for (w, g) in model.weights.iter_mut().zip(&grad) {
            *w -= step * g;
        }
        model.bias -= step * grad_b;
        let obj = hinge_objective(&model, rows, labels, params.l2);
        if !obj.is_finite() {
            return Err(Error::Numerical(format!("hinge objective became {obj}")));
        }
        if obj < best_obj {
            best_obj = obj;
            best = model.clone();
        }
    }
    Ok(best)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    fn refs(rows: &[Vec<f64>]) -> Vec<&[f64]> {
        rows.iter().map(Vec::as_slice).collect()
    }

    #[test]
    fn separable_one_dim() {
        let rows: Vec<Vec<f64>> = (0..20).map(|i| vec![(i % 2) as f64]).collect();
        let labels: Vec<bool> = (0..20).map(|i| i % 2 == 1).collect();
        let fit = fit_logistic(&refs(&rows), &labels, &LogisticParams::default()).unwrap();
        assert!(fit.model.weights[0] > 0.0);
        for (r, &y) in rows.iter().zip(&labels) {
            assert_eq!(fit.model.probability(r) >= 0.5, y);
        }
    }

    #[test]
    fn zero_features_give_half() {
        let rows = vec![vec![0.0; 3]; 10];
        let labels: Vec<bool> = (0..10).map(|i| i < 5).collect();
        let fit = fit_logistic(&refs(&rows), &labels, &LogisticParams::default()).unwrap();
        assert!((fit.model.probability(&rows[0]) - 0.5).abs() < 1e-6);
        assert_eq!(LinearModel::zeros(3).probability(&[1.0, 2.0, 3.0]), 0.5);
    }

    #[test]
    fn loss_trace_non_increasing() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(4);
        let rows: Vec<Vec<f64>> = (0..60).map(|_| (0..5).map(|_| rng.gen::<f64>()).collect()).collect();
        let labels: Vec<bool> = rows.iter().map(|r| r[0] + 0.3 * rng.gen::<f64>() > 0.6).collect();
        let fit = fit_logistic(&refs(&rows), &labels, &LogisticParams::default()).unwrap();
        assert!(fit.loss_trace.windows(2).all(|w| w[1] <= w[0]));
        assert!(fit.grad_max_norm < 1e-6 || fit.epochs == 10_000);
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(8);
        let rows: Vec<Vec<f64>> = (0..25).map(|_| (0..4).map(|_| rng.gen::<f64>() * 2.0 - 1.0).collect()).collect();
        let labels: Vec<bool> = (0..25).map(|_| rng.gen()).collect();
        let model = LinearModel {
            weights: (0..4).map(|_| rng.gen::<f64>() - 0.5).collect(),
            bias: 0.3,
        };
        let l2 = 0.1;
        let (_, grad, grad_b) = logistic_objective(&model, &refs(&rows), &labels, l2);
        let h = 1e-6;
        for k in 0..5 {
            let bump = |delta: f64| {
                let mut m = model.clone();
                if k < 4 {
                    m.weights[k] += delta;
                } else {
                    m.bias += delta;
                }
                logistic_objective(&m, &refs(&rows), &labels, l2).0
            };
            let fd = (bump(h) - bump(-h)) / (2.0 * h);
            let an = if k < 4 { grad[k] } else { grad_b };
            assert!((fd - an).abs() / an.abs().max(1e-8) < 1e-4, "k={k} fd={fd} an={an}");
        }
    }

    #[test]
    fn margin_separates() {
        let rows: Vec<Vec<f64>> = (0..40).map(|i| vec![if i < 20 { -1.0 } else { 1.0 }, 0.5]).collect();
        let labels: Vec<bool> = (0..40).map(|i| i >= 20).collect();
        let m = fit_margin(&refs(&rows), &labels, &MarginParams::default()).unwrap();
        for (r, &y) in rows.iter().zip(&labels) {
            assert_eq!(m.decision(r) > 0.0, y);
        }
    }
}
