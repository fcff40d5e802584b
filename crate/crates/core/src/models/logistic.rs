//! Weighted, L2-regularized logistic regression trained by full-batch
//! gradient descent with Armijo backtracking.
//!
//! Parameters are laid out as `[bias, dense..., sparse...]`; the bias is
//! not regularized.

/// One training row: a dense block plus sparse `(index, value)` entries
/// indexing the sparse block.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Example {
    pub dense: Vec<f64>,
    pub sparse: Vec<(usize, f64)>,
}

#[derive(Debug, Clone)]
pub struct Problem<'a> {
    pub examples: &'a [Example],
    pub labels: &'a [f64],
    pub weights: &'a [f64],
    pub dense_dim: usize,
    pub sparse_dim: usize,
    pub l2: f64,
}

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// `ln(1 + e^z)` without overflow.
fn softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

pub fn margin(params: &[f64], dense_dim: usize, x: &Example) -> f64 {
    let mut z = params[0];
    for (w, v) in params[1..=dense_dim].iter().zip(&x.dense) {
        z += w * v;
    }
    for &(i, v) in &x.sparse {
        z += params[1 + dense_dim + i] * v;
    }
    z
}

impl Problem<'_> {
    pub fn dim(&self) -> usize {
        1 + self.dense_dim + self.sparse_dim
    }

    fn total_weight(&self) -> f64 {
        self.weights.iter().sum::<f64>().max(f64::MIN_POSITIVE)
    }

    pub fn loss(&self, params: &[f64]) -> f64 {
        let mut data = 0.0;
        for ((x, &y), &w) in self.examples.iter().zip(self.labels).zip(self.weights) {
            let z = margin(params, self.dense_dim, x);
            data += w * if y > 0.5 { softplus(-z) } else { softplus(z) };
        }
        let reg: f64 = params[1..].iter().map(|p| p * p).sum();
        data / self.total_weight() + 0.5 * self.l2 * reg
    }
}

/// Mean weighted log-loss plus `l2/2 * ||w||^2`, and its gradient.
pub fn loss_and_gradient(problem: &Problem<'_>, params: &[f64]) -> (f64, Vec<f64>) {
    let total = problem.total_weight();
    let dd = problem.dense_dim;
    let mut grad = vec![0.0; problem.dim()];
    let mut data = 0.0;
    for ((x, &y), &w) in problem.examples.iter().zip(problem.labels).zip(problem.weights) {
        let z = margin(params, dd, x);
        data += w * if y > 0.5 { softplus(-z) } else { softplus(z) };
        let r = w * (sigmoid(z) - y) / total;
        grad[0] += r;
        for (g, v) in grad[1..=dd].iter_mut().zip(&x.dense) {
            *g += r * v;
        }
        for &(i, v) in &x.sparse {
            grad[1 + dd + i] += r * v;
        }
    }
    let mut reg = 0.0;
    for (g, p) in grad[1..].iter_mut().zip(&params[1..]) {
        *g += problem.l2 * p;
        reg += p * p;
    }
    (data / total + 0.5 * problem.l2 * reg, grad)
}

/// Runs at most `iterations` descent steps from zero.
pub fn fit(problem: &Problem<'_>, iterations: usize) -> Vec<f64> {
    const ARMIJO: f64 = 1e-4;
    let mut params = vec![0.0; problem.dim()];
    let mut step = 1.0;
    for _ in 0..iterations {
        let (loss, grad) = loss_and_gradient(problem, &params);
        let norm2: f64 = grad.iter().map(|g| g * g).sum();
        if norm2.sqrt() < 1e-10 {
            break;
        }
        let mut accepted = false;
        for _ in 0..60 {
            let trial: Vec<f64> = params.iter().zip(&grad).map(|(p, g)| p - step * g).collect();
            if problem.loss(&trial) <= loss - ARMIJO * step * norm2 {
                params = trial;
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        if !accepted {
            break;
        }
        step = (step * 2.0).min(1e6);
    }
    params
}

/// Inverse class frequency weights: each class carries half the total mass.
pub fn balanced_weights(labels: &[f64]) -> Vec<f64> {
    let n = labels.len() as f64;
    let pos = labels.iter().filter(|&&y| y > 0.5).count() as f64;
    let neg = n - pos;
    labels
        .iter()
        .map(|&y| {
            let count = if y > 0.5 { pos } else { neg };
            if count == 0.0 {
                1.0
            } else {
                n / (2.0 * count)
            }
        })
        .collect()
}
