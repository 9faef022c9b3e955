//! Multinomial logistic regression with softmax cross-entropy loss.
//!
//! Parameters are a flat vector: the `classes x features` weight matrix in
//! row-major order followed by `classes` biases. For MNIST that is
//! `10 * 784 + 10 = 7850` entries.

use crate::error::{check_dim, contract, Result};
use crate::sim::data::Dataset;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LogisticRegression {
    features: usize,
    classes: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Evaluation {
    pub accuracy: f64,
    pub loss: f64,
}

impl LogisticRegression {
    pub fn new(features: usize, classes: usize) -> Self {
        Self { features, classes }
    }

    pub fn for_dataset(data: &Dataset) -> Self {
        Self::new(data.features(), data.classes())
    }

    pub fn features(&self) -> usize {
        self.features
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn dim(&self) -> usize {
        self.features * self.classes + self.classes
    }

    pub fn zeros(&self) -> Vec<f64> {
        vec![0.0; self.dim()]
    }

    fn check(&self, weights: &[f64], data: &Dataset) -> Result<()> {
        check_dim(self.dim(), weights.len())?;
        check_dim(self.features, data.features())?;
        check_dim(self.classes, data.classes())
    }

    pub fn logits(&self, weights: &[f64], x: &[f64], out: &mut [f64]) {
        let bias = &weights[self.features * self.classes..];
        for (c, z) in out.iter_mut().enumerate() {
            let row = &weights[c * self.features..(c + 1) * self.features];
            *z = bias[c] + row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>();
        }
    }

    /// Softmax probabilities in place; returns the log-partition.
    fn softmax(z: &mut [f64]) -> f64 {
        let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let sum: f64 = z
            .iter_mut()
            .map(|v| {
                *v = (*v - max).exp();
                *v
            })
            .sum();
        z.iter_mut().for_each(|v| *v /= sum);
        max + sum.ln()
    }

    /// Mean cross-entropy over `rows`, writing its gradient into `grad`.
    pub fn loss_and_gradient(&self, weights: &[f64], data: &Dataset, rows: &[usize], grad: &mut [f64]) -> Result<f64> {
        self.check(weights, data)?;
        check_dim(self.dim(), grad.len())?;
        if rows.is_empty() {
            return Err(contract("empty mini-batch"));
        }
        grad.iter_mut().for_each(|g| *g = 0.0);
        let scale = 1.0 / rows.len() as f64;
        let mut z = vec![0.0; self.classes];
        let mut loss = 0.0;
        let bias_at = self.features * self.classes;
        for &r in rows {
            let x = data.row(r);
            let y = data.label(r);
            self.logits(weights, x, &mut z);
            let z_y = z[y];
            loss += Self::softmax(&mut z) - z_y;
            for (c, p) in z.iter().enumerate() {
                let delta = (p - if c == y { 1.0 } else { 0.0 }) * scale;
                let row = &mut grad[c * self.features..(c + 1) * self.features];
                for (g, v) in row.iter_mut().zip(x) {
                    if *v != 0.0 {
                        *g += delta * v;
                    }
                }
                grad[bias_at + c] += delta;
            }
        }
        Ok(loss * scale)
    }

    /// Mean cross-entropy over `rows`.
    pub fn loss(&self, weights: &[f64], data: &Dataset, rows: &[usize]) -> Result<f64> {
        self.check(weights, data)?;
        if rows.is_empty() {
            return Err(contract("empty mini-batch"));
        }
        let mut z = vec![0.0; self.classes];
        let mut loss = 0.0;
        for &r in rows {
            self.logits(weights, data.row(r), &mut z);
            let z_y = z[data.label(r)];
            loss += Self::softmax(&mut z) - z_y;
        }
        Ok(loss / rows.len() as f64)
    }

    /// Arg-max class; ties go to the lowest class index.
    pub fn predict(&self, weights: &[f64], x: &[f64]) -> usize {
        let mut z = vec![0.0; self.classes];
        self.logits(weights, x, &mut z);
        argmax(&z)
    }

    pub fn evaluate(&self, weights: &[f64], test: &Dataset) -> Result<Evaluation> {
        self.check(weights, test)?;
        if test.is_empty() {
            return Err(contract("cannot evaluate on an empty test set"));
        }
        let mut z = vec![0.0; self.classes];
        let (mut correct, mut loss) = (0usize, 0.0);
        for r in 0..test.len() {
            self.logits(weights, test.row(r), &mut z);
            let y = test.label(r);
            if argmax(&z) == y {
                correct += 1;
            }
            let z_y = z[y];
            loss += Self::softmax(&mut z) - z_y;
        }
        let n = test.len() as f64;
        Ok(Evaluation {
            accuracy: correct as f64 / n,
            loss: loss / n,
        })
    }
}

fn argmax(z: &[f64]) -> usize {
    let mut best = 0;
    for (c, v) in z.iter().enumerate() {
        if *v > z[best] {
            best = c;
        }
    }
    best
}

/// Convenience wrapper over [`LogisticRegression::evaluate`].
pub fn evaluate(weights: &[f64], test: &Dataset) -> Result<Evaluation> {
    LogisticRegression::for_dataset(test).evaluate(weights, test)
}
