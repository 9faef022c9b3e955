//! Reference implementations shared by the integration tests.

#![allow(dead_code)]

use std::path::PathBuf;

use rand::seq::SliceRandom;
use sparse_ia::aggregation::{Algorithm, AlgorithmParams};
use sparse_ia::sim::train::client_rng;
use sparse_ia::sim::{partition, Dataset, LogisticRegression, TrainConfig};

/// Parameters that never sparsify anything on a `dim`-dimensional model.
pub fn full_budget(alg: Algorithm, dim: usize) -> AlgorithmParams {
    if alg.time_correlated() {
        AlgorithmParams::time_correlated(alg, dim / 3, dim - dim / 3)
    } else {
        AlgorithmParams::plain(alg, dim)
    }
}

/// `max |a - b| / max(1, max |b|)`.
pub fn max_rel_dev(a: &[f64], b: &[f64]) -> f64 {
    let scale = b.iter().fold(1.0f64, |m, x| m.max(x.abs()));
    a.iter().zip(b).fold(0.0f64, |m, (x, y)| m.max((x - y).abs())) / scale
}

/// MNIST directory from `SPARSEIA_MNIST_DIR` or `<workspace>/data/mnist`, if present.
pub fn mnist_dir() -> Option<PathBuf> {
    let dir = std::env::var_os("SPARSEIA_MNIST_DIR")
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data/mnist"));
    dir.join("train-images-idx3-ubyte").exists().then_some(dir)
}

/// Independent softmax-regression SGD step on `rows`.
pub fn reference_sgd(w: &mut [f64], data: &Dataset, rows: &[usize], lr: f64) {
    let (f, c) = (data.features(), data.classes());
    let mut grad = vec![0.0; w.len()];
    for &r in rows {
        let x = data.row(r);
        let logits: Vec<f64> = (0..c)
            .map(|k| w[f * c + k] + (0..f).map(|j| w[k * f + j] * x[j]).sum::<f64>())
            .collect();
        let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let exp: Vec<f64> = logits.iter().map(|z| (z - max).exp()).collect();
        let norm: f64 = exp.iter().sum();
        for k in 0..c {
            let delta = exp[k] / norm - if k == data.label(r) { 1.0 } else { 0.0 };
            for j in 0..f {
                grad[k * f + j] += delta * x[j] / rows.len() as f64;
            }
            grad[f * c + k] += delta / rows.len() as f64;
        }
    }
    for (wi, gi) in w.iter_mut().zip(&grad) {
        *wi -= lr * gi;
    }
}

/// Plain FedAvg: every client runs local SGD on the same batches as the
/// simulator, the server adds the sample-weighted mean model change.
pub fn reference_fedavg(cfg: &TrainConfig, train: &Dataset) -> Vec<Vec<f64>> {
    let parts = partition(train, cfg.clients, cfg.seed).unwrap();
    let dim = LogisticRegression::for_dataset(train).dim();
    let mut w = vec![0.0; dim];
    let mut trajectory = Vec::new();
    for t in 0..cfg.rounds {
        let mut update = vec![0.0; dim];
        for (i, p) in parts.iter().enumerate() {
            let mut rng = client_rng(cfg.seed, i + 1, t);
            let mut order: Vec<usize> = (0..p.len()).collect();
            order.shuffle(&mut rng);
            let batch = cfg.batch_size.min(p.len());
            let mut cursor = 0;
            let mut local = w.clone();
            for _ in 0..cfg.local_steps {
                if cursor + batch > order.len() {
                    order.shuffle(&mut rng);
                    cursor = 0;
                }
                reference_sgd(&mut local, p, &order[cursor..cursor + batch], cfg.learning_rate);
                cursor += batch;
            }
            for j in 0..dim {
                update[j] += p.len() as f64 * (local[j] - w[j]);
            }
        }
        for j in 0..dim {
            w[j] += update[j] / train.len() as f64;
        }
        trajectory.push(w.clone());
    }
    trajectory
}
