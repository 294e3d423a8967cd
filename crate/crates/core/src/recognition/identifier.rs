use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Multinomial logistic regression on standardized embeddings.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SoftmaxIdentifier {
    /// One row per class.
    pub weights: Vec<Vec<f64>>,
    pub bias: Vec<f64>,
    pub feature_mean: Vec<f64>,
    pub feature_scale: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SoftmaxTraining {
    pub iterations: usize,
    pub learning_rate: f64,
    pub momentum: f64,
    pub l2: f64,
}

impl Default for SoftmaxTraining {
    fn default() -> Self {
        SoftmaxTraining { iterations: 300, learning_rate: 0.5, momentum: 0.9, l2: 1e-4 }
    }
}

impl SoftmaxIdentifier {
    pub fn classes(&self) -> usize {
        self.weights.len()
    }

    fn standardize(&self, x: &[f64]) -> Vec<f64> {
        x.iter().zip(&self.feature_mean).zip(&self.feature_scale).map(|((v, m), s)| (v - m) / s).collect()
    }

    pub fn logits(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.feature_mean.len() {
            return Err(Error::dims(format!("identifier expects {} features, got {}", self.feature_mean.len(), x.len())));
        }
        let z = self.standardize(x);
        Ok(self.weights.iter().zip(&self.bias).map(|(w, b)| b + w.iter().zip(&z).map(|(a, c)| a * c).sum::<f64>()).collect())
    }

    pub fn predict(&self, x: &[f64]) -> Result<usize> {
        Ok(argmax(&self.logits(x)?))
    }
}

/// Index of the largest value; the lowest index wins ties.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate() {
        if v > values[best] {
            best = i;
        }
    }
    best
}

fn softmax_in_place(z: &mut [f64]) {
    let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for v in z.iter_mut() {
        *v = (*v - max).exp();
        sum += *v;
    }
    z.iter_mut().for_each(|v| *v /= sum);
}

/// Full-batch gradient descent with heavy-ball momentum from zero weights.
pub fn train_softmax_identifier(embeddings: &[Vec<f64>], labels: &[usize], cfg: &SoftmaxTraining) -> Result<SoftmaxIdentifier> {
    if embeddings.is_empty() || embeddings.len() != labels.len() {
        return Err(Error::invalid("need matching, nonempty embeddings and labels"));
    }
    let mut distinct = labels.to_vec();
    distinct.sort_unstable();
    distinct.dedup();
    if distinct.len() < 2 {
        return Err(Error::invalid("identification needs at least two identities"));
    }
    let classes = distinct.last().unwrap() + 1;
    let d = embeddings[0].len();
    if embeddings.iter().any(|e| e.len() != d) {
        return Err(Error::dims("embeddings differ in length"));
    }
    let n = embeddings.len() as f64;

    let mean: Vec<f64> = (0..d).map(|k| embeddings.iter().map(|e| e[k]).sum::<f64>() / n).collect();
    let scale: Vec<f64> = (0..d)
        .map(|k| {
            let var = embeddings.iter().map(|e| (e[k] - mean[k]).powi(2)).sum::<f64>() / n;
            if var > 1e-24 { var.sqrt() } else { 1.0 }
        })
        .collect();
    let z: Vec<Vec<f64>> =
        embeddings.iter().map(|e| e.iter().zip(&mean).zip(&scale).map(|((v, m), s)| (v - m) / s).collect()).collect();

    let mut w = vec![vec![0.0; d]; classes];
    let mut b = vec![0.0; classes];
    let mut vw = vec![vec![0.0; d]; classes];
    let mut vb = vec![0.0; classes];
    let mut probs = vec![0.0; classes];
    for _ in 0..cfg.iterations {
        let mut gw = vec![vec![0.0; d]; classes];
        let mut gb = vec![0.0; classes];
        for (x, &y) in z.iter().zip(labels) {
            for c in 0..classes {
                probs[c] = b[c] + w[c].iter().zip(x).map(|(a, v)| a * v).sum::<f64>();
            }
            softmax_in_place(&mut probs);
            probs[y] -= 1.0;
            for c in 0..classes {
                let p = probs[c];
                gb[c] += p;
                gw[c].iter_mut().zip(x).for_each(|(g, v)| *g += p * v);
            }
        }
        for c in 0..classes {
            for k in 0..d {
                let g = gw[c][k] / n + cfg.l2 * w[c][k];
                vw[c][k] = cfg.momentum * vw[c][k] - cfg.learning_rate * g;
                w[c][k] += vw[c][k];
            }
            vb[c] = cfg.momentum * vb[c] - cfg.learning_rate * gb[c] / n;
            b[c] += vb[c];
        }
    }
    Ok(SoftmaxIdentifier { weights: w, bias: b, feature_mean: mean, feature_scale: scale })
}
