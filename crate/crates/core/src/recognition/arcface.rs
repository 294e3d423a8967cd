//! Additive angular margin (ArcFace) loss, its analytic gradient, and SGD
//! training of the class projection weights.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::pca::dot;
use crate::error::{Error, Result};

pub const DEFAULT_SCALE: f64 = 8.0;
pub const DEFAULT_MARGIN: f64 = 0.5;
/// Embedding width of full-scale deep backbones; desk-scale runs default to 32.
pub const DEEP_EMBEDDING_DIM: usize = 512;

/// `cos(theta_t)` closer than this to +-1 makes the arccos derivative blow up.
pub const SINGULARITY_GUARD: f64 = 1e-6;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ArcFaceParams {
    /// One column per identity, each of embedding length `d`.
    pub weights: Vec<Vec<f64>>,
    pub scale: f64,
    pub margin: f64,
}

impl ArcFaceParams {
    pub fn new(weights: Vec<Vec<f64>>, scale: f64, margin: f64) -> Result<Self> {
        check_hyper(scale, margin)?;
        let d = weights.first().map_or(0, Vec::len);
        if weights.is_empty() || d == 0 || weights.iter().any(|w| w.len() != d) {
            return Err(Error::dims("projection weight must have equal, nonempty columns"));
        }
        Ok(ArcFaceParams { weights, scale, margin })
    }

    pub fn classes(&self) -> usize {
        self.weights.len()
    }

    pub fn loss(&self, x: &[f64], target: usize) -> Result<f64> {
        arcface_loss(x, &self.weights, target, self.scale, self.margin)
    }
}

fn check_hyper(scale: f64, margin: f64) -> Result<()> {
    if scale.is_nan() || scale <= 0.0 {
        return Err(Error::invalid(format!("scale must be positive, got {scale}")));
    }
    if !(0.0..std::f64::consts::FRAC_PI_2).contains(&margin) {
        return Err(Error::invalid(format!("margin must lie in [0, pi/2), got {margin}")));
    }
    Ok(())
}

struct Geometry {
    x_norm: f64,
    x_hat: Vec<f64>,
    w_norms: Vec<f64>,
    w_hat: Vec<Vec<f64>>,
    cos: Vec<f64>,
}

fn geometry(x: &[f64], weights: &[Vec<f64>], target: usize) -> Result<Geometry> {
    if target >= weights.len() {
        return Err(Error::invalid(format!("target {target} out of range for {} classes", weights.len())));
    }
    let x_norm = dot(x, x).sqrt();
    if x_norm == 0.0 {
        return Err(Error::invalid("embedding has zero norm"));
    }
    let x_hat: Vec<f64> = x.iter().map(|v| v / x_norm).collect();
    let mut w_norms = Vec::with_capacity(weights.len());
    let mut w_hat = Vec::with_capacity(weights.len());
    let mut cos = Vec::with_capacity(weights.len());
    for (j, w) in weights.iter().enumerate() {
        if w.len() != x.len() {
            return Err(Error::dims(format!("weight column {j} has length {}, embedding {}", w.len(), x.len())));
        }
        let n = dot(w, w).sqrt();
        if n == 0.0 {
            return Err(Error::invalid(format!("weight column {j} has zero norm")));
        }
        let wh: Vec<f64> = w.iter().map(|v| v / n).collect();
        cos.push(dot(&wh, &x_hat).clamp(-1.0, 1.0));
        w_norms.push(n);
        w_hat.push(wh);
    }
    Ok(Geometry { x_norm, x_hat, w_norms, w_hat, cos })
}

fn logits(cos: &[f64], target: usize, scale: f64, margin: f64) -> Vec<f64> {
    cos.iter()
        .enumerate()
        .map(|(j, &c)| if j == target { scale * (c.acos() + margin).cos() } else { scale * c })
        .collect()
}

fn log_sum_exp(z: &[f64]) -> f64 {
    let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    max + z.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}

pub fn arcface_loss(x: &[f64], weights: &[Vec<f64>], target: usize, scale: f64, margin: f64) -> Result<f64> {
    check_hyper(scale, margin)?;
    let g = geometry(x, weights, target)?;
    let z = logits(&g.cos, target, scale, margin);
    Ok(log_sum_exp(&z) - z[target])
}

/// Gradient of [`arcface_loss`] with respect to the embedding and every weight column.
pub fn arcface_grad(
    x: &[f64],
    weights: &[Vec<f64>],
    target: usize,
    scale: f64,
    margin: f64,
) -> Result<(Vec<f64>, Vec<Vec<f64>>)> {
    check_hyper(scale, margin)?;
    let g = geometry(x, weights, target)?;
    if g.cos[target].abs() >= 1.0 - SINGULARITY_GUARD {
        return Err(Error::DegenerateGradient { cos: g.cos[target] });
    }
    Ok(backprop(&g, target, scale, margin))
}

/// Like [`arcface_grad`], but clamps `cos(theta_t)` into the guard band
/// instead of failing. Used by training.
fn arcface_grad_clamped(x: &[f64], weights: &[Vec<f64>], target: usize, scale: f64, margin: f64) -> Result<(f64, Vec<f64>, Vec<Vec<f64>>)> {
    let mut g = geometry(x, weights, target)?;
    let z = logits(&g.cos, target, scale, margin);
    let loss = log_sum_exp(&z) - z[target];
    let limit = 1.0 - SINGULARITY_GUARD;
    g.cos[target] = g.cos[target].clamp(-limit, limit);
    let (dx, dw) = backprop(&g, target, scale, margin);
    Ok((loss, dx, dw))
}

fn backprop(g: &Geometry, target: usize, scale: f64, margin: f64) -> (Vec<f64>, Vec<Vec<f64>>) {
    let z = logits(&g.cos, target, scale, margin);
    let lse = log_sum_exp(&z);
    // dL/dcos_j
    let dcos: Vec<f64> = z
        .iter()
        .enumerate()
        .map(|(j, &zj)| {
            let p = (zj - lse).exp();
            if j == target {
                let c = g.cos[j];
                let theta = c.acos();
                // d/dc [s cos(acos(c) + m)] = s sin(theta + m) / sqrt(1 - c^2)
                (p - 1.0) * scale * (theta + margin).sin() / (1.0 - c * c).sqrt()
            } else {
                p * scale
            }
        })
        .collect();

    let d = g.x_hat.len();
    let mut dx = vec![0.0; d];
    let mut dw = Vec::with_capacity(g.w_hat.len());
    for (j, wh) in g.w_hat.iter().enumerate() {
        let c = g.cos[j];
        for k in 0..d {
            dx[k] += dcos[j] * (wh[k] - c * g.x_hat[k]) / g.x_norm;
        }
        dw.push((0..d).map(|k| dcos[j] * (g.x_hat[k] - c * wh[k]) / g.w_norms[j]).collect());
    }
    (dx, dw)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ArcFaceTraining {
    pub scale: f64,
    pub margin: f64,
    pub epochs: usize,
    pub learning_rate: f64,
    /// 1-based epochs at which the learning rate is divided by 10.
    pub milestones: Vec<usize>,
    pub batch_size: usize,
    pub weight_decay: f64,
    pub seed: u64,
}

impl Default for ArcFaceTraining {
    fn default() -> Self {
        ArcFaceTraining {
            scale: DEFAULT_SCALE,
            margin: DEFAULT_MARGIN,
            epochs: 20,
            learning_rate: 0.1,
            milestones: vec![6, 11, 16],
            batch_size: 128,
            weight_decay: 5e-4,
            seed: 0,
        }
    }
}

impl ArcFaceTraining {
    pub fn learning_rate_at(&self, epoch: usize) -> f64 {
        let drops = self.milestones.iter().filter(|&&m| epoch >= m).count();
        self.learning_rate * 0.1f64.powi(drops as i32)
    }
}

#[derive(Clone, Debug)]
pub struct ArcFaceFit {
    pub params: ArcFaceParams,
    /// Mean loss over the training set before training and after every epoch.
    pub loss_history: Vec<f64>,
}

/// Seeded standard-normal initialization of the projection weight.
pub fn init_weights(d: usize, classes: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..classes).map(|_| (0..d).map(|_| StandardNormal.sample(&mut rng)).collect()).collect()
}

pub fn mean_loss(params: &ArcFaceParams, embeddings: &[Vec<f64>], labels: &[usize]) -> Result<f64> {
    let mut total = 0.0;
    for (x, &t) in embeddings.iter().zip(labels) {
        total += params.loss(x, t)?;
    }
    Ok(total / embeddings.len() as f64)
}

/// Mini-batch SGD with weight decay on the projection weight only.
pub fn train_arcface(embeddings: &[Vec<f64>], labels: &[usize], cfg: &ArcFaceTraining) -> Result<ArcFaceFit> {
    train_arcface_from(embeddings, labels, cfg, None)
}

pub fn train_arcface_from(
    embeddings: &[Vec<f64>],
    labels: &[usize],
    cfg: &ArcFaceTraining,
    initial: Option<Vec<Vec<f64>>>,
) -> Result<ArcFaceFit> {
    check_hyper(cfg.scale, cfg.margin)?;
    if embeddings.len() != labels.len() || embeddings.is_empty() {
        return Err(Error::invalid("need matching, nonempty embeddings and labels"));
    }
    let classes = labels.iter().max().unwrap() + 1;
    let mut distinct = labels.to_vec();
    distinct.sort_unstable();
    distinct.dedup();
    if distinct.len() < 2 {
        return Err(Error::invalid("ArcFace training needs at least two identities"));
    }
    if cfg.batch_size == 0 {
        return Err(Error::invalid("batch size must be positive"));
    }
    let d = embeddings[0].len();
    let weights = initial.unwrap_or_else(|| init_weights(d, classes, cfg.seed));
    let mut params = ArcFaceParams::new(weights, cfg.scale, cfg.margin)?;
    if params.classes() < classes {
        return Err(Error::dims("initial weight has fewer columns than label classes"));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x5eed_a4cf);
    let mut order: Vec<usize> = (0..embeddings.len()).collect();
    let mut history = vec![mean_loss(&params, embeddings, labels)?];
    for epoch in 1..=cfg.epochs {
        let lr = cfg.learning_rate_at(epoch);
        order.shuffle(&mut rng);
        for batch in order.chunks(cfg.batch_size) {
            let mut grad = vec![vec![0.0; d]; params.classes()];
            for &i in batch {
                let (_, _, dw) = arcface_grad_clamped(&embeddings[i], &params.weights, labels[i], cfg.scale, cfg.margin)?;
                for (g, w) in grad.iter_mut().zip(dw) {
                    g.iter_mut().zip(w).for_each(|(a, b)| *a += b);
                }
            }
            let inv = 1.0 / batch.len() as f64;
            for (w, g) in params.weights.iter_mut().zip(&grad) {
                for (wk, gk) in w.iter_mut().zip(g) {
                    *wk -= lr * (gk * inv + cfg.weight_decay * *wk);
                }
            }
        }
        history.push(mean_loss(&params, embeddings, labels)?);
    }
    Ok(ArcFaceFit { params, loss_history: history })
}
