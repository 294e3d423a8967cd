use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::raster::Image;

/// Maps an obscured image back toward its clear original.
pub trait Reconstructor: Sync {
    fn name(&self) -> &str;
    fn reconstruct(&self, obscured: &Image) -> Result<Image>;
}

/// Returns its input; the "no reconstruction" baseline.
#[derive(Clone, Copy, Debug, Default)]
pub struct IdentityReconstructor;

impl Reconstructor for IdentityReconstructor {
    fn name(&self) -> &str {
        "identity"
    }

    fn reconstruct(&self, obscured: &Image) -> Result<Image> {
        Ok(obscured.clone())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RidgeConfig {
    pub patch: usize,
    /// Extra pixels of input on each side of a patch.
    pub context: usize,
    pub lambda: f64,
    /// Patch samples per channel kept for fitting, evenly strided.
    pub max_samples: usize,
}

impl Default for RidgeConfig {
    fn default() -> Self {
        RidgeConfig { patch: 8, context: 2, lambda: 1e-2, max_samples: 16384 }
    }
}

/// Per-channel linear map from a context window to the patch inside it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RidgeReconstructor {
    pub config: RidgeConfig,
    channels: Vec<ChannelMap>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct ChannelMap {
    input_mean: Vec<f64>,
    output_mean: Vec<f64>,
    /// `inputs x outputs`, column-major.
    weights: Vec<f64>,
}

/// Patch origins along one axis; the last one is pulled back to fit.
fn origins(len: usize, patch: usize) -> Vec<usize> {
    let mut v: Vec<usize> = (0..len.div_ceil(patch)).map(|b| (b * patch).min(len - patch)).collect();
    v.dedup();
    v
}

fn window(plane: &[f64], w: usize, h: usize, x0: usize, y0: usize, cfg: &RidgeConfig, out: &mut Vec<f64>) {
    let side = cfg.patch + 2 * cfg.context;
    out.clear();
    for dy in 0..side {
        let y = (y0 + dy).saturating_sub(cfg.context).min(h - 1);
        for dx in 0..side {
            let x = (x0 + dx).saturating_sub(cfg.context).min(w - 1);
            out.push(plane[y * w + x]);
        }
    }
}

fn patch_values(plane: &[f64], w: usize, x0: usize, y0: usize, patch: usize, out: &mut Vec<f64>) {
    out.clear();
    for y in y0..y0 + patch {
        out.extend_from_slice(&plane[y * w + x0..y * w + x0 + patch]);
    }
}

/// Fits the patch regressor on `(obscured, clear)` pairs by solving the
/// centered ridge normal equations; the bias is not penalized.
pub fn ridge_reconstructor_fit(pairs: &[(&Image, &Image)], cfg: &RidgeConfig) -> Result<RidgeReconstructor> {
    if cfg.patch == 0 {
        return Err(Error::invalid("patch size must be positive"));
    }
    if cfg.lambda.is_nan() || cfg.lambda < 0.0 {
        return Err(Error::invalid(format!("ridge lambda must be nonnegative, got {}", cfg.lambda)));
    }
    let (first, _) = pairs.first().ok_or_else(|| Error::invalid("no training pairs"))?;
    for (o, c) in pairs {
        if !o.same_shape(c) || !o.same_shape(first) {
            return Err(Error::dims("training pairs must all share one shape"));
        }
    }
    let (w, h) = (first.width(), first.height());
    if w < cfg.patch || h < cfg.patch {
        return Err(Error::dims(format!("{w}x{h} images are smaller than one {0}x{0} patch", cfg.patch)));
    }
    let (xs, ys) = (origins(w, cfg.patch), origins(h, cfg.patch));
    let mut sites: Vec<(usize, usize, usize)> = Vec::new();
    for p in 0..pairs.len() {
        for &y in &ys {
            for &x in &xs {
                sites.push((p, x, y));
            }
        }
    }
    if sites.len() < 100 {
        return Err(Error::invalid(format!("ridge fit needs at least 100 patch samples, got {}", sites.len())));
    }
    let stride = sites.len().div_ceil(cfg.max_samples.max(1));
    let sites: Vec<_> = sites.into_iter().step_by(stride).collect();

    let inputs = (cfg.patch + 2 * cfg.context).pow(2);
    let outputs = cfg.patch * cfg.patch;
    let n = sites.len();
    let mut channels = Vec::with_capacity(first.channels());
    let (mut win, mut pat) = (Vec::with_capacity(inputs), Vec::with_capacity(outputs));
    for c in 0..first.channels() {
        let mut x = DMatrix::<f64>::zeros(n, inputs);
        let mut y = DMatrix::<f64>::zeros(n, outputs);
        for (row, &(p, x0, y0)) in sites.iter().enumerate() {
            window(pairs[p].0.plane(c), w, h, x0, y0, cfg, &mut win);
            patch_values(pairs[p].1.plane(c), w, x0, y0, cfg.patch, &mut pat);
            x.row_mut(row).iter_mut().zip(&win).for_each(|(d, s)| *d = *s);
            y.row_mut(row).iter_mut().zip(&pat).for_each(|(d, s)| *d = *s);
        }
        let input_mean: Vec<f64> = x.column_iter().map(|col| col.mean()).collect();
        let output_mean: Vec<f64> = y.column_iter().map(|col| col.mean()).collect();
        for (j, m) in input_mean.iter().enumerate() {
            x.column_mut(j).add_scalar_mut(-m);
        }
        for (j, m) in output_mean.iter().enumerate() {
            y.column_mut(j).add_scalar_mut(-m);
        }
        let mut gram = x.transpose() * &x;
        for i in 0..inputs {
            gram[(i, i)] += cfg.lambda;
        }
        let rhs = x.transpose() * &y;
        let chol = gram.cholesky().ok_or_else(|| {
            Error::invalid(format!("ridge normal equations are singular with lambda = {}", cfg.lambda))
        })?;
        let weights = chol.solve(&rhs);
        channels.push(ChannelMap { input_mean, output_mean, weights: weights.as_slice().to_vec() });
    }
    Ok(RidgeReconstructor { config: *cfg, channels })
}

impl Reconstructor for RidgeReconstructor {
    fn name(&self) -> &str {
        "ridge"
    }

    fn reconstruct(&self, obscured: &Image) -> Result<Image> {
        let cfg = &self.config;
        if obscured.channels() != self.channels.len() {
            return Err(Error::dims(format!("model has {} channels, image {}", self.channels.len(), obscured.channels())));
        }
        let (w, h) = (obscured.width(), obscured.height());
        if w < cfg.patch || h < cfg.patch {
            return Err(Error::dims("image smaller than one patch"));
        }
        let inputs = (cfg.patch + 2 * cfg.context).pow(2);
        let outputs = cfg.patch * cfg.patch;
        let (xs, ys) = (origins(w, cfg.patch), origins(h, cfg.patch));
        let mut planes = Vec::with_capacity(self.channels.len());
        let mut win = Vec::with_capacity(inputs);
        for (c, map) in self.channels.iter().enumerate() {
            let src = obscured.plane(c);
            let weights = DMatrix::from_column_slice(inputs, outputs, &map.weights);
            let mut out = vec![0.0; w * h];
            for &y0 in &ys {
                for &x0 in &xs {
                    window(src, w, h, x0, y0, cfg, &mut win);
                    let centered = DVector::from_iterator(inputs, win.iter().zip(&map.input_mean).map(|(v, m)| v - m));
                    let pred = weights.tr_mul(&centered);
                    for py in 0..cfg.patch {
                        for px in 0..cfg.patch {
                            let k = py * cfg.patch + px;
                            out[(y0 + py) * w + x0 + px] = pred[k] + map.output_mean[k];
                        }
                    }
                }
            }
            planes.push(out);
        }
        Image::from_planes(w, h, obscured.color_space(), planes)
    }
}
