//! Desk-scale face recognition.
//!
//! Eigenfaces stand in for a deep backbone: images are reduced to a luma
//! feature vector, projected onto principal components, and the resulting
//! embeddings feed a softmax identifier (identification) or an angular
//! distance test (verification). ArcFace trains the class projection weight.

mod arcface;
mod identifier;
mod pca;
mod verification;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::raster::{area_downsample, Image};

pub use arcface::{
    arcface_grad, arcface_loss, init_weights, mean_loss, train_arcface, train_arcface_from, ArcFaceFit, ArcFaceParams,
    ArcFaceTraining, DEFAULT_MARGIN, DEFAULT_SCALE, DEEP_EMBEDDING_DIM, SINGULARITY_GUARD,
};
pub use identifier::{argmax, train_softmax_identifier, SoftmaxIdentifier, SoftmaxTraining};
pub use pca::{pca_fit, EmbeddingBasis};
pub use verification::{angular_distance, choose_threshold, load_model, save_model, VerificationModel};

pub const DEFAULT_EMBEDDING_DIM: usize = 32;

/// Turns an image into the raw vector the embedding basis consumes.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureExtractor {
    /// Box-average the luma plane to `side x side`; `None` keeps full resolution.
    pub side: Option<usize>,
}

impl Default for FeatureExtractor {
    fn default() -> Self {
        FeatureExtractor { side: Some(32) }
    }
}

impl FeatureExtractor {
    pub fn extract(&self, img: &Image) -> Vec<f64> {
        let luma = img.luma();
        match self.side {
            Some(side) if side != img.width() || side != img.height() => {
                area_downsample(&luma, img.width(), img.height(), side)
            }
            _ => luma,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Backbone {
    pub extractor: FeatureExtractor,
    pub basis: EmbeddingBasis,
}

impl Backbone {
    /// Fits PCA on the extracted features of `images`. The dimension is
    /// capped at one less than the sample count.
    pub fn fit(images: &[&Image], dim: usize, extractor: FeatureExtractor) -> Result<Self> {
        if images.len() < 2 {
            return Err(Error::invalid("need at least two images to fit an embedding"));
        }
        let features: Vec<Vec<f64>> = images.iter().map(|img| extractor.extract(img)).collect();
        Self::fit_features(&features, dim, extractor)
    }

    pub fn fit_features(features: &[Vec<f64>], dim: usize, extractor: FeatureExtractor) -> Result<Self> {
        let refs: Vec<&[f64]> = features.iter().map(Vec::as_slice).collect();
        let d = dim.min(features.len().saturating_sub(1)).max(1);
        Ok(Backbone { extractor, basis: pca_fit(&refs, d)? })
    }

    pub fn embed_image(&self, img: &Image) -> Result<Vec<f64>> {
        self.basis.embed(&self.extractor.extract(img))
    }

    pub fn embed_features(&self, features: &[f64]) -> Result<Vec<f64>> {
        self.basis.embed(features)
    }
}

/// Backbone plus softmax head: predicts an identity index for an image.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Identifier {
    pub backbone: Backbone,
    pub head: SoftmaxIdentifier,
}

impl Identifier {
    pub fn fit_features(
        features: &[Vec<f64>],
        labels: &[usize],
        dim: usize,
        extractor: FeatureExtractor,
        training: &SoftmaxTraining,
    ) -> Result<Self> {
        let backbone = Backbone::fit_features(features, dim, extractor)?;
        let embeddings: Vec<Vec<f64>> = features.iter().map(|f| backbone.embed_features(f)).collect::<Result<_>>()?;
        let head = train_softmax_identifier(&embeddings, labels, training)?;
        Ok(Identifier { backbone, head })
    }

    pub fn predict_features(&self, features: &[f64]) -> Result<usize> {
        self.head.predict(&self.backbone.embed_features(features)?)
    }

    pub fn predict(&self, img: &Image) -> Result<usize> {
        self.predict_features(&self.backbone.extractor.extract(img))
    }
}
