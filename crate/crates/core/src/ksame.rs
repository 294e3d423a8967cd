//! k-same de-identification over an arbitrary feature space.
//!
//! Pixel-space k-same flattens images into feature vectors. Generative
//! variants run the same grouping over attribute or landmark vectors and hand
//! each averaged vector to a [`ClusterGenerator`].

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::raster::Image;

pub const DEFAULT_K: usize = 10;

#[derive(Clone, Debug, PartialEq)]
pub struct FeatureRecord {
    pub id: usize,
    pub identity: String,
    pub features: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct KSameResult {
    /// Member ids of every group, in formation order.
    pub groups: Vec<Vec<usize>>,
    /// Averaged feature vector of each group.
    pub centroids: Vec<Vec<f64>>,
    group_of: BTreeMap<usize, usize>,
}

impl KSameResult {
    pub fn group_of(&self, id: usize) -> Option<usize> {
        self.group_of.get(&id).copied()
    }

    /// Obscured feature vector assigned to record `id`.
    pub fn obscured(&self, id: usize) -> Option<&[f64]> {
        self.group_of(id).map(|g| self.centroids[g].as_slice())
    }
}

fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Repeatedly takes the lowest remaining id, gathers its `k` nearest remaining
/// records (itself included, ties to the lower id), and replaces all of them
/// with their mean. A final pool smaller than `k` forms one group.
pub fn k_same(records: &[FeatureRecord], k: usize) -> Result<KSameResult> {
    if records.is_empty() {
        return Err(Error::invalid("k-same needs at least one record"));
    }
    if k < 1 {
        return Err(Error::invalid("k must be at least 1"));
    }
    let dim = records[0].features.len();
    if records.iter().any(|r| r.features.len() != dim) {
        return Err(Error::dims("all records must share feature dimensionality"));
    }
    let mut pool: Vec<&FeatureRecord> = records.iter().collect();
    pool.sort_by_key(|r| r.id);
    if pool.windows(2).any(|w| w[0].id == w[1].id) {
        return Err(Error::invalid("record ids must be unique"));
    }

    let mut groups = Vec::new();
    let mut centroids = Vec::new();
    let mut group_of = BTreeMap::new();
    while !pool.is_empty() {
        let take = k.min(pool.len());
        let anchor = pool[0];
        let mut ranked: Vec<(f64, usize)> =
            pool.iter().enumerate().map(|(i, r)| (squared_distance(&anchor.features, &r.features), i)).collect();
        // pool is id-sorted, so the index breaks distance ties toward lower ids
        ranked.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        let mut chosen: Vec<usize> = ranked[..take].iter().map(|&(_, i)| i).collect();

        let mut mean = vec![0.0; dim];
        for &i in &chosen {
            for (m, v) in mean.iter_mut().zip(&pool[i].features) {
                *m += v;
            }
        }
        mean.iter_mut().for_each(|m| *m /= take as f64);

        let mut ids: Vec<usize> = chosen.iter().map(|&i| pool[i].id).collect();
        ids.sort_unstable();
        for &id in &ids {
            group_of.insert(id, groups.len());
        }
        groups.push(ids);
        centroids.push(mean);

        chosen.sort_unstable_by(|a, b| b.cmp(a));
        for i in chosen {
            pool.remove(i);
        }
    }
    Ok(KSameResult { groups, centroids, group_of })
}

/// Pixel-space k-same: every image is replaced by the mean of its group.
pub fn k_same_images(images: &[&Image], k: usize) -> Result<Vec<Image>> {
    let first = images.first().ok_or_else(|| Error::invalid("k-same needs at least one image"))?;
    if images.iter().any(|img| !img.same_shape(first) || img.color_space() != first.color_space()) {
        return Err(Error::dims("k-same images must share dimensions and color space"));
    }
    let records: Vec<FeatureRecord> = images
        .iter()
        .enumerate()
        .map(|(id, img)| FeatureRecord { id, identity: String::new(), features: img.flatten() })
        .collect();
    let result = k_same(&records, k)?;
    let generator = ReshapeGenerator { width: first.width(), height: first.height(), color_space: first.color_space() };
    let rendered: Vec<Image> = result.centroids.iter().map(|c| generator.generate(c)).collect::<Result<_>>()?;
    Ok((0..images.len()).map(|id| rendered[result.group_of(id).unwrap()].clone()).collect())
}

/// Identities that occur more than once. When this is non-empty, the
/// k-anonymity guarantee of [`k_same`] does not hold.
pub fn check_k_anonymity_precondition(records: &[FeatureRecord]) -> Vec<String> {
    let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
    for r in records {
        *counts.entry(r.identity.as_str()).or_default() += 1;
    }
    counts.into_iter().filter(|&(_, n)| n > 1).map(|(id, _)| id.to_string()).collect()
}

/// Turns an averaged feature vector into an image.
///
/// Generative k-same variants plug a trained generator in here; pixel-space
/// k-same uses [`ReshapeGenerator`].
pub trait ClusterGenerator {
    fn generate(&self, averaged: &[f64]) -> Result<Image>;
}

pub struct ReshapeGenerator {
    pub width: usize,
    pub height: usize,
    pub color_space: crate::raster::ColorSpace,
}

impl ClusterGenerator for ReshapeGenerator {
    fn generate(&self, averaged: &[f64]) -> Result<Image> {
        Image::from_flat(self.width, self.height, self.color_space, averaged)
    }
}

/// k-same over attribute vectors, rendered through `generator`. Returns one
/// image per record, in input order.
pub fn k_same_generative(records: &[FeatureRecord], k: usize, generator: &dyn ClusterGenerator) -> Result<Vec<Image>> {
    let result = k_same(records, k)?;
    let rendered: Vec<Image> = result.centroids.iter().map(|c| generator.generate(c)).collect::<Result<_>>()?;
    Ok(records.iter().map(|r| rendered[result.group_of(r.id).unwrap()].clone()).collect())
}
