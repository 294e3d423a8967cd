use std::path::Path;

use serde::{de::DeserializeOwned, Deserialize, Serialize};

use super::arcface::ArcFaceParams;
use super::pca::dot;
use super::Backbone;
use crate::error::{Error, Result};
use crate::raster::Image;

/// Angle between two vectors, in `[0, pi]`.
pub fn angular_distance(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::dims(format!("vectors of length {} and {}", a.len(), b.len())));
    }
    let (na, nb) = (dot(a, a).sqrt(), dot(b, b).sqrt());
    if na == 0.0 || nb == 0.0 {
        return Err(Error::invalid("angular distance of a zero vector"));
    }
    // 2 atan2(|a^ - b^|, |a^ + b^|) stays accurate near 0 and pi, unlike acos
    let (mut diff, mut sum) = (0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        let (u, v) = (x / na, y / nb);
        diff += (u - v) * (u - v);
        sum += (u + v) * (u + v);
    }
    Ok(2.0 * diff.sqrt().atan2(sum.sqrt()))
}

/// Accuracy-maximizing cutoff for "same identity iff distance <= threshold".
///
/// Candidates are the midpoints between adjacent distinct distances plus one
/// threshold below and one above all of them; ties go to the smallest.
pub fn choose_threshold(genuine: &[f64], impostor: &[f64]) -> Result<f64> {
    if genuine.is_empty() || impostor.is_empty() {
        return Err(Error::invalid("threshold selection needs genuine and impostor distances"));
    }
    let mut all: Vec<(f64, bool)> = genuine.iter().map(|&v| (v, true)).chain(impostor.iter().map(|&v| (v, false))).collect();
    all.sort_by(|a, b| a.0.total_cmp(&b.0));

    // Sweep: everything at or below the cut is called genuine.
    let mut correct = impostor.len() as i64;
    let lowest = all[0].0;
    let mut best = (correct, if lowest > 0.0 { lowest / 2.0 } else { f64::NAN });
    let mut i = 0;
    while i < all.len() {
        let v = all[i].0;
        while i < all.len() && all[i].0 == v {
            correct += if all[i].1 { 1 } else { -1 };
            i += 1;
        }
        let cut = match all.get(i) {
            Some(next) => (v + next.0) / 2.0,
            None if v < std::f64::consts::PI => (v + std::f64::consts::PI) / 2.0,
            None => std::f64::consts::PI,
        };
        if correct > best.0 || best.1.is_nan() {
            best = (correct, cut);
        }
    }
    Ok(best.1)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VerificationModel {
    pub backbone: Backbone,
    /// Training artifact; inference only uses embeddings and the threshold.
    pub arcface: ArcFaceParams,
    pub threshold: f64,
}

impl VerificationModel {
    pub fn new(backbone: Backbone, arcface: ArcFaceParams, threshold: f64) -> Result<Self> {
        if !(0.0..=std::f64::consts::PI).contains(&threshold) {
            return Err(Error::invalid(format!("threshold {threshold} outside [0, pi]")));
        }
        Ok(VerificationModel { backbone, arcface, threshold })
    }

    pub fn distance(&self, clear: &Image, obscured: &Image) -> Result<f64> {
        angular_distance(&self.backbone.embed_image(clear)?, &self.backbone.embed_image(obscured)?)
    }

    /// True when the two faces are judged to show the same person.
    pub fn verify(&self, clear: &Image, obscured: &Image) -> Result<bool> {
        Ok(self.distance(clear, obscured)? <= self.threshold)
    }
}

/// Writes any model as JSON; floats round-trip bit-exactly.
pub fn save_model<T: Serialize>(model: &T, path: impl AsRef<Path>) -> Result<()> {
    let text = serde_json::to_string(model).map_err(|e| Error::invalid(format!("cannot serialize model: {e}")))?;
    std::fs::write(path, text)?;
    Ok(())
}

pub fn load_model<T: DeserializeOwned>(path: impl AsRef<Path>) -> Result<T> {
    let text = std::fs::read_to_string(path.as_ref())?;
    serde_json::from_str(&text).map_err(|e| Error::Decode { path: path.as_ref().to_path_buf(), reason: e.to_string() })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::raster::ColorSpace;
    use crate::recognition::{EmbeddingBasis, FeatureExtractor};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    /// Brute force: try every candidate cut, count directly.
    fn scan_oracle(genuine: &[f64], impostor: &[f64]) -> (f64, usize) {
        let mut values: Vec<f64> = genuine.iter().chain(impostor).copied().collect();
        values.sort_by(f64::total_cmp);
        values.dedup();
        let mut cuts = vec![];
        if values[0] > 0.0 {
            cuts.push(values[0] / 2.0);
        }
        for w in values.windows(2) {
            cuts.push((w[0] + w[1]) / 2.0);
        }
        let top = *values.last().unwrap();
        cuts.push(if top < PI { (top + PI) / 2.0 } else { PI });
        let score = |t: f64| genuine.iter().filter(|&&g| g <= t).count() + impostor.iter().filter(|&&i| i > t).count();
        let mut best = (cuts[0], score(cuts[0]));
        for &t in &cuts[1..] {
            if score(t) > best.1 {
                best = (t, score(t));
            }
        }
        best
    }

    #[test]
    fn known_angles() {
        assert_eq!(angular_distance(&[1.0, 2.0], &[1.0, 2.0]).unwrap(), 0.0);
        assert!((angular_distance(&[1.0, 2.0], &[-1.0, -2.0]).unwrap() - PI).abs() < 1e-12);
        assert!((angular_distance(&[1.0, 0.0], &[1.0, 1.0]).unwrap() - PI / 4.0).abs() < 1e-12);
        assert!(angular_distance(&[0.0, 0.0], &[1.0, 1.0]).is_err());
    }

    #[test]
    fn angular_distance_is_a_metric_on_the_sphere() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..500 {
            let v: Vec<Vec<f64>> = (0..3).map(|_| (0..5).map(|_| rng.random_range(-1.0..1.0)).collect()).collect();
            let d = |a: usize, b: usize| angular_distance(&v[a], &v[b]).unwrap();
            assert!((d(0, 1) - d(1, 0)).abs() < 1e-9);
            assert!(d(0, 2) <= d(0, 1) + d(1, 2) + 1e-9);
        }
    }

    #[test]
    fn separable_threshold_is_the_midpoint() {
        assert!((choose_threshold(&[0.1], &[1.0]).unwrap() - 0.55).abs() < 1e-15);
        assert!(choose_threshold(&[], &[1.0]).is_err());
    }

    #[test]
    fn identical_distributions_score_one_half() {
        let g = [0.4, 0.8, 1.2];
        let t = choose_threshold(&g, &g).unwrap();
        let acc = (g.iter().filter(|&&v| v <= t).count() + g.iter().filter(|&&v| v > t).count()) as f64 / 6.0;
        assert_eq!(acc, 0.5);
        assert_eq!(t, 0.2);
    }

    #[test]
    fn ten_point_case_matches_exhaustive_scan() {
        let genuine = [0.2, 0.35, 0.5, 0.9, 1.1];
        let impostor = [0.45, 0.8, 1.0, 1.3, 2.0];
        assert_eq!(choose_threshold(&genuine, &impostor).unwrap(), scan_oracle(&genuine, &impostor).0);
    }

    #[test]
    fn random_inputs_match_exhaustive_scan() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..300 {
            let ng = rng.random_range(1..50);
            let ni = rng.random_range(1..50);
            // coarse grid to force ties, including 0 and pi
            let mut draw = |n: usize| -> Vec<f64> { (0..n).map(|_| rng.random_range(0..=20) as f64 * PI / 20.0).collect() };
            let (g, i) = (draw(ng), draw(ni));
            assert_eq!(choose_threshold(&g, &i).unwrap(), scan_oracle(&g, &i).0, "{g:?} {i:?}");
        }
    }

    fn toy_model(threshold: f64) -> VerificationModel {
        let backbone = Backbone {
            extractor: FeatureExtractor { side: Some(4) },
            basis: EmbeddingBasis::random(16, 3, 9).unwrap(),
        };
        let arcface = ArcFaceParams::new(vec![vec![1.0, 0.0, 0.0], vec![0.0, 1.0, 0.0]], 8.0, 0.5).unwrap();
        VerificationModel::new(backbone, arcface, threshold).unwrap()
    }

    #[test]
    fn verify_thresholds() {
        let a = Image::from_fn(8, 8, ColorSpace::Gray, |_, x, y| (x * y) as f64 / 49.0).unwrap();
        let b = Image::from_fn(8, 8, ColorSpace::Gray, |_, x, _| x as f64 / 7.0).unwrap();
        assert!(toy_model(0.01).verify(&a, &a).unwrap());
        assert!(toy_model(PI).verify(&a, &b).unwrap());
        assert!(!toy_model(0.0).verify(&a, &b).unwrap());
        assert!(VerificationModel::new(toy_model(0.0).backbone, toy_model(0.0).arcface, 4.0).is_err());
    }

    #[test]
    fn saved_models_predict_identically() {
        let model = toy_model(0.7);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.json");
        save_model(&model, &path).unwrap();
        let back: VerificationModel = load_model(&path).unwrap();
        assert_eq!(back, model);
        let a = Image::from_fn(8, 8, ColorSpace::Rgb, |c, x, y| ((c + x * 3 + y) % 7) as f64 / 6.0).unwrap();
        let b = Image::from_fn(8, 8, ColorSpace::Rgb, |c, x, y| ((c * 2 + x + y * 5) % 9) as f64 / 8.0).unwrap();
        assert_eq!(back.distance(&a, &b).unwrap().to_bits(), model.distance(&a, &b).unwrap().to_bits());
    }
}
