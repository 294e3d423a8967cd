use crate::error::{Error, Result};
use crate::raster::Image;

/// Area under the ROC curve via the Mann-Whitney rank statistic: the chance
/// that a random positive outscores a random negative, ties counting one half.
pub fn roc_auc(scores: &[f64], labels: &[bool]) -> Result<f64> {
    if scores.len() != labels.len() {
        return Err(Error::dims(format!("{} scores for {} labels", scores.len(), labels.len())));
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(Error::invalid("NaN score"));
    }
    let positives = labels.iter().filter(|&&l| l).count() as u64;
    let negatives = labels.len() as u64 - positives;
    if positives == 0 || negatives == 0 {
        return Err(Error::invalid("AUC needs both positive and negative examples"));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));

    // twice the rank sum, so tied (half-integer) ranks stay integral
    let mut rank_sum2: u64 = 0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j < order.len() && scores[order[j]] == scores[order[i]] {
            j += 1;
        }
        let twice_avg_rank = (i + 1 + j) as u64;
        rank_sum2 += twice_avg_rank * order[i..j].iter().filter(|&&k| labels[k]).count() as u64;
        i = j;
    }
    let u2 = rank_sum2 - positives * (positives + 1);
    Ok(u2 as f64 / (2 * positives * negatives) as f64)
}

/// Mean squared difference over every sample of two same-shaped images.
pub fn mse(a: &Image, b: &Image) -> Result<f64> {
    if !a.same_shape(b) {
        return Err(Error::dims(format!(
            "{}x{}x{} vs {}x{}x{}",
            a.width(),
            a.height(),
            a.channels(),
            b.width(),
            b.height(),
            b.channels()
        )));
    }
    let mut total = 0.0;
    for (pa, pb) in a.planes().iter().zip(b.planes()) {
        total += pa.iter().zip(pb).map(|(x, y)| (x - y) * (x - y)).sum::<f64>();
    }
    Ok(total / a.len() as f64)
}

/// Mean and population standard deviation.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::raster::ColorSpace;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn pairwise_auc(scores: &[f64], labels: &[bool]) -> f64 {
        let (mut twice, mut pairs) = (0u64, 0u64);
        for (i, &si) in scores.iter().enumerate() {
            for (j, &sj) in scores.iter().enumerate() {
                if labels[i] && !labels[j] {
                    pairs += 1;
                    twice += if si > sj { 2 } else if si == sj { 1 } else { 0 };
                }
            }
        }
        twice as f64 / (2 * pairs) as f64
    }

    #[test]
    fn hand_cases() {
        assert_eq!(roc_auc(&[2.0, 3.0, 0.0, 1.0], &[true, true, false, false]).unwrap(), 1.0);
        assert_eq!(roc_auc(&[2.0, 3.0, 0.0, 1.0], &[false, false, true, true]).unwrap(), 0.0);
        assert_eq!(roc_auc(&[0.7; 6], &[true, false, true, false, false, true]).unwrap(), 0.5);
        assert!(roc_auc(&[1.0, 2.0], &[true, true]).is_err());
        assert!(roc_auc(&[1.0], &[true, false]).is_err());
    }

    #[test]
    fn matches_pairwise_oracle_with_ties() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..200 {
            let n = rng.random_range(2..60);
            let scores: Vec<f64> = (0..n).map(|_| rng.random_range(0..8) as f64 * 0.25).collect();
            let mut labels: Vec<bool> = (0..n).map(|_| rng.random_bool(0.4)).collect();
            labels[0] = true;
            labels[1] = false;
            assert_eq!(roc_auc(&scores, &labels).unwrap(), pairwise_auc(&scores, &labels));
        }
    }

    proptest! {
        #[test]
        fn monotone_maps_and_label_flips(
            scores in prop::collection::vec(-5.0f64..5.0, 4..40),
            seed in any::<u64>(),
        ) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut labels: Vec<bool> = scores.iter().map(|_| rng.random_bool(0.5)).collect();
            labels[0] = true;
            labels[1] = false;
            let auc = roc_auc(&scores, &labels).unwrap();
            let mapped: Vec<f64> = scores.iter().map(|s| (s * 0.7).exp() * 3.0 - 1.0).collect();
            prop_assert_eq!(roc_auc(&mapped, &labels).unwrap(), auc);
            let flipped: Vec<bool> = labels.iter().map(|l| !l).collect();
            prop_assert!((roc_auc(&scores, &flipped).unwrap() - (1.0 - auc)).abs() < 1e-12);
        }

        #[test]
        fn mse_is_symmetric(a in prop::collection::vec(0.0f64..1.0, 12), b in prop::collection::vec(0.0f64..1.0, 12)) {
            let ia = Image::from_flat(2, 2, ColorSpace::Rgb, &a).unwrap();
            let ib = Image::from_flat(2, 2, ColorSpace::Rgb, &b).unwrap();
            prop_assert_eq!(mse(&ia, &ib).unwrap(), mse(&ib, &ia).unwrap());
            prop_assert_eq!(mse(&ia, &ia).unwrap(), 0.0);
        }
    }

    #[test]
    fn mse_hand_values() {
        let zero = Image::filled(4, 4, ColorSpace::Gray, 0.0).unwrap();
        let one = Image::filled(4, 4, ColorSpace::Gray, 1.0).unwrap();
        assert_eq!(mse(&zero, &one).unwrap(), 1.0);
        let checker = Image::from_fn(4, 4, ColorSpace::Gray, |_, x, y| ((x + y) % 2) as f64).unwrap();
        let inverse = Image::from_fn(4, 4, ColorSpace::Gray, |_, x, y| ((x + y + 1) % 2) as f64).unwrap();
        let half = Image::filled(4, 4, ColorSpace::Gray, 0.5).unwrap();
        assert_eq!(mse(&checker, &inverse).unwrap(), 1.0);
        assert_eq!(mse(&checker, &half).unwrap(), 0.25);
        assert!(mse(&zero, &Image::filled(4, 2, ColorSpace::Gray, 0.0).unwrap()).is_err());
    }

    #[test]
    fn mean_std_basics() {
        assert_eq!(mean_std(&[1.0, 3.0]), (2.0, 1.0));
        assert!(mean_std(&[]).0.is_nan());
    }
}
