//! k-same over unique identities: group structure and how well a clear-trained
//! identifier does on the averaged faces.
//!
//!     cargo run --release --example k_same -- [k]

use obscura::dataset::{generate_synthetic, SyntheticParams};
use obscura::ksame::{check_k_anonymity_precondition, k_same, k_same_images, FeatureRecord};
use obscura::recognition::{FeatureExtractor, Identifier, SoftmaxTraining};

fn main() -> obscura::Result<()> {
    let k: usize = std::env::args().nth(1).map_or(10, |a| a.parse().expect("k must be a number"));
    let ds = generate_synthetic(&SyntheticParams::new(50, 1, 64, 11))?;
    let images: Vec<_> = ds.items.iter().map(|it| &it.image).collect();

    let records: Vec<FeatureRecord> = ds
        .items
        .iter()
        .enumerate()
        .map(|(id, it)| FeatureRecord { id, identity: ds.identities[it.identity].clone(), features: it.image.flatten() })
        .collect();
    println!("precondition warnings: {:?}", check_k_anonymity_precondition(&records));
    let result = k_same(&records, k)?;
    for (g, members) in result.groups.iter().enumerate() {
        println!("group {g}: {members:?}");
    }

    let extractor = FeatureExtractor::default();
    let features: Vec<Vec<f64>> = images.iter().map(|img| extractor.extract(img)).collect();
    let labels: Vec<usize> = ds.items.iter().map(|it| it.identity).collect();
    let identifier = Identifier::fit_features(&features, &labels, 32, extractor, &SoftmaxTraining::default())?;

    let obscured = k_same_images(&images, k)?;
    let hits = obscured.iter().zip(&labels).filter(|(img, &l)| identifier.predict(img).unwrap() == l).count();
    let clear_hits = images.iter().zip(&labels).filter(|(img, &l)| identifier.predict(img).unwrap() == l).count();
    println!("top-1 on clear {:.3}, on k-same {:.3} (1/k = {:.3})", clear_hits as f64 / 50.0, hits as f64 / 50.0, 1.0 / k as f64);
    Ok(())
}
