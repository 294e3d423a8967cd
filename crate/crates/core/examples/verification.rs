//! Trains an ArcFace head on eigenface embeddings, picks a distance threshold
//! on validation pairs and reports the verification AUC of clear vs blurred
//! faces.
//!
//!     cargo run --release --example verification

use obscura::dataset::{generate_synthetic, split_by_image, Ratios, Split, SyntheticParams};
use obscura::harness::{roc_auc, verification_auc, Method, VerificationProtocol};
use obscura::recognition::{
    angular_distance, choose_threshold, train_arcface, ArcFaceTraining, Backbone, FeatureExtractor, VerificationModel,
};

fn main() -> obscura::Result<()> {
    let ds = generate_synthetic(&SyntheticParams::new(16, 10, 128, 3))?;
    let (ds, _) = split_by_image(&ds, Ratios::default(), 3)?;
    let train: Vec<_> = ds.indices(Split::Train);
    let train_imgs: Vec<_> = train.iter().map(|&i| &ds.items[i].image).collect();
    let labels: Vec<usize> = train.iter().map(|&i| ds.items[i].identity).collect();

    let backbone = Backbone::fit(&train_imgs, 16, FeatureExtractor::default())?;
    let embeddings: Vec<Vec<f64>> = train_imgs.iter().map(|img| backbone.embed_image(img)).collect::<Result<_, _>>()?;
    let fit = train_arcface(&embeddings, &labels, &ArcFaceTraining::default())?;
    println!("arcface loss: {:.4} -> {:.4}", fit.loss_history[0], fit.loss_history.last().unwrap());

    let val = ds.indices(Split::Val);
    let (mut genuine, mut impostor) = (Vec::new(), Vec::new());
    for (a, &i) in val.iter().enumerate() {
        for &j in &val[a + 1..] {
            let d = angular_distance(&backbone.embed_image(&ds.items[i].image)?, &backbone.embed_image(&ds.items[j].image)?)?;
            if ds.items[i].identity == ds.items[j].identity { genuine.push(d) } else { impostor.push(d) }
        }
    }
    let threshold = choose_threshold(&genuine, &impostor)?;
    let scores: Vec<f64> = genuine.iter().chain(&impostor).map(|d| -d).collect();
    let truth: Vec<bool> = genuine.iter().map(|_| true).chain(impostor.iter().map(|_| false)).collect();
    println!("val clear/clear auc {:.3}, threshold {threshold:.3} rad", roc_auc(&scores, &truth)?);

    let model = VerificationModel::new(backbone, fit.params, threshold)?;
    let test = ds.indices(Split::Test);
    let blur = Method::gaussian(15)?;
    let clear: Vec<_> = test.iter().map(|&i| model.backbone.embed_image(&ds.items[i].image)).collect::<Result<_, _>>()?;
    let blurred: Vec<_> = test
        .iter()
        .map(|&i| model.backbone.embed_image(&blur.apply(&ds.items[i].image, 0)?))
        .collect::<Result<_, _>>()?;
    let ids: Vec<usize> = test.iter().map(|&i| ds.items[i].identity).collect();
    let s = verification_auc(&clear, &blurred, &ids, &VerificationProtocol::default(), 9)?;
    println!("clear vs gaussian-15 auc {:.3} +- {:.3} over {} repeats", s.mean, s.std, s.per_repeat.len());
    let same = model.verify(&ds.items[test[0]].image, &blur.apply(&ds.items[test[0]].image, 0)?)?;
    println!("first test face matches its own blurred copy: {same}");
    Ok(())
}
