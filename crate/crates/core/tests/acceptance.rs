//! Acceptance checks. Runs without the libtest harness so that one PASS/FAIL
//! line per criterion is always printed; exits nonzero if any fails.

use std::collections::BTreeSet;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use obscura::dataset::{generate_synthetic, split_by_identity, split_by_image, Split, SyntheticParams};
use obscura::dct::{encode_image, p3_merge, p3_split, read_container, scramble, unscramble, write_container, Container};
use obscura::filters::{gaussian_kernel, gaussian_sigma, pixelate, STANDARD_SIZES};
use obscura::harness::{
    derive_seed, mse, reconstruction_metrics, roc_auc, run_matrix, verification_auc, AttackReport, AttackSession,
    HarnessConfig, IdentityReconstructor, MatrixSpec, Method, ReconstructorKind, ThreatModel, ThreatTag,
    VerificationProtocol,
};
use obscura::ksame::{k_same, k_same_images, FeatureRecord};
use obscura::recognition::{arcface_grad, arcface_loss, FeatureExtractor, Identifier, DEFAULT_MARGIN, DEFAULT_SCALE};
use obscura::{ColorSpace, Image};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome { pass, detail: detail.into() }
}

fn random_image(rng: &mut ChaCha8Rng, side: usize) -> Image {
    Image::from_fn(side, side, ColorSpace::Rgb, |_, _, _| rng.random_range(0..=255) as f64 / 255.0).unwrap()
}

fn c1_gaussian_sigma() -> Outcome {
    let s5 = gaussian_sigma(5);
    let s35 = gaussian_sigma(35);
    let worst_sum = STANDARD_SIZES
        .iter()
        .map(|&w| (gaussian_kernel(w).unwrap().iter().sum::<f64>() - 1.0).abs())
        .fold(0.0, f64::max);
    let pass = (s5 - 1.1).abs() <= 1e-12 && (s35 - 5.6).abs() <= 1e-12 && worst_sum <= 1e-12;
    outcome(pass, format!("sigma(5)={s5:.15} sigma(35)={s35:.15} max |sum-1|={worst_sum:.1e}"))
}

fn c2_pixelation_count() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let img = pixelate(&random_image(&mut rng, 128), 35).unwrap();
    let counts: Vec<usize> = img
        .planes()
        .iter()
        .map(|p| p.iter().map(|v| v.to_bits()).collect::<BTreeSet<_>>().len())
        .collect();
    outcome(counts.iter().all(|&c| c <= 9), format!("distinct values per channel {counts:?}"))
}

fn c3_coefficient_round_trips() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let (mut checked, mut failures) = (0, 0);
    for _ in 0..100 {
        let coeffs = encode_image(&random_image(&mut rng, 64)).unwrap();
        for t in [1, 10, 100] {
            let pair = p3_split(&coeffs, t).unwrap();
            let public = read_container(&write_container(&Container::public_only(&pair)).unwrap()).unwrap();
            let secret = read_container(&write_container(&Container::secret_only(&pair)).unwrap()).unwrap();
            let joined = Container::join(public, secret).unwrap();
            checked += 1;
            failures += usize::from(p3_merge(&joined).unwrap() != coeffs);
        }
        for seed in 0..5u64 {
            let key = rng.random::<u64>() ^ seed;
            let pair = scramble(&coeffs, key);
            let back = read_container(&write_container(&Container::from_pair(&pair)).unwrap()).unwrap();
            checked += 1;
            failures += usize::from(unscramble(&back.into_pair().unwrap()).unwrap() != coeffs);
        }
    }
    let secs = start.elapsed().as_secs_f64();
    outcome(failures == 0 && secs < 10.0, format!("{checked} round trips, {failures} mismatches, {secs:.1}s"))
}

fn c4_k_same() -> Outcome {
    let start = Instant::now();
    let ds = generate_synthetic(&SyntheticParams::new(50, 4, 128, 4)).unwrap();
    let extractor = FeatureExtractor::default();
    // attacker knows three clear images per identity; the first one is de-identified
    let (mut train_f, mut train_l, mut records) = (Vec::new(), Vec::new(), Vec::new());
    for it in &ds.items {
        if it.source.ends_with(":0") {
            records.push(it);
        } else {
            train_f.push(extractor.extract(&it.image));
            train_l.push(it.identity);
        }
    }
    let identifier = Identifier::fit_features(&train_f, &train_l, 32, extractor, &Default::default()).unwrap();
    let feature_records: Vec<FeatureRecord> = records
        .iter()
        .enumerate()
        .map(|(id, it)| FeatureRecord { id, identity: ds.identities[it.identity].clone(), features: it.image.flatten() })
        .collect();
    let grouping = k_same(&feature_records, 10).unwrap();
    let sizes: Vec<usize> = grouping.groups.iter().map(Vec::len).collect();
    let images: Vec<&Image> = records.iter().map(|it| &it.image).collect();
    let obscured = k_same_images(&images, 10).unwrap();
    let hits = obscured.iter().zip(&records).filter(|(img, it)| identifier.predict(img).unwrap() == it.identity).count();
    let clear_hits = records.iter().filter(|it| identifier.predict(&it.image).unwrap() == it.identity).count();
    let top1 = hits as f64 / 50.0;
    let secs = start.elapsed().as_secs_f64();
    let pass = sizes == vec![10; 5] && top1 <= 0.15 && secs < 30.0;
    outcome(pass, format!("groups {sizes:?}, top-1 clear {:.2} k-same {top1:.2}, {secs:.1}s", clear_hits as f64 / 50.0))
}

fn c5_arcface_gradient() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let (d, n, h) = (16, 8, 1e-6);
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let x: Vec<f64> = (0..d).map(|_| rng.random_range(-1.0..1.0)).collect();
        let w: Vec<Vec<f64>> = (0..n).map(|_| (0..d).map(|_| rng.random_range(-1.0..1.0)).collect()).collect();
        let t = rng.random_range(0..n);
        let loss = |x: &[f64], w: &[Vec<f64>]| arcface_loss(x, w, t, DEFAULT_SCALE, DEFAULT_MARGIN).unwrap();
        let (gx, gw) = arcface_grad(&x, &w, t, DEFAULT_SCALE, DEFAULT_MARGIN).unwrap();
        let (mut analytic, mut numeric) = (gx.clone(), Vec::new());
        for k in 0..d {
            let (mut up, mut down) = (x.clone(), x.clone());
            up[k] += h;
            down[k] -= h;
            numeric.push((loss(&up, &w) - loss(&down, &w)) / (2.0 * h));
        }
        for j in 0..n {
            analytic.extend(&gw[j]);
            for k in 0..d {
                let (mut up, mut down) = (w.clone(), w.clone());
                up[j][k] += h;
                down[j][k] -= h;
                numeric.push((loss(&x, &up) - loss(&x, &down)) / (2.0 * h));
            }
        }
        let diff: f64 = analytic.iter().zip(&numeric).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        let norm: f64 = analytic.iter().map(|a| a * a).sum::<f64>().sqrt().max(1e-12);
        worst = worst.max(diff / norm);
    }
    let secs = start.elapsed().as_secs_f64();
    outcome(worst < 1e-5 && secs < 5.0, format!("worst relative error {worst:.2e} (s={DEFAULT_SCALE}, m={DEFAULT_MARGIN}), {secs:.2}s"))
}

fn c6_zero_margin() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let x: Vec<f64> = (0..16).map(|_| rng.random_range(-1.0..1.0)).collect();
        let w: Vec<Vec<f64>> = (0..8).map(|_| (0..16).map(|_| rng.random_range(-1.0..1.0)).collect()).collect();
        let t = rng.random_range(0..8);
        let s = rng.random_range(1.0..64.0);
        let norm = |v: &[f64]| v.iter().map(|a| a * a).sum::<f64>().sqrt();
        let z: Vec<f64> = w
            .iter()
            .map(|wj| s * wj.iter().zip(&x).map(|(a, b)| a * b).sum::<f64>() / (norm(wj) * norm(&x)))
            .collect();
        let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let ce = max + z.iter().map(|v| (v - max).exp()).sum::<f64>().ln() - z[t];
        worst = worst.max((arcface_loss(&x, &w, t, s, 0.0).unwrap() - ce).abs());
    }
    outcome(worst <= 1e-10, format!("worst |loss - cross-entropy| {worst:.1e} over 100 cases"))
}

fn c7_roc_auc() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut oracle_mismatch = 0;
    let mut invariance_breaks = 0;
    for _ in 0..200 {
        let n = rng.random_range(2..80);
        let scores: Vec<f64> = (0..n).map(|_| rng.random_range(0..10) as f64 * 0.5 - 2.0).collect();
        let mut labels: Vec<bool> = (0..n).map(|_| rng.random_bool(0.5)).collect();
        labels[0] = true;
        labels[1] = false;
        let (mut twice, mut pairs) = (0u64, 0u64);
        for i in 0..n {
            for j in 0..n {
                if labels[i] && !labels[j] {
                    pairs += 1;
                    twice += if scores[i] > scores[j] { 2 } else if scores[i] == scores[j] { 1 } else { 0 };
                }
            }
        }
        let auc = roc_auc(&scores, &labels).unwrap();
        oracle_mismatch += usize::from(auc != twice as f64 / (2 * pairs) as f64);
        let mapped: Vec<f64> = scores.iter().map(|s| (3.0 * s).exp() + 7.0).collect();
        invariance_breaks += usize::from(roc_auc(&mapped, &labels).unwrap() != auc);
    }
    let mut worst_random: f64 = 0.0;
    for _ in 0..50 {
        let scores: Vec<f64> = (0..2000).map(|_| rng.random::<f64>()).collect();
        let labels: Vec<bool> = (0..2000).map(|i| i % 2 == 0).collect();
        worst_random = worst_random.max((roc_auc(&scores, &labels).unwrap() - 0.5).abs());
    }
    let pass = oracle_mismatch == 0 && invariance_breaks == 0 && worst_random <= 0.05;
    outcome(
        pass,
        format!("oracle mismatches {oracle_mismatch}/200, monotone breaks {invariance_breaks}, worst random |auc-0.5| {worst_random:.4}"),
    )
}

struct MatrixRun {
    report: AttackReport,
    json: String,
    tsv: String,
    secs: f64,
    recon_secs: f64,
}

const SEED: u64 = 7;

fn full_matrix() -> MatrixRun {
    let ds = generate_synthetic(&SyntheticParams::new(32, 12, 128, SEED)).unwrap();
    let start = Instant::now();
    let (report, timings) = run_matrix(&ds, "synthetic", &MatrixSpec::full(), &HarnessConfig::default(), SEED).unwrap();
    let secs = start.elapsed().as_secs_f64();
    let recon_secs = timings.cells.iter().filter(|(label, _)| label.contains("reconstruction")).map(|c| c.1).sum();
    MatrixRun { json: report.to_json().unwrap(), tsv: report.to_tsv(), report, secs, recon_secs }
}

fn top1(r: &AttackReport, m: Method, tm: &str) -> f64 {
    r.value(m.name(), &m.setting(), tm, "identification", "top1").unwrap_or(f64::NAN)
}

fn c8_trends(run: &MatrixRun) -> Outcome {
    let r = &run.report;
    let failures = r.failures().count();
    let gauss: Vec<f64> = STANDARD_SIZES.iter().map(|&s| top1(r, Method::gaussian(s).unwrap(), "T1")).collect();
    let inversions: Vec<f64> = gauss.windows(2).map(|w| w[1] - w[0]).filter(|&d| d > 0.0).collect();
    let a = inversions.is_empty() || (inversions.len() == 1 && inversions[0] <= 0.02);

    let mut violations = Vec::new();
    for m in MatrixSpec::full().methods {
        let (t1, t3) = (top1(r, m, "T1"), top1(r, m, "T3"));
        if t3.is_nan() || t1.is_nan() || t3 < t1 - 0.02 {
            violations.push(format!("{m} T1 {t1:.3} T3 {t3:.3}"));
        }
    }
    let b = violations.is_empty();

    let chance = 1.0 / 32.0;
    let p3 = top1(r, Method::P3 { threshold: 10 }, "T1");
    let scr = top1(r, Method::Scramble, "T1");
    let c = (p3 - chance).abs() <= 0.05 && (scr - chance).abs() <= 0.05;
    let pass = a && b && c && failures == 0 && run.secs < 300.0;
    outcome(
        pass,
        format!(
            "(a) gaussian T1 {gauss:.3?} {} (b) T3 >= T1 - 0.02 {} {violations:?} (c) T1 p3 {p3:.3} scramble {scr:.3} vs chance {chance:.3} {}; {failures} failed cells, {:.0}s",
            ok(a),
            ok(b),
            ok(c),
            run.secs
        ),
    )
}

fn ok(b: bool) -> &'static str {
    if b { "ok" } else { "FAILED" }
}

fn c9_verification(run: &MatrixRun) -> Outcome {
    let stds: Vec<f64> = run.report.rows.iter().filter(|r| r.metric == "auc").filter_map(|r| r.std).collect();
    let worst_std = stds.iter().copied().fold(0.0, f64::max);

    // an untrained model's embeddings carry no identity: seeded noise per image
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let ids: Vec<usize> = (0..64).flat_map(|i| [i, i]).collect();
    let mut noise = || -> Vec<Vec<f64>> { ids.iter().map(|_| (0..32).map(|_| rng.random_range(-1.0..1.0)).collect()).collect() };
    let (clear, obscured) = (noise(), noise());
    let untrained = verification_auc(&clear, &obscured, &ids, &VerificationProtocol::default(), 9).unwrap();
    let pass = !stds.is_empty() && worst_std <= 0.05 && (untrained.mean - 0.5).abs() <= 0.05;
    outcome(
        pass,
        format!("{} auc rows, max std {worst_std:.4}; untrained auc {:.4} +- {:.4}", stds.len(), untrained.mean, untrained.std),
    )
}

fn c10_reconstruction(run: &MatrixRun) -> Outcome {
    // identity reconstructor on clear images
    let ds = generate_synthetic(&SyntheticParams::new(32, 12, 128, SEED)).unwrap();
    let clear_zero = ds.items.iter().all(|it| mse(&it.image, &it.image).unwrap() == 0.0);
    let r = &run.report;
    let g5 = Method::gaussian(5).unwrap();
    let get = |kind: &str, metric: &str| {
        r.value(g5.name(), &g5.setting(), "T1", &format!("reconstruction-{kind}"), metric).unwrap_or(f64::NAN)
    };
    let clear_identity = r.value("clear", "-", "T1", "reconstruction-identity", "mse");
    let (id_mse, ridge_mse) = (get("identity", "mse"), get("ridge", "mse"));

    // rebuild the reconstruction cell by hand with an identifier fit on clear
    // train images only, and check the report used exactly that model
    let cfg = HarnessConfig::default();
    let (split, _) = split_by_image(&ds, cfg.ratios, derive_seed(SEED, &["split", "image"])).unwrap();
    let by_identity = split_by_identity(&ds, cfg.ratios, derive_seed(SEED, &["split", "identity"])).unwrap();
    let mut session = AttackSession::new(&split, &cfg, SEED).unwrap();
    let t1 = ThreatModel::new(ThreatTag::T1, g5, cfg.t2_pool_size).unwrap();
    session.prepare(std::slice::from_ref(&t1)).unwrap();
    let model = session.model(&t1).unwrap();
    let extractor = cfg.extractor();
    let train = split.indices(Split::Train);
    let feats: Vec<Vec<f64>> = train.iter().map(|&i| extractor.extract(&split.items[i].image)).collect();
    let labels: Vec<usize> = train.iter().map(|&i| split.items[i].identity).collect();
    let clear_only = Identifier::fit_features(&feats, &labels, cfg.embedding_dim, extractor, &cfg.softmax).unwrap();
    let wiring_model = model.training_methods.is_empty() && model.identifier == clear_only;

    let outcomes = session.reconstruction(g5, &[ReconstructorKind::Identity], &by_identity).unwrap();
    let recomputed = outcomes[0].1.as_ref().map(|o| o.recon_top1).unwrap_or(f64::NAN);
    let wiring_value = recomputed == get("identity", "recon_top1");

    // the same identifier scores the unreconstructed clear images perfectly or nearly so
    let probe: Vec<&Image> = split.indices(Split::Test).iter().map(|&i| &split.items[i].image).collect();
    let probe_ids: Vec<usize> = split.indices(Split::Test).iter().map(|&i| split.items[i].identity).collect();
    let sanity = reconstruction_metrics(&probe, &probe, &probe_ids, &IdentityReconstructor, &clear_only).unwrap();

    let pass = clear_zero
        && clear_identity == Some(0.0)
        && sanity.mse == 0.0
        && ridge_mse < id_mse
        && wiring_model
        && wiring_value
        && run.recon_secs < 120.0;
    outcome(
        pass,
        format!(
            "identity on clear mse {:?}; gaussian-5 mse identity {id_mse:.5} ridge {ridge_mse:.5}; T1 identifier clear-only {wiring_model}, recon_top1 reproduced {wiring_value} ({recomputed:.3}); reconstruction cells {:.0}s",
            clear_identity, run.recon_secs
        ),
    )
}

fn c11_determinism(first: &MatrixRun) -> Outcome {
    let second = full_matrix();
    let same = first.json == second.json && first.tsv == second.tsv;
    outcome(same, format!("rerun with seed {SEED}: json {} bytes, tsv {} bytes, identical {same}", second.json.len(), second.tsv.len()))
}

fn main() {
    if std::env::args().any(|a| a == "--list") {
        // libtest-style listing so test runners that enumerate targets see nothing to filter
        return;
    }
    let mut results: Vec<(usize, &str, Outcome)> = vec![
        (1, "gaussian sigma and kernel normalization", c1_gaussian_sigma()),
        (2, "pixelation artifact count", c2_pixelation_count()),
        (3, "P3 and scramble coefficient round trips", c3_coefficient_round_trips()),
        (4, "k-same grouping and 1/k bound", c4_k_same()),
        (5, "ArcFace gradient vs finite differences", c5_arcface_gradient()),
        (6, "ArcFace zero-margin degeneracy", c6_zero_margin()),
        (7, "roc_auc oracle, chance level, invariance", c7_roc_auc()),
    ];
    let run = full_matrix();
    results.push((8, "trend reproduction on the synthetic matrix", c8_trends(&run)));
    results.push((9, "verification protocol spread", c9_verification(&run)));
    results.push((10, "reconstruction metrics and wiring", c10_reconstruction(&run)));
    results.push((11, "determinism", c11_determinism(&run)));

    let mut failed = 0;
    for (n, name, o) in &results {
        println!("{} {n:2} {name}: {}", if o.pass { "PASS" } else { "FAIL" }, o.detail);
        failed += usize::from(!o.pass);
    }
    println!("{} of {} acceptance criteria passed", results.len() - failed, results.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
