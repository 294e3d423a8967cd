//! Attack harness: obscures a labeled dataset, trains attackers under the
//! three threat models and measures identification, verification and
//! reconstruction leakage.

mod method;
mod metrics;
mod reconstruct;
mod report;

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;
use std::time::Instant;

use log::{info, warn};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{split_by_identity, split_by_image, LabeledDataset, Ratios, Split};
use crate::error::{Error, Result};
use crate::raster::Image;
use crate::recognition::{
    angular_distance, choose_threshold, train_arcface, ArcFaceParams, ArcFaceTraining, FeatureExtractor, Identifier,
    SoftmaxTraining, VerificationModel, DEFAULT_EMBEDDING_DIM,
};

pub use method::{expand_method, obscure_dataset, obscure_map, Method, ThreatModel, ThreatTag};
pub use metrics::{mean_std, mse, roc_auc};
pub use reconstruct::{ridge_reconstructor_fit, IdentityReconstructor, Reconstructor, RidgeConfig, RidgeReconstructor};
pub use report::{AttackReport, DatasetSummary, ReportRow, SCHEMA_VERSION, TSV_HEADER};

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Stable sub-seed for a named piece of work (FNV-1a over the labels, mixed
/// with the master seed).
pub fn derive_seed(master: u64, labels: &[&str]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for label in labels {
        for b in label.bytes().chain(std::iter::once(0xff)) {
            h ^= b as u64;
            h = h.wrapping_mul(0x0100_0000_01b3);
        }
    }
    splitmix64(h ^ splitmix64(master))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VerificationProtocol {
    pub repeats: usize,
    /// Identities per mini-batch; each contributes one clear and one obscured image.
    pub batch_identities: usize,
}

impl Default for VerificationProtocol {
    fn default() -> Self {
        VerificationProtocol { repeats: 10, batch_identities: 64 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HarnessConfig {
    pub embedding_dim: usize,
    /// Side of the area-downsampled luma feature the embedding is fit on.
    pub feature_side: usize,
    pub softmax: SoftmaxTraining,
    pub arcface: ArcFaceTraining,
    pub verification: VerificationProtocol,
    pub ridge: RidgeConfig,
    /// Kernel size of the traditional methods in the T2 pool of non-traditional methods.
    pub t2_pool_size: usize,
    pub ratios: Ratios,
}

impl Default for HarnessConfig {
    fn default() -> Self {
        HarnessConfig {
            embedding_dim: DEFAULT_EMBEDDING_DIM,
            feature_side: 32,
            softmax: SoftmaxTraining::default(),
            arcface: ArcFaceTraining::default(),
            verification: VerificationProtocol::default(),
            ridge: RidgeConfig::default(),
            t2_pool_size: 15,
            ratios: Ratios::default(),
        }
    }
}

impl HarnessConfig {
    pub fn extractor(&self) -> FeatureExtractor {
        FeatureExtractor { side: Some(self.feature_side) }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Attack {
    Identification,
    Verification,
    Reconstruction,
}

impl fmt::Display for Attack {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Attack::Identification => "identification",
            Attack::Verification => "verification",
            Attack::Reconstruction => "reconstruction",
        })
    }
}

impl FromStr for Attack {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "identification" => Ok(Attack::Identification),
            "verification" => Ok(Attack::Verification),
            "reconstruction" => Ok(Attack::Reconstruction),
            other => Err(Error::invalid(format!("unknown attack {other:?}"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReconstructorKind {
    Identity,
    Ridge,
}

impl fmt::Display for ReconstructorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ReconstructorKind::Identity => "identity",
            ReconstructorKind::Ridge => "ridge",
        })
    }
}

/// Which cells [`run_matrix`] evaluates.
#[derive(Clone, Debug, PartialEq)]
pub struct MatrixSpec {
    pub methods: Vec<Method>,
    pub threat_models: Vec<ThreatTag>,
    pub attacks: Vec<Attack>,
    pub reconstructors: Vec<ReconstructorKind>,
}

impl MatrixSpec {
    /// Every method at its standard settings, all threat models and attacks.
    pub fn full() -> Self {
        let mut methods = vec![Method::Clear];
        for name in ["gaussian", "median", "pixelation", "k-same", "p3", "scramble"] {
            methods.extend(expand_method(name).expect("built-in method names parse"));
        }
        MatrixSpec {
            methods,
            threat_models: vec![ThreatTag::T1, ThreatTag::T2, ThreatTag::T3],
            attacks: vec![Attack::Identification, Attack::Verification, Attack::Reconstruction],
            reconstructors: vec![ReconstructorKind::Identity, ReconstructorKind::Ridge],
        }
    }
}

/// Clear and obscured training images with identity labels.
#[derive(Clone, Debug)]
pub struct TrainingSet {
    pub images: Vec<Image>,
    pub labels: Vec<usize>,
}

/// Training data an attacker under `tm` sees: the clear train split plus an
/// obscured copy of it for every method the threat model grants.
pub fn build_training_set(ds: &LabeledDataset, tm: &ThreatModel, seed: u64) -> Result<TrainingSet> {
    let train = ds.indices(Split::Train);
    if train.is_empty() {
        return Err(Error::invalid("dataset has no train split"));
    }
    let mut images: Vec<Image> = train.iter().map(|&i| ds.items[i].image.clone()).collect();
    let mut labels: Vec<usize> = train.iter().map(|&i| ds.items[i].identity).collect();
    for m in tm.training_methods() {
        let wanted: Vec<bool> = ds.items.iter().map(|it| it.split == Split::Train).collect();
        let obscured = obscure_map(ds, m, obscure_seed(seed, m), |i, img| Ok(wanted[i].then(|| img.clone())))?;
        for (i, img) in obscured.into_iter().enumerate() {
            if let Some(img) = img {
                images.push(img);
                labels.push(ds.items[i].identity);
            }
        }
    }
    Ok(TrainingSet { images, labels })
}

fn obscure_seed(master: u64, m: Method) -> u64 {
    derive_seed(master, &["obscure", &m.key()])
}

/// Attacker trained on one training set: identifier plus the ArcFace weight.
#[derive(Clone, Debug)]
pub struct AttackModel {
    pub identifier: Identifier,
    pub arcface: ArcFaceParams,
    pub training_methods: Vec<Method>,
}

impl AttackModel {
    pub fn verification_model(&self, threshold: f64) -> Result<VerificationModel> {
        VerificationModel::new(self.identifier.backbone.clone(), self.arcface.clone(), threshold)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct VerificationScores {
    pub per_repeat: Vec<f64>,
    pub mean: f64,
    pub std: f64,
}

/// Mini-batch verification protocol on precomputed embeddings.
///
/// `clear[i]` and `obscured[i]` embed the clear and obscured versions of test
/// item `i`. Each repeat shuffles identities into batches; every identity in a
/// batch contributes one clear and one obscured image (two different items
/// when it has them), all clear-by-obscured pairs are scored by negative
/// angular distance and one AUC is computed over the repeat.
pub fn verification_auc(
    clear: &[Vec<f64>],
    obscured: &[Vec<f64>],
    identities: &[usize],
    protocol: &VerificationProtocol,
    seed: u64,
) -> Result<VerificationScores> {
    if clear.len() != obscured.len() || clear.len() != identities.len() {
        return Err(Error::dims("clear, obscured and identity lists differ in length"));
    }
    if protocol.repeats == 0 || protocol.batch_identities < 2 {
        return Err(Error::invalid("verification needs at least one repeat and two identities per batch"));
    }
    let mut members: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (i, &id) in identities.iter().enumerate() {
        members.entry(id).or_default().push(i);
    }
    if members.len() < 2 {
        return Err(Error::invalid("verification needs at least two test identities"));
    }
    let batch = protocol.batch_identities.min(members.len());
    if batch < protocol.batch_identities {
        warn!("only {} test identities; verification batches shrink from {}", members.len(), protocol.batch_identities);
    }
    let ids: Vec<usize> = members.keys().copied().collect();
    let mut per_repeat = Vec::with_capacity(protocol.repeats);
    for r in 0..protocol.repeats {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, &["repeat", &r.to_string()]));
        let mut order = ids.clone();
        order.shuffle(&mut rng);
        let (mut scores, mut labels) = (Vec::new(), Vec::new());
        for chunk in order.chunks(batch).filter(|c| c.len() >= 2) {
            let picks: Vec<(usize, usize)> = chunk
                .iter()
                .map(|id| {
                    let m = &members[id];
                    if m.len() >= 2 {
                        let two = rand::seq::index::sample(&mut rng, m.len(), 2);
                        (m[two.index(0)], m[two.index(1)])
                    } else {
                        (m[0], m[0])
                    }
                })
                .collect();
            for (a, &(ca, _)) in picks.iter().enumerate() {
                for (b, &(_, ob)) in picks.iter().enumerate() {
                    scores.push(-angular_distance(&clear[ca], &obscured[ob])?);
                    labels.push(a == b);
                }
            }
        }
        per_repeat.push(roc_auc(&scores, &labels)?);
    }
    let (mean, std) = mean_std(&per_repeat);
    Ok(VerificationScores { per_repeat, mean, std })
}

#[derive(Clone, Debug, PartialEq)]
pub struct VerificationOutcome {
    pub auc: VerificationScores,
    /// Accuracy-maximizing cutoff on validation pairs, if they exist.
    pub threshold: Option<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ReconstructionOutcome {
    pub mse: f64,
    pub recon_top1: f64,
    pub images: usize,
}

/// Reconstructs every obscured image, then scores pixel error against the
/// clear originals and top-1 accuracy of `identifier` on the reconstructions.
pub fn reconstruction_metrics(
    obscured: &[&Image],
    clear: &[&Image],
    identities: &[usize],
    reconstructor: &dyn Reconstructor,
    identifier: &Identifier,
) -> Result<ReconstructionOutcome> {
    if obscured.len() != clear.len() || obscured.len() != identities.len() || obscured.is_empty() {
        return Err(Error::dims("need matching, nonempty obscured, clear and identity lists"));
    }
    let per: Vec<(f64, bool)> = obscured
        .par_iter()
        .zip(clear.par_iter())
        .zip(identities.par_iter())
        .map(|((o, c), &id)| {
            let rec = reconstructor.reconstruct(o)?;
            Ok((mse(&rec, c)?, identifier.predict(&rec)? == id))
        })
        .collect::<Result<_>>()?;
    let n = per.len() as f64;
    Ok(ReconstructionOutcome {
        mse: per.iter().map(|p| p.0).sum::<f64>() / n,
        recon_top1: per.iter().filter(|p| p.1).count() as f64 / n,
        images: per.len(),
    })
}

fn training_key(methods: &[Method]) -> String {
    let mut keys: Vec<String> = methods.iter().map(Method::key).collect();
    keys.sort();
    std::iter::once("base".to_string()).chain(keys).collect::<Vec<_>>().join("+")
}

/// Cached features and attacker models over one image-split dataset.
///
/// Call [`AttackSession::prepare`] with every threat model first; the attack
/// methods then only read.
pub struct AttackSession<'a> {
    ds: &'a LabeledDataset,
    cfg: HarnessConfig,
    seed: u64,
    clear: Vec<Vec<f64>>,
    obscured: BTreeMap<String, Vec<Vec<f64>>>,
    models: BTreeMap<String, std::result::Result<Arc<AttackModel>, String>>,
}

impl<'a> AttackSession<'a> {
    /// `ds` must already carry a train/val/test assignment.
    pub fn new(ds: &'a LabeledDataset, cfg: &HarnessConfig, seed: u64) -> Result<Self> {
        for split in [Split::Train, Split::Test] {
            if ds.split(split).next().is_none() {
                return Err(Error::invalid(format!("dataset has an empty {split} split")));
            }
        }
        let extractor = cfg.extractor();
        let clear = ds.items.par_iter().map(|it| extractor.extract(&it.image)).collect();
        Ok(AttackSession { ds, cfg: cfg.clone(), seed, clear, obscured: BTreeMap::new(), models: BTreeMap::new() })
    }

    pub fn dataset(&self) -> &LabeledDataset {
        self.ds
    }

    fn ensure_features(&mut self, m: Method) -> Result<()> {
        if m == Method::Clear || self.obscured.contains_key(&m.key()) {
            return Ok(());
        }
        info!("obscuring {} images with {m}", self.ds.len());
        let extractor = self.cfg.extractor();
        let feats = obscure_map(self.ds, m, obscure_seed(self.seed, m), |_, img| Ok(extractor.extract(img)))?;
        self.obscured.insert(m.key(), feats);
        Ok(())
    }

    fn features(&self, m: Method) -> Result<&[Vec<f64>]> {
        if m == Method::Clear {
            return Ok(&self.clear);
        }
        self.obscured
            .get(&m.key())
            .map(Vec::as_slice)
            .ok_or_else(|| Error::invalid(format!("features for {m} were not prepared")))
    }

    fn train_model(&self, methods: &[Method]) -> Result<AttackModel> {
        let train = self.ds.indices(Split::Train);
        let mut features = Vec::with_capacity(train.len() * (1 + methods.len()));
        let mut labels = Vec::with_capacity(features.capacity());
        for source in std::iter::once(Method::Clear).chain(methods.iter().copied()) {
            let f = self.features(source)?;
            for &i in &train {
                features.push(f[i].clone());
                labels.push(self.ds.items[i].identity);
            }
        }
        let cfg = &self.cfg;
        let identifier = Identifier::fit_features(&features, &labels, cfg.embedding_dim, cfg.extractor(), &cfg.softmax)?;
        let embeddings: Vec<Vec<f64>> =
            features.iter().map(|f| identifier.backbone.embed_features(f)).collect::<Result<_>>()?;
        let arc_cfg = ArcFaceTraining { seed: derive_seed(self.seed, &["arcface", &training_key(methods)]), ..cfg.arcface.clone() };
        let arcface = train_arcface(&embeddings, &labels, &arc_cfg)?.params;
        Ok(AttackModel { identifier, arcface, training_methods: methods.to_vec() })
    }

    /// Computes obscured features and trains (in parallel) every attacker the
    /// threat models need. Training failures are kept and reported by the
    /// cells that use them.
    pub fn prepare(&mut self, tms: &[ThreatModel]) -> Result<()> {
        for tm in tms {
            self.ensure_features(tm.method_under_test)?;
            for m in tm.training_methods() {
                self.ensure_features(m)?;
            }
        }
        let mut pending: BTreeMap<String, Vec<Method>> = BTreeMap::new();
        for tm in tms {
            let methods = tm.training_methods();
            let key = training_key(&methods);
            if !self.models.contains_key(&key) {
                pending.insert(key, methods);
            }
        }
        info!("training {} attacker models", pending.len());
        let trained: Vec<(String, std::result::Result<Arc<AttackModel>, String>)> = pending
            .into_par_iter()
            .map(|(key, methods)| {
                let model = self.train_model(&methods).map(Arc::new).map_err(|e| e.to_string());
                (key, model)
            })
            .collect();
        self.models.extend(trained);
        Ok(())
    }

    pub fn model(&self, tm: &ThreatModel) -> Result<Arc<AttackModel>> {
        match self.models.get(&training_key(&tm.training_methods())) {
            Some(Ok(m)) => Ok(m.clone()),
            Some(Err(e)) => Err(Error::invalid(format!("attacker training failed: {e}"))),
            None => Err(Error::invalid("threat model was not prepared")),
        }
    }

    /// Top-1 accuracy on the obscured test split.
    pub fn identification(&self, tm: &ThreatModel) -> Result<f64> {
        let model = self.model(tm)?;
        let feats = self.features(tm.method_under_test)?;
        let test = self.ds.indices(Split::Test);
        let mut correct = 0;
        for &i in &test {
            if model.identifier.predict_features(&feats[i])? == self.ds.items[i].identity {
                correct += 1;
            }
        }
        Ok(correct as f64 / test.len() as f64)
    }

    fn embed_all(&self, model: &AttackModel, feats: &[Vec<f64>], idx: &[usize]) -> Result<Vec<Vec<f64>>> {
        idx.iter().map(|&i| model.identifier.backbone.embed_features(&feats[i])).collect()
    }

    /// Clear-versus-obscured verification AUC on the test split, plus the
    /// threshold the attacker would pick on validation pairs built from the
    /// obscurations it knows (clear-versus-clear under T1).
    pub fn verification(&self, tm: &ThreatModel, seed: u64) -> Result<VerificationOutcome> {
        let model = self.model(tm)?;
        let test = self.ds.indices(Split::Test);
        let clear = self.embed_all(&model, &self.clear, &test)?;
        let obscured = self.embed_all(&model, self.features(tm.method_under_test)?, &test)?;
        let ids: Vec<usize> = test.iter().map(|&i| self.ds.items[i].identity).collect();
        let auc = verification_auc(&clear, &obscured, &ids, &self.cfg.verification, seed)?;

        let val = self.ds.indices(Split::Val);
        let val_clear = self.embed_all(&model, &self.clear, &val)?;
        let mut known = tm.training_methods();
        if known.is_empty() {
            known.push(Method::Clear);
        }
        let (mut genuine, mut impostor) = (Vec::new(), Vec::new());
        for m in known {
            let side = self.embed_all(&model, self.features(m)?, &val)?;
            for (a, &ia) in val.iter().enumerate() {
                for (b, &ib) in val.iter().enumerate() {
                    if ia == ib {
                        continue;
                    }
                    let d = angular_distance(&val_clear[a], &side[b])?;
                    if self.ds.items[ia].identity == self.ds.items[ib].identity {
                        genuine.push(d);
                    } else {
                        impostor.push(d);
                    }
                }
            }
        }
        let threshold = choose_threshold(&genuine, &impostor).ok();
        Ok(VerificationOutcome { auc, threshold })
    }

    /// Reconstruction attack on an identity split of the dataset: the
    /// reconstructor learns from identities in `identity_split`'s train part;
    /// it is scored on val/test images of its test identities with the
    /// clear-only (T1) identifier, which saw other clear images of them.
    pub fn reconstruction(
        &self,
        method: Method,
        kinds: &[ReconstructorKind],
        identity_split: &LabeledDataset,
    ) -> Result<Vec<(ReconstructorKind, Result<ReconstructionOutcome>)>> {
        let t1 = ThreatModel::new(ThreatTag::T1, method, self.cfg.t2_pool_size)?;
        let model = self.model(&t1)?;
        let id_split: BTreeMap<usize, Split> =
            identity_split.items.iter().map(|it| (it.identity, it.split)).collect();
        let role = |i: usize| -> Option<bool> {
            let item = &self.ds.items[i];
            match id_split.get(&item.identity)? {
                Split::Train => Some(true),
                Split::Test if item.split != Split::Train => Some(false),
                _ => None,
            }
        };
        let images = obscure_map(self.ds, method, obscure_seed(self.seed, method), |i, img| {
            Ok(role(i).map(|_| img.clone()))
        })?;
        let (mut train_pairs, mut eval) = (Vec::new(), Vec::new());
        for (i, img) in images.iter().enumerate() {
            match (role(i), img) {
                (Some(true), Some(img)) => train_pairs.push((img, &self.ds.items[i].image)),
                (Some(false), Some(img)) => eval.push((img, &self.ds.items[i].image, self.ds.items[i].identity)),
                _ => {}
            }
        }
        if eval.is_empty() {
            return Err(Error::invalid("no evaluation images for the reconstruction attack"));
        }
        let obscured: Vec<&Image> = eval.iter().map(|e| e.0).collect();
        let clear: Vec<&Image> = eval.iter().map(|e| e.1).collect();
        let ids: Vec<usize> = eval.iter().map(|e| e.2).collect();
        Ok(kinds
            .iter()
            .map(|&kind| {
                let outcome = match kind {
                    ReconstructorKind::Identity => {
                        reconstruction_metrics(&obscured, &clear, &ids, &IdentityReconstructor, &model.identifier)
                    }
                    ReconstructorKind::Ridge => ridge_reconstructor_fit(&train_pairs, &self.cfg.ridge).and_then(|r| {
                        reconstruction_metrics(&obscured, &clear, &ids, &r, &model.identifier)
                    }),
                };
                (kind, outcome)
            })
            .collect())
    }
}

fn prepared_session<'a>(ds: &'a LabeledDataset, tm: &ThreatModel, cfg: &HarnessConfig, seed: u64) -> Result<AttackSession<'a>> {
    let mut session = AttackSession::new(ds, cfg, seed)?;
    session.prepare(std::slice::from_ref(tm))?;
    Ok(session)
}

/// Top-1 identification accuracy of an attacker trained under `tm` on the
/// obscured test split of `ds`.
pub fn identification_attack(ds: &LabeledDataset, tm: &ThreatModel, cfg: &HarnessConfig, seed: u64) -> Result<f64> {
    prepared_session(ds, tm, cfg, seed)?.identification(tm)
}

pub fn verification_attack(
    ds: &LabeledDataset,
    tm: &ThreatModel,
    cfg: &HarnessConfig,
    seed: u64,
) -> Result<VerificationOutcome> {
    prepared_session(ds, tm, cfg, seed)?.verification(tm, derive_seed(seed, &["verification"]))
}

/// Per-cell wall-clock seconds, kept out of the report so reports stay
/// byte-identical across runs.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Timings {
    pub cells: Vec<(String, f64)>,
    pub total: f64,
}

impl Timings {
    pub fn to_tsv(&self) -> String {
        let mut out = String::from("cell\tseconds\n");
        for (cell, secs) in &self.cells {
            out.push_str(&format!("{cell}\t{secs:.3}\n"));
        }
        out.push_str(&format!("total\t{:.3}\n", self.total));
        out
    }
}

enum CellKind {
    Attack(ThreatModel, Attack),
    Reconstruction(Method),
    Invalid(Method, ThreatTag, String),
}

/// Evaluates the full method x threat model x attack cross product. Rows come
/// out grouped by method, then threat model, then attack; reconstruction rows
/// sit with T1. A failing cell becomes an error row and the run continues.
pub fn run_matrix(
    ds: &LabeledDataset,
    source: &str,
    spec: &MatrixSpec,
    cfg: &HarnessConfig,
    master_seed: u64,
) -> Result<(AttackReport, Timings)> {
    let start = Instant::now();
    if spec.methods.is_empty() {
        return Err(Error::invalid("no methods to evaluate"));
    }
    let (split, warnings) = split_by_image(ds, cfg.ratios, derive_seed(master_seed, &["split", "image"]))?;
    for w in warnings {
        warn!("{w}");
    }
    let mut session = AttackSession::new(&split, cfg, master_seed)?;

    let wants = |a: Attack| spec.attacks.contains(&a);
    let mut cells = Vec::new();
    let mut tags = spec.threat_models.clone();
    tags.sort();
    tags.dedup();
    let recon_slot = tags.iter().position(|&t| t == ThreatTag::T1);
    for &m in &spec.methods {
        // reconstruction always uses the clear-trained attacker, so it sits with T1
        if wants(Attack::Reconstruction) && recon_slot.is_none() {
            cells.push(CellKind::Reconstruction(m));
        }
        for &tag in &tags {
            for a in [Attack::Identification, Attack::Verification].into_iter().filter(|&a| wants(a)) {
                cells.push(threat_cell(m, tag, a, cfg));
            }
            if wants(Attack::Reconstruction) && tag == ThreatTag::T1 {
                cells.push(CellKind::Reconstruction(m));
            }
        }
    }

    let mut tms: Vec<ThreatModel> = cells
        .iter()
        .filter_map(|c| match c {
            CellKind::Attack(tm, _) => Some(tm.clone()),
            CellKind::Reconstruction(m) => ThreatModel::new(ThreatTag::T1, *m, cfg.t2_pool_size).ok(),
            CellKind::Invalid(..) => None,
        })
        .collect();
    tms.dedup();
    session.prepare(&tms)?;

    let identity_split = if wants(Attack::Reconstruction) {
        Some(split_by_identity(ds, cfg.ratios, derive_seed(master_seed, &["split", "identity"])).map_err(|e| e.to_string()))
    } else {
        None
    };

    let session = &session;
    let evaluated: Vec<(Vec<ReportRow>, (String, f64))> = cells
        .par_iter()
        .map(|cell| {
            let t0 = Instant::now();
            let rows = evaluate_cell(session, cell, identity_split.as_ref(), &spec.reconstructors, master_seed);
            let label = rows.first().map_or_else(String::new, |r| format!("{}:{}/{}/{}", r.method, r.setting, r.tm, r.attack));
            (rows, (label, t0.elapsed().as_secs_f64()))
        })
        .collect();

    let summary = DatasetSummary { source: source.to_string(), identities: ds.identities.len(), images: ds.len() };
    let mut report = AttackReport::new(master_seed, summary);
    let mut timings = Timings::default();
    for (rows, timing) in evaluated {
        report.rows.extend(rows);
        timings.cells.push(timing);
    }
    timings.total = start.elapsed().as_secs_f64();
    Ok((report, timings))
}

fn threat_cell(m: Method, tag: ThreatTag, a: Attack, cfg: &HarnessConfig) -> CellKind {
    match ThreatModel::new(tag, m, cfg.t2_pool_size) {
        Ok(tm) => CellKind::Attack(tm, a),
        Err(e) => CellKind::Invalid(m, tag, format!("{a}: {e}")),
    }
}

fn row(m: Method, tm: ThreatTag, attack: &str, metric: &str, seed: u64) -> ReportRow {
    ReportRow {
        method: m.name().into(),
        setting: m.setting(),
        tm: tm.to_string(),
        attack: attack.into(),
        metric: metric.into(),
        value: None,
        std: None,
        seed,
        error: None,
    }
}

fn evaluate_cell(
    session: &AttackSession,
    cell: &CellKind,
    identity_split: Option<&std::result::Result<LabeledDataset, String>>,
    reconstructors: &[ReconstructorKind],
    master: u64,
) -> Vec<ReportRow> {
    match cell {
        CellKind::Invalid(m, tag, msg) => {
            let mut r = row(*m, *tag, "setup", "error", derive_seed(master, &[&m.key(), &tag.to_string()]));
            r.error = Some(msg.clone());
            vec![r]
        }
        CellKind::Attack(tm, attack) => {
            let m = tm.method_under_test;
            let seed = derive_seed(master, &[&m.key(), &tm.tag.to_string(), &attack.to_string()]);
            let name = attack.to_string();
            match attack {
                Attack::Identification => {
                    let mut r = row(m, tm.tag, &name, "top1", seed);
                    match session.identification(tm) {
                        Ok(v) => r.value = Some(v),
                        Err(e) => r.error = Some(e.to_string()),
                    }
                    vec![r]
                }
                _ => {
                    let mut auc = row(m, tm.tag, &name, "auc", seed);
                    let mut thr = row(m, tm.tag, &name, "threshold", seed);
                    match session.verification(tm, seed) {
                        Ok(out) => {
                            auc.value = Some(out.auc.mean);
                            auc.std = Some(out.auc.std);
                            thr.value = out.threshold;
                        }
                        Err(e) => {
                            auc.error = Some(e.to_string());
                            thr.error = Some(e.to_string());
                        }
                    }
                    vec![auc, thr]
                }
            }
        }
        CellKind::Reconstruction(m) => {
            let seed = derive_seed(master, &[&m.key(), "T1", "reconstruction"]);
            let results = match identity_split {
                Some(Ok(split)) => session.reconstruction(*m, reconstructors, split),
                Some(Err(e)) => Err(Error::invalid(e.clone())),
                None => Err(Error::invalid("reconstruction was not requested")),
            };
            let mut rows = Vec::new();
            match results {
                Ok(outcomes) => {
                    for (kind, outcome) in outcomes {
                        let attack = format!("reconstruction-{kind}");
                        let mut a = row(*m, ThreatTag::T1, &attack, "mse", seed);
                        let mut b = row(*m, ThreatTag::T1, &attack, "recon_top1", seed);
                        match outcome {
                            Ok(o) => {
                                a.value = Some(o.mse);
                                b.value = Some(o.recon_top1);
                            }
                            Err(e) => {
                                a.error = Some(e.to_string());
                                b.error = Some(e.to_string());
                            }
                        }
                        rows.extend([a, b]);
                    }
                }
                Err(e) => {
                    for kind in reconstructors {
                        for metric in ["mse", "recon_top1"] {
                            let mut r = row(*m, ThreatTag::T1, &format!("reconstruction-{kind}"), metric, seed);
                            r.error = Some(e.to_string());
                            rows.push(r);
                        }
                    }
                }
            }
            rows
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{generate_synthetic, SyntheticParams};
    use rand::Rng;

    fn small_cfg() -> HarnessConfig {
        HarnessConfig {
            embedding_dim: 16,
            feature_side: 16,
            arcface: ArcFaceTraining { epochs: 3, ..ArcFaceTraining::default() },
            ..HarnessConfig::default()
        }
    }

    fn small_split(ids: usize, per: usize, seed: u64) -> LabeledDataset {
        let ds = generate_synthetic(&SyntheticParams::new(ids, per, 128, seed)).unwrap();
        split_by_image(&ds, Ratios::default(), seed).unwrap().0
    }

    #[test]
    fn derived_seeds_are_stable_and_distinct() {
        assert_eq!(derive_seed(1, &["a", "b"]), derive_seed(1, &["a", "b"]));
        assert_ne!(derive_seed(1, &["a", "b"]), derive_seed(1, &["ab"]));
        assert_ne!(derive_seed(1, &["a"]), derive_seed(2, &["a"]));
    }

    #[test]
    fn training_set_sizes() {
        let ds = small_split(4, 5, 1);
        let n = ds.indices(Split::Train).len();
        let g = Method::gaussian(5).unwrap();
        let count = |tag| build_training_set(&ds, &ThreatModel::new(tag, g, 5).unwrap(), 0).unwrap().labels.len();
        assert_eq!(count(ThreatTag::T1), n);
        assert_eq!(count(ThreatTag::T3), 2 * n);
        assert_eq!(count(ThreatTag::T2), 3 * n);
    }

    #[test]
    fn perfect_and_random_embeddings() {
        let ids: Vec<usize> = (0..40).map(|i| i / 2).collect();
        let onehot: Vec<Vec<f64>> = ids.iter().map(|&id| (0..20).map(|k| (k == id) as u8 as f64).collect()).collect();
        let p = VerificationProtocol::default();
        let perfect = verification_auc(&onehot, &onehot, &ids, &p, 1).unwrap();
        assert_eq!(perfect.mean, 1.0);
        assert_eq!(perfect.std, 0.0);

        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut noise = || -> Vec<Vec<f64>> { (0..40).map(|_| (0..8).map(|_| rng.random_range(-1.0..1.0)).collect()).collect() };
        let (a, b) = (noise(), noise());
        let random = verification_auc(&a, &b, &ids, &p, 2).unwrap();
        assert!((random.mean - 0.5).abs() < 0.1, "{}", random.mean);
        assert!(verification_auc(&a, &b, &vec![0; 40], &p, 2).is_err());
    }

    #[test]
    fn clear_identification_beats_chance_and_constant_obscuration_does_not() {
        let ds = small_split(6, 5, 2);
        let cfg = small_cfg();
        let clear = identification_attack(&ds, &ThreatModel::new(ThreatTag::T1, Method::Clear, 5).unwrap(), &cfg, 3).unwrap();
        assert!(clear >= 0.9, "{clear}");
        // identical inputs get identical predictions: at most the largest class share
        let tm = ThreatModel::new(ThreatTag::T1, Method::Clear, 5).unwrap();
        let session = prepared_session(&ds, &tm, &cfg, 3).unwrap();
        let guess = session.model(&tm).unwrap().identifier.predict(&Image::filled(128, 128, crate::ColorSpace::Rgb, 0.5).unwrap()).unwrap();
        let test = ds.indices(Split::Test);
        let hits = test.iter().filter(|&&i| ds.items[i].identity == guess).count();
        assert!(hits as f64 / test.len() as f64 <= 1.0 / 6.0 + 1e-12);
    }

    #[test]
    fn small_matrix_is_deterministic_and_ordered() {
        let ds = generate_synthetic(&SyntheticParams::new(6, 5, 32, 3)).unwrap();
        let spec = MatrixSpec {
            methods: vec![Method::gaussian(5).unwrap(), Method::Scramble],
            threat_models: vec![ThreatTag::T1, ThreatTag::T3],
            attacks: vec![Attack::Identification, Attack::Verification, Attack::Reconstruction],
            reconstructors: vec![ReconstructorKind::Identity],
        };
        let cfg = small_cfg();
        let (a, _) = run_matrix(&ds, "synthetic", &spec, &cfg, 9).unwrap();
        let (b, _) = run_matrix(&ds, "synthetic", &spec, &cfg, 9).unwrap();
        assert_eq!(a.to_tsv(), b.to_tsv());
        assert_eq!(a.failures().count(), 0, "{}", a.to_tsv());
        // per method: T1 ident, T1 verif (2 rows), recon (2 rows), T3 ident, T3 verif (2 rows)
        assert_eq!(a.rows.len(), 2 * 8);
        let order: Vec<(&str, &str)> = a.rows.iter().take(8).map(|r| (r.tm.as_str(), r.attack.as_str())).collect();
        assert_eq!(order[0], ("T1", "identification"));
        assert_eq!(order[3], ("T1", "reconstruction-identity"));
        assert_eq!(order[5], ("T3", "identification"));
    }
}
