//! TOML run configuration for the attack matrix.
//!
//! ```toml
//! seed = 7
//! output_dir = "out"
//! methods = ["clear", "gaussian", "p3:10", "scramble"]
//! threat_models = ["T1", "T3"]
//! attacks = ["identification", "verification"]
//!
//! [dataset]
//! kind = "synthetic"
//! identities = 8
//! per_identity = 6
//! ```

use std::path::{Path, PathBuf};

use serde::Deserialize;

use crate::dataset::{generate_synthetic, load_folder, LabeledDataset, SyntheticParams, DEFAULT_SIDE};
use crate::error::{Error, Result};
use crate::harness::{expand_method, Attack, HarnessConfig, MatrixSpec, Method, ReconstructorKind, ThreatTag};

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    seed: Option<u64>,
    output_dir: Option<PathBuf>,
    dataset: RawDataset,
    methods: Vec<String>,
    #[serde(default)]
    threat_models: Option<Vec<String>>,
    #[serde(default)]
    attacks: Option<Vec<String>>,
    t2_pool_size: Option<usize>,
    #[serde(default)]
    recognition: RawRecognition,
    #[serde(default)]
    verification: RawVerification,
    #[serde(default)]
    reconstruction: RawReconstruction,
}

#[derive(Debug, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
enum RawDataset {
    Synthetic {
        identities: usize,
        per_identity: usize,
        side: Option<usize>,
        noise: Option<f64>,
        max_shift: Option<i32>,
    },
    Folder {
        path: PathBuf,
        side: Option<usize>,
    },
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawRecognition {
    embedding_dim: Option<usize>,
    feature_side: Option<usize>,
    scale: Option<f64>,
    margin: Option<f64>,
    epochs: Option<usize>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawVerification {
    repeats: Option<usize>,
    batch_identities: Option<usize>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawReconstruction {
    reconstructors: Option<Vec<ReconstructorKind>>,
    lambda: Option<f64>,
    patch: Option<usize>,
    context: Option<usize>,
    max_samples: Option<usize>,
}

#[derive(Clone, Debug, PartialEq)]
pub enum DatasetSource {
    Synthetic(SyntheticParams),
    Folder { path: PathBuf, side: usize },
}

impl DatasetSource {
    pub fn label(&self) -> String {
        match self {
            DatasetSource::Synthetic(p) => format!("synthetic:{}x{}", p.identities, p.per_identity),
            DatasetSource::Folder { path, .. } => format!("folder:{}", path.display()),
        }
    }

    pub fn load(&self) -> Result<LabeledDataset> {
        match self {
            DatasetSource::Synthetic(p) => generate_synthetic(p),
            DatasetSource::Folder { path, side } => Ok(load_folder(path, *side)?.0),
        }
    }
}

/// A validated run: everything [`crate::harness::run_matrix`] needs.
#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub seed: u64,
    pub output_dir: Option<PathBuf>,
    pub dataset: DatasetSource,
    pub spec: MatrixSpec,
    pub harness: HarnessConfig,
}

fn config_err(field: impl Into<String>, reason: impl Into<String>) -> Error {
    Error::Config { field: field.into(), reason: reason.into() }
}

fn positive(field: &str, v: Option<usize>, default: usize) -> Result<usize> {
    match v {
        Some(0) => Err(config_err(field, "must be positive")),
        Some(v) => Ok(v),
        None => Ok(default),
    }
}

fn parse_list<T>(field: &str, entries: &[String], parse: impl Fn(&str) -> Result<Vec<T>>) -> Result<Vec<T>> {
    if entries.is_empty() {
        return Err(config_err(field, "list is empty"));
    }
    let mut out = Vec::new();
    for (i, e) in entries.iter().enumerate() {
        out.extend(parse(e).map_err(|err| config_err(format!("{field}[{i}]"), err.to_string()))?);
    }
    Ok(out)
}

impl RunConfig {
    /// Parses and validates. Relative folder paths resolve against `base`.
    pub fn parse(text: &str, base: &Path) -> Result<Self> {
        let raw: RawConfig = toml::from_str(text).map_err(|e| {
            let field = e.message().split('`').nth(1).filter(|_| e.message().contains("field")).unwrap_or("config");
            config_err(field, e.to_string().trim_end())
        })?;
        let seed = raw.seed.ok_or_else(|| config_err("seed", "missing; runs need an explicit master seed"))?;

        let mut methods: Vec<Method> = parse_list("methods", &raw.methods, expand_method)?;
        let mut seen = std::collections::HashSet::new();
        methods.retain(|m| seen.insert(*m));

        let threat_models = match &raw.threat_models {
            Some(list) => parse_list("threat_models", list, |s| Ok(vec![s.parse::<ThreatTag>()?]))?,
            None => vec![ThreatTag::T1, ThreatTag::T2, ThreatTag::T3],
        };
        let attacks = match &raw.attacks {
            Some(list) => parse_list("attacks", list, |s| Ok(vec![s.parse::<Attack>()?]))?,
            None => vec![Attack::Identification, Attack::Verification, Attack::Reconstruction],
        };

        let mut harness = HarnessConfig::default();
        harness.t2_pool_size = raw.t2_pool_size.unwrap_or(harness.t2_pool_size);
        let r = &raw.recognition;
        harness.embedding_dim = positive("recognition.embedding_dim", r.embedding_dim, harness.embedding_dim)?;
        harness.feature_side = positive("recognition.feature_side", r.feature_side, harness.feature_side)?;
        harness.arcface.epochs = r.epochs.unwrap_or(harness.arcface.epochs);
        if let Some(s) = r.scale {
            if s <= 0.0 || !s.is_finite() {
                return Err(config_err("recognition.scale", "must be positive"));
            }
            harness.arcface.scale = s;
        }
        if let Some(m) = r.margin {
            if !(0.0..std::f64::consts::FRAC_PI_2).contains(&m) {
                return Err(config_err("recognition.margin", "must lie in [0, pi/2)"));
            }
            harness.arcface.margin = m;
        }
        let v = &raw.verification;
        harness.verification.repeats = positive("verification.repeats", v.repeats, harness.verification.repeats)?;
        harness.verification.batch_identities =
            positive("verification.batch_identities", v.batch_identities, harness.verification.batch_identities)?;
        let rc = &raw.reconstruction;
        harness.ridge.patch = positive("reconstruction.patch", rc.patch, harness.ridge.patch)?;
        harness.ridge.context = rc.context.unwrap_or(harness.ridge.context);
        harness.ridge.max_samples = positive("reconstruction.max_samples", rc.max_samples, harness.ridge.max_samples)?;
        if let Some(l) = rc.lambda {
            if l < 0.0 || !l.is_finite() {
                return Err(config_err("reconstruction.lambda", "must be nonnegative"));
            }
            harness.ridge.lambda = l;
        }
        let reconstructors = rc.reconstructors.clone().unwrap_or(vec![ReconstructorKind::Identity, ReconstructorKind::Ridge]);

        let dataset = match raw.dataset {
            RawDataset::Synthetic { identities, per_identity, side, noise, max_shift } => {
                let mut p = SyntheticParams::new(identities, per_identity, side.unwrap_or(DEFAULT_SIDE), seed);
                p.noise = noise.unwrap_or(p.noise);
                p.max_shift = max_shift.unwrap_or(p.max_shift);
                if identities < 2 {
                    return Err(config_err("dataset.identities", "need at least 2"));
                }
                if per_identity < 1 {
                    return Err(config_err("dataset.per_identity", "need at least 1"));
                }
                if p.side < 8 {
                    return Err(config_err("dataset.side", "must be at least 8"));
                }
                if p.noise < 0.0 || p.max_shift < 0 {
                    return Err(config_err("dataset", "noise and max_shift must be nonnegative"));
                }
                DatasetSource::Synthetic(p)
            }
            RawDataset::Folder { path, side } => {
                let side = positive("dataset.side", side, DEFAULT_SIDE)?;
                DatasetSource::Folder { path: base.join(path), side }
            }
        };

        Ok(RunConfig {
            seed,
            output_dir: raw.output_dir.map(|p| base.join(p)),
            dataset,
            spec: MatrixSpec { methods, threat_models, attacks, reconstructors },
            harness,
        })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| config_err(path.display().to_string(), format!("cannot read: {e}")))?;
        Self::parse(&text, path.parent().unwrap_or(Path::new(".")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
seed = 3
methods = ["clear", "gaussian:5", "scramble"]

[dataset]
kind = "synthetic"
identities = 4
per_identity = 3
side = 32
"#;

    fn parse(text: &str) -> Result<RunConfig> {
        RunConfig::parse(text, Path::new("/base"))
    }

    fn field_of(r: Result<RunConfig>) -> String {
        match r {
            Err(Error::Config { field, .. }) => field,
            other => panic!("expected a config error, got {other:?}"),
        }
    }

    #[test]
    fn minimal_defaults() {
        let c = parse(MINIMAL).unwrap();
        assert_eq!(c.seed, 3);
        assert_eq!(c.spec.methods.len(), 3);
        assert_eq!(c.spec.threat_models.len(), 3);
        assert_eq!(c.spec.attacks.len(), 3);
        assert_eq!(c.harness, HarnessConfig::default());
        let DatasetSource::Synthetic(p) = c.dataset else { panic!() };
        assert_eq!((p.identities, p.per_identity, p.side, p.seed), (4, 3, 32, 3));
    }

    #[test]
    fn bare_filter_names_expand() {
        let c = parse(&MINIMAL.replace("\"gaussian:5\"", "\"median\", \"median:5\"")).unwrap();
        assert_eq!(c.spec.methods.len(), 6);
    }

    #[test]
    fn overrides_apply() {
        let text = format!(
            "{MINIMAL}\n[recognition]\nembedding_dim = 8\nmargin = 0.3\nepochs = 2\n[verification]\nrepeats = 3\n\
             [reconstruction]\nreconstructors = [\"identity\"]\nlambda = 0.5\n"
        );
        let c = parse(&text).unwrap();
        assert_eq!(c.harness.embedding_dim, 8);
        assert_eq!(c.harness.arcface.margin, 0.3);
        assert_eq!(c.harness.arcface.epochs, 2);
        assert_eq!(c.harness.verification.repeats, 3);
        assert_eq!(c.harness.ridge.lambda, 0.5);
        assert_eq!(c.spec.reconstructors, vec![ReconstructorKind::Identity]);
    }

    #[test]
    fn folder_paths_resolve_against_base() {
        let c = parse("seed = 1\nmethods = [\"clear\"]\n[dataset]\nkind = \"folder\"\npath = \"faces\"\n").unwrap();
        assert_eq!(c.dataset, DatasetSource::Folder { path: PathBuf::from("/base/faces"), side: DEFAULT_SIDE });
    }

    #[test]
    fn diagnostics_name_the_field() {
        assert_eq!(field_of(parse(&MINIMAL.replace("seed = 3", ""))), "seed");
        assert_eq!(field_of(parse(&MINIMAL.replace("\"scramble\"", "\"sepia\""))), "methods[2]");
        assert_eq!(field_of(parse(&MINIMAL.replace("\"gaussian:5\"", "\"gaussian:4\""))), "methods[1]");
        assert_eq!(field_of(parse(&MINIMAL.replace("seed = 3", "seed = 3\nthreat_models = [\"T9\"]"))), "threat_models[0]");
        assert_eq!(field_of(parse(&MINIMAL.replace("seed = 3", "seed = 3\ncolour = 1"))), "colour");
        assert_eq!(field_of(parse(&MINIMAL.replace("side = 32", "side = 32\nsize = 4"))), "size");
        assert_eq!(field_of(parse(&format!("{MINIMAL}\n[verification]\nrepeats = 0"))), "verification.repeats");
    }

    #[test]
    fn syntax_errors_report_the_line() {
        let msg = parse("seed = 3\nmethods = [\n").unwrap_err().to_string();
        assert!(msg.contains("line"), "{msg}");
    }
}
