use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::dataset::{LabeledDataset, Split};
use crate::dct::{p3_obscure_image, scramble_obscure_image, DEFAULT_P3_THRESHOLD};
use crate::error::{Error, Result};
use crate::filters::{FilterMethod, KernelSpec, STANDARD_SIZES};
use crate::ksame::{k_same_images, DEFAULT_K};
use crate::raster::Image;

use super::derive_seed;

/// One obscuration method with its hyperparameter.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Method {
    /// No obscuration; the baseline row.
    Clear,
    Filter(KernelSpec),
    KSame { k: usize },
    P3 { threshold: i32 },
    Scramble,
}

impl Method {
    pub fn gaussian(size: usize) -> Result<Self> {
        Ok(Method::Filter(KernelSpec::new(FilterMethod::Gaussian, size)?))
    }

    pub fn median(size: usize) -> Result<Self> {
        Ok(Method::Filter(KernelSpec::new(FilterMethod::Median, size)?))
    }

    pub fn pixelation(size: usize) -> Result<Self> {
        Ok(Method::Filter(KernelSpec::new(FilterMethod::Pixelation, size)?))
    }

    pub fn name(&self) -> &'static str {
        match self {
            Method::Clear => "clear",
            Method::Filter(spec) => filter_name(spec.method),
            Method::KSame { .. } => "k-same",
            Method::P3 { .. } => "p3",
            Method::Scramble => "scramble",
        }
    }

    /// Hyperparameter as text; `-` when there is none.
    pub fn setting(&self) -> String {
        match self {
            Method::Clear | Method::Scramble => "-".into(),
            Method::Filter(spec) => spec.size.to_string(),
            Method::KSame { k } => k.to_string(),
            Method::P3 { threshold } => threshold.to_string(),
        }
    }

    /// Canonical `name:setting` text, the inverse of [`Method::from_str`].
    pub fn key(&self) -> String {
        match self {
            Method::Clear | Method::Scramble => self.name().into(),
            _ => format!("{}:{}", self.name(), self.setting()),
        }
    }

    pub fn is_traditional(&self) -> bool {
        matches!(self, Method::Filter(_))
    }

    /// Obscures a single image. Fails for k-same, which needs a whole set.
    pub fn apply(&self, img: &Image, seed: u64) -> Result<Image> {
        match self {
            Method::Clear => Ok(img.clone()),
            Method::Filter(spec) => spec.apply(img),
            Method::P3 { threshold } => p3_obscure_image(img, *threshold),
            Method::Scramble => scramble_obscure_image(img, seed),
            Method::KSame { .. } => Err(Error::invalid("k-same obscures sets of images, not single images")),
        }
    }
}

fn filter_name(m: FilterMethod) -> &'static str {
    match m {
        FilterMethod::Gaussian => "gaussian",
        FilterMethod::Median => "median",
        FilterMethod::Pixelation => "pixelation",
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.key())
    }
}

impl FromStr for Method {
    type Err = Error;

    /// Accepts `clear`, `scramble`, `gaussian:5`, `median:15`, `pixelation:35`,
    /// `k-same[:k]` and `p3[:threshold]`.
    fn from_str(s: &str) -> Result<Self> {
        let (name, arg) = match s.trim().split_once(':') {
            Some((n, a)) => (n.trim(), Some(a.trim())),
            None => (s.trim(), None),
        };
        let number = |what: &str| -> Result<i64> {
            let a = arg.ok_or_else(|| Error::invalid(format!("method {name} needs a {what}, e.g. {name}:15")))?;
            a.parse().map_err(|_| Error::invalid(format!("bad {what} {a:?} for {name}")))
        };
        let size = |what: &str| -> Result<usize> {
            usize::try_from(number(what)?).map_err(|_| Error::invalid(format!("{name} {what} must be nonnegative")))
        };
        let method = match name.to_ascii_lowercase().as_str() {
            "clear" => Method::Clear,
            "scramble" => Method::Scramble,
            "gaussian" => Method::gaussian(size("kernel size")?)?,
            "median" => Method::median(size("kernel size")?)?,
            "pixelation" => Method::pixelation(size("block size")?)?,
            "k-same" | "ksame" => {
                let k = if arg.is_some() { size("k")? } else { DEFAULT_K };
                if k == 0 {
                    return Err(Error::invalid("k must be at least 1"));
                }
                Method::KSame { k }
            }
            "p3" => {
                let threshold = if arg.is_some() { number("threshold")? } else { DEFAULT_P3_THRESHOLD as i64 };
                if !(1..=i32::MAX as i64).contains(&threshold) {
                    return Err(Error::invalid(format!("P3 threshold must be positive, got {threshold}")));
                }
                Method::P3 { threshold: threshold as i32 }
            }
            _ => return Err(Error::invalid(format!("unknown method {name:?}"))),
        };
        if matches!(method, Method::Clear | Method::Scramble) && arg.is_some() {
            return Err(Error::invalid(format!("method {name} takes no setting")));
        }
        Ok(method)
    }
}

impl Serialize for Method {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&self.key())
    }
}

impl<'de> Deserialize<'de> for Method {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Parses a method entry; a bare filter name expands to every standard size.
pub fn expand_method(entry: &str) -> Result<Vec<Method>> {
    let trimmed = entry.trim();
    let builder: Option<fn(usize) -> Result<Method>> = match trimmed {
        "gaussian" => Some(Method::gaussian),
        "median" => Some(Method::median),
        "pixelation" => Some(Method::pixelation),
        _ => None,
    };
    match builder {
        Some(b) => STANDARD_SIZES.iter().map(|&s| b(s)).collect(),
        None => Ok(vec![trimmed.parse()?]),
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ThreatTag {
    /// Attacker trained on clear images only.
    T1,
    /// Clear images plus other obscuration methods.
    T2,
    /// Clear images plus the method under test.
    T3,
}

impl fmt::Display for ThreatTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self:?}")
    }
}

impl FromStr for ThreatTag {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_uppercase().as_str() {
            "T1" => Ok(ThreatTag::T1),
            "T2" => Ok(ThreatTag::T2),
            "T3" => Ok(ThreatTag::T3),
            other => Err(Error::invalid(format!("unknown threat model {other:?}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ThreatModel {
    pub tag: ThreatTag,
    pub method_under_test: Method,
    /// Obscured copies added to the attacker's training data (T2 only).
    pub training_pool: Vec<Method>,
}

impl ThreatModel {
    /// Default pools: a traditional method is paired with the other two
    /// traditional methods at its own size; every other method with all three
    /// traditional methods at `pool_size`.
    pub fn new(tag: ThreatTag, method: Method, pool_size: usize) -> Result<Self> {
        let pool = match tag {
            ThreatTag::T2 => default_pool(method, pool_size)?,
            _ => Vec::new(),
        };
        Self::with_pool(tag, method, pool)
    }

    pub fn with_pool(tag: ThreatTag, method: Method, pool: Vec<Method>) -> Result<Self> {
        match tag {
            ThreatTag::T2 if pool.is_empty() => return Err(Error::invalid("T2 needs a nonempty training pool")),
            ThreatTag::T2 if pool.contains(&method) => {
                return Err(Error::invalid(format!("T2 pool must not contain the method under test {method}")))
            }
            ThreatTag::T1 | ThreatTag::T3 if !pool.is_empty() => {
                return Err(Error::invalid(format!("{tag} takes no training pool")))
            }
            _ => {}
        }
        Ok(ThreatModel { tag, method_under_test: method, training_pool: pool })
    }

    /// Methods whose obscured copies join the clear training images.
    pub fn training_methods(&self) -> Vec<Method> {
        match self.tag {
            ThreatTag::T1 => vec![],
            ThreatTag::T2 => self.training_pool.clone(),
            ThreatTag::T3 => vec![self.method_under_test],
        }
    }
}

fn default_pool(method: Method, pool_size: usize) -> Result<Vec<Method>> {
    let size = match method {
        Method::Filter(spec) => spec.size,
        _ => pool_size,
    };
    [FilterMethod::Gaussian, FilterMethod::Median, FilterMethod::Pixelation]
        .into_iter()
        .map(|m| Ok(Method::Filter(KernelSpec::new(m, size)?)))
        .filter(|m| m.as_ref().map_or(true, |m| *m != method))
        .collect()
}

/// Obscures every item of `ds` and hands each result to `f`, returning the
/// outputs in item order.
///
/// k-same runs on "rounds": within one split, round `r` holds the `r`-th
/// image of every identity, so no identity appears twice in a k-same pool.
/// Scramble keys are derived per item from `seed`.
pub fn obscure_map<T: Send>(
    ds: &LabeledDataset,
    method: Method,
    seed: u64,
    f: impl Fn(usize, &Image) -> Result<T> + Sync,
) -> Result<Vec<T>> {
    match method {
        Method::KSame { k } => {
            let mut rounds: BTreeMap<(Split, usize), Vec<usize>> = BTreeMap::new();
            let mut seen: BTreeMap<(Split, usize), usize> = BTreeMap::new();
            for (i, item) in ds.items.iter().enumerate() {
                let r = seen.entry((item.split, item.identity)).or_default();
                rounds.entry((item.split, *r)).or_default().push(i);
                *r += 1;
            }
            let mut out: Vec<Option<T>> = (0..ds.len()).map(|_| None).collect();
            for members in rounds.values() {
                let imgs: Vec<&Image> = members.iter().map(|&i| &ds.items[i].image).collect();
                let obscured = k_same_images(&imgs, k)?;
                let results: Vec<T> =
                    members.par_iter().zip(obscured.par_iter()).map(|(&i, img)| f(i, img)).collect::<Result<_>>()?;
                for (&i, r) in members.iter().zip(results) {
                    out[i] = Some(r);
                }
            }
            Ok(out.into_iter().map(|r| r.expect("every item belongs to a round")).collect())
        }
        _ => ds
            .items
            .par_iter()
            .enumerate()
            .map(|(i, item)| {
                let img = method.apply(&item.image, derive_seed(seed, &["item", &i.to_string()]))?;
                f(i, &img)
            })
            .collect(),
    }
}

/// Obscured copy of every item image, in item order.
pub fn obscure_dataset(ds: &LabeledDataset, method: Method, seed: u64) -> Result<Vec<Image>> {
    obscure_map(ds, method, seed, |_, img| Ok(img.clone()))
}
