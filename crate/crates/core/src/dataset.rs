//! Identity-labeled image sets, train/val/test splitting, a folder loader and
//! a synthetic identity generator.

use std::fmt;
use std::path::Path;

use log::warn;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::raster::{load_png, resize_nearest, ColorSpace, Image};

/// Input side length every loaded image is resized to.
pub const DEFAULT_SIDE: usize = 128;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Item {
    pub image: Image,
    /// Index into [`LabeledDataset::identities`].
    pub identity: usize,
    pub split: Split,
    /// File path, or a synthetic tag.
    pub source: String,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LabeledDataset {
    pub items: Vec<Item>,
    pub identities: Vec<String>,
}

/// Split proportions, e.g. `6:2:2`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Ratios {
    pub train: usize,
    pub val: usize,
    pub test: usize,
}

impl Default for Ratios {
    fn default() -> Self {
        Ratios { train: 6, val: 2, test: 2 }
    }
}

impl Ratios {
    /// `(train, val, test)` counts for `n` elements: floors for val and test,
    /// remainder to train.
    pub fn allocate(&self, n: usize) -> (usize, usize, usize) {
        let total = self.train + self.val + self.test;
        let val = n * self.val / total;
        let test = n * self.test / total;
        (n - val - test, val, test)
    }
}

impl LabeledDataset {
    pub fn new(items: Vec<Item>, identities: Vec<String>) -> Result<Self> {
        if items.is_empty() {
            return Err(Error::invalid("dataset is empty"));
        }
        let mut seen = vec![false; identities.len()];
        for item in &items {
            *seen.get_mut(item.identity).ok_or_else(|| Error::invalid("item identity out of range"))? = true;
        }
        if let Some(i) = seen.iter().position(|s| !s) {
            return Err(Error::invalid(format!("identity {} has no items", identities[i])));
        }
        Ok(LabeledDataset { items, identities })
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn split(&self, split: Split) -> impl Iterator<Item = (usize, &Item)> {
        self.items.iter().enumerate().filter(move |(_, it)| it.split == split)
    }

    pub fn indices(&self, split: Split) -> Vec<usize> {
        self.split(split).map(|(i, _)| i).collect()
    }

    fn by_identity(&self) -> Vec<Vec<usize>> {
        let mut groups = vec![Vec::new(); self.identities.len()];
        for (i, item) in self.items.iter().enumerate() {
            groups[item.identity].push(i);
        }
        groups
    }

    /// Writes `path<TAB>identity<TAB>split` rows.
    pub fn write_manifest(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = csv::WriterBuilder::new().delimiter(b'\t').from_path(path.as_ref()).map_err(csv_io)?;
        w.write_record(["path", "identity", "split"]).map_err(csv_io)?;
        for item in &self.items {
            w.write_record([item.source.as_str(), &self.identities[item.identity], &item.split.to_string()])
                .map_err(csv_io)?;
        }
        w.flush()?;
        Ok(())
    }
}

fn csv_io(e: csv::Error) -> Error {
    Error::Io(std::io::Error::other(e.to_string()))
}

/// Splits each identity's images by `ratios`. Identities with fewer than three
/// images go entirely to train, with a warning.
pub fn split_by_image(ds: &LabeledDataset, ratios: Ratios, seed: u64) -> Result<(LabeledDataset, Vec<String>)> {
    if ds.is_empty() {
        return Err(Error::invalid("cannot split an empty dataset"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = ds.clone();
    let mut warnings = Vec::new();
    for (identity, mut members) in ds.by_identity().into_iter().enumerate() {
        if members.len() < 3 {
            let msg = format!("identity {} has {} images; all assigned to train", ds.identities[identity], members.len());
            warn!("{msg}");
            warnings.push(msg);
            for i in members {
                out.items[i].split = Split::Train;
            }
            continue;
        }
        members.shuffle(&mut rng);
        let (train, val, _) = ratios.allocate(members.len());
        for (rank, i) in members.into_iter().enumerate() {
            out.items[i].split = if rank < train {
                Split::Train
            } else if rank < train + val {
                Split::Val
            } else {
                Split::Test
            };
        }
    }
    Ok((out, warnings))
}

/// Splits identities (not images) by `ratios`; every image follows its identity.
pub fn split_by_identity(ds: &LabeledDataset, ratios: Ratios, seed: u64) -> Result<LabeledDataset> {
    let n = ds.identities.len();
    if n < 3 {
        return Err(Error::invalid(format!("identity split needs at least 3 identities, got {n}")));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let (train, val, _) = ratios.allocate(n);
    let mut split_of = vec![Split::Train; n];
    for (rank, id) in order.into_iter().enumerate() {
        split_of[id] = if rank < train {
            Split::Train
        } else if rank < train + val {
            Split::Val
        } else {
            Split::Test
        };
    }
    let mut out = ds.clone();
    for item in &mut out.items {
        item.split = split_of[item.identity];
    }
    Ok(out)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticParams {
    pub identities: usize,
    pub per_identity: usize,
    pub side: usize,
    /// Standard deviation of the per-pixel Gaussian noise.
    #[serde(default = "default_noise")]
    pub noise: f64,
    /// Largest translation, in pixels, applied to samples after the first.
    #[serde(default = "default_shift")]
    pub max_shift: i32,
    pub seed: u64,
}

fn default_noise() -> f64 {
    0.05
}

fn default_shift() -> i32 {
    2
}

impl SyntheticParams {
    pub fn new(identities: usize, per_identity: usize, side: usize, seed: u64) -> Self {
        SyntheticParams { identities, per_identity, side, noise: default_noise(), max_shift: default_shift(), seed }
    }
}

const MIN_CYCLES: i32 = 6;
const MAX_CYCLES: i32 = 12;
const AMP_LO: f64 = 0.30;
const AMP_HI: f64 = 0.40;

/// Low-frequency face stand-in: a few periodic cosine modes plus a color tint.
#[derive(Clone, Debug)]
pub struct SyntheticIdentity {
    modes: Vec<(f64, i32, i32, f64)>,
    gain: [f64; 3],
    offset: [f64; 3],
}

impl SyntheticIdentity {
    fn draw(rng: &mut ChaCha8Rng) -> Self {
        let count = rng.random_range(4..=6);
        let modes = (0..count)
            .map(|_| {
                // 6..=12 cycles per image at high contrast (the sum saturates
                // often): most quantized AC energy then sits above the P3 threshold
                let (mut fx, mut fy) = (0, 0);
                while !(MIN_CYCLES * MIN_CYCLES..=MAX_CYCLES * MAX_CYCLES).contains(&(fx * fx + fy * fy)) {
                    fx = rng.random_range(-MAX_CYCLES..=MAX_CYCLES);
                    fy = rng.random_range(-MAX_CYCLES..=MAX_CYCLES);
                }
                (rng.random_range(AMP_LO..AMP_HI), fx, fy, rng.random_range(0.0..std::f64::consts::TAU))
            })
            .collect();
        let gain = [0; 3].map(|_| rng.random_range(0.85..1.15));
        let offset = [0; 3].map(|_| rng.random_range(-0.05..0.05));
        SyntheticIdentity { modes, gain, offset }
    }

    fn value(&self, channel: usize, x: f64, y: f64, side: usize) -> f64 {
        let s = side as f64;
        let luma: f64 = self
            .modes
            .iter()
            .map(|&(a, fx, fy, ph)| a * (std::f64::consts::TAU * (fx as f64 * x + fy as f64 * y) / s + ph).cos())
            .sum();
        0.5 + self.gain[channel] * luma + self.offset[channel]
    }

    pub fn render(&self, side: usize, shift: (i32, i32), noise: Option<(&Normal<f64>, &mut ChaCha8Rng)>) -> Image {
        let mut planes: Vec<Vec<f64>> = (0..3).map(|_| Vec::with_capacity(side * side)).collect();
        let mut noise = noise;
        for (c, plane) in planes.iter_mut().enumerate() {
            for y in 0..side {
                for x in 0..side {
                    let mut v = self.value(c, x as f64 - shift.0 as f64, y as f64 - shift.1 as f64, side);
                    if let Some((dist, rng)) = noise.as_mut() {
                        v += dist.sample(*rng);
                    }
                    plane.push(v);
                }
            }
        }
        Image::from_planes(side, side, ColorSpace::Rgb, planes).expect("synthetic planes are well formed").quantize_8bit()
    }
}

/// Deterministic synthetic dataset. The first image of every identity is its
/// untranslated base pattern (plus noise); later ones are shifted by up to
/// `max_shift` pixels. All samples are on the 8-bit grid.
pub fn generate_synthetic(p: &SyntheticParams) -> Result<LabeledDataset> {
    if p.identities < 2 || p.per_identity < 1 || p.side < 8 {
        return Err(Error::invalid("synthetic data needs >= 2 identities, >= 1 image each and side >= 8"));
    }
    if p.noise < 0.0 || p.max_shift < 0 {
        return Err(Error::invalid("noise and shift must be nonnegative"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(p.seed);
    let people: Vec<SyntheticIdentity> = (0..p.identities).map(|_| SyntheticIdentity::draw(&mut rng)).collect();
    let normal = Normal::new(0.0, p.noise).map_err(|e| Error::invalid(e.to_string()))?;
    let mut items = Vec::with_capacity(p.identities * p.per_identity);
    for (identity, person) in people.iter().enumerate() {
        for k in 0..p.per_identity {
            let shift = if k == 0 {
                (0, 0)
            } else {
                (rng.random_range(-p.max_shift..=p.max_shift), rng.random_range(-p.max_shift..=p.max_shift))
            };
            let noise = (p.noise > 0.0).then_some((&normal, &mut rng));
            let image = person.render(p.side, shift, noise);
            items.push(Item { image, identity, split: Split::Train, source: format!("synthetic:{identity}:{k}") });
        }
    }
    let names = (0..p.identities).map(|i| format!("id{i:04}")).collect();
    LabeledDataset::new(items, names)
}

/// Base patterns of the identities a [`generate_synthetic`] call would draw.
pub fn synthetic_bases(p: &SyntheticParams) -> Vec<Image> {
    let mut rng = ChaCha8Rng::seed_from_u64(p.seed);
    (0..p.identities).map(|_| SyntheticIdentity::draw(&mut rng)).map(|id| id.render(p.side, (0, 0), None)).collect()
}

/// Loads `<root>/<identity>/<image>.png`, resizing every image to
/// `side x side` RGB. Unreadable files and nested folders are skipped with a
/// warning.
pub fn load_folder(root: impl AsRef<Path>, side: usize) -> Result<(LabeledDataset, Vec<String>)> {
    let root = root.as_ref();
    let mut warnings = Vec::new();
    let mut note = |msg: String| {
        warn!("{msg}");
        warnings.push(msg);
    };
    let mut dirs: Vec<_> = std::fs::read_dir(root)?.collect::<std::io::Result<Vec<_>>>()?;
    dirs.sort_by_key(|e| e.file_name());

    let mut identities = Vec::new();
    let mut items = Vec::new();
    for dir in dirs {
        let path = dir.path();
        if !path.is_dir() {
            note(format!("ignoring {}: not an identity folder", path.display()));
            continue;
        }
        let mut files: Vec<_> = std::fs::read_dir(&path)?.collect::<std::io::Result<Vec<_>>>()?;
        files.sort_by_key(|e| e.file_name());
        let identity = identities.len();
        let mut any = false;
        for file in files {
            let fpath = file.path();
            if fpath.is_dir() {
                note(format!("ignoring nested folder {}", fpath.display()));
                continue;
            }
            let image = load_png(&fpath).and_then(|img| {
                let img = if img.color_space() == ColorSpace::Gray {
                    let p = img.plane(0).to_vec();
                    Image::from_planes(img.width(), img.height(), ColorSpace::Rgb, vec![p.clone(), p.clone(), p])?
                } else {
                    img
                };
                resize_nearest(&img, side, side)
            });
            match image {
                Ok(image) => {
                    any = true;
                    items.push(Item { image, identity, split: Split::Train, source: fpath.display().to_string() });
                }
                Err(e) => note(format!("skipping {}: {e}", fpath.display())),
            }
        }
        if any {
            identities.push(dir.file_name().to_string_lossy().into_owned());
        } else {
            note(format!("identity folder {} has no readable images", path.display()));
        }
    }
    if items.is_empty() {
        return Err(Error::invalid(format!("no images found under {}", root.display())));
    }
    Ok((LabeledDataset::new(items, identities)?, warnings))
}
