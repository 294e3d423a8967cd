use crate::error::{Error, Result};
use crate::raster::Image;

use super::{decode_image, encode_image, CoefficientBlocks, SeededRng, ZIGZAG};

pub const DEFAULT_P3_THRESHOLD: i32 = 10;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SharingMethod {
    /// Magnitude split: AC coefficients with `|c| < threshold` stay public.
    P3 { threshold: i32 },
    Scramble,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum SecretPart {
    Coefficients(Vec<CoefficientBlocks>),
    Seed(u64),
}

/// The shareable half and the key-holding half of a reversible obscuration.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PublicSecretPair {
    pub method: SharingMethod,
    pub public: Vec<CoefficientBlocks>,
    pub secret: SecretPart,
}

impl PublicSecretPair {
    /// What a viewer without the secret sees.
    pub fn render_public(&self) -> Result<Image> {
        decode_image(&self.public)
    }

    /// Recovers the original coefficients with the secret part.
    pub fn restore(&self) -> Result<Vec<CoefficientBlocks>> {
        match self.method {
            SharingMethod::P3 { .. } => p3_merge(self),
            SharingMethod::Scramble => unscramble(self),
        }
    }
}

pub fn p3_split(channels: &[CoefficientBlocks], threshold: i32) -> Result<PublicSecretPair> {
    if threshold < 1 {
        return Err(Error::invalid(format!("P3 threshold must be positive, got {threshold}")));
    }
    let mut public = channels.to_vec();
    let mut secret = channels.to_vec();
    for (pub_ch, sec_ch) in public.iter_mut().zip(secret.iter_mut()) {
        for (pb, sb) in pub_ch.blocks_mut().iter_mut().zip(sec_ch.blocks_mut().iter_mut()) {
            pb[0] = 0;
            for k in 1..64 {
                if pb[k].abs() < threshold {
                    sb[k] = 0;
                } else {
                    pb[k] = 0;
                }
            }
        }
    }
    Ok(PublicSecretPair { method: SharingMethod::P3 { threshold }, public, secret: SecretPart::Coefficients(secret) })
}

pub fn p3_merge(pair: &PublicSecretPair) -> Result<Vec<CoefficientBlocks>> {
    let SharingMethod::P3 { .. } = pair.method else {
        return Err(Error::invalid("p3_merge needs a P3 pair"));
    };
    let SecretPart::Coefficients(secret) = &pair.secret else {
        return Err(Error::invalid("P3 pair must carry secret coefficients"));
    };
    if secret.len() != pair.public.len() {
        return Err(Error::dims(format!("{} public channels vs {} secret channels", pair.public.len(), secret.len())));
    }
    let mut merged = pair.public.clone();
    for (m, s) in merged.iter_mut().zip(secret) {
        if !m.same_layout(s) {
            return Err(Error::dims("public and secret channel layouts differ"));
        }
        for (mb, sb) in m.blocks_mut().iter_mut().zip(s.blocks()) {
            for k in 0..64 {
                mb[k] += sb[k];
            }
        }
    }
    Ok(merged)
}

/// Negates coefficients where the seeded bit stream yields 1.
///
/// Traversal: channel by channel, blocks in raster order, coefficients in
/// zigzag order within each block; one bit per coefficient, DC included.
/// Applying the same seed twice is the identity.
pub fn apply_flip_mask(channels: &mut [CoefficientBlocks], seed: u64) {
    let mut rng = SeededRng::new(seed);
    for ch in channels.iter_mut() {
        for block in ch.blocks_mut() {
            for &k in &ZIGZAG {
                if rng.next_bit() {
                    block[k] = -block[k];
                }
            }
        }
    }
}

pub fn scramble(channels: &[CoefficientBlocks], seed: u64) -> PublicSecretPair {
    let mut public = channels.to_vec();
    apply_flip_mask(&mut public, seed);
    PublicSecretPair { method: SharingMethod::Scramble, public, secret: SecretPart::Seed(seed) }
}

pub fn unscramble(pair: &PublicSecretPair) -> Result<Vec<CoefficientBlocks>> {
    let SecretPart::Seed(seed) = pair.secret else {
        return Err(Error::invalid("unscramble needs a seed secret"));
    };
    let mut restored = pair.public.clone();
    apply_flip_mask(&mut restored, seed);
    Ok(restored)
}

/// Encodes, splits at `threshold` and renders only the public part.
pub fn p3_obscure_image(img: &Image, threshold: i32) -> Result<Image> {
    p3_split(&encode_image(img)?, threshold)?.render_public()
}

/// Encodes, sign-scrambles with `seed` and renders the public part.
pub fn scramble_obscure_image(img: &Image, seed: u64) -> Result<Image> {
    scramble(&encode_image(img)?, seed).render_public()
}
