//! Binary container for public/secret coefficient parts.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! offset  size  field
//! 0       4     magic "OBSC"
//! 4       1     version (1)
//! 5       1     method: 0 = P3, 1 = scramble
//! 6       1     parts present: bit 0 public, bit 1 secret
//! 7       1     channel count C
//! 8       4     P3 threshold as i32 (0 for scramble)
//! 12      9*C   per channel: width u32, height u32, table u8 (0 luma, 1 chroma)
//! ...           public coefficients, if present
//! ...           secret: coefficients (P3) or an 8-byte seed (scramble)
//! ```
//!
//! Coefficient sections store every channel in order, blocks in raster order,
//! 64 i16 values per block in zigzag order.

use super::{Block, CoefficientBlocks, PublicSecretPair, QuantTableId, SecretPart, SharingMethod, ZIGZAG};
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"OBSC";
pub const VERSION: u8 = 1;

const HAS_PUBLIC: u8 = 0b01;
const HAS_SECRET: u8 = 0b10;

/// Any subset of a [`PublicSecretPair`]: both halves, or only one.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Container {
    pub method: SharingMethod,
    pub layout: Vec<(usize, usize, QuantTableId)>,
    pub public: Option<Vec<CoefficientBlocks>>,
    pub secret: Option<SecretPart>,
}

impl Container {
    pub fn from_pair(pair: &PublicSecretPair) -> Self {
        Container {
            method: pair.method,
            layout: pair.public.iter().map(|c| (c.width(), c.height(), c.table())).collect(),
            public: Some(pair.public.clone()),
            secret: Some(pair.secret.clone()),
        }
    }

    pub fn public_only(pair: &PublicSecretPair) -> Self {
        Container { secret: None, ..Self::from_pair(pair) }
    }

    pub fn secret_only(pair: &PublicSecretPair) -> Self {
        Container { public: None, ..Self::from_pair(pair) }
    }

    /// Joins a public-only and a secret-only container.
    pub fn join(public: Container, secret: Container) -> Result<PublicSecretPair> {
        if public.method != secret.method || public.layout != secret.layout {
            return Err(Error::invalid("public and secret containers do not belong together"));
        }
        Ok(PublicSecretPair {
            method: public.method,
            public: public.public.ok_or_else(|| Error::invalid("first container holds no public part"))?,
            secret: secret.secret.ok_or_else(|| Error::invalid("second container holds no secret part"))?,
        })
    }

    pub fn into_pair(self) -> Result<PublicSecretPair> {
        match (self.public, self.secret) {
            (Some(public), Some(secret)) => Ok(PublicSecretPair { method: self.method, public, secret }),
            _ => Err(Error::invalid("container does not hold both parts")),
        }
    }
}

fn write_coefficients(out: &mut Vec<u8>, channels: &[CoefficientBlocks]) -> Result<()> {
    for ch in channels {
        for block in ch.blocks() {
            for &k in &ZIGZAG {
                let v = i16::try_from(block[k])
                    .map_err(|_| Error::invalid(format!("coefficient {} does not fit in 16 bits", block[k])))?;
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
    }
    Ok(())
}

pub fn write_container(c: &Container) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.push(VERSION);
    let (tag, threshold) = match c.method {
        SharingMethod::P3 { threshold } => (0u8, threshold),
        SharingMethod::Scramble => (1u8, 0),
    };
    out.push(tag);
    out.push(if c.public.is_some() { HAS_PUBLIC } else { 0 } | if c.secret.is_some() { HAS_SECRET } else { 0 });
    out.push(u8::try_from(c.layout.len()).map_err(|_| Error::invalid("too many channels"))?);
    out.extend_from_slice(&threshold.to_le_bytes());
    for &(w, h, table) in &c.layout {
        out.extend_from_slice(&(w as u32).to_le_bytes());
        out.extend_from_slice(&(h as u32).to_le_bytes());
        out.push(match table {
            QuantTableId::Luma => 0,
            QuantTableId::Chroma => 1,
        });
    }
    if let Some(public) = &c.public {
        write_coefficients(&mut out, public)?;
    }
    match (&c.secret, c.method) {
        (None, _) => {}
        (Some(SecretPart::Coefficients(coeffs)), SharingMethod::P3 { .. }) => write_coefficients(&mut out, coeffs)?,
        (Some(SecretPart::Seed(seed)), SharingMethod::Scramble) => out.extend_from_slice(&seed.to_le_bytes()),
        _ => return Err(Error::invalid("secret part does not match the sharing method")),
    }
    Ok(out)
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.bytes.len() - self.pos < n {
            return Err(Error::Container {
                offset: self.pos,
                reason: format!("truncated while reading {what} ({n} bytes needed, {} left)", self.bytes.len() - self.pos),
            });
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u8(&mut self, what: &str) -> Result<u8> {
        Ok(self.take(1, what)?[0])
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }

    fn fail<T>(&self, offset: usize, reason: impl Into<String>) -> Result<T> {
        Err(Error::Container { offset, reason: reason.into() })
    }

    fn coefficients(&mut self, layout: &[(usize, usize, QuantTableId)]) -> Result<Vec<CoefficientBlocks>> {
        layout
            .iter()
            .map(|&(w, h, table)| {
                let n = w.div_ceil(8) * h.div_ceil(8);
                let mut blocks: Vec<Block> = Vec::with_capacity(n);
                for _ in 0..n {
                    let raw = self.take(128, "coefficient block")?;
                    let mut block = [0i32; 64];
                    for (i, &k) in ZIGZAG.iter().enumerate() {
                        block[k] = i16::from_le_bytes([raw[2 * i], raw[2 * i + 1]]) as i32;
                    }
                    blocks.push(block);
                }
                CoefficientBlocks::new(w, h, table, blocks)
            })
            .collect()
    }
}

pub fn read_container(bytes: &[u8]) -> Result<Container> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(4, "magic")? != MAGIC {
        return r.fail(0, "bad magic bytes");
    }
    let version = r.u8("version")?;
    if version != VERSION {
        return r.fail(4, format!("unsupported version {version}"));
    }
    let tag = r.u8("method tag")?;
    let parts = r.u8("part flags")?;
    if parts & !(HAS_PUBLIC | HAS_SECRET) != 0 || parts == 0 {
        return r.fail(6, format!("invalid part flags {parts:#04b}"));
    }
    let channels = r.u8("channel count")? as usize;
    if channels == 0 {
        return r.fail(7, "container has no channels");
    }
    let threshold = i32::from_le_bytes(r.take(4, "threshold")?.try_into().unwrap());
    let method = match tag {
        0 if threshold >= 1 => SharingMethod::P3 { threshold },
        0 => return r.fail(8, format!("invalid P3 threshold {threshold}")),
        1 => SharingMethod::Scramble,
        _ => return r.fail(5, format!("unknown method tag {tag}")),
    };
    let mut layout = Vec::with_capacity(channels);
    for _ in 0..channels {
        let start = r.pos;
        let w = r.u32("channel width")? as usize;
        let h = r.u32("channel height")? as usize;
        let table = match r.u8("table id")? {
            0 => QuantTableId::Luma,
            1 => QuantTableId::Chroma,
            t => return r.fail(r.pos - 1, format!("unknown table id {t}")),
        };
        if w == 0 || h == 0 {
            return r.fail(start, "zero channel dimension");
        }
        layout.push((w, h, table));
    }
    let public = if parts & HAS_PUBLIC != 0 { Some(r.coefficients(&layout)?) } else { None };
    let secret = if parts & HAS_SECRET != 0 {
        Some(match method {
            SharingMethod::P3 { .. } => SecretPart::Coefficients(r.coefficients(&layout)?),
            SharingMethod::Scramble => SecretPart::Seed(u64::from_le_bytes(r.take(8, "seed")?.try_into().unwrap())),
        })
    } else {
        None
    };
    if r.pos != bytes.len() {
        return r.fail(r.pos, format!("{} trailing bytes", bytes.len() - r.pos));
    }
    Ok(Container { method, layout, public, secret })
}
