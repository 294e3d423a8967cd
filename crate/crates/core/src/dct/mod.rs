//! In-memory JPEG-style 8x8 block DCT and the two coefficient-domain sharing
//! schemes built on it (threshold splitting and seeded sign scrambling).
//!
//! No entropy coding happens here: coefficients stay as integer grids.

mod container;
mod rng;
mod sharing;

use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::raster::{rgb_to_yuv, yuv_to_rgb, ColorSpace, Image};

pub use container::{read_container, write_container, Container};
pub use rng::{SeededRng, PCG_DEFAULT_STREAM, PCG_MULTIPLIER};
pub use sharing::{
    apply_flip_mask, p3_merge, p3_obscure_image, p3_split, scramble, scramble_obscure_image, unscramble,
    PublicSecretPair, SecretPart, SharingMethod, DEFAULT_P3_THRESHOLD,
};

pub const BLOCK: usize = 8;

/// Natural (row-major) index of the k-th coefficient in zigzag order.
pub const ZIGZAG: [usize; 64] = [
    0, 1, 8, 16, 9, 2, 3, 10, 17, 24, 32, 25, 18, 11, 4, 5, 12, 19, 26, 33, 40, 48, 41, 34, 27, 20, 13, 6, 7, 14, 21,
    28, 35, 42, 49, 56, 57, 50, 43, 36, 29, 22, 15, 23, 30, 37, 44, 51, 58, 59, 52, 45, 38, 31, 39, 46, 53, 60, 61,
    54, 47, 55, 62, 63,
];

/// Quality-50 luminance table from the JPEG standard, row-major.
const LUMA_TABLE: [u16; 64] = [
    16, 11, 10, 16, 24, 40, 51, 61, //
    12, 12, 14, 19, 26, 58, 60, 55, //
    14, 13, 16, 24, 40, 57, 69, 56, //
    14, 17, 22, 29, 51, 87, 80, 62, //
    18, 22, 37, 56, 68, 109, 103, 77, //
    24, 35, 55, 64, 81, 104, 113, 92, //
    49, 64, 78, 87, 103, 121, 120, 101, //
    72, 92, 95, 98, 112, 100, 103, 99,
];

/// Quality-50 chrominance table from the JPEG standard, row-major.
const CHROMA_TABLE: [u16; 64] = [
    17, 18, 24, 47, 99, 99, 99, 99, //
    18, 21, 26, 66, 99, 99, 99, 99, //
    24, 26, 56, 99, 99, 99, 99, 99, //
    47, 66, 99, 99, 99, 99, 99, 99, //
    99, 99, 99, 99, 99, 99, 99, 99, //
    99, 99, 99, 99, 99, 99, 99, 99, //
    99, 99, 99, 99, 99, 99, 99, 99, //
    99, 99, 99, 99, 99, 99, 99, 99,
];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum QuantTableId {
    Luma,
    Chroma,
}

impl QuantTableId {
    pub fn table(self) -> &'static [u16; 64] {
        match self {
            QuantTableId::Luma => &LUMA_TABLE,
            QuantTableId::Chroma => &CHROMA_TABLE,
        }
    }
}

pub type Block = [i32; 64];

/// Quantized DCT coefficients of one channel, blocks in raster order.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CoefficientBlocks {
    width: usize,
    height: usize,
    table: QuantTableId,
    blocks: Vec<Block>,
}

impl CoefficientBlocks {
    pub fn new(width: usize, height: usize, table: QuantTableId, blocks: Vec<Block>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::invalid("coefficient grid needs nonzero dimensions"));
        }
        let expected = width.div_ceil(BLOCK) * height.div_ceil(BLOCK);
        if blocks.len() != expected {
            return Err(Error::dims(format!("{width}x{height} needs {expected} blocks, got {}", blocks.len())));
        }
        Ok(CoefficientBlocks { width, height, table, blocks })
    }

    pub fn zeros(width: usize, height: usize, table: QuantTableId) -> Result<Self> {
        let n = width.div_ceil(BLOCK) * height.div_ceil(BLOCK);
        Self::new(width, height, table, vec![[0; 64]; n])
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn table(&self) -> QuantTableId {
        self.table
    }

    pub fn blocks_wide(&self) -> usize {
        self.width.div_ceil(BLOCK)
    }

    pub fn blocks_tall(&self) -> usize {
        self.height.div_ceil(BLOCK)
    }

    pub fn blocks(&self) -> &[Block] {
        &self.blocks
    }

    pub fn blocks_mut(&mut self) -> &mut [Block] {
        &mut self.blocks
    }

    pub fn same_layout(&self, other: &CoefficientBlocks) -> bool {
        self.width == other.width && self.height == other.height && self.table == other.table
    }
}

/// Orthonormal 1-D DCT-II basis, `basis[u][x]`.
fn dct_basis() -> &'static [[f64; 8]; 8] {
    static BASIS: OnceLock<[[f64; 8]; 8]> = OnceLock::new();
    BASIS.get_or_init(|| {
        let mut m = [[0.0; 8]; 8];
        for (u, row) in m.iter_mut().enumerate() {
            let scale = if u == 0 { (1.0f64 / 8.0).sqrt() } else { (2.0f64 / 8.0).sqrt() };
            for (x, v) in row.iter_mut().enumerate() {
                *v = scale * (((2 * x + 1) as f64 * u as f64 * std::f64::consts::PI) / 16.0).cos();
            }
        }
        m
    })
}

fn fdct(block: &[f64; 64]) -> [f64; 64] {
    let m = dct_basis();
    let mut tmp = [0.0; 64];
    // rows: tmp[y][v] = sum_x block[y][x] m[v][x]
    for y in 0..8 {
        for v in 0..8 {
            tmp[y * 8 + v] = (0..8).map(|x| block[y * 8 + x] * m[v][x]).sum();
        }
    }
    let mut out = [0.0; 64];
    for u in 0..8 {
        for v in 0..8 {
            out[u * 8 + v] = (0..8).map(|y| m[u][y] * tmp[y * 8 + v]).sum();
        }
    }
    out
}

fn idct(coeffs: &[f64; 64]) -> [f64; 64] {
    let m = dct_basis();
    let mut tmp = [0.0; 64];
    for u in 0..8 {
        for x in 0..8 {
            tmp[u * 8 + x] = (0..8).map(|v| coeffs[u * 8 + v] * m[v][x]).sum();
        }
    }
    let mut out = [0.0; 64];
    for y in 0..8 {
        for x in 0..8 {
            out[y * 8 + x] = (0..8).map(|u| m[u][y] * tmp[u * 8 + x]).sum();
        }
    }
    out
}

/// Level-shifted 8-bit scale: `[0, 1]` maps to `[-128, 127]`.
const LEVEL_SHIFT: f64 = 128.0;

/// Forward transform of one channel plane (row-major, `width * height` samples).
///
/// Partial edge blocks are padded by replicating the last row/column.
pub fn forward_blocks(plane: &[f64], width: usize, height: usize, table: QuantTableId) -> Result<CoefficientBlocks> {
    if plane.is_empty() || width == 0 || height == 0 {
        return Err(Error::invalid("cannot transform an empty plane"));
    }
    if plane.len() != width * height {
        return Err(Error::dims(format!("plane has {} samples, expected {}", plane.len(), width * height)));
    }
    let q = table.table();
    let (bw, bh) = (width.div_ceil(BLOCK), height.div_ceil(BLOCK));
    let mut blocks = Vec::with_capacity(bw * bh);
    for by in 0..bh {
        for bx in 0..bw {
            let mut samples = [0.0; 64];
            for y in 0..8 {
                let sy = (by * 8 + y).min(height - 1);
                for x in 0..8 {
                    let sx = (bx * 8 + x).min(width - 1);
                    samples[y * 8 + x] = plane[sy * width + sx] * 255.0 - LEVEL_SHIFT;
                }
            }
            let freq = fdct(&samples);
            let mut block = [0i32; 64];
            for i in 0..64 {
                block[i] = (freq[i] / q[i] as f64).round() as i32;
            }
            blocks.push(block);
        }
    }
    CoefficientBlocks::new(width, height, table, blocks)
}

/// Dequantize, inverse transform, undo the level shift, crop and clamp.
pub fn inverse_blocks(coeffs: &CoefficientBlocks) -> Vec<f64> {
    let q = coeffs.table.table();
    let (width, height) = (coeffs.width, coeffs.height);
    let bw = coeffs.blocks_wide();
    let mut plane = vec![0.0; width * height];
    for (i, block) in coeffs.blocks.iter().enumerate() {
        let (bx, by) = (i % bw, i / bw);
        let mut freq = [0.0; 64];
        for k in 0..64 {
            freq[k] = block[k] as f64 * q[k] as f64;
        }
        let samples = idct(&freq);
        for y in 0..8 {
            let py = by * 8 + y;
            if py >= height {
                break;
            }
            for x in 0..8 {
                let px = bx * 8 + x;
                if px >= width {
                    break;
                }
                plane[py * width + px] = ((samples[y * 8 + x] + LEVEL_SHIFT) / 255.0).clamp(0.0, 1.0);
            }
        }
    }
    plane
}

/// Transforms every channel of an image. RGB goes through YUV first; Y uses the
/// luma table and U/V the chroma table. Gray images yield one luma channel.
pub fn encode_image(img: &Image) -> Result<Vec<CoefficientBlocks>> {
    let (w, h) = (img.width(), img.height());
    match img.color_space() {
        ColorSpace::Gray => Ok(vec![forward_blocks(img.plane(0), w, h, QuantTableId::Luma)?]),
        ColorSpace::Rgb => encode_yuv(&rgb_to_yuv(img)?),
        ColorSpace::Yuv => encode_yuv(img),
    }
}

fn encode_yuv(yuv: &Image) -> Result<Vec<CoefficientBlocks>> {
    let (w, h) = (yuv.width(), yuv.height());
    [QuantTableId::Luma, QuantTableId::Chroma, QuantTableId::Chroma]
        .iter()
        .enumerate()
        .map(|(c, &t)| forward_blocks(yuv.plane(c), w, h, t))
        .collect()
}

/// Renders coefficient channels back to pixels: three channels decode to RGB,
/// one channel to gray.
pub fn decode_image(channels: &[CoefficientBlocks]) -> Result<Image> {
    let first = channels.first().ok_or_else(|| Error::invalid("no coefficient channels"))?;
    if channels.iter().any(|c| c.width != first.width || c.height != first.height) {
        return Err(Error::dims("coefficient channels disagree on dimensions"));
    }
    let planes: Vec<Vec<f64>> = channels.iter().map(inverse_blocks).collect();
    match planes.len() {
        1 => Image::from_planes(first.width, first.height, ColorSpace::Gray, planes),
        3 => yuv_to_rgb(&Image::from_planes(first.width, first.height, ColorSpace::Yuv, planes)?),
        n => Err(Error::invalid(format!("cannot decode {n} channels"))),
    }
}

/// Plain encode/decode with no sharing scheme applied.
pub fn codec_round_trip(img: &Image) -> Result<Image> {
    decode_image(&encode_image(img)?)
}
