//! Planar raster images with samples in `[0, 1]`.
//!
//! Every obscuration method and attack in this crate consumes and produces
//! [`Image`] values. Planes are stored per channel in row-major order.

use std::fs::File;
use std::io::BufWriter;
use std::path::Path;

use image::{DynamicImage, ImageReader};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ColorSpace {
    Gray,
    Rgb,
    /// BT.601 full-range YCbCr with chroma offset by one half.
    Yuv,
}

impl ColorSpace {
    pub fn channels(self) -> usize {
        match self {
            ColorSpace::Gray => 1,
            ColorSpace::Rgb | ColorSpace::Yuv => 3,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Image {
    width: usize,
    height: usize,
    color_space: ColorSpace,
    planes: Vec<Vec<f64>>,
}

impl Image {
    /// Builds an image from planes, clamping every sample into `[0, 1]`.
    pub fn from_planes(
        width: usize,
        height: usize,
        color_space: ColorSpace,
        mut planes: Vec<Vec<f64>>,
    ) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::invalid("image dimensions must be nonzero"));
        }
        if planes.len() != color_space.channels() {
            return Err(Error::dims(format!(
                "{:?} needs {} planes, got {}",
                color_space,
                color_space.channels(),
                planes.len()
            )));
        }
        for plane in &mut planes {
            if plane.len() != width * height {
                return Err(Error::dims(format!(
                    "plane has {} samples, expected {}",
                    plane.len(),
                    width * height
                )));
            }
            clamp_plane(plane);
        }
        Ok(Image { width, height, color_space, planes })
    }

    pub fn filled(width: usize, height: usize, color_space: ColorSpace, value: f64) -> Result<Self> {
        let planes = vec![vec![value; width * height]; color_space.channels()];
        Self::from_planes(width, height, color_space, planes)
    }

    /// Builds an image by evaluating `f(channel, x, y)` at every sample.
    pub fn from_fn(
        width: usize,
        height: usize,
        color_space: ColorSpace,
        mut f: impl FnMut(usize, usize, usize) -> f64,
    ) -> Result<Self> {
        let planes = (0..color_space.channels())
            .map(|c| {
                let mut plane = Vec::with_capacity(width * height);
                for y in 0..height {
                    for x in 0..width {
                        plane.push(f(c, x, y));
                    }
                }
                plane
            })
            .collect();
        Self::from_planes(width, height, color_space, planes)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn color_space(&self) -> ColorSpace {
        self.color_space
    }

    pub fn channels(&self) -> usize {
        self.planes.len()
    }

    pub fn plane(&self, channel: usize) -> &[f64] {
        &self.planes[channel]
    }

    pub fn planes(&self) -> &[Vec<f64>] {
        &self.planes
    }

    pub fn into_planes(self) -> Vec<Vec<f64>> {
        self.planes
    }

    #[inline]
    pub fn get(&self, channel: usize, x: usize, y: usize) -> f64 {
        self.planes[channel][y * self.width + x]
    }

    /// Total number of samples over all channels.
    pub fn len(&self) -> usize {
        self.width * self.height * self.planes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// All samples, channel-major.
    pub fn flatten(&self) -> Vec<f64> {
        self.planes.concat()
    }

    /// Inverse of [`Image::flatten`].
    pub fn from_flat(width: usize, height: usize, color_space: ColorSpace, flat: &[f64]) -> Result<Self> {
        let n = width * height;
        if flat.len() != n * color_space.channels() {
            return Err(Error::dims(format!(
                "flat vector has {} samples, expected {}",
                flat.len(),
                n * color_space.channels()
            )));
        }
        let planes = flat.chunks(n).map(<[f64]>::to_vec).collect();
        Self::from_planes(width, height, color_space, planes)
    }

    /// Applies `f` to every plane and returns a new image of the same shape.
    pub fn map_planes(&self, f: impl Fn(&[f64]) -> Vec<f64>) -> Result<Self> {
        let planes = self.planes.iter().map(|p| f(p)).collect();
        Self::from_planes(self.width, self.height, self.color_space, planes)
    }

    pub fn same_shape(&self, other: &Image) -> bool {
        self.width == other.width && self.height == other.height && self.channels() == other.channels()
    }

    /// Luma plane: Y of BT.601 for RGB, the first plane otherwise.
    pub fn luma(&self) -> Vec<f64> {
        match self.color_space {
            ColorSpace::Rgb => {
                let (r, g, b) = (&self.planes[0], &self.planes[1], &self.planes[2]);
                (0..r.len()).map(|i| 0.299 * r[i] + 0.587 * g[i] + 0.114 * b[i]).collect()
            }
            ColorSpace::Gray | ColorSpace::Yuv => self.planes[0].clone(),
        }
    }

    /// Snaps every sample to the 8-bit grid.
    pub fn quantize_8bit(&self) -> Self {
        let planes = self
            .planes
            .iter()
            .map(|p| p.iter().map(|&v| to_u8(v) as f64 / 255.0).collect())
            .collect();
        Image { planes, ..*self }
    }
}

fn clamp_plane(plane: &mut [f64]) {
    for v in plane {
        // NaN collapses to 0 so the [0, 1] invariant always holds.
        *v = if v.is_nan() { 0.0 } else { v.clamp(0.0, 1.0) };
    }
}

/// Round half away from zero onto `0..=255`.
#[inline]
pub fn to_u8(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

const KR: f64 = 0.299;
const KG: f64 = 0.587;
const KB: f64 = 0.114;

pub fn rgb_to_yuv(img: &Image) -> Result<Image> {
    if img.color_space != ColorSpace::Rgb {
        return Err(Error::WrongColorSpace { expected: ColorSpace::Rgb, found: img.color_space });
    }
    let (r, g, b) = (&img.planes[0], &img.planes[1], &img.planes[2]);
    let n = r.len();
    let mut y = Vec::with_capacity(n);
    let mut u = Vec::with_capacity(n);
    let mut v = Vec::with_capacity(n);
    for i in 0..n {
        y.push(KR * r[i] + KG * g[i] + KB * b[i]);
        u.push(-0.168_736 * r[i] - 0.331_264 * g[i] + 0.5 * b[i] + 0.5);
        v.push(0.5 * r[i] - 0.418_688 * g[i] - 0.081_312 * b[i] + 0.5);
    }
    Image::from_planes(img.width, img.height, ColorSpace::Yuv, vec![y, u, v])
}

pub fn yuv_to_rgb(img: &Image) -> Result<Image> {
    if img.color_space != ColorSpace::Yuv {
        return Err(Error::WrongColorSpace { expected: ColorSpace::Yuv, found: img.color_space });
    }
    let (y, u, v) = (&img.planes[0], &img.planes[1], &img.planes[2]);
    let n = y.len();
    let mut r = Vec::with_capacity(n);
    let mut g = Vec::with_capacity(n);
    let mut b = Vec::with_capacity(n);
    for i in 0..n {
        let (cb, cr) = (u[i] - 0.5, v[i] - 0.5);
        r.push(y[i] + 1.402 * cr);
        g.push(y[i] - 0.344_136 * cb - 0.714_136 * cr);
        b.push(y[i] + 1.772 * cb);
    }
    Image::from_planes(img.width, img.height, ColorSpace::Rgb, vec![r, g, b])
}

/// Nearest-neighbour resampling with the index map `src = floor(dst * src_dim / dst_dim)`.
pub fn resize_nearest(img: &Image, width: usize, height: usize) -> Result<Image> {
    if width == 0 || height == 0 {
        return Err(Error::invalid("resize target must be at least 1x1"));
    }
    let xs: Vec<usize> = (0..width).map(|x| x * img.width / width).collect();
    let ys: Vec<usize> = (0..height).map(|y| y * img.height / height).collect();
    let planes = img
        .planes
        .iter()
        .map(|p| {
            let mut out = Vec::with_capacity(width * height);
            for &sy in &ys {
                let row = &p[sy * img.width..(sy + 1) * img.width];
                out.extend(xs.iter().map(|&sx| row[sx]));
            }
            out
        })
        .collect();
    Image::from_planes(width, height, img.color_space, planes)
}

/// Box-average downsampling of a single plane to `side x side`.
pub fn area_downsample(plane: &[f64], width: usize, height: usize, side: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(side * side);
    for oy in 0..side {
        let (y0, y1) = (oy * height / side, ((oy + 1) * height / side).max(oy * height / side + 1));
        for ox in 0..side {
            let (x0, x1) = (ox * width / side, ((ox + 1) * width / side).max(ox * width / side + 1));
            let mut sum = 0.0;
            for y in y0..y1 {
                sum += plane[y * width + x0..y * width + x1].iter().sum::<f64>();
            }
            out.push(sum / ((y1 - y0) * (x1 - x0)) as f64);
        }
    }
    out
}

/// Loads an 8-bit grayscale or RGB PNG. Alpha channels are dropped.
pub fn load_png(path: impl AsRef<Path>) -> Result<Image> {
    let path = path.as_ref();
    let decoded = ImageReader::open(path)?
        .with_guessed_format()?
        .decode()
        .map_err(|e| match e {
            image::ImageError::IoError(io) => Error::Io(io),
            image::ImageError::Unsupported(u) => Error::UnsupportedFormat {
                path: path.to_path_buf(),
                reason: u.to_string(),
            },
            other => Error::Decode { path: path.to_path_buf(), reason: other.to_string() },
        })?;
    let unsupported = |what: &str| Error::UnsupportedFormat {
        path: path.to_path_buf(),
        reason: format!("{what} images are not supported; expected 8-bit gray or RGB"),
    };
    let (w, h) = (decoded.width() as usize, decoded.height() as usize);
    match decoded {
        DynamicImage::ImageLuma8(buf) => {
            let plane = buf.into_raw().into_iter().map(|v| v as f64 / 255.0).collect();
            Image::from_planes(w, h, ColorSpace::Gray, vec![plane])
        }
        DynamicImage::ImageLumaA8(_) => {
            let buf = decoded.to_luma8();
            let plane = buf.into_raw().into_iter().map(|v| v as f64 / 255.0).collect();
            Image::from_planes(w, h, ColorSpace::Gray, vec![plane])
        }
        DynamicImage::ImageRgb8(_) | DynamicImage::ImageRgba8(_) => {
            let raw = decoded.to_rgb8().into_raw();
            let mut planes: Vec<Vec<f64>> = (0..3).map(|_| Vec::with_capacity(w * h)).collect();
            for px in raw.chunks_exact(3) {
                for c in 0..3 {
                    planes[c].push(px[c] as f64 / 255.0);
                }
            }
            Image::from_planes(w, h, ColorSpace::Rgb, planes)
        }
        DynamicImage::ImageLuma16(_) | DynamicImage::ImageLumaA16(_) => Err(unsupported("16-bit grayscale")),
        DynamicImage::ImageRgb16(_) | DynamicImage::ImageRgba16(_) => Err(unsupported("16-bit color")),
        _ => Err(unsupported("floating-point or exotic")),
    }
}

/// Writes an 8-bit PNG. YUV images must be converted to RGB first.
pub fn save_png(img: &Image, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let n = img.width * img.height;
    let (color, raw): (image::ExtendedColorType, Vec<u8>) = match img.color_space {
        ColorSpace::Gray => (image::ExtendedColorType::L8, img.planes[0].iter().map(|&v| to_u8(v)).collect()),
        ColorSpace::Rgb => {
            let mut raw = Vec::with_capacity(3 * n);
            for i in 0..n {
                raw.extend(img.planes.iter().map(|p| to_u8(p[i])));
            }
            (image::ExtendedColorType::Rgb8, raw)
        }
        ColorSpace::Yuv => {
            return Err(Error::WrongColorSpace { expected: ColorSpace::Rgb, found: ColorSpace::Yuv })
        }
    };
    let writer = BufWriter::new(File::create(path)?);
    let encoder = image::codecs::png::PngEncoder::new(writer);
    image::ImageEncoder::write_image(encoder, &raw, img.width as u32, img.height as u32, color).map_err(|e| match e {
        image::ImageError::IoError(io) => Error::Io(io),
        other => Error::Decode { path: path.to_path_buf(), reason: other.to_string() },
    })
}
