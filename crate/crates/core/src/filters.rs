//! Gaussian blurring, median blurring and pixelation.
//!
//! Borders are handled by edge replication everywhere, which keeps constant
//! images fixed under both blur filters.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::raster::Image;

/// Kernel sizes evaluated for the traditional methods.
pub const STANDARD_SIZES: [usize; 4] = [5, 15, 25, 35];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum FilterMethod {
    Gaussian,
    Median,
    Pixelation,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct KernelSpec {
    pub method: FilterMethod,
    /// Kernel width for the blurs, block size for pixelation.
    pub size: usize,
}

impl KernelSpec {
    pub fn new(method: FilterMethod, size: usize) -> Result<Self> {
        match method {
            FilterMethod::Gaussian | FilterMethod::Median => check_odd(size)?,
            FilterMethod::Pixelation if size == 0 => {
                return Err(Error::invalid("pixel size must be at least 1"))
            }
            FilterMethod::Pixelation => {}
        }
        Ok(KernelSpec { method, size })
    }

    pub fn apply(&self, img: &Image) -> Result<Image> {
        match self.method {
            FilterMethod::Gaussian => gaussian_blur(img, self.size),
            FilterMethod::Median => median_blur(img, self.size),
            FilterMethod::Pixelation => pixelate(img, self.size),
        }
    }
}

fn check_odd(w: usize) -> Result<()> {
    if w == 0 || w.is_multiple_of(2) {
        return Err(Error::invalid(format!("kernel size must be odd and positive, got {w}")));
    }
    Ok(())
}

/// Standard deviation OpenCV derives from a kernel size when none is given.
pub fn gaussian_sigma(w: usize) -> f64 {
    0.3 * ((w as f64 - 1.0) / 2.0 - 1.0) + 0.8
}

pub fn gaussian_kernel(w: usize) -> Result<Vec<f64>> {
    check_odd(w)?;
    let sigma = gaussian_sigma(w);
    let center = (w as f64 - 1.0) / 2.0;
    let raw: Vec<f64> = (0..w)
        .map(|i| {
            let d = i as f64 - center;
            (-d * d / (2.0 * sigma * sigma)).exp()
        })
        .collect();
    let sum: f64 = raw.iter().sum();
    Ok(raw.into_iter().map(|v| v / sum).collect())
}

/// Separable Gaussian blur: horizontal pass, then vertical pass.
pub fn gaussian_blur(img: &Image, w: usize) -> Result<Image> {
    let kernel = gaussian_kernel(w)?;
    let (width, height) = (img.width(), img.height());
    let r = (w / 2) as isize;
    let clamp = |v: isize, max: usize| v.clamp(0, max as isize - 1) as usize;

    img.map_planes(|plane| {
        let mut horiz = vec![0.0; plane.len()];
        for y in 0..height {
            let row = &plane[y * width..(y + 1) * width];
            for x in 0..width {
                let mut acc = 0.0;
                for (k, &kw) in kernel.iter().enumerate() {
                    acc += kw * row[clamp(x as isize + k as isize - r, width)];
                }
                horiz[y * width + x] = acc;
            }
        }
        let mut out = vec![0.0; plane.len()];
        for y in 0..height {
            for (k, &kw) in kernel.iter().enumerate() {
                let sy = clamp(y as isize + k as isize - r, height);
                let src = &horiz[sy * width..(sy + 1) * width];
                let dst = &mut out[y * width..(y + 1) * width];
                for (d, s) in dst.iter_mut().zip(src) {
                    *d += kw * s;
                }
            }
        }
        out
    })
}

/// Median of the `w x w` neighbourhood of every sample, per channel.
pub fn median_blur(img: &Image, w: usize) -> Result<Image> {
    check_odd(w)?;
    let (width, height) = (img.width(), img.height());
    img.map_planes(|plane| {
        if on_8bit_grid(plane) {
            median_plane_histogram(plane, width, height, w)
        } else {
            median_plane_select(plane, width, height, w)
        }
    })
}

fn on_8bit_grid(plane: &[f64]) -> bool {
    plane.iter().all(|&v| {
        let k = (v * 255.0).round();
        (0.0..=255.0).contains(&k) && k / 255.0 == v
    })
}

/// Sliding 256-bin histogram along each row. Exact for samples of the form `k / 255`.
fn median_plane_histogram(plane: &[f64], width: usize, height: usize, w: usize) -> Vec<f64> {
    let levels: Vec<u8> = plane.iter().map(|&v| (v * 255.0).round() as u8).collect();
    let r = (w / 2) as isize;
    let cx = |v: isize| v.clamp(0, width as isize - 1) as usize;
    let cy = |v: isize| v.clamp(0, height as isize - 1) as usize;
    let rank = (w * w / 2) as u32;
    let mut out = Vec::with_capacity(plane.len());

    for y in 0..height {
        let rows: Vec<usize> = (-r..=r).map(|d| cy(y as isize + d)).collect();
        let mut hist = [0u32; 256];
        for dx in -r..=r {
            let sx = cx(dx);
            for &sy in &rows {
                hist[levels[sy * width + sx] as usize] += 1;
            }
        }
        for x in 0..width {
            if x > 0 {
                let gone = cx(x as isize - r - 1);
                let new = cx(x as isize + r);
                for &sy in &rows {
                    hist[levels[sy * width + gone] as usize] -= 1;
                    hist[levels[sy * width + new] as usize] += 1;
                }
            }
            let mut seen = 0;
            let mut level = 0;
            for (l, &count) in hist.iter().enumerate() {
                seen += count;
                if seen > rank {
                    level = l;
                    break;
                }
            }
            out.push(level as f64 / 255.0);
        }
    }
    out
}

fn median_plane_select(plane: &[f64], width: usize, height: usize, w: usize) -> Vec<f64> {
    let r = (w / 2) as isize;
    let mut window = Vec::with_capacity(w * w);
    let mut out = Vec::with_capacity(plane.len());
    for y in 0..height as isize {
        for x in 0..width as isize {
            window.clear();
            for dy in -r..=r {
                let sy = (y + dy).clamp(0, height as isize - 1) as usize;
                for dx in -r..=r {
                    let sx = (x + dx).clamp(0, width as isize - 1) as usize;
                    window.push(plane[sy * width + sx]);
                }
            }
            let mid = window.len() / 2;
            let (_, median, _) = window.select_nth_unstable_by(mid, f64::total_cmp);
            out.push(*median);
        }
    }
    out
}

/// Nearest-neighbour downsample to `floor(dim / p)` and back up.
pub fn pixelate(img: &Image, p: usize) -> Result<Image> {
    if p == 0 {
        return Err(Error::invalid("pixel size must be at least 1"));
    }
    if p > img.width().min(img.height()) {
        return Err(Error::invalid(format!(
            "pixel size {p} exceeds image side {}",
            img.width().min(img.height())
        )));
    }
    let (w, h) = (img.width(), img.height());
    let xs = block_representatives(w, w / p);
    let ys = block_representatives(h, h / p);
    let planes = img
        .planes()
        .iter()
        .map(|plane| {
            let mut out = Vec::with_capacity(w * h);
            for &sy in &ys {
                out.extend(xs.iter().map(|&sx| plane[sy * w + sx]));
            }
            out
        })
        .collect();
    Image::from_planes(w, h, img.color_space(), planes)
}

/// For each of `full` positions, the source index of its cell when `full`
/// is split into `cells` nearest-neighbour cells. Each cell is represented
/// by its first member, so re-pixelating an output changes nothing.
fn block_representatives(full: usize, cells: usize) -> Vec<usize> {
    (0..full)
        .map(|i| {
            let cell = i * cells / full;
            (cell * full).div_ceil(cells)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::raster::ColorSpace;
    use proptest::prelude::*;

    fn distinct(plane: &[f64]) -> usize {
        let mut v = plane.to_vec();
        v.sort_by(f64::total_cmp);
        v.dedup();
        v.len()
    }

    /// Sort-and-pick oracle with edge replication.
    fn brute_median(img: &Image, w: usize) -> Vec<f64> {
        let r = (w / 2) as isize;
        let (wd, ht) = (img.width() as isize, img.height() as isize);
        let mut out = vec![];
        for c in 0..img.channels() {
            for y in 0..ht {
                for x in 0..wd {
                    let mut win = vec![];
                    for dy in -r..=r {
                        for dx in -r..=r {
                            win.push(img.get(c, (x + dx).clamp(0, wd - 1) as usize, (y + dy).clamp(0, ht - 1) as usize));
                        }
                    }
                    win.sort_by(f64::total_cmp);
                    out.push(win[win.len() / 2]);
                }
            }
        }
        out
    }

    #[test]
    fn sigma_follows_opencv_parenthesization() {
        assert!((gaussian_sigma(5) - 1.1).abs() < 1e-12);
        assert!((gaussian_sigma(35) - 5.6).abs() < 1e-12);
        for w in [1, 3, 5, 15, 25, 35] {
            let k = gaussian_kernel(w).unwrap();
            assert_eq!(k.len(), w);
            assert!((k.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
        assert!(gaussian_kernel(4).is_err());
        assert!(gaussian_kernel(0).is_err());
    }

    #[test]
    fn gaussian_preserves_constants_and_w1_is_identity() {
        let c = Image::filled(20, 11, ColorSpace::Rgb, 0.37).unwrap();
        let out = gaussian_blur(&c, 15).unwrap();
        for v in out.flatten() {
            assert!((v - 0.37).abs() < 1e-12);
        }
        let img = Image::from_fn(9, 9, ColorSpace::Gray, |_, x, y| ((x * 7 + y * 3) % 11) as f64 / 10.0).unwrap();
        assert_eq!(gaussian_blur(&img, 1).unwrap(), img);
    }

    #[test]
    fn gaussian_impulse_response_is_kernel_outer_product() {
        let img = Image::from_fn(35, 35, ColorSpace::Gray, |_, x, y| if x == 17 && y == 17 { 1.0 } else { 0.0 }).unwrap();
        let out = gaussian_blur(&img, 5).unwrap();
        let k = gaussian_kernel(5).unwrap();
        for dy in 0..5 {
            for dx in 0..5 {
                let got = out.get(0, 15 + dx, 15 + dy);
                assert!((got - k[dx] * k[dy]).abs() < 1e-15);
            }
        }
        // center row equals the kernel scaled by its center weight
        for dx in 0..5 {
            assert!((out.get(0, 15 + dx, 17) - k[dx] * k[2]).abs() < 1e-15);
        }
        assert_eq!(out.get(0, 10, 17), 0.0);
    }

    #[test]
    fn gaussian_keeps_mean_on_smooth_interior() {
        let img = Image::from_fn(64, 64, ColorSpace::Gray, |_, x, y| {
            0.5 + 0.2 * (2.0 * std::f64::consts::PI * x as f64 / 64.0).sin() * (2.0 * std::f64::consts::PI * y as f64 / 64.0).cos()
        })
        .unwrap();
        let out = gaussian_blur(&img, 5).unwrap();
        let mean = |p: &[f64]| p.iter().sum::<f64>() / p.len() as f64;
        assert!((mean(img.plane(0)) - mean(out.plane(0))).abs() < 1e-3);
    }

    #[test]
    fn median_edge_cases() {
        let c = Image::filled(7, 5, ColorSpace::Gray, 0.6).unwrap();
        assert_eq!(median_blur(&c, 5).unwrap(), c);

        let salt = Image::from_fn(7, 7, ColorSpace::Gray, |_, x, y| if (x, y) == (3, 3) { 1.0 } else { 0.0 }).unwrap();
        assert!(median_blur(&salt, 3).unwrap().flatten().iter().all(|&v| v == 0.0));

        let ramp = Image::from_fn(5, 5, ColorSpace::Gray, |_, x, y| (x + 5 * y) as f64 / 24.0).unwrap();
        assert_eq!(median_blur(&ramp, 3).unwrap().flatten(), brute_median(&ramp, 3));
        assert!(median_blur(&ramp, 4).is_err());
    }

    #[test]
    fn median_histogram_path_matches_select_path() {
        let img = Image::from_fn(23, 17, ColorSpace::Gray, |_, x, y| ((x * 37 + y * 91) % 256) as f64 / 255.0).unwrap();
        for w in [3, 5, 15] {
            let fast = median_plane_histogram(img.plane(0), 23, 17, w);
            let slow = median_plane_select(img.plane(0), 23, 17, w);
            assert_eq!(fast, slow);
        }
    }

    #[test]
    fn pixelation_distinct_value_counts() {
        let img = Image::from_fn(128, 128, ColorSpace::Rgb, |c, x, y| ((x * 128 + y + c) % 16384) as f64 / 16384.0).unwrap();
        let p35 = pixelate(&img, 35).unwrap();
        let p25 = pixelate(&img, 25).unwrap();
        for c in 0..3 {
            assert!(distinct(p35.plane(c)) <= 9);
            assert!(distinct(p25.plane(c)) <= 25);
        }
        assert_eq!(pixelate(&img, 1).unwrap(), img);
        assert!(pixelate(&img, 129).is_err());
        assert!(pixelate(&img, 0).is_err());
    }

    #[test]
    fn kernel_spec_validation() {
        assert!(KernelSpec::new(FilterMethod::Gaussian, 4).is_err());
        assert!(KernelSpec::new(FilterMethod::Median, 0).is_err());
        assert!(KernelSpec::new(FilterMethod::Pixelation, 4).is_ok());
        assert!(KernelSpec::new(FilterMethod::Pixelation, 0).is_err());
    }

    fn small_image() -> impl Strategy<Value = Image> {
        (1usize..=16, 1usize..=16).prop_flat_map(|(w, h)| {
            prop::collection::vec(0u8..=255, w * h).prop_map(move |v| {
                Image::from_planes(w, h, ColorSpace::Gray, vec![v.into_iter().map(|b| b as f64 / 255.0).collect()]).unwrap()
            })
        })
    }

    proptest! {
        #[test]
        fn median_matches_brute_force(img in small_image(), w in prop::sample::select(vec![3usize, 5])) {
            prop_assert_eq!(median_blur(&img, w).unwrap().flatten(), brute_median(&img, w));
        }

        #[test]
        fn median_matches_brute_force_off_grid(
            (w, h, v) in (1usize..=10, 1usize..=10).prop_flat_map(|(w, h)| (Just(w), Just(h), prop::collection::vec(0.0f64..1.0, w * h)))
        ) {
            let img = Image::from_planes(w, h, ColorSpace::Gray, vec![v]).unwrap();
            prop_assert_eq!(median_blur(&img, 3).unwrap().flatten(), brute_median(&img, 3));
        }

        #[test]
        fn pixelate_is_idempotent(img in small_image(), p in 1usize..=16) {
            prop_assume!(p <= img.width().min(img.height()));
            let once = pixelate(&img, p).unwrap();
            prop_assert_eq!(pixelate(&once, p).unwrap(), once);
        }

        #[test]
        fn gaussian_preserves_any_constant(v in 0.0f64..=1.0, w in prop::sample::select(vec![1usize, 3, 5, 15])) {
            let img = Image::filled(9, 6, ColorSpace::Gray, v).unwrap();
            for s in gaussian_blur(&img, w).unwrap().flatten() {
                prop_assert!((s - v).abs() < 1e-12);
            }
        }
    }
}
