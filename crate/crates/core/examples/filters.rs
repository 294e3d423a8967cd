//! Applies every traditional filter at every standard size to one synthetic
//! face and writes the results as PNGs.
//!
//!     cargo run --release --example filters -- [output_dir]

use std::path::PathBuf;

use obscura::dataset::{synthetic_bases, SyntheticParams};
use obscura::filters::{gaussian_kernel, gaussian_sigma, FilterMethod, KernelSpec, STANDARD_SIZES};
use obscura::raster::save_png;

fn main() -> obscura::Result<()> {
    let out = std::env::args().nth(1).map(PathBuf::from).unwrap_or_else(|| std::env::temp_dir().join("obscura-filters"));
    std::fs::create_dir_all(&out)?;
    let face = synthetic_bases(&SyntheticParams::new(2, 1, 128, 1)).remove(0);
    save_png(&face, out.join("clear.png"))?;

    for w in STANDARD_SIZES {
        let k = gaussian_kernel(w)?;
        println!("gaussian w={w:2}  sigma={:.4}  center weight={:.4}", gaussian_sigma(w), k[w / 2]);
    }
    for method in [FilterMethod::Gaussian, FilterMethod::Median, FilterMethod::Pixelation] {
        for size in STANDARD_SIZES {
            let spec = KernelSpec::new(method, size)?;
            let img = spec.apply(&face)?;
            let mut distinct: Vec<u64> = img.plane(0).iter().map(|v| v.to_bits()).collect();
            distinct.sort_unstable();
            distinct.dedup();
            let name = format!("{method:?}-{size}.png").to_lowercase();
            save_png(&img, out.join(&name))?;
            println!("{name:<18} distinct red values: {}", distinct.len());
        }
    }
    println!("wrote images to {}", out.display());
    Ok(())
}
