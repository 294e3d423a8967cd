//! Synthetic identities, image- and identity-disjoint splits, the TSV
//! manifest, and loading a folder-per-identity tree.
//!
//!     cargo run --release --example dataset -- [folder]

use obscura::dataset::{generate_synthetic, load_folder, split_by_identity, split_by_image, Ratios, Split, SyntheticParams};
use obscura::raster::save_png;

fn main() -> obscura::Result<()> {
    let ds = generate_synthetic(&SyntheticParams::new(6, 5, 64, 2))?;
    let (by_image, warnings) = split_by_image(&ds, Ratios::default(), 2)?;
    let by_identity = split_by_identity(&ds, Ratios::default(), 2)?;
    for s in [Split::Train, Split::Val, Split::Test] {
        let ids = |d: &obscura::dataset::LabeledDataset| {
            let mut v: Vec<usize> = d.indices(s).iter().map(|&i| d.items[i].identity).collect();
            v.sort_unstable();
            v.dedup();
            v
        };
        println!("{s:<5} by image: {:2} images | by identity: identities {:?}", by_image.indices(s).len(), ids(&by_identity));
    }
    println!("split warnings: {warnings:?}");

    let root = match std::env::args().nth(1) {
        Some(p) => p.into(),
        None => {
            let root = std::env::temp_dir().join("obscura-faces");
            for it in &ds.items {
                let dir = root.join(&ds.identities[it.identity]);
                std::fs::create_dir_all(&dir)?;
                save_png(&it.image, dir.join(format!("{}.png", it.source.replace(':', "_"))))?;
            }
            root
        }
    };
    let (loaded, warnings) = load_folder(&root, 64)?;
    println!("loaded {} images of {} identities from {}", loaded.len(), loaded.identities.len(), root.display());
    for w in warnings {
        println!("warning: {w}");
    }
    let manifest = std::env::temp_dir().join("obscura-manifest.tsv");
    by_image.write_manifest(&manifest)?;
    println!("manifest written to {}", manifest.display());
    Ok(())
}
