//! Fits the ridge patch reconstructor on blurred/clear pairs and compares it
//! with doing nothing.
//!
//!     cargo run --release --example reconstruction -- [kernel_size]

use obscura::dataset::{generate_synthetic, SyntheticParams};
use obscura::harness::{mse, ridge_reconstructor_fit, IdentityReconstructor, Method, Reconstructor, RidgeConfig};

fn main() -> obscura::Result<()> {
    let size: usize = std::env::args().nth(1).map_or(5, |a| a.parse().expect("kernel size must be a number"));
    let blur = Method::gaussian(size)?;
    let ds = generate_synthetic(&SyntheticParams::new(12, 4, 64, 21))?;
    let (train, test) = ds.items.split_at(36);
    let pairs: Vec<_> = train.iter().map(|it| Ok((blur.apply(&it.image, 0)?, it.image.clone()))).collect::<obscura::Result<_>>()?;
    let refs: Vec<_> = pairs.iter().map(|(o, c)| (o, c)).collect();
    let ridge = ridge_reconstructor_fit(&refs, &RidgeConfig::default())?;

    for r in [&IdentityReconstructor as &dyn Reconstructor, &ridge] {
        let mut total = 0.0;
        for it in test {
            total += mse(&r.reconstruct(&blur.apply(&it.image, 0)?)?, &it.image)?;
        }
        println!("{:<9} mean test mse {:.6}", r.name(), total / test.len() as f64);
    }
    Ok(())
}
