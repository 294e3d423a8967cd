//! Runs the full attack matrix on a synthetic dataset and prints the report.
//!
//!     cargo run --release --example attack_matrix -- [identities] [images_per_identity] [seed]

use obscura::dataset::{generate_synthetic, SyntheticParams};
use obscura::harness::{run_matrix, HarnessConfig, MatrixSpec};

fn main() -> obscura::Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let args: Vec<u64> = std::env::args().skip(1).map(|a| a.parse().expect("numeric argument")).collect();
    let ids = args.first().copied().unwrap_or(32) as usize;
    let per = args.get(1).copied().unwrap_or(12) as usize;
    let seed = args.get(2).copied().unwrap_or(7);

    let ds = generate_synthetic(&SyntheticParams::new(ids, per, 128, seed))?;
    let (report, timings) = run_matrix(&ds, "synthetic", &MatrixSpec::full(), &HarnessConfig::default(), seed)?;
    print!("{}", report.render_table());
    println!("total {:.1}s", timings.total);
    Ok(())
}
