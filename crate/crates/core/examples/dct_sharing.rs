//! P3 splitting and sign scrambling in the DCT domain, through the binary
//! container and back.
//!
//!     cargo run --release --example dct_sharing

use obscura::dataset::{synthetic_bases, SyntheticParams};
use obscura::dct::{
    codec_round_trip, decode_image, encode_image, p3_split, read_container, scramble, write_container, Container,
    SecretPart,
};
use obscura::harness::mse;

fn main() -> obscura::Result<()> {
    let face = synthetic_bases(&SyntheticParams::new(2, 1, 64, 5)).remove(0);
    let coeffs = encode_image(&face)?;
    let reference = codec_round_trip(&face)?;
    println!("codec round trip mse vs original: {:.6}", mse(&face, &reference)?);

    for threshold in [1, 10, 100] {
        let pair = p3_split(&coeffs, threshold)?;
        let nonzero = |c: &[obscura::dct::CoefficientBlocks]| {
            c.iter().flat_map(|ch| ch.blocks()).flat_map(|b| b.iter()).filter(|&&v| v != 0).count()
        };
        let SecretPart::Coefficients(secret) = &pair.secret else { unreachable!() };
        let public_bytes = write_container(&Container::public_only(&pair))?;
        let secret_bytes = write_container(&Container::secret_only(&pair))?;
        let joined = Container::join(read_container(&public_bytes)?, read_container(&secret_bytes)?)?;
        let restored = decode_image(&joined.restore()?)?;
        println!(
            "p3 T={threshold:3}: nonzero public {:5}, secret {:5}; public-only mse {:.4}; restore exact: {}",
            nonzero(&pair.public),
            nonzero(secret),
            mse(&face, &pair.render_public()?)?,
            joined.restore()? == coeffs && restored == reference
        );
    }

    let pair = scramble(&coeffs, 42);
    let mut wrong = pair.clone();
    wrong.secret = SecretPart::Seed(43);
    println!("scrambled mse {:.4}", mse(&face, &pair.render_public()?)?);
    println!("right key exact: {}", pair.restore()? == coeffs);
    println!("wrong key mse {:.4}", mse(&face, &decode_image(&wrong.restore()?)?)?);

    let bytes = write_container(&Container::from_pair(&pair))?;
    match read_container(&bytes[..bytes.len() - 3]) {
        Err(e) => println!("truncated container: {e}"),
        Ok(_) => println!("truncated container unexpectedly parsed"),
    }
    Ok(())
}
