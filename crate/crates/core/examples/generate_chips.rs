//! Renders one chip per class, corrupts it, and writes PGM files.
//!
//! ```text
//! cargo run --example generate_chips -- [out_dir]
//! ```

use std::path::PathBuf;

use sparse_atr::imaging::snr_db;
use sparse_atr::{generate_chip, vectorize, write_pgm, CorruptionSpec, FeatureDim, ShapeClass};

fn main() -> sparse_atr::Result<()> {
    let out = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| std::env::temp_dir().join("sparse-atr-chips"));
    std::fs::create_dir_all(&out)?;

    let noisy = CorruptionSpec::new(0.1, 0.0, 7)?;
    let blurred = CorruptionSpec::new(0.0, 4.0, 7)?;
    for class in ShapeClass::ALL {
        let chip = generate_chip(class, 3, (64, 64))?;
        let features = vectorize(&chip, FeatureDim::default())?;
        println!(
            "{:<9} mean power {:.3}  snr at 0.1 {:>6.1} dB  features {}",
            class.name(),
            chip.mean_power(),
            snr_db(&chip, 0.1),
            features.len()
        );
        for (tag, c) in [
            ("clean", chip.clone()),
            ("noise", noisy.apply(&chip)?),
            ("blur", blurred.apply(&chip)?),
        ] {
            std::fs::write(
                out.join(format!("{}_{tag}.pgm", class.name())),
                write_pgm(&c)?,
            )?;
        }
    }
    println!("chips in {}", out.display());
    Ok(())
}
