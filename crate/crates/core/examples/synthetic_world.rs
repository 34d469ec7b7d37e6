//! Generates a synthetic world with known ground truth and writes every
//! table to a directory, ready for the command-line tool.
//!
//! Run with `cargo run --example synthetic_world -- [OUT_DIR]`.

use std::path::PathBuf;

use geotrade::error::Result;
use geotrade::synthworld::{generate_world, hump_path, WorldConfig};

fn main() -> Result<()> {
    let dir = std::env::args().nth(1).map(PathBuf::from).unwrap_or_else(|| std::env::temp_dir().join("geotrade-world"));
    let cfg = WorldConfig {
        n_countries: 8,
        years: 25,
        beta: hump_path(0.2, 3, 11),
        sanction_rate: 0.01,
        seed: 1,
        ..WorldConfig::default()
    };
    let world = generate_world(&cfg)?;
    world.write_dir(&dir)?;

    println!("{} events, {} trade rows -> {}", world.events.len(), world.trade.len(), dir.display());
    println!("countries: {:?}", world.truth.countries.iter().map(|c| c.to_string()).collect::<Vec<_>>());
    println!("planted response {:?}", world.truth.beta.iter().map(|b| format!("{b:.3}")).collect::<Vec<_>>());
    println!("exactly recoverable by LP: {}", world.truth.beta_exact);
    Ok(())
}
