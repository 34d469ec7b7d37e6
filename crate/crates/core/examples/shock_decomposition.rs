//! Splits the trade response to a persistent score into the response to a
//! one-off score change and to a permanent one.
//!
//! Run with `cargo run --release --example shock_decomposition`.

use geotrade::error::Result;
use geotrade::events::score_events;
use geotrade::lp::{lp_autocorr, lp_irf, LpSpec};
use geotrade::panel::{build_panel, PanelInputs, SampleSpec};
use geotrade::shocks::decompose;
use geotrade::synthworld::{generate_world, WorldConfig};

fn main() -> Result<()> {
    let cfg = WorldConfig { n_countries: 12, years: 40, seed: 2, ..WorldConfig::default() };
    let world = generate_world(&cfg)?;
    let scores = score_events(&world.events, cfg.delta, None)?;
    let panel = build_panel(&PanelInputs::new(&world.trade, &scores, SampleSpec::all()))?;

    let spec = LpSpec::new("log_trade", "score").horizons(0, 15);
    let irf = lp_irf(&panel, &spec)?;
    let acf = lp_autocorr(&panel, "score", &spec)?;
    let dec = decompose(&acf, &irf)?;

    println!("   h  transitory   truth   permanent   truth");
    for h in 0..dec.horizons.len() {
        println!(
            "{:>4} {:>10.4} {:>8.4} {:>10.4} {:>8.4}",
            dec.horizons[h],
            dec.transitory[h],
            world.truth.distributed_lag[h],
            dec.permanent[h],
            world.truth.permanent[h]
        );
    }
    Ok(())
}
