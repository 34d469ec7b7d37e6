//! Dyad block-bootstrap bands for a local projection next to the analytic
//! Driscoll–Kraay bands.
//!
//! Run with `cargo run --release --example block_bootstrap`.

use geotrade::error::Result;
use geotrade::events::score_events;
use geotrade::lp::{block_bootstrap, lp_irf, LpSpec};
use geotrade::panel::{build_panel, PanelInputs, SampleSpec};
use geotrade::synthworld::{generate_world, WorldConfig};

fn main() -> Result<()> {
    let cfg = WorldConfig { n_countries: 10, years: 30, seed: 8, ..WorldConfig::default() };
    let world = generate_world(&cfg)?;
    let scores = score_events(&world.events, cfg.delta, None)?;
    let panel = build_panel(&PanelInputs::new(&world.trade, &scores, SampleSpec::all()))?;

    let spec = LpSpec::new("log_trade", "score").horizons(0, 8).lags(2);
    let irf = lp_irf(&panel, &spec)?;
    let boot = block_bootstrap(&panel, &spec, 199, 42)?;
    println!("   h     beta   analytic band        bootstrap band      draws");
    for (i, &h) in irf.horizons.iter().enumerate() {
        let j = boot.horizons.iter().position(|&b| b == h).expect("same horizons");
        println!(
            "{h:>4} {:>8.4}  [{:>7.4}, {:>7.4}]  [{:>7.4}, {:>7.4}]  {}",
            irf.beta[i], irf.band_low[i], irf.band_high[i], boot.low[j], boot.high[j], boot.n_draws[j]
        );
    }
    println!("failed draws: {} of {}", boot.failed, 199);
    Ok(())
}
