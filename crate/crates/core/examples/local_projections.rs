//! Panel local projections of log trade on the alignment score, with the
//! score's own persistence, against the response planted in a synthetic
//! world.
//!
//! Run with `cargo run --release --example local_projections`.

use geotrade::error::Result;
use geotrade::events::score_events;
use geotrade::lp::{lp_autocorr, lp_irf, LpSpec};
use geotrade::panel::{build_panel, PanelInputs, SampleSpec};
use geotrade::synthworld::{generate_world, WorldConfig};

fn main() -> Result<()> {
    let cfg = WorldConfig { n_countries: 12, years: 40, seed: 21, ..WorldConfig::default() };
    let world = generate_world(&cfg)?;
    let scores = score_events(&world.events, cfg.delta, None)?;
    let panel = build_panel(&PanelInputs::new(&world.trade, &scores, SampleSpec::all()))?;

    let spec = LpSpec::new("log_trade", "score").horizons(-4, 12);
    let irf = lp_irf(&panel, &spec)?;
    let acf = lp_autocorr(&panel, "score", &spec.clone().horizons(0, 12))?;

    println!("   h     beta       95% band            truth   score acf");
    for (i, &h) in irf.horizons.iter().enumerate() {
        let truth = if h >= 0 { world.truth.beta.get(h as usize).copied() } else { Some(0.0) };
        let rho = acf.beta_at(h).map_or(String::new(), |r| format!("{r:.3}"));
        println!(
            "{h:>4} {:>8.4}  [{:>7.4}, {:>7.4}]  {:>8.4}   {rho}{}",
            irf.beta[i],
            irf.band_low[i],
            irf.band_high[i],
            truth.unwrap_or(f64::NAN),
            if irf.fixed[i] { "  (fixed by lags)" } else { "" }
        );
    }
    for w in irf.warnings.iter().chain(&acf.warnings) {
        println!("warning: {w}");
    }
    Ok(())
}
