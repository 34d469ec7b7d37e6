//! LP-IV on a panel where the shock is correlated with the outcome error,
//! and the reverse projection of scores on instrumented trade.
//!
//! Run with `cargo run --release --example instrumental_variables`.

use std::collections::BTreeMap;

use geotrade::error::Result;
use geotrade::events::score_events;
use geotrade::lp::{lp_irf, lp_iv, reverse_lp, LpSpec};
use geotrade::panel::{build_panel, Panel, PanelInputs, SampleSpec};
use geotrade::synthworld::{country_codes, generate_world, WorldConfig};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

/// s = z + e and y = 0.5 s + e + v, so OLS overstates the 0.5 impact.
fn endogenous_panel() -> Result<Panel> {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut draw = || -> f64 { StandardNormal.sample(&mut rng) };
    let countries = country_codes(8);
    let mut keys = Vec::new();
    let mut cols: BTreeMap<String, Vec<f64>> = ["y", "s", "z"].iter().map(|c| (c.to_string(), Vec::new())).collect();
    for &o in &countries {
        for &d in countries.iter().filter(|&&d| d != o) {
            for year in 2000..2030 {
                let (z, e, v) = (draw(), draw(), draw());
                let s = z + e;
                keys.push((o, d, year));
                cols.get_mut("z").unwrap().push(z);
                cols.get_mut("s").unwrap().push(s);
                cols.get_mut("y").unwrap().push(0.5 * s + e + 0.5 * v);
            }
        }
    }
    Panel::from_rows(keys, cols)
}

fn main() -> Result<()> {
    let panel = endogenous_panel()?;
    let spec = LpSpec::new("y", "s").horizons(0, 0).lags(1);
    let ols = lp_irf(&panel, &spec)?;
    let iv = lp_iv(&panel, &spec.clone().instruments(&["z"]))?;
    println!("impact effect, truth 0.5");
    println!("  OLS {:.3} ({:.3})", ols.beta[0], ols.se[0]);
    println!("  IV  {:.3} ({:.3}), first-stage F {:.0}", iv.beta[0], iv.se[0], iv.first_stage_f[0]);

    // Scores react to last year's exogenous trade shifter.
    let cfg = WorldConfig { n_countries: 10, years: 30, reverse_feedback: 0.5, seed: 4, ..WorldConfig::default() };
    let world = generate_world(&cfg)?;
    let scores = score_events(&world.events, cfg.delta, None)?;
    let mut inputs = PanelInputs::new(&world.trade, &scores, SampleSpec::all());
    inputs.controls = vec![("predicted_trade", &world.predicted_trade)];
    let panel = build_panel(&inputs)?;
    let spec = LpSpec::new("log_trade", "score").horizons(0, 4).lags(2);
    let rev = reverse_lp(&panel, "log_trade", "score", "predicted_trade", &spec)?;
    println!("\nscore response to instrumented log trade");
    for (i, h) in rev.horizons.iter().enumerate() {
        println!("  h={h}: {:>7.4} [{:.4}, {:.4}]  F {:.0}", rev.beta[i], rev.band_low[i], rev.band_high[i], rev.first_stage_f[i]);
    }
    Ok(())
}
