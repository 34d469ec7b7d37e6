//! Static gravity with yearly score coefficients, the R² each regressor
//! accounts for, and a two-anchor bloc classification.
//!
//! Run with `cargo run --release --example gravity`.

use geotrade::country::CountryCode;
use geotrade::error::Result;
use geotrade::events::score_events;
use geotrade::gravity::{bloc_classification, static_gravity, variance_decomposition, yearly_coefficients, GravitySpec};
use geotrade::panel::{build_panel, PanelInputs, SampleSpec};
use geotrade::synthworld::{generate_world, WorldConfig};

fn main() -> Result<()> {
    let cfg = WorldConfig { n_countries: 15, years: 25, seed: 5, ..WorldConfig::default() };
    let world = generate_world(&cfg)?;
    let scores = score_events(&world.events, cfg.delta, None)?;
    let mut inputs = PanelInputs::new(&world.trade, &scores, SampleSpec::all());
    inputs.tariffs = Some(&world.tariffs);
    inputs.controls = vec![("log_distance", &world.log_distance), ("contiguity", &world.contiguity)];
    let panel = build_panel(&inputs)?;

    let spec = GravitySpec::new(&["score", "log_distance", "contiguity", "log_gross_tariff"]);
    let pooled = static_gravity(&panel, &spec)?;
    for (i, name) in pooled.names.iter().enumerate() {
        println!("{name:>16} {:>9.4} ({:.4})", pooled.coefficients[i], pooled.se(i));
    }

    let yearly = yearly_coefficients(&panel, &spec)?;
    let first = yearly.years.first().copied().unwrap_or_default();
    let last = yearly.years.last().copied().unwrap_or_default();
    println!("\nyearly score coefficients {first}..{last}, omitted {:?}", yearly.omitted);
    if let Some(w) = &yearly.equality {
        println!("equality across years: F = {:.2}, p = {:.3}", w.f, w.p_value);
    }

    let var = variance_decomposition(&panel, &spec)?;
    println!("\nwithin R2 {:.3}", var.r_squared);
    for l in &var.losses {
        println!("  without {:>16}: loses {:.2} pp", l.regressor, l.loss_pp);
    }

    let anchors = (CountryCode::new("USA")?, CountryCode::new("CHN")?);
    let blocs = bloc_classification(&panel, (first, last), anchors)?;
    println!("\ncountry  trade bloc    geopolitical bloc");
    for b in &blocs {
        println!("{:<8} {:<13} {}", b.country.to_string(), b.trade_bloc.to_string(), b.geo_bloc);
    }
    Ok(())
}
