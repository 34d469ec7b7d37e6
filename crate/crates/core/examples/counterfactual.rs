//! Decomposes bilateral trade-cost changes in a synthetic Armington world
//! into geopolitical, tariff and unobserved factors, then asks how trade
//! and welfare would have evolved without each of them.
//!
//! Run with `cargo run --release --example counterfactual`.

use geotrade::decomposition::{
    decompose_costs, run_counterfactuals, welfare_distribution, Annualization, Scenario,
};
use geotrade::equilibrium::{calibrate, matrices_from_tables, SolverOptions};
use geotrade::error::Result;
use geotrade::events::score_events;
use geotrade::synthworld::{generate_world, TradeMode, WorldConfig};

fn main() -> Result<()> {
    let cfg = WorldConfig {
        mode: TradeMode::Armington,
        n_countries: 10,
        years: 20,
        drift: -0.02,
        unobserved_volatility: 0.02,
        seed: 9,
        ..WorldConfig::default()
    };
    let world = generate_world(&cfg)?;
    let scores = score_events(&world.events, cfg.delta, None)?;
    let t0 = cfg.first_year;
    let t1 = t0 + cfg.years as i32 - 1;

    // The generator's permanent-shock response stands in for an estimated one.
    let dec = decompose_costs(&world.trade, Some(&world.tariffs), &scores, &world.truth.permanent, cfg.sigma, (t0, t1))?;
    let (countries, values, tariff) = matrices_from_tables(&world.trade, Some(&world.tariffs), t0)?;
    let (base, _) = calibrate(countries, &values, &tariff, cfg.sigma)?;
    let suite = run_counterfactuals(&base, &dec, &Scenario::ALL, &SolverOptions::default(), Annualization::Geometric)?;

    println!("trade relative to {t0}");
    for s in &suite.scenarios {
        println!("  {:<16} {:.4}", s.scenario.to_string(), s.trade_index.last().copied().unwrap_or(f64::NAN));
    }
    println!("\ncontributions to trade growth by {t1} (pp, annualized pp)");
    for c in suite.contributions.iter().filter(|c| c.year == t1) {
        println!("  {:<12} {:>8.3} {:>8.3}", c.component, c.contribution_pp, c.annualized_pp);
    }

    let baseline = suite.scenario(Scenario::Baseline).expect("baseline was run");
    let no_geo = suite.scenario(Scenario::NoGeo).expect("no_geo was run");
    let cmp = welfare_distribution(baseline, no_geo, t1)?;
    let w = &cmp.summary;
    println!(
        "\nbaseline welfare over welfare without geopolitical cost changes: mean {:.4}, median {:.4}, above one for {}/{}",
        w.mean, w.median, w.gainers, w.n
    );
    Ok(())
}
