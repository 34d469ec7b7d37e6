//! Exact hat algebra for a bilateral tariff hike in a four-country
//! Armington world, checked against re-solving the economy in levels.
//!
//! Run with `cargo run --example hat_algebra`.

use geotrade::error::Result;
use geotrade::equilibrium::{aggregate_trade, solve_hats, validate_equilibrium, HatShock, SolverOptions};
use geotrade::synthworld::{country_codes, level_solve, LevelPrimitives};
use nalgebra::DMatrix;

fn main() -> Result<()> {
    let countries = country_codes(4);
    let n = countries.len();
    let sigma = 4.0;
    let tariff = DMatrix::from_fn(n, n, |o, d| if o == d { 1.0 } else { 1.05 });
    let geo = DMatrix::from_fn(n, n, |o, d| if o == d { 1.0 } else { 1.3 + 0.1 * (o + d) as f64 });
    let base = LevelPrimitives {
        productivity: vec![1.0, 0.8, 1.1, 0.9],
        labor: vec![3.0, 5.0, 1.0, 1.5],
        cost: geo.component_mul(&tariff),
        tariff: tariff.clone(),
        sigma,
        world_income: 10.0,
    };
    let before = level_solve(&base)?;
    let world = before.to_world(countries.clone(), &tariff, sigma);

    // The first country taxes imports from the second at 25%.
    let mut tau_hat = DMatrix::from_element(n, n, 1.0);
    tau_hat[(1, 0)] = 1.25 / 1.05;
    let shock = HatShock::new(tau_hat.clone(), tau_hat.clone())?;
    let sol = solve_hats(&world, &shock, &SolverOptions::default())?;
    let residuals = validate_equilibrium(&world, &shock, &sol);

    let after_tariff = tariff.component_mul(&tau_hat);
    let after = level_solve(&LevelPrimitives {
        cost: geo.component_mul(&after_tariff),
        tariff: after_tariff,
        ..base
    })?;

    println!("country   w_hat     P_hat   welfare   w'/w in levels");
    for i in 0..n {
        println!(
            "{:<8} {:>7.5} {:>9.5} {:>9.5} {:>12.5}",
            countries[i].to_string(),
            sol.w_hat[i],
            sol.p_hat[i],
            sol.welfare[i],
            after.wage[i] / before.wage[i]
        );
    }
    println!("world trade index {:.5}", aggregate_trade(&world, &sol));
    println!("iterations {}, largest equilibrium residual {:.2e}", sol.iterations, residuals.max());
    Ok(())
}
