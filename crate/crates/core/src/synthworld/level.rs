use nalgebra::DMatrix;
use serde::Serialize;

use crate::equilibrium::WorldData;
use crate::country::CountryCode;
use crate::error::{Error, Result};

/// Primitives of an Armington economy in levels.
#[derive(Debug, Clone, PartialEq)]
pub struct LevelPrimitives {
    pub productivity: Vec<f64>,
    pub labor: Vec<f64>,
    /// Iceberg costs d_od ≥ 0 (any tariff component included).
    pub cost: DMatrix<f64>,
    /// Gross tariffs collected by the destination.
    pub tariff: DMatrix<f64>,
    pub sigma: f64,
    /// Σ_o w_o ℓ_o in equilibrium.
    pub world_income: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LevelEquilibrium {
    pub wage: Vec<f64>,
    pub price_index: Vec<f64>,
    #[serde(skip)]
    pub shares: DMatrix<f64>,
    pub expenditure: Vec<f64>,
    pub income: Vec<f64>,
    pub iterations: usize,
    pub residual: f64,
}

impl LevelEquilibrium {
    /// Expenditure values X_d π_od.
    pub fn values(&self) -> DMatrix<f64> {
        let n = self.wage.len();
        DMatrix::from_fn(n, n, |o, d| self.expenditure[d] * self.shares[(o, d)])
    }

    /// The base-year share representation of this equilibrium.
    pub fn to_world(&self, countries: Vec<CountryCode>, tariff: &DMatrix<f64>, sigma: f64) -> WorldData {
        WorldData {
            countries,
            pi: self.shares.clone(),
            expenditure: self.expenditure.clone(),
            tariff: tariff.clone(),
            labor_income: self.income.clone(),
            sigma,
        }
    }
}

/// Wages clearing every labor market, found by damped excess-demand steps
/// in levels with Σ wℓ pinned to `world_income`. Stops when the largest
/// excess demand is below 1e−13 of income.
pub fn level_solve(prim: &LevelPrimitives) -> Result<LevelEquilibrium> {
    let n = prim.labor.len();
    let s = prim.sigma;
    if prim.productivity.len() != n || prim.cost.shape() != (n, n) || prim.tariff.shape() != (n, n) {
        return Err(Error::validation("level primitives have inconsistent dimensions"));
    }
    if !(s > 1.0) || !(prim.world_income > 0.0) {
        return Err(Error::validation("need sigma > 1 and positive world income"));
    }
    let positive = |v: &f64| *v > 0.0 && v.is_finite();
    if !prim.productivity.iter().all(positive) || !prim.labor.iter().all(positive) || !prim.cost.iter().all(positive) {
        return Err(Error::validation("level primitives must be positive"));
    }
    if !prim.tariff.iter().all(positive) {
        return Err(Error::validation("gross tariffs must be positive"));
    }

    let pin = |w: &mut Vec<f64>| {
        let total: f64 = w.iter().zip(&prim.labor).map(|(w, l)| w * l).sum();
        let k = prim.world_income / total;
        w.iter_mut().for_each(|x| *x *= k);
    };
    // Shares, expenditures and per-country excess demand at wages w.
    let evaluate = |w: &[f64]| {
        let mut shares = DMatrix::zeros(n, n);
        let mut price = vec![0.0; n];
        for d in 0..n {
            let mut total = 0.0;
            for o in 0..n {
                let p = w[o] * prim.cost[(o, d)] / prim.productivity[o];
                let v = p.powf(1.0 - s);
                shares[(o, d)] = v;
                total += v;
            }
            price[d] = total.powf(1.0 / (1.0 - s));
            for o in 0..n {
                shares[(o, d)] /= total;
            }
        }
        let income: Vec<f64> = (0..n).map(|o| w[o] * prim.labor[o]).collect();
        let expenditure: Vec<f64> = (0..n)
            .map(|d| income[d] / (0..n).map(|o| shares[(o, d)] / prim.tariff[(o, d)]).sum::<f64>())
            .collect();
        let gap: Vec<f64> = (0..n)
            .map(|o| {
                let sales: f64 = (0..n).map(|d| expenditure[d] * shares[(o, d)] / prim.tariff[(o, d)]).sum();
                (sales - income[o]) / income[o]
            })
            .collect();
        (shares, price, expenditure, income, gap)
    };

    let mut w = vec![1.0; n];
    pin(&mut w);
    let mut step = 0.5;
    let mut last = f64::INFINITY;
    for iterations in 0..200_000 {
        let (shares, price, expenditure, income, gap) = evaluate(&w);
        let worst = gap.iter().fold(0.0f64, |m, g| m.max(g.abs()));
        if !worst.is_finite() {
            return Err(Error::Numerical("level solver produced a non-finite excess demand".into()));
        }
        if worst < 1e-13 {
            return Ok(LevelEquilibrium {
                wage: w,
                price_index: price,
                shares,
                expenditure,
                income,
                iterations,
                residual: worst,
            });
        }
        if worst > last {
            step *= 0.7;
        }
        last = worst;
        for o in 0..n {
            w[o] *= (1.0 + step * gap[o]).clamp(0.5, 2.0);
        }
        pin(&mut w);
    }
    Err(Error::NonConvergence {
        context: "level-space wage iteration".into(),
        iterations: 200_000,
        residual: last,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::equilibrium::{solve_hats, HatShock, SolverOptions};
    use crate::equilibrium::tests::codes;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_primitives(n: usize, seed: u64) -> LevelPrimitives {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        LevelPrimitives {
            productivity: (0..n).map(|_| rng.random_range(0.5..2.0)).collect(),
            labor: (0..n).map(|_| rng.random_range(0.5..3.0)).collect(),
            cost: DMatrix::from_fn(n, n, |o, d| if o == d { 1.0 } else { rng.random_range(1.2..3.0) }),
            tariff: DMatrix::from_fn(n, n, |o, d| if o == d { 1.0 } else { 1.0 + rng.random_range(0.0..0.25) }),
            sigma: 4.0,
            world_income: 10.0,
        }
    }

    #[test]
    fn symmetric_primitives_give_equal_wages() {
        let p = LevelPrimitives {
            productivity: vec![1.0, 1.0],
            labor: vec![2.0, 2.0],
            cost: DMatrix::from_row_slice(2, 2, &[1.0, 1.5, 1.5, 1.0]),
            tariff: DMatrix::from_row_slice(2, 2, &[1.0, 1.1, 1.1, 1.0]),
            sigma: 4.0,
            world_income: 4.0,
        };
        let eq = level_solve(&p).unwrap();
        assert!((eq.wage[0] - eq.wage[1]).abs() < 1e-14);
        assert!((eq.wage[0] - 1.0).abs() < 1e-14);
    }

    #[test]
    fn autarkic_costs_give_identity_shares() {
        let mut p = random_primitives(3, 1);
        p.cost = DMatrix::from_fn(3, 3, |o, d| if o == d { 1.0 } else { 1e8 });
        let eq = level_solve(&p).unwrap();
        for o in 0..3 {
            for d in 0..3 {
                let target = if o == d { 1.0 } else { 0.0 };
                assert!((eq.shares[(o, d)] - target).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn hats_match_ratio_of_level_solves() {
        for seed in 0..10 {
            let n = 4;
            let base = random_primitives(n, seed);
            let eq0 = level_solve(&base).unwrap();
            let world = eq0.to_world(codes(n), &base.tariff, base.sigma);
            world.validate().unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(100 + seed);
            let d_hat = DMatrix::from_fn(n, n, |o, d| if o == d { 1.0 } else { rng.random_range(0.8..1.3) });
            let tau_hat = DMatrix::from_fn(n, n, |o, d| if o == d { 1.0 } else { rng.random_range(0.95..1.1) });
            let after = LevelPrimitives {
                cost: base.cost.component_mul(&d_hat),
                tariff: base.tariff.component_mul(&tau_hat),
                ..base.clone()
            };
            let eq1 = level_solve(&after).unwrap_or_else(|e| panic!("seed {seed}: {e}"));
            let sol = solve_hats(&world, &HatShock::new(d_hat, tau_hat).unwrap(), &SolverOptions::default()).unwrap();
            for i in 0..n {
                assert!((sol.w_hat[i] - eq1.wage[i] / eq0.wage[i]).abs() < 1e-8);
                assert!((sol.p_hat[i] - eq1.price_index[i] / eq0.price_index[i]).abs() < 1e-8);
            }
        }
    }
}
