//! Single-sector Armington world in shares, and its counterfactual solver in
//! proportional changes.
//!
//! Matrices are indexed `[(origin, dest)]`. Tariffs are gross factors
//! τ̃ = 1 + τ, collected by the destination and rebated to its households, so
//! expenditure X_d is labor income Y_d plus tariff revenue and the balance
//! condition reads Y_d = X_d Σ_o π_od / τ̃_od.

mod hats;

use std::io::Write;

use nalgebra::DMatrix;
use serde::Serialize;

use crate::country::CountryCode;
use crate::error::{Error, Result};
use crate::table::{fmt_real, KeyedTable};

pub use hats::{
    aggregate_trade, solve_hats, solve_hats_from, validate_equilibrium, welfare, HatShock, HatSolution, ResidualReport,
    SolverOptions,
};

pub const DEFAULT_SIGMA: f64 = 4.0;

/// Base-year equilibrium in shares.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WorldData {
    pub countries: Vec<CountryCode>,
    #[serde(serialize_with = "ser_matrix")]
    pub pi: DMatrix<f64>,
    pub expenditure: Vec<f64>,
    #[serde(serialize_with = "ser_matrix")]
    pub tariff: DMatrix<f64>,
    pub labor_income: Vec<f64>,
    pub sigma: f64,
}

pub(crate) fn ser_matrix<S: serde::Serializer>(m: &DMatrix<f64>, s: S) -> std::result::Result<S::Ok, S::Error> {
    use serde::ser::SerializeSeq;
    let mut seq = s.serialize_seq(Some(m.nrows()))?;
    for i in 0..m.nrows() {
        seq.serialize_element(&m.row(i).iter().copied().collect::<Vec<f64>>())?;
    }
    seq.end()
}

impl WorldData {
    pub fn n(&self) -> usize {
        self.countries.len()
    }

    pub fn index_of(&self, c: CountryCode) -> Option<usize> {
        self.countries.iter().position(|&x| x == c)
    }

    /// Net-of-tariff flow X_d π_od / τ̃_od.
    pub fn flow(&self, o: usize, d: usize) -> f64 {
        self.expenditure[d] * self.pi[(o, d)] / self.tariff[(o, d)]
    }

    /// Checks share, tariff, clearing and balance invariants.
    pub fn validate(&self) -> Result<()> {
        let n = self.n();
        if n == 0 {
            return Err(Error::validation("world has no countries"));
        }
        if self.pi.shape() != (n, n) || self.tariff.shape() != (n, n) || self.expenditure.len() != n || self.labor_income.len() != n {
            return Err(Error::validation("world dimensions are inconsistent"));
        }
        if !(self.sigma > 1.0 && self.sigma.is_finite()) {
            return Err(Error::validation(format!("sigma = {} must exceed 1", self.sigma)));
        }
        for d in 0..n {
            let col: f64 = self.pi.column(d).sum();
            if (col - 1.0).abs() > 1e-10 {
                return Err(Error::validation(format!("shares of {} sum to {col}", self.countries[d])));
            }
            if !(self.expenditure[d] > 0.0 && self.expenditure[d].is_finite()) {
                return Err(Error::validation(format!("expenditure of {} is not positive", self.countries[d])));
            }
            if self.tariff[(d, d)] != 1.0 {
                return Err(Error::validation(format!("domestic tariff of {} is not 1", self.countries[d])));
            }
        }
        if self.pi.iter().any(|v| !(*v >= 0.0 && v.is_finite())) || self.tariff.iter().any(|v| !(*v >= 1.0 && v.is_finite())) {
            return Err(Error::validation("shares must be nonnegative and gross tariffs at least 1"));
        }
        for o in 0..n {
            let sales: f64 = (0..n).map(|d| self.flow(o, d)).sum();
            let purchases: f64 = (0..n).map(|k| self.flow(k, o)).sum();
            let y = self.labor_income[o];
            if (sales - y).abs() > 1e-8 * y || (purchases - y).abs() > 1e-8 * y {
                return Err(Error::validation(format!("{} violates base-year clearing or balance", self.countries[o])));
            }
        }
        Ok(())
    }

    /// Net-of-tariff off-diagonal trade.
    pub fn world_trade(&self) -> f64 {
        let n = self.n();
        (0..n).flat_map(|o| (0..n).filter(move |&d| d != o).map(move |d| (o, d))).map(|(o, d)| self.flow(o, d)).sum()
    }
}

/// What balancing did to the input flows.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BalanceReport {
    pub iterations: usize,
    /// Largest |sales − purchases| / sales before balancing.
    pub max_imbalance_before: f64,
    /// Largest proportional change applied to any flow.
    pub max_adjustment: f64,
}

/// Builds a balanced base year from a value matrix (expenditure by the
/// destination, gross of tariffs) and gross tariffs.
///
/// Net flows are rescaled as F_od · a_o / a_d until every country's sales
/// equal its purchases; the diagonal is untouched.
pub fn calibrate(countries: Vec<CountryCode>, values: &DMatrix<f64>, tariff: &DMatrix<f64>, sigma: f64) -> Result<(WorldData, BalanceReport)> {
    let n = countries.len();
    if values.shape() != (n, n) || tariff.shape() != (n, n) {
        return Err(Error::validation("trade and tariff matrices must be N×N for the N countries"));
    }
    if !(sigma > 1.0 && sigma.is_finite()) {
        return Err(Error::validation(format!("sigma = {sigma} must exceed 1")));
    }
    for o in 0..n {
        if !(values[(o, o)] > 0.0) {
            return Err(Error::validation(format!("{} has no domestic absorption", countries[o])));
        }
        if tariff[(o, o)] != 1.0 {
            return Err(Error::validation(format!("{} has a domestic tariff", countries[o])));
        }
    }
    if values.iter().any(|v| !(*v >= 0.0 && v.is_finite())) {
        return Err(Error::validation("trade values must be finite and nonnegative"));
    }
    if tariff.iter().any(|v| !(*v >= 1.0 && v.is_finite())) {
        return Err(Error::validation("gross tariffs must be finite and at least 1"));
    }

    let mut f = values.component_div(tariff);
    let imbalance = |f: &DMatrix<f64>| -> f64 {
        (0..n)
            .map(|i| {
                let (r, c) = (f.row(i).sum(), f.column(i).sum());
                (r - c).abs() / r
            })
            .fold(0.0, f64::max)
    };
    let before = imbalance(&f);
    let mut scale = vec![1.0f64; n];
    let mut iterations = 0;
    while imbalance(&f) > 1e-13 {
        if iterations == 10_000 {
            return Err(Error::NonConvergence {
                context: "balancing trade flows (is the trade graph connected?)".into(),
                iterations,
                residual: imbalance(&f),
            });
        }
        for i in 0..n {
            let r = f.row(i).sum() - f[(i, i)];
            let c = f.column(i).sum() - f[(i, i)];
            if r <= 0.0 || c <= 0.0 {
                return Err(Error::validation(format!("{} has no exports or no imports; flows cannot balance", countries[i])));
            }
            let a = (c / r).sqrt();
            scale[i] *= a;
            for j in 0..n {
                if j != i {
                    f[(i, j)] *= a;
                    f[(j, i)] /= a;
                }
            }
        }
        iterations += 1;
    }
    let balanced = f.component_mul(tariff);
    let expenditure: Vec<f64> = (0..n).map(|d| balanced.column(d).sum()).collect();
    let pi = DMatrix::from_fn(n, n, |o, d| balanced[(o, d)] / expenditure[d]);
    let labor_income = (0..n).map(|o| f.row(o).sum()).collect();
    let max_adjustment = (0..n)
        .flat_map(|o| (0..n).map(move |d| (o, d)))
        .map(|(o, d)| (scale[o] / scale[d] - 1.0).abs())
        .fold(0.0, f64::max);
    let world = WorldData {
        countries,
        pi,
        expenditure,
        tariff: tariff.clone(),
        labor_income,
        sigma,
    };
    world.validate()?;
    Ok((world, BalanceReport { iterations, max_imbalance_before: before, max_adjustment }))
}

/// Value and gross-tariff matrices for one year from keyed tables. Tariff
/// entries are ad valorem rates; missing tariffs are zero.
pub fn matrices_from_tables(trade: &KeyedTable, tariffs: Option<&KeyedTable>, year: i32) -> Result<(Vec<CountryCode>, DMatrix<f64>, DMatrix<f64>)> {
    let mut countries: Vec<CountryCode> = trade
        .iter()
        .filter(|((_, _, y), _)| *y == Some(year))
        .flat_map(|((o, d, _), _)| [*o, *d])
        .collect();
    countries.sort_unstable();
    countries.dedup();
    if countries.is_empty() {
        return Err(Error::validation(format!("no trade rows for {year}")));
    }
    let n = countries.len();
    let mut values = DMatrix::zeros(n, n);
    let mut tau = DMatrix::from_element(n, n, 1.0);
    for (i, &o) in countries.iter().enumerate() {
        for (j, &d) in countries.iter().enumerate() {
            values[(i, j)] = trade.get(o, d, year).unwrap_or(0.0);
            if let Some(rate) = tariffs.and_then(|t| t.get(o, d, year)) {
                if i == j && rate != 0.0 {
                    return Err(Error::validation(format!("domestic tariff for {o} in {year}")));
                }
                tau[(i, j)] = 1.0 + rate;
            }
        }
    }
    Ok((countries, values, tau))
}

/// `country,w_hat,P_hat,X_hat,welfare`.
pub fn write_solution_csv<W: Write>(world: &WorldData, sol: &HatSolution, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["country", "w_hat", "P_hat", "X_hat", "welfare"])?;
    for (i, c) in world.countries.iter().enumerate() {
        w.write_record([
            c.as_str(),
            &fmt_real(sol.w_hat[i]),
            &fmt_real(sol.p_hat[i]),
            &fmt_real(sol.x_hat[i]),
            &fmt_real(sol.welfare[i]),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// `origin,dest,pi_hat`.
pub fn write_pi_hat_csv<W: Write>(world: &WorldData, sol: &HatSolution, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["origin", "dest", "pi_hat"])?;
    for (i, o) in world.countries.iter().enumerate() {
        for (j, d) in world.countries.iter().enumerate() {
            w.write_record([o.as_str(), d.as_str(), &fmt_real(sol.pi_hat[(i, j)])])?;
        }
    }
    w.flush()?;
    Ok(())
}
