use nalgebra::DMatrix;
use serde::Serialize;

use super::{ser_matrix, WorldData};
use crate::error::{Error, Result};

/// Proportional changes in iceberg costs and gross tariffs. `d_hat` already
/// contains any tariff component of costs; `tau_hat` moves the revenue
/// wedge τ̃′ = τ̂·τ̃.
#[derive(Debug, Clone, PartialEq)]
pub struct HatShock {
    pub d_hat: DMatrix<f64>,
    pub tau_hat: DMatrix<f64>,
}

impl HatShock {
    pub fn new(d_hat: DMatrix<f64>, tau_hat: DMatrix<f64>) -> Result<Self> {
        if !d_hat.is_square() || d_hat.shape() != tau_hat.shape() {
            return Err(Error::validation("shock matrices must be square and of equal size"));
        }
        for (name, m) in [("d_hat", &d_hat), ("tau_hat", &tau_hat)] {
            if let Some(i) = m.iter().position(|v| !(*v > 0.0 && v.is_finite())) {
                let (r, c) = (i % m.nrows(), i / m.nrows());
                return Err(Error::validation(format!("{name}[{r},{c}] = {} is not positive", m[(r, c)])));
            }
            if (0..m.nrows()).any(|i| m[(i, i)] != 1.0) {
                return Err(Error::validation(format!("{name} must have a unit diagonal")));
            }
        }
        Ok(HatShock { d_hat, tau_hat })
    }

    pub fn identity(n: usize) -> Self {
        HatShock {
            d_hat: DMatrix::from_element(n, n, 1.0),
            tau_hat: DMatrix::from_element(n, n, 1.0),
        }
    }

    pub fn n(&self) -> usize {
        self.d_hat.nrows()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SolverOptions {
    /// Initial weight on the implied wage update.
    pub damping: f64,
    /// Bound on max |excess demand| / income.
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            damping: 0.5,
            tol: 1e-10,
            max_iter: 100_000,
        }
    }
}

/// Counterfactual equilibrium relative to the base year. World labor income
/// Σ ŵ_o Y_o equals its base value.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HatSolution {
    pub w_hat: Vec<f64>,
    pub p_hat: Vec<f64>,
    #[serde(serialize_with = "ser_matrix")]
    pub pi_hat: DMatrix<f64>,
    pub x_hat: Vec<f64>,
    pub welfare: Vec<f64>,
    /// Max |excess demand| / income at the accepted iterate.
    pub residual: f64,
    pub iterations: usize,
    /// Damping in effect when the solver stopped.
    pub damping: f64,
    #[serde(skip)]
    pub tau_hat: DMatrix<f64>,
}

/// Counterfactual objects implied by a wage vector.
struct State {
    p_hat: Vec<f64>,
    pi_hat: DMatrix<f64>,
    x_new: Vec<f64>,
    excess: Vec<f64>,
    income: Vec<f64>,
}

fn evaluate(world: &WorldData, shock: &HatShock, w_hat: &[f64]) -> Result<State> {
    let n = world.n();
    let e = 1.0 - world.sigma;
    let mut p_hat = vec![0.0; n];
    let mut pi_hat = DMatrix::zeros(n, n);
    for d in 0..n {
        let mut denom = 0.0;
        for o in 0..n {
            let c = (w_hat[o] * shock.d_hat[(o, d)]).powf(e);
            pi_hat[(o, d)] = c;
            denom += world.pi[(o, d)] * c;
        }
        let p = denom.powf(1.0 / e);
        if !(p > 0.0 && p.is_finite()) {
            return Err(Error::Numerical(format!("P_hat[{}] = {p}", world.countries[d])));
        }
        p_hat[d] = p;
        for o in 0..n {
            pi_hat[(o, d)] /= denom;
        }
    }
    let income: Vec<f64> = (0..n).map(|o| w_hat[o] * world.labor_income[o]).collect();
    // X′_d from Y′_d = X′_d Σ_o π′_od / τ̃′_od.
    let x_new: Vec<f64> = (0..n)
        .map(|d| {
            let net: f64 = (0..n)
                .map(|o| world.pi[(o, d)] * pi_hat[(o, d)] / (world.tariff[(o, d)] * shock.tau_hat[(o, d)]))
                .sum();
            income[d] / net
        })
        .collect();
    let excess: Vec<f64> = (0..n)
        .map(|o| {
            let sales: f64 = (0..n)
                .map(|d| x_new[d] * world.pi[(o, d)] * pi_hat[(o, d)] / (world.tariff[(o, d)] * shock.tau_hat[(o, d)]))
                .sum();
            sales - income[o]
        })
        .collect();
    let total: f64 = income.iter().sum();
    debug_assert!(excess.iter().sum::<f64>().abs() <= 1e-10 * total, "Walras' law violated");
    Ok(State {
        p_hat,
        pi_hat,
        x_new,
        excess,
        income,
    })
}

fn normalize(world: &WorldData, w_hat: &mut [f64]) {
    let base: f64 = world.labor_income.iter().sum();
    let now: f64 = w_hat.iter().zip(&world.labor_income).map(|(w, y)| w * y).sum();
    let k = base / now;
    w_hat.iter_mut().for_each(|w| *w *= k);
}

fn max_rel(state: &State) -> f64 {
    state.excess.iter().zip(&state.income).map(|(e, y)| (e / y).abs()).fold(0.0, f64::max)
}

/// Solves for wage changes by damped tâtonnement from ŵ = 1.
pub fn solve_hats(world: &WorldData, shock: &HatShock, opts: &SolverOptions) -> Result<HatSolution> {
    solve_hats_from(world, shock, &vec![1.0; world.n()], opts)
}

/// As [`solve_hats`], from an arbitrary positive starting guess.
///
/// Each step moves wages a fraction λ toward the level that would clear the
/// current excess demand. λ halves whenever the residual grows and slowly
/// recovers after sustained progress.
pub fn solve_hats_from(world: &WorldData, shock: &HatShock, w0: &[f64], opts: &SolverOptions) -> Result<HatSolution> {
    let n = world.n();
    if shock.n() != n || w0.len() != n {
        return Err(Error::validation(format!("shock or starting guess is not {n}×{n}")));
    }
    if w0.iter().any(|w| !(*w > 0.0 && w.is_finite())) {
        return Err(Error::validation("starting wages must be positive"));
    }
    if !(opts.damping > 0.0 && opts.damping <= 1.0) {
        return Err(Error::validation("damping must lie in (0, 1]"));
    }
    let mut w_hat = w0.to_vec();
    normalize(world, &mut w_hat);
    let mut lambda = opts.damping;
    let mut state = evaluate(world, shock, &w_hat)?;
    let mut resid = max_rel(&state);
    let mut streak = 0usize;
    let mut iterations = 0;
    while resid >= opts.tol {
        if iterations == opts.max_iter {
            return Err(Error::NonConvergence {
                context: "hat-algebra wage iteration".into(),
                iterations,
                residual: resid,
            });
        }
        iterations += 1;
        let step = |lambda: f64| -> Vec<f64> {
            let mut w: Vec<f64> = (0..n)
                .map(|o| w_hat[o] * (1.0 + lambda * state.excess[o] / state.income[o]).max(0.5))
                .collect();
            normalize(world, &mut w);
            w
        };
        let candidate = step(lambda);
        if let Some(o) = candidate.iter().position(|w| !(*w > 0.0 && w.is_finite())) {
            return Err(Error::Numerical(format!("w_hat[{}] = {}", world.countries[o], candidate[o])));
        }
        let next = evaluate(world, shock, &candidate)?;
        let r = max_rel(&next);
        if r > resid {
            lambda = (lambda * 0.5).max(1e-6);
            streak = 0;
        } else {
            streak += 1;
            if streak >= 20 {
                lambda = (lambda * 1.25).min(opts.damping);
                streak = 0;
            }
        }
        w_hat = candidate;
        state = next;
        resid = r;
    }
    let x_hat: Vec<f64> = (0..n).map(|d| state.x_new[d] / world.expenditure[d]).collect();
    let welfare = welfare_of(&w_hat, &state.p_hat);
    Ok(HatSolution {
        w_hat,
        p_hat: state.p_hat,
        pi_hat: state.pi_hat,
        x_hat,
        welfare,
        residual: resid,
        iterations,
        damping: lambda,
        tau_hat: shock.tau_hat.clone(),
    })
}

fn welfare_of(w_hat: &[f64], p_hat: &[f64]) -> Vec<f64> {
    w_hat.iter().zip(p_hat).map(|(w, p)| w / p).collect()
}

/// Real-income change ŵ/P̂ per country.
pub fn welfare(sol: &HatSolution) -> Vec<f64> {
    welfare_of(&sol.w_hat, &sol.p_hat)
}

/// Counterfactual net-of-tariff off-diagonal trade over its base value.
pub fn aggregate_trade(world: &WorldData, sol: &HatSolution) -> f64 {
    let n = world.n();
    let mut after = 0.0;
    for o in 0..n {
        for d in 0..n {
            if o != d {
                let x = world.expenditure[d] * sol.x_hat[d];
                after += x * world.pi[(o, d)] * sol.pi_hat[(o, d)] / (world.tariff[(o, d)] * sol.tau_hat[(o, d)]);
            }
        }
    }
    after / world.world_trade()
}

/// Largest violations of the equilibrium conditions, recomputed from the
/// reported wages, prices, shares and expenditures.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ResidualReport {
    /// Max |Σ_d X′_d π′_od / τ̃′_od − ŵ_o Y_o| / (ŵ_o Y_o).
    pub clearing: f64,
    /// Max |X′_d Σ_o π′_od / τ̃′_od − ŵ_d Y_d| / (ŵ_d Y_d).
    pub balance: f64,
    /// Max |Σ_o π_od π̂_od − 1|.
    pub shares: f64,
    /// Max relative gap between reported P̂ and the price index implied by ŵ.
    pub price_index: f64,
    /// Max relative gap between reported π̂ and the share change implied by ŵ and P̂.
    pub share_change: f64,
}

impl ResidualReport {
    pub fn max(&self) -> f64 {
        [self.clearing, self.balance, self.shares, self.price_index, self.share_change]
            .into_iter()
            .fold(0.0, f64::max)
    }
}

pub fn validate_equilibrium(world: &WorldData, shock: &HatShock, sol: &HatSolution) -> ResidualReport {
    let n = world.n();
    let s = world.sigma;
    let rel = |a: f64, b: f64| ((a - b) / b).abs();
    let tau = |o: usize, d: usize| world.tariff[(o, d)] * shock.tau_hat[(o, d)];
    let x = |d: usize| world.expenditure[d] * sol.x_hat[d];
    let y = |o: usize| world.labor_income[o] * sol.w_hat[o];
    let share = |o: usize, d: usize| world.pi[(o, d)] * sol.pi_hat[(o, d)];
    let mut r = ResidualReport {
        clearing: 0.0,
        balance: 0.0,
        shares: 0.0,
        price_index: 0.0,
        share_change: 0.0,
    };
    for d in 0..n {
        let p = (0..n)
            .map(|o| world.pi[(o, d)] * (sol.w_hat[o] * shock.d_hat[(o, d)]).powf(1.0 - s))
            .sum::<f64>()
            .powf(1.0 / (1.0 - s));
        r.price_index = r.price_index.max(rel(sol.p_hat[d], p));
        for o in 0..n {
            let implied = (sol.w_hat[o] * shock.d_hat[(o, d)] / sol.p_hat[d]).powf(1.0 - s);
            r.share_change = r.share_change.max(rel(sol.pi_hat[(o, d)], implied));
        }
        r.shares = r.shares.max(((0..n).map(|o| share(o, d)).sum::<f64>() - 1.0).abs());
        let spent: f64 = (0..n).map(|o| x(d) * share(o, d) / tau(o, d)).sum();
        r.balance = r.balance.max(rel(spent, y(d)));
    }
    for o in 0..n {
        let sales: f64 = (0..n).map(|d| x(d) * share(o, d) / tau(o, d)).sum();
        r.clearing = r.clearing.max(rel(sales, y(o)));
    }
    let nan_to_inf = |v: f64| if v.is_nan() { f64::INFINITY } else { v };
    ResidualReport {
        clearing: nan_to_inf(r.clearing),
        balance: nan_to_inf(r.balance),
        shares: nan_to_inf(r.shares),
        price_index: nan_to_inf(r.price_index),
        share_change: nan_to_inf(r.share_change),
    }
}
