//! Synthetic worlds with known ground truth.
//!
//! Each dyad draws a latent alignment target per year. Events are emitted so
//! that their mean Goldstein score equals ten times the target, and the
//! dynamic score S is computed from those events with the same depreciating
//! recursion the pipeline uses. With a constant event count the recursion
//! settles to S_t = (1−δ)S_{t−1} + δ·target_t, so S is an exact linear
//! process and the local-projection estimand has a closed form.
//!
//! Trade is either a log-linear gravity model with a distributed-lag
//! response Σ b_k S_{t−k}, or the flows of an Armington equilibrium solved
//! in levels each year with costs built from geopolitical, tariff and
//! unobserved factors.

mod level;

use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::BufWriter;
use std::path::Path;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::country::{CountryCode, Dyad};
use crate::error::{Error, Result};
use crate::events::{write_events, CameoQuad, EconomicType, EventRecord};
use crate::table::KeyedTable;

pub use level::{level_solve, LevelEquilibrium, LevelPrimitives};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TradeMode {
    Gravity,
    Armington,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WorldConfig {
    pub n_countries: usize,
    /// First year with trade.
    pub first_year: i32,
    /// Years with trade.
    pub years: usize,
    /// Event-only years before `first_year`, letting the score recursion settle.
    pub burn_in: usize,
    /// Depreciation of event mass in the score recursion.
    pub delta: f64,
    pub events_per_year: f64,
    /// Poisson event counts instead of a constant count.
    pub poisson_counts: bool,
    /// AR(1) coefficient of the latent target around its dyad mean.
    pub score_ar: f64,
    pub innovation_sd: f64,
    /// Dispersion of dyad mean alignment.
    pub mean_sd: f64,
    /// Common AR(1) component shared by every dyad's target.
    pub common_score_sd: f64,
    /// Trend in every target per year after burn-in.
    pub drift: f64,
    /// Response of log trade to a score innovation at horizons 0, 1, …
    pub beta: Vec<f64>,
    pub mode: TradeMode,
    pub distance_decay: f64,
    pub fe_sd: f64,
    pub noise_sd: f64,
    /// AR(1) coefficient of idiosyncratic trade noise.
    pub noise_ar: f64,
    /// Common AR(1) component of trade noise.
    pub common_noise_sd: f64,
    /// AR(1) coefficient of both common components.
    pub common_ar: f64,
    /// Mean ad valorem tariff.
    pub tariff_mean: f64,
    /// Per-year random-walk step of tariffs.
    pub tariff_volatility: f64,
    /// Trade elasticity σ − 1 applied to ln(1 + τ) in the gravity model.
    pub trade_elasticity: f64,
    /// Per-dyad-year probability that a sanction episode starts.
    pub sanction_rate: f64,
    pub sanction_length: usize,
    /// Log-trade effect of an active sanction.
    pub sanction_effect: f64,
    /// Per-dyad-year probability of a militarized incident.
    pub conflict_rate: f64,
    /// Drop in the target in an incident year.
    pub conflict_shift: f64,
    /// Target response to last year's exogenous trade shifter.
    pub reverse_feedback: f64,
    /// Target response to this year's trade noise.
    pub endogeneity: f64,
    /// Dispersion of the exogenous trade shifter published as `predicted_trade`.
    pub instrument_sd: f64,
    /// Per-year random-walk step of log unobserved costs (Armington mode).
    pub unobserved_volatility: f64,
    pub sigma: f64,
    pub seed: u64,
}

impl Default for WorldConfig {
    fn default() -> Self {
        WorldConfig {
            n_countries: 10,
            first_year: 1970,
            years: 50,
            burn_in: 30,
            delta: 0.3,
            events_per_year: 20.0,
            poisson_counts: false,
            score_ar: 0.0,
            innovation_sd: 0.15,
            mean_sd: 0.2,
            common_score_sd: 0.0,
            drift: 0.0,
            beta: hump_path(0.28, 5, 21),
            mode: TradeMode::Gravity,
            distance_decay: 1.0,
            fe_sd: 1.0,
            noise_sd: 0.1,
            noise_ar: 0.0,
            common_noise_sd: 0.0,
            common_ar: 0.0,
            tariff_mean: 0.05,
            tariff_volatility: 0.005,
            trade_elasticity: 3.0,
            sanction_rate: 0.002,
            sanction_length: 5,
            sanction_effect: -0.4,
            conflict_rate: 0.0,
            conflict_shift: 0.3,
            reverse_feedback: 0.0,
            endogeneity: 0.0,
            instrument_sd: 0.2,
            unobserved_volatility: 0.0,
            sigma: 4.0,
            seed: 0,
        }
    }
}

impl WorldConfig {
    pub fn validate(&self) -> Result<()> {
        let nonneg = [
            ("innovation_sd", self.innovation_sd),
            ("mean_sd", self.mean_sd),
            ("common_score_sd", self.common_score_sd),
            ("fe_sd", self.fe_sd),
            ("noise_sd", self.noise_sd),
            ("common_noise_sd", self.common_noise_sd),
            ("tariff_mean", self.tariff_mean),
            ("tariff_volatility", self.tariff_volatility),
            ("instrument_sd", self.instrument_sd),
            ("unobserved_volatility", self.unobserved_volatility),
            ("distance_decay", self.distance_decay),
            ("trade_elasticity", self.trade_elasticity),
        ];
        for (name, v) in nonneg {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::validation(format!("{name} = {v} must be finite and nonnegative")));
            }
        }
        for (name, v) in [("sanction_rate", self.sanction_rate), ("conflict_rate", self.conflict_rate)] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::validation(format!("{name} = {v} is not a probability")));
            }
        }
        for (name, v) in [("score_ar", self.score_ar), ("noise_ar", self.noise_ar), ("common_ar", self.common_ar)] {
            if !(v.abs() < 1.0) {
                return Err(Error::validation(format!("{name} = {v} must lie in (−1, 1)")));
            }
        }
        if self.n_countries < 2 {
            return Err(Error::validation("a world needs at least two countries"));
        }
        if self.years < 2 {
            return Err(Error::validation("a world needs at least two trade years"));
        }
        if self.burn_in + 1 < self.beta.len() {
            return Err(Error::validation(format!(
                "burn-in of {} years cannot seed a response path of {} horizons",
                self.burn_in,
                self.beta.len()
            )));
        }
        if !(self.delta > 0.0 && self.delta <= 1.0) {
            return Err(Error::validation(format!("delta = {} outside (0, 1]", self.delta)));
        }
        if !(self.events_per_year >= 1.0) {
            return Err(Error::validation("need at least one event per dyad-year on average"));
        }
        if !(self.sigma > 1.0) {
            return Err(Error::validation("sigma must exceed 1"));
        }
        if self.beta.is_empty() || self.beta.iter().any(|b| !b.is_finite()) {
            return Err(Error::validation("response path must be non-empty and finite"));
        }
        Ok(())
    }

    /// Whether the configuration makes `GroundTruth::beta` the exact
    /// local-projection estimand (up to fixed-effect estimation error).
    pub fn beta_is_exact(&self) -> bool {
        !self.poisson_counts
            && self.conflict_rate == 0.0
            && self.reverse_feedback == 0.0
            && self.endogeneity == 0.0
            && self.common_score_sd == 0.0
            && self.drift == 0.0
            && self.mode == TradeMode::Gravity
    }
}

/// β_h = peak · x · e^{1−x} with x = (h+1)/(peak_h+1), maximal at `peak_h`.
pub fn hump_path(peak: f64, peak_h: usize, len: usize) -> Vec<f64> {
    (0..len)
        .map(|h| {
            let x = (h as f64 + 1.0) / (peak_h as f64 + 1.0);
            peak * x * (1.0 - x).exp()
        })
        .collect()
}

/// Response of S to a unit innovation in S when the target is AR(1) with
/// coefficient `ar` and S_t = (1−δ)S_{t−1} + δ·target_t.
pub fn score_response(delta: f64, ar: f64, len: usize) -> Vec<f64> {
    let rho = 1.0 - delta;
    (0..len)
        .map(|j| (0..=j).map(|i| rho.powi(i as i32) * ar.powi((j - i) as i32)).sum())
        .collect()
}

/// Ground truth for one generated world.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GroundTruth {
    pub config: WorldConfig,
    pub countries: Vec<CountryCode>,
    /// Local-projection estimand of log trade on S, horizons 0..H.
    pub beta: Vec<f64>,
    pub beta_exact: bool,
    /// Distributed-lag weights b with log trade ∋ Σ b_k S_{t−k}.
    pub distributed_lag: Vec<f64>,
    /// Response of S to its own innovation.
    pub score_response: Vec<f64>,
    /// Response of log trade to a permanent unit score change.
    pub permanent: Vec<f64>,
    pub first_score_year: i32,
    /// Dynamic score per dyad from `first_score_year`.
    pub scores: BTreeMap<String, Vec<f64>>,
    /// Armington mode: cost factors relative to `first_year`.
    pub cost_factors: Vec<CostFactors>,
    /// Armington mode: equilibrium changes relative to `first_year`.
    pub hats: Vec<YearHats>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CostFactors {
    pub origin: CountryCode,
    pub dest: CountryCode,
    pub year: i32,
    pub geo_factor: f64,
    pub tariff_factor: f64,
    pub unobserved_factor: f64,
    pub total: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct YearHats {
    pub year: i32,
    pub w_hat: Vec<f64>,
    pub p_hat: Vec<f64>,
    pub welfare: Vec<f64>,
    pub trade_index: f64,
}

/// A generated world: inputs in the pipeline's formats plus the truth.
#[derive(Debug, Clone)]
pub struct SynthWorld {
    pub events: Vec<EventRecord>,
    pub trade: KeyedTable,
    /// Ad valorem rates.
    pub tariffs: KeyedTable,
    pub sanctions: KeyedTable,
    pub log_distance: KeyedTable,
    pub contiguity: KeyedTable,
    pub predicted_trade: KeyedTable,
    pub truth: GroundTruth,
}

/// USA and CHN, the other major economies, then the remaining codes in
/// table order; the first `n` of these.
pub fn country_codes(n: usize) -> Vec<CountryCode> {
    let anchors = [CountryCode::new("USA").expect("valid"), CountryCode::new("CHN").expect("valid")];
    let majors = CountryCode::majors();
    let rest_majors = majors.iter().copied().filter(|c| !anchors.contains(c));
    let others = CountryCode::all().filter(|c| !majors.contains(c));
    anchors.into_iter().chain(rest_majors).chain(others).take(n).collect()
}

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    rng.sample(StandardNormal)
}

/// b with β = b ∗ ψ (ψ_0 = 1).
fn deconvolve(beta: &[f64], psi: &[f64]) -> Vec<f64> {
    let mut b: Vec<f64> = Vec::with_capacity(beta.len());
    for h in 0..beta.len() {
        let known: f64 = (0..h).map(|k| b[k] * psi[h - k]).sum();
        b.push((beta[h] - known) / psi[0]);
    }
    b
}

struct DyadPath {
    events: Vec<EventRecord>,
    /// Dynamic score per simulated year (NaN before the first event).
    score: Vec<f64>,
}

/// Events and dynamic scores for one dyad. `shift[t]` is added to the
/// target; `incident[t]` marks militarized incidents.
#[allow(clippy::too_many_arguments)]
fn dyad_path(
    cfg: &WorldConfig,
    rng: &mut ChaCha8Rng,
    a: CountryCode,
    b: CountryCode,
    start_year: i32,
    target: &[f64],
    incident: &[bool],
) -> DyadPath {
    let poisson = Poisson::new(cfg.events_per_year).expect("positive mean");
    let mut events = Vec::new();
    let mut score = vec![f64::NAN; target.len()];
    let (mut mass, mut s) = (0.0f64, f64::NAN);
    for t in 0..target.len() {
        let count = if cfg.poisson_counts {
            poisson.sample(rng) as usize
        } else {
            cfg.events_per_year.round() as usize
        };
        let count = if incident[t] { count.max(1) } else { count };
        let mut gold: Vec<(u8, f64)> = Vec::with_capacity(count);
        if count > 0 {
            let fixed = usize::from(incident[t]);
            if fixed == 1 {
                gold.push((19, -10.0));
            }
            let free = count - fixed;
            if free > 0 {
                let c = ((count as f64 * 10.0 * target[t] + 10.0 * fixed as f64) / free as f64).clamp(-10.0, 10.0);
                let raw: Vec<f64> = (0..free).map(|_| 2.0 * normal(rng)).collect();
                let m = raw.iter().sum::<f64>() / free as f64;
                let spread: Vec<f64> = raw.iter().map(|r| r - m + c).collect();
                let vals = if spread.iter().all(|g| (-10.0..=10.0).contains(g)) { spread } else { vec![c; free] };
                for g in vals {
                    let root = if g >= 3.0 {
                        rng.random_range(6..=9)
                    } else if g >= 0.0 {
                        rng.random_range(1..=5)
                    } else {
                        rng.random_range(10..=14)
                    };
                    gold.push((root, g));
                }
            }
        }
        let year = start_year + t as i32;
        for &(root, g) in &gold {
            let (origin, partner) = if rng.random_bool(0.5) { (a, b) } else { (b, a) };
            events.push(EventRecord {
                origin,
                partner,
                year,
                cameo_root: root,
                cameo_quad: CameoQuad::for_root(root).expect("root in 1..=20"),
                goldstein: g,
                economic: EconomicType::NotEconomic,
                description: None,
            });
        }
        mass *= 1.0 - cfg.delta;
        if !gold.is_empty() {
            let raw = gold.iter().map(|(_, g)| g).sum::<f64>() / (10.0 * gold.len() as f64);
            mass += gold.len() as f64;
            let phi = gold.len() as f64 / mass;
            s = if s.is_nan() { raw } else { (1.0 - phi) * s + phi * raw };
        }
        score[t] = s;
    }
    DyadPath { events, score }
}

fn ar1_path(rng: &mut ChaCha8Rng, len: usize, ar: f64, sd: f64) -> Vec<f64> {
    let mut out = Vec::with_capacity(len);
    let mut x = if sd > 0.0 { sd / (1.0 - ar * ar).sqrt() * normal(rng) } else { 0.0 };
    for _ in 0..len {
        out.push(x);
        x = ar * x + sd * normal(rng);
    }
    out
}

/// Draws a world. Deterministic in `cfg` (including its seed).
pub fn generate_world(cfg: &WorldConfig) -> Result<SynthWorld> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let n = cfg.n_countries;
    let countries = country_codes(n);
    let total = cfg.burn_in + cfg.years;
    let start_year = cfg.first_year - cfg.burn_in as i32;
    let year_of = |t: usize| start_year + t as i32;

    // Geography.
    let coords: Vec<(f64, f64)> = (0..n).map(|_| (rng.random::<f64>(), rng.random::<f64>())).collect();
    let dist_km = DMatrix::from_fn(n, n, |o, d| {
        let (dx, dy) = (coords[o].0 - coords[d].0, coords[o].1 - coords[d].1);
        500.0 + 9500.0 * (dx * dx + dy * dy).sqrt()
    });
    let mut log_distance = KeyedTable::new();
    let mut contiguity = KeyedTable::new();
    for o in 0..n {
        for d in 0..n {
            if o != d {
                log_distance.insert(countries[o], countries[d], None, dist_km[(o, d)].ln())?;
                contiguity.insert(countries[o], countries[d], None, f64::from(dist_km[(o, d)] < 2000.0))?;
            }
        }
    }

    // Common components and directed-pair shocks.
    let common_score = ar1_path(&mut rng, total, cfg.common_ar, cfg.common_score_sd);
    let common_noise = ar1_path(&mut rng, total, cfg.common_ar, cfg.common_noise_sd);
    let mut noise = BTreeMap::new();
    let mut shifter = BTreeMap::new();
    for o in 0..n {
        for d in 0..n {
            if o != d {
                let idio = ar1_path(&mut rng, total, cfg.noise_ar, cfg.noise_sd * (1.0 - cfg.noise_ar.powi(2)).sqrt());
                let u: Vec<f64> = idio.iter().zip(&common_noise).map(|(a, c)| a + c).collect();
                noise.insert((o, d), u);
                shifter.insert((o, d), (0..total).map(|_| cfg.instrument_sd * normal(&mut rng)).collect::<Vec<f64>>());
            }
        }
    }

    // Scores per dyad.
    let psi = score_response(cfg.delta, cfg.score_ar, cfg.beta.len());
    let b = deconvolve(&cfg.beta, &psi);
    let permanent: Vec<f64> = b.iter().scan(0.0, |acc, x| {
        *acc += x;
        Some(*acc)
    }).collect();
    let mut events = Vec::new();
    let mut scores: BTreeMap<(usize, usize), Vec<f64>> = BTreeMap::new();
    let mut sanction_on: BTreeMap<(usize, usize), Vec<bool>> = BTreeMap::new();
    for i in 0..n {
        for j in i + 1..n {
            let mean = cfg.mean_sd * normal(&mut rng);
            let latent = ar1_path(&mut rng, total, cfg.score_ar, cfg.innovation_sd * (1.0 - cfg.score_ar.powi(2)).sqrt());
            let incident: Vec<bool> = (0..total).map(|_| rng.random_bool(cfg.conflict_rate)).collect();
            let target: Vec<f64> = (0..total)
                .map(|t| {
                    let mut x = mean + latent[t] + common_score[t];
                    x += cfg.drift * t.saturating_sub(cfg.burn_in) as f64;
                    if t > 0 {
                        x += cfg.reverse_feedback * 0.5 * (shifter[&(i, j)][t - 1] + shifter[&(j, i)][t - 1]);
                    }
                    x += cfg.endogeneity * 0.5 * (noise[&(i, j)][t] + noise[&(j, i)][t]);
                    if incident[t] {
                        x -= cfg.conflict_shift;
                    }
                    x.clamp(-0.85, 0.85)
                })
                .collect();
            let path = dyad_path(cfg, &mut rng, countries[i], countries[j], start_year, &target, &incident);
            events.extend(path.events);
            scores.insert((i, j), path.score);
            let mut on = vec![false; total];
            let mut t = 0;
            while t < total {
                if rng.random_bool(cfg.sanction_rate) {
                    for k in t..(t + cfg.sanction_length).min(total) {
                        on[k] = true;
                    }
                    t += cfg.sanction_length;
                } else {
                    t += 1;
                }
            }
            sanction_on.insert((i, j), on);
        }
    }
    let pair = |o: usize, d: usize| if o < d { (o, d) } else { (d, o) };

    // Tariffs: directed random walks around the mean.
    let mut tariff_path = BTreeMap::new();
    for o in 0..n {
        for d in 0..n {
            if o != d {
                let mut x = cfg.tariff_mean * (1.0 + 0.5 * normal(&mut rng)).max(0.0);
                let path: Vec<f64> = (0..total)
                    .map(|_| {
                        let v = x;
                        x = (x + cfg.tariff_volatility * normal(&mut rng)).clamp(0.0, 1.0);
                        v
                    })
                    .collect();
                tariff_path.insert((o, d), path);
            }
        }
    }

    let mut trade = KeyedTable::new();
    let mut tariffs = KeyedTable::new();
    let mut sanctions = KeyedTable::new();
    let mut predicted_trade = KeyedTable::new();
    for t in cfg.burn_in..total {
        for o in 0..n {
            for d in 0..n {
                if o != d {
                    let (co, cd, y) = (countries[o], countries[d], year_of(t));
                    tariffs.insert(co, cd, Some(y), tariff_path[&(o, d)][t])?;
                    sanctions.insert(co, cd, Some(y), f64::from(sanction_on[&pair(o, d)][t]))?;
                    predicted_trade.insert(co, cd, Some(y), shifter[&(o, d)][t])?;
                }
            }
        }
    }

    let lagged = |s: &[f64], t: usize, k: usize| -> f64 {
        let v = s[t.saturating_sub(k)];
        if v.is_nan() { 0.0 } else { v }
    };
    let mut cost_factors = Vec::new();
    let mut hats = Vec::new();
    match cfg.mode {
        TradeMode::Gravity => {
            let origin_year: Vec<f64> = (0..n * total).map(|_| cfg.fe_sd * normal(&mut rng)).collect();
            let dest_year: Vec<f64> = (0..n * total).map(|_| cfg.fe_sd * normal(&mut rng)).collect();
            let pair_fe = DMatrix::from_fn(n, n, |_, _| cfg.fe_sd * normal(&mut rng));
            for t in cfg.burn_in..total {
                for o in 0..n {
                    for d in 0..n {
                        if o == d {
                            continue;
                        }
                        let s = &scores[&pair(o, d)];
                        let response: f64 = b.iter().enumerate().map(|(k, bk)| bk * lagged(s, t, k)).sum();
                        let log_x = 10.0 + origin_year[o * total + t] + dest_year[d * total + t] + pair_fe[(o, d)]
                            - cfg.distance_decay * dist_km[(o, d)].ln()
                            + response
                            - cfg.trade_elasticity * tariff_path[&(o, d)][t].ln_1p()
                            + cfg.sanction_effect * f64::from(sanction_on[&pair(o, d)][t])
                            + shifter[&(o, d)][t]
                            + noise[&(o, d)][t];
                        trade.insert(countries[o], countries[d], Some(year_of(t)), log_x.exp())?;
                    }
                }
            }
        }
        TradeMode::Armington => {
            let productivity: Vec<f64> = (0..n).map(|_| (0.3 * normal(&mut rng)).exp()).collect();
            let labor: Vec<f64> = (0..n).map(|_| (0.5 * normal(&mut rng)).exp()).collect();
            let world_income: f64 = labor.iter().sum();
            let base_cost = DMatrix::from_fn(n, n, |o, d| if o == d { 1.0 } else { (dist_km[(o, d)] / 500.0).powf(0.25 * cfg.distance_decay) * 1.2 });
            let mut log_eps = DMatrix::<f64>::zeros(n, n);
            let t0 = cfg.burn_in;
            let hold = |h: usize| permanent[h.min(permanent.len() - 1)];
            let mut base: Option<(LevelEquilibrium, DMatrix<f64>)> = None;
            for t in t0..total {
                if t > t0 {
                    for i in 0..n {
                        for j in i + 1..n {
                            let step = cfg.unobserved_volatility * normal(&mut rng);
                            log_eps[(i, j)] += step;
                            log_eps[(j, i)] += step;
                        }
                    }
                }
                let mut cost = base_cost.clone();
                let gross = DMatrix::from_fn(n, n, |o, d| if o == d { 1.0 } else { 1.0 + tariff_path[&(o, d)][t] });
                for o in 0..n {
                    for d in 0..n {
                        if o == d {
                            continue;
                        }
                        let s = &scores[&pair(o, d)];
                        let geo: f64 = (1..=t - t0)
                            .map(|k| hold(t - t0 - k) * (lagged(s, t0 + k, 0) - lagged(s, t0 + k - 1, 0)))
                            .sum::<f64>()
                            / (1.0 - cfg.sigma);
                        let sanction = -cfg.sanction_effect / (cfg.sigma - 1.0) * f64::from(sanction_on[&pair(o, d)][t]);
                        let sanction0 = -cfg.sanction_effect / (cfg.sigma - 1.0) * f64::from(sanction_on[&pair(o, d)][t0]);
                        let geo_factor = geo.exp();
                        let tariff_factor = gross[(o, d)] / (1.0 + tariff_path[&(o, d)][t0]);
                        let unobserved_factor = (log_eps[(o, d)] + sanction - sanction0).exp();
                        cost[(o, d)] *= geo_factor * gross[(o, d)] * (log_eps[(o, d)] + sanction).exp();
                        cost_factors.push(CostFactors {
                            origin: countries[o],
                            dest: countries[d],
                            year: year_of(t),
                            geo_factor,
                            tariff_factor,
                            unobserved_factor,
                            total: geo_factor * tariff_factor * unobserved_factor,
                        });
                    }
                }
                let eq = level_solve(&LevelPrimitives {
                    productivity: productivity.clone(),
                    labor: labor.clone(),
                    cost,
                    tariff: gross.clone(),
                    sigma: cfg.sigma,
                    world_income,
                })?;
                let values = eq.values();
                for o in 0..n {
                    for d in 0..n {
                        trade.insert(countries[o], countries[d], Some(year_of(t)), values[(o, d)])?;
                    }
                }
                let flows = |e: &LevelEquilibrium, g: &DMatrix<f64>| -> f64 {
                    (0..n)
                        .flat_map(|o| (0..n).map(move |d| (o, d)))
                        .filter(|(o, d)| o != d)
                        .map(|(o, d)| e.expenditure[d] * e.shares[(o, d)] / g[(o, d)])
                        .sum()
                };
                let (b_eq, b_gross) = base.get_or_insert_with(|| (eq.clone(), gross.clone()));
                let w_hat: Vec<f64> = (0..n).map(|i| eq.wage[i] / b_eq.wage[i]).collect();
                let p_hat: Vec<f64> = (0..n).map(|i| eq.price_index[i] / b_eq.price_index[i]).collect();
                hats.push(YearHats {
                    year: year_of(t),
                    welfare: w_hat.iter().zip(&p_hat).map(|(w, p)| w / p).collect(),
                    w_hat,
                    p_hat,
                    trade_index: flows(&eq, &gross) / flows(b_eq, b_gross),
                });
            }
        }
    }

    let truth = GroundTruth {
        config: cfg.clone(),
        countries: countries.clone(),
        beta: cfg.beta.clone(),
        beta_exact: cfg.beta_is_exact(),
        distributed_lag: b,
        score_response: psi,
        permanent,
        first_score_year: start_year,
        scores: scores
            .iter()
            .map(|(&(i, j), s)| (Dyad::new(countries[i], countries[j]).expect("distinct").to_string(), s.clone()))
            .collect(),
        cost_factors,
        hats,
    };
    Ok(SynthWorld {
        events,
        trade,
        tariffs,
        sanctions,
        log_distance,
        contiguity,
        predicted_trade,
        truth,
    })
}

impl SynthWorld {
    /// Writes every table as CSV plus `ground_truth.json` into `dir`.
    pub fn write_dir(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        let open = |name: &str| -> Result<BufWriter<File>> { Ok(BufWriter::new(File::create(dir.join(name))?)) };
        write_events(&self.events, open("events.csv")?)?;
        self.trade.write_csv(open("trade.csv")?)?;
        self.tariffs.write_csv(open("tariffs.csv")?)?;
        self.sanctions.write_csv(open("sanctions.csv")?)?;
        self.log_distance.write_csv(open("log_distance.csv")?)?;
        self.contiguity.write_csv(open("contiguity.csv")?)?;
        self.predicted_trade.write_csv(open("predicted_trade.csv")?)?;
        serde_json::to_writer_pretty(open("ground_truth.json")?, &self.truth)?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::events::{score_events, DEFAULT_DELTA};

    fn small() -> WorldConfig {
        WorldConfig {
            n_countries: 4,
            years: 12,
            burn_in: 21,
            ..Default::default()
        }
    }

    #[test]
    fn hump_peaks_at_configured_value() {
        let h = hump_path(0.28, 5, 21);
        let (arg, max) = h.iter().enumerate().fold((0, 0.0), |m, (i, &v)| if v > m.1 { (i, v) } else { m });
        assert_eq!(arg, 5);
        assert!((max - 0.28).abs() < 1e-15);
    }

    #[test]
    fn response_is_geometric_without_latent_persistence() {
        let psi = score_response(0.3, 0.0, 4);
        for (j, p) in psi.iter().enumerate() {
            assert!((p - 0.7f64.powi(j as i32)).abs() < 1e-15);
        }
        let b = deconvolve(&[0.1, 0.2, 0.2], &psi[..3]);
        // b ∗ ψ reproduces β
        let back: Vec<f64> = (0..3).map(|h| (0..=h).map(|k| b[k] * psi[h - k]).sum()).collect();
        for (x, y) in back.iter().zip([0.1, 0.2, 0.2]) {
            assert!((x - y).abs() < 1e-15);
        }
    }

    #[test]
    fn pipeline_scores_match_generator() {
        let w = generate_world(&small()).unwrap();
        let series = score_events(&w.events, DEFAULT_DELTA, None).unwrap();
        assert_eq!(series.len(), 6);
        for s in &series {
            let truth = &w.truth.scores[&s.dyad.to_string()];
            for (t, v) in truth.iter().enumerate() {
                let got = s.dynamic_at(w.truth.first_score_year + t as i32).unwrap();
                assert!((got - v).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn zero_innovation_gives_constant_scores() {
        let cfg = WorldConfig { innovation_sd: 0.0, ..small() };
        let w = generate_world(&cfg).unwrap();
        for s in w.truth.scores.values() {
            assert!(s.iter().all(|v| (v - s[0]).abs() < 1e-12));
        }
    }

    #[test]
    fn deterministic_under_seed() {
        let a = generate_world(&small()).unwrap();
        let b = generate_world(&small()).unwrap();
        assert_eq!(a.events, b.events);
        assert_eq!(a.trade, b.trade);
        let c = generate_world(&WorldConfig { seed: 1, ..small() }).unwrap();
        assert_ne!(a.trade, c.trade);
    }

    #[test]
    fn armington_factors_multiply_to_total() {
        let cfg = WorldConfig {
            mode: TradeMode::Armington,
            unobserved_volatility: 0.02,
            ..small()
        };
        let w = generate_world(&cfg).unwrap();
        assert_eq!(w.truth.hats.len(), 12);
        assert_eq!(w.truth.hats[0].trade_index, 1.0);
        for f in &w.truth.cost_factors {
            assert_eq!(f.total, f.geo_factor * f.tariff_factor * f.unobserved_factor);
        }
        // domestic flows present
        let c = w.truth.countries[0];
        assert!(w.trade.get(c, c, cfg.first_year).unwrap() > 0.0);
    }

    #[test]
    fn infeasible_configs_rejected() {
        assert!(generate_world(&WorldConfig { burn_in: 3, ..small() }).is_err());
        assert!(generate_world(&WorldConfig { n_countries: 1, ..small() }).is_err());
        assert!(generate_world(&WorldConfig { score_ar: 1.0, ..small() }).is_err());
    }
}
