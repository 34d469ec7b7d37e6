//! Trade-cost decomposition and the four-scenario counterfactual suite.
//!
//! Observed bilateral cost changes relative to a base year t0 are split into
//! a geopolitical factor exp(ΔGeo), a tariff factor τ̂̃ and an unobserved
//! residual ε̂ recovered from trade shares by the Head–Ries ratio. Each
//! scenario keeps a subset of the factors and is solved with exact hat
//! algebra from the t0 equilibrium.

use std::collections::BTreeMap;
use std::fmt;
use std::io::Write;
use std::str::FromStr;

use log::warn;
use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::country::{CountryCode, Dyad};
use crate::equilibrium::{aggregate_trade, solve_hats, HatShock, SolverOptions, WorldData};
use crate::error::{Error, Result};
use crate::events::ScoreSeries;
use crate::stats;
use crate::table::{fmt_real, KeyedTable};

/// ΔGeo for years t0, t0+1, … from a score path starting at S_{t0}:
/// (1−σ)ΔGeo_t = Σ_{s=1}^{t−t0} P_{t−t0−s}(S_{t0+s} − S_{t0+s−1}), where P
/// is the response of trade to a permanent score change and horizons past
/// its end take its last value.
pub fn geo_cost_change(scores: &[f64], permanent: &[f64], sigma: f64) -> Result<Vec<f64>> {
    if permanent.is_empty() || permanent.iter().any(|p| !p.is_finite()) {
        return Err(Error::validation("permanent response must be non-empty and finite"));
    }
    if !(sigma > 1.0) {
        return Err(Error::validation(format!("sigma = {sigma} must exceed 1")));
    }
    if scores.iter().any(|s| !s.is_finite()) {
        return Err(Error::validation("score path has missing values"));
    }
    let p = |h: usize| permanent[h.min(permanent.len() - 1)];
    Ok((0..scores.len())
        .map(|k| (1..=k).map(|s| p(k - s) * (scores[s] - scores[s - 1])).sum::<f64>() / (1.0 - sigma))
        .collect())
}

/// ΔGeo per dyad for `t0..=t1`. Dyads without a score in every year are
/// omitted and reported.
pub fn geo_changes_by_dyad(
    series: &[ScoreSeries],
    permanent: &[f64],
    sigma: f64,
    (t0, t1): (i32, i32),
) -> Result<(BTreeMap<Dyad, Vec<f64>>, Vec<Dyad>)> {
    let mut out = BTreeMap::new();
    let mut dropped = Vec::new();
    for s in series {
        let path: Option<Vec<f64>> = (t0..=t1).map(|y| s.dynamic_at(y).filter(|v| v.is_finite())).collect();
        match path {
            Some(p) => {
                out.insert(s.dyad, geo_cost_change(&p, permanent, sigma)?);
            }
            None => dropped.push(s.dyad),
        }
    }
    Ok((out, dropped))
}

/// Unobserved cost change ε̂ per pair, symmetric by construction.
#[derive(Debug, Clone, PartialEq)]
pub struct HeadRies {
    pub epsilon: DMatrix<f64>,
    /// Pairs (o < d) with a zero bilateral share, given ε̂ = 1.
    pub flagged: Vec<(usize, usize)>,
}

/// ε̂_od = [π̂_od π̂_do/(π̂_oo π̂_dd)]^{1/(2(1−σ))} · (τ̂̃_od τ̂̃_do)^{−1/2} · exp(−ΔGeo_od)
/// with π̂ = current / base shares. `geo` must be symmetric.
pub fn head_ries_unobserved(
    base: &DMatrix<f64>,
    current: &DMatrix<f64>,
    tariff_hat: &DMatrix<f64>,
    geo: &DMatrix<f64>,
    sigma: f64,
) -> Result<HeadRies> {
    let n = base.nrows();
    for m in [base, current, tariff_hat, geo] {
        if m.shape() != (n, n) {
            return Err(Error::validation("Head–Ries inputs must be N×N"));
        }
    }
    if !(sigma > 1.0) {
        return Err(Error::validation(format!("sigma = {sigma} must exceed 1")));
    }
    for i in 0..n {
        if !(base[(i, i)] > 0.0 && current[(i, i)] > 0.0) {
            return Err(Error::validation(format!("country {i} has a zero or missing domestic share")));
        }
    }
    if tariff_hat.iter().any(|t| !(*t > 0.0 && t.is_finite())) {
        return Err(Error::validation("tariff changes must be positive"));
    }
    let mut epsilon = DMatrix::from_element(n, n, 1.0);
    let mut flagged = Vec::new();
    let log_hat = |o: usize, d: usize| (current[(o, d)] / base[(o, d)]).ln();
    for o in 0..n {
        for d in o + 1..n {
            let shares = [base[(o, d)], base[(d, o)], current[(o, d)], current[(d, o)]];
            if shares.iter().any(|s| !(*s > 0.0 && s.is_finite())) {
                flagged.push((o, d));
                continue;
            }
            let ratio = log_hat(o, d) + log_hat(d, o) - log_hat(o, o) - log_hat(d, d);
            let log_e = ratio / (2.0 * (1.0 - sigma)) - 0.5 * (tariff_hat[(o, d)].ln() + tariff_hat[(d, o)].ln()) - geo[(o, d)];
            epsilon[(o, d)] = log_e.exp();
            epsilon[(d, o)] = epsilon[(o, d)];
        }
    }
    Ok(HeadRies { epsilon, flagged })
}

/// Cost factors for one year relative to the base year.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CostDecomposition {
    pub year: i32,
    #[serde(skip)]
    pub geo_factor: DMatrix<f64>,
    #[serde(skip)]
    pub tariff_factor: DMatrix<f64>,
    #[serde(skip)]
    pub unobserved_factor: DMatrix<f64>,
    /// geo · tariff · unobserved, elementwise.
    #[serde(skip)]
    pub total: DMatrix<f64>,
    /// Pairs given ε̂ = 1 because a share was zero.
    pub flagged: Vec<(CountryCode, CountryCode)>,
}

impl CostDecomposition {
    pub fn new(year: i32, geo_factor: DMatrix<f64>, tariff_factor: DMatrix<f64>, unobserved_factor: DMatrix<f64>) -> Result<Self> {
        let n = geo_factor.nrows();
        for m in [&geo_factor, &tariff_factor, &unobserved_factor] {
            if m.shape() != (n, n) {
                return Err(Error::validation("cost factors must be N×N"));
            }
            if m.iter().any(|v| !(*v > 0.0 && v.is_finite())) {
                return Err(Error::validation(format!("{year}: cost factors must be positive")));
            }
        }
        let total = DMatrix::from_fn(n, n, |o, d| product(&[geo_factor[(o, d)], tariff_factor[(o, d)], unobserved_factor[(o, d)]]));
        Ok(CostDecomposition { year, geo_factor, tariff_factor, unobserved_factor, total, flagged: Vec::new() })
    }

    pub fn n(&self) -> usize {
        self.total.nrows()
    }
}

fn product(factors: &[f64]) -> f64 {
    factors.iter().product()
}

/// Decomposition of every year from t0 to the last trade year.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Decomposition {
    pub countries: Vec<CountryCode>,
    pub base_year: i32,
    pub sigma: f64,
    pub years: Vec<CostDecomposition>,
    /// Dyads without a full score path; their geo factor is 1.
    pub missing_scores: Vec<Dyad>,
    pub warnings: Vec<String>,
}

/// Observed value shares X_od / Σ_o X_od for the countries in `countries`.
pub fn value_shares(trade: &KeyedTable, countries: &[CountryCode], year: i32) -> Result<DMatrix<f64>> {
    let n = countries.len();
    let values = DMatrix::from_fn(n, n, |o, d| trade.get(countries[o], countries[d], year).unwrap_or(0.0));
    if values.iter().any(|v| !(*v >= 0.0 && v.is_finite())) {
        return Err(Error::validation(format!("{year}: trade values must be finite and nonnegative")));
    }
    let mut shares = values;
    for d in 0..n {
        let total: f64 = shares.column(d).sum();
        if !(total > 0.0) {
            return Err(Error::validation(format!("{year}: {} has no expenditure", countries[d])));
        }
        shares.column_mut(d).scale_mut(1.0 / total);
    }
    Ok(shares)
}

/// Gross-tariff changes (1+τ_t)/(1+τ_t0); missing rates count as zero.
fn tariff_hat(tariffs: Option<&KeyedTable>, countries: &[CountryCode], t0: i32, t: i32) -> DMatrix<f64> {
    let n = countries.len();
    let rate = |o: usize, d: usize, y: i32| tariffs.and_then(|tb| tb.get(countries[o], countries[d], y)).unwrap_or(0.0);
    DMatrix::from_fn(n, n, |o, d| if o == d { 1.0 } else { (1.0 + rate(o, d, t)) / (1.0 + rate(o, d, t0)) })
}

/// Decomposes observed cost changes for every year in `t0..=t1` over the
/// countries trading in t0.
pub fn decompose_costs(
    trade: &KeyedTable,
    tariffs: Option<&KeyedTable>,
    scores: &[ScoreSeries],
    permanent: &[f64],
    sigma: f64,
    (t0, t1): (i32, i32),
) -> Result<Decomposition> {
    if t1 < t0 {
        return Err(Error::validation(format!("end year {t1} precedes base year {t0}")));
    }
    let mut countries: Vec<CountryCode> = trade
        .iter()
        .filter(|((_, _, y), _)| *y == Some(t0))
        .flat_map(|((o, d, _), _)| [*o, *d])
        .collect();
    countries.sort_unstable();
    countries.dedup();
    if countries.len() < 2 {
        return Err(Error::validation(format!("fewer than two countries trade in {t0}")));
    }
    let n = countries.len();
    let (geo, _) = geo_changes_by_dyad(scores, permanent, sigma, (t0, t1))?;
    let mut warnings = Vec::new();
    let mut missing = Vec::new();
    for o in 0..n {
        for d in o + 1..n {
            let dyad = Dyad::new(countries[o], countries[d])?;
            if !geo.contains_key(&dyad) {
                missing.push(dyad);
            }
        }
    }
    if !missing.is_empty() {
        let msg = format!("{} dyads lack a full score path over {t0}–{t1}; their geopolitical factor is 1", missing.len());
        warn!("{msg}");
        warnings.push(msg);
    }
    let base = value_shares(trade, &countries, t0)?;
    let mut years = Vec::new();
    for (k, t) in (t0..=t1).enumerate() {
        let current = value_shares(trade, &countries, t)?;
        let log_geo = DMatrix::from_fn(n, n, |o, d| {
            if o == d {
                return 0.0;
            }
            Dyad::new(countries[o], countries[d]).ok().and_then(|dy| geo.get(&dy)).map_or(0.0, |g| g[k])
        });
        let tau = tariff_hat(tariffs, &countries, t0, t);
        let hr = head_ries_unobserved(&base, &current, &tau, &log_geo, sigma)?;
        let mut dec = CostDecomposition::new(t, log_geo.map(f64::exp), tau, hr.epsilon)?;
        dec.flagged = hr.flagged.iter().map(|&(o, d)| (countries[o], countries[d])).collect();
        if !dec.flagged.is_empty() {
            let msg = format!("{t}: {} pairs with zero trade given unobserved factor 1", dec.flagged.len());
            warn!("{msg}");
            warnings.push(msg);
        }
        years.push(dec);
    }
    Ok(Decomposition { countries, base_year: t0, sigma, years, missing_scores: missing, warnings })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scenario {
    Baseline,
    NoGeo,
    NoTariff,
    OnlyUnobserved,
}

impl Scenario {
    pub const ALL: [Scenario; 4] = [Scenario::Baseline, Scenario::NoGeo, Scenario::NoTariff, Scenario::OnlyUnobserved];

    fn keeps_geo(self) -> bool {
        matches!(self, Scenario::Baseline | Scenario::NoTariff)
    }

    fn keeps_tariff(self) -> bool {
        matches!(self, Scenario::Baseline | Scenario::NoGeo)
    }
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Scenario::Baseline => "baseline",
            Scenario::NoGeo => "no_geo",
            Scenario::NoTariff => "no_tariff",
            Scenario::OnlyUnobserved => "only_unobserved",
        })
    }
}

impl FromStr for Scenario {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Scenario::ALL
            .into_iter()
            .find(|sc| sc.to_string() == s.trim())
            .ok_or_else(|| Error::validation(format!("unknown scenario `{s}`")))
    }
}

/// Cost and tariff changes fed to the solver under `scenario`. A dropped
/// tariff factor leaves both prices and revenue at base-year tariffs.
pub fn scenario_costs(dec: &CostDecomposition, scenario: Scenario) -> Result<HatShock> {
    let n = dec.n();
    let d_hat = match scenario {
        Scenario::Baseline => dec.total.clone(),
        _ => DMatrix::from_fn(n, n, |o, d| {
            let mut f = Vec::with_capacity(3);
            if scenario.keeps_geo() {
                f.push(dec.geo_factor[(o, d)]);
            }
            if scenario.keeps_tariff() {
                f.push(dec.tariff_factor[(o, d)]);
            }
            f.push(dec.unobserved_factor[(o, d)]);
            product(&f)
        }),
    };
    let tau_hat = if scenario.keeps_tariff() { dec.tariff_factor.clone() } else { DMatrix::from_element(n, n, 1.0) };
    let mut d_hat = d_hat;
    for i in 0..n {
        d_hat[(i, i)] = 1.0;
    }
    HatShock::new(d_hat, tau_hat)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScenarioResult {
    pub scenario: Scenario,
    pub countries: Vec<CountryCode>,
    pub years: Vec<i32>,
    /// Net-of-tariff international trade relative to t0.
    pub trade_index: Vec<f64>,
    /// ω̂ per year, per country.
    pub welfare: Vec<Vec<f64>>,
    pub iterations: Vec<usize>,
    pub residuals: Vec<f64>,
}

/// How growth differences are spread over the years since t0.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Annualization {
    /// 100·(I_b^{1/n} − I_c^{1/n}).
    Geometric,
    /// 100·(I_b − I_c)/n.
    Arithmetic,
}

/// Contribution of one factor in one year, in percentage points of trade
/// growth since t0.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Contribution {
    pub component: String,
    pub counterfactual: Scenario,
    pub year: i32,
    pub baseline_growth_pct: f64,
    pub counterfactual_growth_pct: f64,
    /// 100·(I_Baseline − I_counterfactual).
    pub contribution_pp: f64,
    /// NaN in the base year.
    pub annualized_pp: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CounterfactualSuite {
    pub base_year: i32,
    pub scenarios: Vec<ScenarioResult>,
    pub contributions: Vec<Contribution>,
}

impl CounterfactualSuite {
    pub fn scenario(&self, s: Scenario) -> Option<&ScenarioResult> {
        self.scenarios.iter().find(|r| r.scenario == s)
    }
}

/// Solves every requested scenario in every decomposed year from the t0
/// world. Contributions are reported for each counterfactual paired with
/// the baseline when both were requested.
pub fn run_counterfactuals(
    world: &WorldData,
    decomposition: &Decomposition,
    scenarios: &[Scenario],
    opts: &SolverOptions,
    annualization: Annualization,
) -> Result<CounterfactualSuite> {
    if world.countries != decomposition.countries {
        return Err(Error::validation("world and decomposition cover different countries"));
    }
    if scenarios.is_empty() {
        return Err(Error::validation("no scenarios requested"));
    }
    let jobs: Vec<(Scenario, &CostDecomposition)> =
        scenarios.iter().flat_map(|&s| decomposition.years.iter().map(move |d| (s, d))).collect();
    let solved: Vec<Result<(f64, Vec<f64>, usize, f64)>> = jobs
        .par_iter()
        .map(|&(s, dec)| {
            let shock = scenario_costs(dec, s)?;
            let sol = solve_hats(world, &shock, opts).map_err(|e| match e {
                Error::NonConvergence { context, iterations, residual } => Error::NonConvergence {
                    context: format!("{context} ({s}, {})", dec.year),
                    iterations,
                    residual,
                },
                other => other,
            })?;
            Ok((aggregate_trade(world, &sol), sol.welfare, sol.iterations, sol.residual))
        })
        .collect();
    let mut results: BTreeMap<Scenario, ScenarioResult> = BTreeMap::new();
    for (&(s, dec), r) in jobs.iter().zip(solved) {
        let (index, welfare, iterations, residual) = r?;
        let entry = results.entry(s).or_insert_with(|| ScenarioResult {
            scenario: s,
            countries: world.countries.clone(),
            years: Vec::new(),
            trade_index: Vec::new(),
            welfare: Vec::new(),
            iterations: Vec::new(),
            residuals: Vec::new(),
        });
        entry.years.push(dec.year);
        entry.trade_index.push(index);
        entry.welfare.push(welfare);
        entry.iterations.push(iterations);
        entry.residuals.push(residual);
    }
    let scenarios: Vec<ScenarioResult> = scenarios.iter().filter_map(|s| results.remove(s)).collect();
    let mut contributions = Vec::new();
    if let Some(base) = scenarios.iter().find(|r| r.scenario == Scenario::Baseline) {
        for (cf, component) in [(Scenario::NoGeo, "geopolitics"), (Scenario::NoTariff, "tariffs"), (Scenario::OnlyUnobserved, "combined")] {
            let Some(other) = scenarios.iter().find(|r| r.scenario == cf) else { continue };
            for (i, &year) in base.years.iter().enumerate() {
                let (ib, ic) = (base.trade_index[i], other.trade_index[i]);
                let span = (year - decomposition.base_year) as f64;
                let annualized_pp = if span > 0.0 {
                    match annualization {
                        Annualization::Geometric => 100.0 * (ib.powf(1.0 / span) - ic.powf(1.0 / span)),
                        Annualization::Arithmetic => 100.0 * (ib - ic) / span,
                    }
                } else {
                    f64::NAN
                };
                contributions.push(Contribution {
                    component: component.into(),
                    counterfactual: cf,
                    year,
                    baseline_growth_pct: 100.0 * (ib - 1.0),
                    counterfactual_growth_pct: 100.0 * (ic - 1.0),
                    contribution_pp: 100.0 * (ib - ic),
                    annualized_pp,
                });
            }
        }
    }
    Ok(CounterfactualSuite { base_year: decomposition.base_year, scenarios, contributions })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WelfareSummary {
    pub n: usize,
    pub mean: f64,
    pub median: f64,
    pub std_dev: f64,
    /// Adjusted Fisher–Pearson.
    pub skewness: f64,
    pub gainers: usize,
    pub gainer_share: f64,
    pub losers: usize,
    pub loser_share: f64,
    pub min: f64,
    pub max: f64,
}

pub fn welfare_summary(ratios: &[f64]) -> Result<WelfareSummary> {
    if ratios.is_empty() || ratios.iter().any(|r| !(*r > 0.0 && r.is_finite())) {
        return Err(Error::validation("welfare ratios must be positive and non-empty"));
    }
    let n = ratios.len();
    let gainers = ratios.iter().filter(|r| **r > 1.0).count();
    let losers = ratios.iter().filter(|r| **r < 1.0).count();
    Ok(WelfareSummary {
        n,
        mean: stats::mean(ratios),
        median: stats::quantile(ratios, 0.5),
        std_dev: stats::std_dev(ratios),
        skewness: stats::skewness(ratios),
        gainers,
        gainer_share: gainers as f64 / n as f64,
        losers,
        loser_share: losers as f64 / n as f64,
        min: ratios.iter().copied().fold(f64::INFINITY, f64::min),
        max: ratios.iter().copied().fold(f64::NEG_INFINITY, f64::max),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WelfareComparison {
    pub counterfactual: Scenario,
    pub year: i32,
    /// Baseline ω̂ over counterfactual ω̂.
    pub ratios: Vec<(CountryCode, f64)>,
    pub summary: WelfareSummary,
}

/// Per-country Baseline/counterfactual welfare ratios in `year`.
pub fn welfare_distribution(baseline: &ScenarioResult, counterfactual: &ScenarioResult, year: i32) -> Result<WelfareComparison> {
    if baseline.countries != counterfactual.countries {
        return Err(Error::validation("scenarios cover different countries"));
    }
    let at = |r: &ScenarioResult| {
        r.years
            .iter()
            .position(|&y| y == year)
            .map(|i| r.welfare[i].clone())
            .ok_or_else(|| Error::validation(format!("scenario {} was not solved for {year}", r.scenario)))
    };
    let (b, c) = (at(baseline)?, at(counterfactual)?);
    let values: Vec<f64> = b.iter().zip(&c).map(|(x, y)| x / y).collect();
    Ok(WelfareComparison {
        counterfactual: counterfactual.scenario,
        year,
        summary: welfare_summary(&values)?,
        ratios: baseline.countries.iter().copied().zip(values).collect(),
    })
}

/// `origin,dest,year,geo_factor,tariff_factor,unobserved_factor,total` for
/// every off-diagonal pair.
pub fn write_decomposition_csv<W: Write>(dec: &Decomposition, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["origin", "dest", "year", "geo_factor", "tariff_factor", "unobserved_factor", "total"])?;
    for y in &dec.years {
        for (o, &co) in dec.countries.iter().enumerate() {
            for (d, &cd) in dec.countries.iter().enumerate() {
                if o != d {
                    w.write_record([
                        co.to_string(),
                        cd.to_string(),
                        y.year.to_string(),
                        fmt_real(y.geo_factor[(o, d)]),
                        fmt_real(y.tariff_factor[(o, d)]),
                        fmt_real(y.unobserved_factor[(o, d)]),
                        fmt_real(y.total[(o, d)]),
                    ])?;
                }
            }
        }
    }
    w.flush()?;
    Ok(())
}

/// `scenario,year,trade_index`.
pub fn write_scenarios_csv<W: Write>(suite: &CounterfactualSuite, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["scenario", "year", "trade_index"])?;
    for s in &suite.scenarios {
        for (y, v) in s.years.iter().zip(&s.trade_index) {
            w.write_record([s.scenario.to_string(), y.to_string(), fmt_real(*v)])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// `scenario,country,year,welfare_ratio` with ω̂ relative to t0.
pub fn write_welfare_csv<W: Write>(suite: &CounterfactualSuite, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["scenario", "country", "year", "welfare_ratio"])?;
    for s in &suite.scenarios {
        for (i, y) in s.years.iter().enumerate() {
            for (c, v) in s.countries.iter().zip(&s.welfare[i]) {
                w.write_record([s.scenario.to_string(), c.to_string(), y.to_string(), fmt_real(*v)])?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

/// `component,counterfactual,year,baseline_growth_pct,counterfactual_growth_pct,contribution_pp,annualized_pp`.
pub fn write_contributions_csv<W: Write>(suite: &CounterfactualSuite, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record([
        "component",
        "counterfactual",
        "year",
        "baseline_growth_pct",
        "counterfactual_growth_pct",
        "contribution_pp",
        "annualized_pp",
    ])?;
    for c in &suite.contributions {
        w.write_record([
            c.component.clone(),
            c.counterfactual.to_string(),
            c.year.to_string(),
            fmt_real(c.baseline_growth_pct),
            fmt_real(c.counterfactual_growth_pct),
            fmt_real(c.contribution_pp),
            fmt_real(c.annualized_pp),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// `counterfactual,year,statistic,value`.
pub fn write_welfare_summary_csv<W: Write>(comparisons: &[WelfareComparison], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["counterfactual", "year", "statistic", "value"])?;
    for c in comparisons {
        let s = &c.summary;
        let rows = [
            ("mean", s.mean),
            ("median", s.median),
            ("std_dev", s.std_dev),
            ("skewness", s.skewness),
            ("gainers", s.gainers as f64),
            ("gainer_share", s.gainer_share),
            ("losers", s.losers as f64),
            ("loser_share", s.loser_share),
            ("min", s.min),
            ("max", s.max),
        ];
        for (name, v) in rows {
            w.write_record([c.counterfactual.to_string(), c.year.to_string(), name.to_string(), fmt_real(v)])?;
        }
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::equilibrium::tests::random_world;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn constant_scores_no_geo_change() {
        let g = geo_cost_change(&[0.3; 6], &[0.1, 0.4, 0.78], 4.0).unwrap();
        assert!(g.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn permanent_step_reaches_long_run() {
        let p = [0.1, 0.3, 0.5, 0.78];
        let g = geo_cost_change(&[0.0, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0], &p, 4.0).unwrap();
        assert_eq!(g[0], 0.0);
        assert!((g[1] - 0.1 / -3.0).abs() < 1e-15);
        assert!((g[6] + 0.26).abs() < 1e-15);
    }

    #[test]
    fn geo_change_is_linear() {
        let s = [0.1, 0.3, -0.2, 0.0, 0.4];
        let s2: Vec<f64> = s.iter().map(|x| 2.0 * x).collect();
        let p = [0.2, 0.5, 0.6];
        let (a, b) = (geo_cost_change(&s, &p, 4.0).unwrap(), geo_cost_change(&s2, &p, 4.0).unwrap());
        for (x, y) in a.iter().zip(&b) {
            assert!((2.0 * x - y).abs() < 1e-15);
        }
    }

    #[test]
    fn no_change_gives_unit_epsilon() {
        let w = random_world(4, 1);
        let one = DMatrix::from_element(4, 4, 1.0);
        let hr = head_ries_unobserved(&w.pi, &w.pi, &one, &DMatrix::zeros(4, 4), 4.0).unwrap();
        assert!(hr.epsilon.iter().all(|e| *e == 1.0));
    }

    #[test]
    fn zero_share_flagged_and_domestic_required() {
        let mut pi = random_world(3, 2).pi;
        let one = DMatrix::from_element(3, 3, 1.0);
        let mut cur = pi.clone();
        cur[(0, 1)] = 0.0;
        let hr = head_ries_unobserved(&pi, &cur, &one, &DMatrix::zeros(3, 3), 4.0).unwrap();
        assert_eq!(hr.flagged, vec![(0, 1)]);
        assert_eq!(hr.epsilon[(0, 1)], 1.0);
        pi[(2, 2)] = 0.0;
        assert!(head_ries_unobserved(&pi, &cur, &one, &DMatrix::zeros(3, 3), 4.0).is_err());
    }

    fn symmetric(n: usize, rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> DMatrix<f64> {
        let mut m = DMatrix::from_element(n, n, 1.0);
        for o in 0..n {
            for d in o + 1..n {
                m[(o, d)] = rng.random_range(lo..hi);
                m[(d, o)] = m[(o, d)];
            }
        }
        m
    }

    #[test]
    fn head_ries_inverts_equilibrium_flows() {
        for seed in 0..5 {
            let n = 5;
            let world = random_world(n, seed);
            let mut rng = ChaCha8Rng::seed_from_u64(seed + 50);
            let eps = symmetric(n, &mut rng, 0.8, 1.25);
            let log_geo = symmetric(n, &mut rng, -0.1, 0.1).map(|v| if v == 1.0 { 0.0 } else { v });
            let tau = DMatrix::from_fn(n, n, |o, d| if o == d { 1.0 } else { rng.random_range(0.95..1.05) });
            let dec = CostDecomposition::new(2000, log_geo.map(f64::exp), tau.clone(), eps.clone()).unwrap();
            let sol = solve_hats(&world, &scenario_costs(&dec, Scenario::Baseline).unwrap(), &SolverOptions::default()).unwrap();
            let current = world.pi.component_mul(&sol.pi_hat);
            let hr = head_ries_unobserved(&world.pi, &current, &tau, &log_geo, world.sigma).unwrap();
            for (a, b) in hr.epsilon.iter().zip(eps.iter()) {
                assert!((a - b).abs() < 1e-6);
            }
        }
    }

    fn dec_with(n: usize, seed: u64) -> CostDecomposition {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let geo = symmetric(n, &mut rng, 0.9, 1.1);
        let tau = DMatrix::from_fn(n, n, |o, d| if o == d { 1.0 } else { rng.random_range(0.9..1.1) });
        let eps = symmetric(n, &mut rng, 0.9, 1.1);
        CostDecomposition::new(2001, geo, tau, eps).unwrap()
    }

    #[test]
    fn scenario_factor_identities() {
        let dec = dec_with(4, 3);
        let base = scenario_costs(&dec, Scenario::Baseline).unwrap();
        let no_geo = scenario_costs(&dec, Scenario::NoGeo).unwrap();
        let only = scenario_costs(&dec, Scenario::OnlyUnobserved).unwrap();
        for o in 0..4 {
            for d in 0..4 {
                if o != d {
                    let rebuilt = no_geo.d_hat[(o, d)] * dec.geo_factor[(o, d)];
                    assert!((rebuilt - base.d_hat[(o, d)]).abs() <= 4.0 * f64::EPSILON * rebuilt);
                    assert_eq!(only.d_hat[(o, d)], dec.unobserved_factor[(o, d)]);
                }
            }
        }
        assert_eq!(base.tau_hat, dec.tariff_factor);
        assert!(scenario_costs(&dec, Scenario::NoTariff).unwrap().tau_hat.iter().all(|t| *t == 1.0));

        let one = DMatrix::from_element(4, 4, 1.0);
        let flat = CostDecomposition::new(2001, one.clone(), dec.tariff_factor.clone(), dec.unobserved_factor.clone()).unwrap();
        assert_eq!(scenario_costs(&flat, Scenario::NoGeo).unwrap(), scenario_costs(&flat, Scenario::Baseline).unwrap());
        let unit = CostDecomposition::new(2001, one.clone(), one.clone(), one.clone()).unwrap();
        assert_eq!(scenario_costs(&unit, Scenario::OnlyUnobserved).unwrap(), HatShock::identity(4));
    }

    fn suite_for(decs: Vec<CostDecomposition>, world: &WorldData) -> CounterfactualSuite {
        let d = Decomposition {
            countries: world.countries.clone(),
            base_year: 2000,
            sigma: world.sigma,
            years: decs,
            missing_scores: vec![],
            warnings: vec![],
        };
        run_counterfactuals(world, &d, &Scenario::ALL, &SolverOptions::default(), Annualization::Geometric).unwrap()
    }

    #[test]
    fn no_change_keeps_every_index_at_one() {
        let world = random_world(4, 4);
        let one = DMatrix::from_element(4, 4, 1.0);
        let decs = (2000..2003).map(|y| CostDecomposition::new(y, one.clone(), one.clone(), one.clone()).unwrap()).collect();
        let suite = suite_for(decs, &world);
        for s in &suite.scenarios {
            assert!(s.trade_index.iter().all(|v| (v - 1.0).abs() < 1e-9));
        }
        assert!(suite.contributions.iter().all(|c| c.contribution_pp.abs() < 1e-7));
    }

    #[test]
    fn contributions_are_scenario_differences() {
        let world = random_world(4, 5);
        let mut second = dec_with(4, 7);
        second.year = 2002;
        let suite = suite_for(vec![dec_with(4, 6), second], &world);
        let base = suite.scenario(Scenario::Baseline).unwrap();
        for c in &suite.contributions {
            let other = suite.scenario(c.counterfactual).unwrap();
            let i = base.years.iter().position(|&y| y == c.year).unwrap();
            assert_eq!(c.contribution_pp, 100.0 * (base.trade_index[i] - other.trade_index[i]));
        }
        assert_eq!(suite.contributions.len(), 6);
    }

    #[test]
    fn geo_only_deterioration_has_negative_contribution() {
        let world = random_world(4, 8);
        let one = DMatrix::from_element(4, 4, 1.0);
        let decs = (1..4)
            .map(|k| {
                let geo = DMatrix::from_fn(4, 4, |o, d| if o == d { 1.0 } else { 1.0 + 0.05 * k as f64 });
                CostDecomposition::new(2000 + k, geo, one.clone(), one.clone()).unwrap()
            })
            .collect();
        let suite = suite_for(decs, &world);
        let geo: Vec<&Contribution> = suite.contributions.iter().filter(|c| c.component == "geopolitics").collect();
        assert!(geo.iter().all(|c| c.contribution_pp < 0.0));
        let (ng, ou) = (suite.scenario(Scenario::NoGeo).unwrap(), suite.scenario(Scenario::OnlyUnobserved).unwrap());
        for (a, b) in ng.trade_index.iter().zip(&ou.trade_index) {
            assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn welfare_summary_of_hand_ratios() {
        let s = welfare_summary(&[0.9, 1.0, 1.1]).unwrap();
        assert!((s.mean - 1.0).abs() < 1e-15);
        assert_eq!(s.median, 1.0);
        assert_eq!((s.gainers, s.losers), (1, 1));
        assert_eq!((s.min, s.max), (0.9, 1.1));
    }

    #[test]
    fn identical_scenarios_give_unit_ratios() {
        let world = random_world(4, 9);
        let suite = suite_for(vec![dec_with(4, 10)], &world);
        let base = suite.scenario(Scenario::Baseline).unwrap();
        let w = welfare_distribution(base, base, 2001).unwrap();
        assert!(w.ratios.iter().all(|(_, r)| *r == 1.0));
        assert_eq!(w.summary.std_dev, 0.0);
        assert!(welfare_distribution(base, base, 1999).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn total_is_product_of_factors(seed in 0u64..10_000) {
            let dec = dec_with(5, seed);
            for i in 0..25 {
                prop_assert_eq!(dec.total[i], dec.geo_factor[i] * dec.tariff_factor[i] * dec.unobserved_factor[i]);
            }
        }

        #[test]
        fn epsilon_is_symmetric(seed in 0u64..10_000) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let w = random_world(4, seed);
            let cur = random_world(4, seed + 1).pi;
            let tau = DMatrix::from_fn(4, 4, |o, d| if o == d { 1.0 } else { rng.random_range(0.9..1.1) });
            let hr = head_ries_unobserved(&w.pi, &cur, &tau, &DMatrix::zeros(4, 4), 4.0).unwrap();
            prop_assert_eq!(hr.epsilon.clone(), hr.epsilon.transpose());
        }
    }
}
