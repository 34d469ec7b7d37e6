use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::ScoreSeries;
use crate::country::Dyad;
use crate::error::{Error, Result};
use crate::stats::quantile;
use crate::table::KeyedTable;

/// Nonnegative weights per unordered dyad and year.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct DyadWeights {
    map: BTreeMap<(Dyad, i32), f64>,
}

impl DyadWeights {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds `w` to the weight of `dyad` in `year`.
    pub fn add(&mut self, dyad: Dyad, year: i32, w: f64) -> Result<()> {
        if !(w.is_finite() && w >= 0.0) {
            return Err(Error::validation(format!("weight {w} for {dyad} in {year} is not a nonnegative number")));
        }
        *self.map.entry((dyad, year)).or_default() += w;
        Ok(())
    }

    /// Bilateral trade in both directions, summed. Domestic and static rows
    /// are ignored.
    pub fn from_trade(trade: &KeyedTable) -> Result<Self> {
        let mut out = DyadWeights::new();
        for (&(o, d, year), &v) in trade.iter() {
            if let (Some(year), true) = (year, o != d) {
                out.add(Dyad::new(o, d)?, year, v)?;
            }
        }
        Ok(out)
    }

    pub fn get(&self, dyad: Dyad, year: i32) -> Option<f64> {
        self.map.get(&(dyad, year)).copied()
    }

    pub fn has_year(&self, year: i32) -> bool {
        self.map.keys().any(|&(_, y)| y == year)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WeightedScore {
    pub year: i32,
    pub mean: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    /// Dyads with a score and positive weight in the year.
    pub n_dyads: usize,
}

fn weighted_mean(pairs: impl Iterator<Item = (f64, f64)>) -> f64 {
    let (mut num, mut den) = (0.0, 0.0);
    for (s, w) in pairs {
        num += w * s;
        den += w;
    }
    num / den
}

/// Trade-weighted mean of dynamic scores in `year` with a 95% percentile
/// interval from `draws` resamples of dyads (with replacement).
pub fn trade_weighted_score(
    series: &[ScoreSeries],
    weights: &DyadWeights,
    year: i32,
    draws: usize,
    seed: u64,
) -> Result<WeightedScore> {
    if !series.iter().any(|s| s.dynamic_at(year).is_some()) {
        return Err(Error::validation(format!("no score series covers {year}")));
    }
    let pairs: Vec<(f64, f64)> = series
        .iter()
        .filter_map(|s| Some((s.dynamic_at(year)?, weights.get(s.dyad, year)?)))
        .filter(|&(_, w)| w > 0.0)
        .collect();
    if pairs.is_empty() {
        return Err(Error::validation(format!("all trade weights are zero or missing in {year}")));
    }
    let mean = weighted_mean(pairs.iter().copied());
    let (ci_low, ci_high) = if draws == 0 || pairs.len() == 1 {
        (mean, mean)
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = pairs.len();
        let stats: Vec<f64> = (0..draws)
            .map(|_| weighted_mean((0..n).map(|_| pairs[rng.random_range(0..n)])))
            .collect();
        (quantile(&stats, 0.025), quantile(&stats, 0.975))
    };
    Ok(WeightedScore {
        year,
        mean,
        ci_low,
        ci_high,
        n_dyads: pairs.len(),
    })
}

/// ΔS_t = Σ w_{t−1}(S_t − S_{t−1}) / Σ w_{t−1}: year-over-year change in the
/// trade-weighted score holding weights at their t−1 values, so shifts in
/// trade composition do not register. Returned for every year whose lagged
/// weights and both scores exist.
pub fn weighted_change(series: &[ScoreSeries], weights: &DyadWeights) -> Result<Vec<(i32, f64)>> {
    let (Some(y0), Some(y1)) = (
        series.iter().map(|s| s.first_year).min(),
        series.iter().map(|s| s.last_year()).max(),
    ) else {
        return Err(Error::validation("no score series"));
    };
    if y1 <= y0 {
        return Err(Error::validation("weighted change needs at least two years of scores"));
    }
    let mut out = Vec::new();
    for t in y0 + 1..=y1 {
        if !weights.has_year(t - 1) {
            return Err(Error::validation(format!("missing lagged weights for {} (needed for {t})", t - 1)));
        }
        let pairs: Vec<(f64, f64)> = series
            .iter()
            .filter_map(|s| {
                let w = weights.get(s.dyad, t - 1)?;
                Some((s.dynamic_at(t)? - s.dynamic_at(t - 1)?, w))
            })
            .collect();
        let den: f64 = pairs.iter().map(|p| p.1).sum();
        if den > 0.0 {
            out.push((t, weighted_mean(pairs.into_iter())));
        }
    }
    Ok(out)
}
