use std::collections::BTreeSet;
use std::ops::RangeInclusive;
use std::str::FromStr;

use super::{CameoQuad, EconomicType, EventRecord};
use crate::error::{Error, Result};
use crate::table::KeyedTable;

/// Conjunction of optional field constraints. An empty filter keeps everything.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct FieldFilter {
    pub quads: Option<Vec<CameoQuad>>,
    pub roots: Option<RangeInclusive<u8>>,
    pub economic: Option<Vec<EconomicType>>,
    pub goldstein: Option<RangeInclusive<f64>>,
    pub years: Option<RangeInclusive<i32>>,
}

impl FieldFilter {
    pub fn matches(&self, e: &EventRecord) -> bool {
        self.quads.as_ref().is_none_or(|q| q.contains(&e.cameo_quad))
            && self.roots.as_ref().is_none_or(|r| r.contains(&e.cameo_root))
            && self.economic.as_ref().is_none_or(|t| t.contains(&e.economic))
            && self.goldstein.as_ref().is_none_or(|g| g.contains(&e.goldstein))
            && self.years.as_ref().is_none_or(|y| y.contains(&e.year))
    }
}

fn parse_range<T: FromStr + Copy>(s: &str) -> Option<RangeInclusive<T>> {
    // `a..b` or `a:b`; a single value is a one-point range. `-` cannot be the
    // separator because bounds may be negative.
    let (lo, hi) = s.split_once("..").or_else(|| s.split_once(':')).unwrap_or((s, s));
    Some(lo.trim().parse().ok()?..=hi.trim().parse().ok()?)
}

impl FromStr for FieldFilter {
    type Err = Error;

    /// `key=value` clauses separated by `;`. Keys: `quad` and `economic`
    /// (comma lists), `root`, `goldstein`, `year` (ranges `lo..hi`).
    fn from_str(s: &str) -> Result<Self> {
        let mut f = FieldFilter::default();
        for clause in s.split(';').map(str::trim).filter(|c| !c.is_empty()) {
            let (key, value) = clause
                .split_once('=')
                .ok_or_else(|| Error::validation(format!("filter clause `{clause}` is not key=value")))?;
            let bad = || Error::validation(format!("bad value in filter clause `{clause}`"));
            match key.trim() {
                "quad" => f.quads = Some(value.split(',').map(str::parse).collect::<Result<_>>()?),
                "economic" => f.economic = Some(value.split(',').map(str::parse).collect::<Result<_>>()?),
                "root" => f.roots = Some(parse_range(value).ok_or_else(bad)?),
                "goldstein" => f.goldstein = Some(parse_range(value).ok_or_else(bad)?),
                "year" => f.years = Some(parse_range(value).ok_or_else(bad)?),
                other => return Err(Error::validation(format!("unknown filter field `{other}`"))),
            }
        }
        Ok(f)
    }
}

/// Named event subsets used to build alternative score series and
/// instrument indicators.
#[derive(Debug, Clone, PartialEq)]
pub enum EventFilter {
    /// Drops every economically typed event.
    NonEconomic,
    /// Material conflict (roots 15–20) without economic content.
    MaterialConflictNonEcon,
    EconomicOnly,
    Custom(FieldFilter),
}

impl EventFilter {
    pub fn matches(&self, e: &EventRecord) -> bool {
        match self {
            EventFilter::NonEconomic => !e.economic.is_economic(),
            EventFilter::MaterialConflictNonEcon => {
                (15..=20).contains(&e.cameo_root) && !e.economic.is_economic()
            }
            EventFilter::EconomicOnly => e.economic.is_economic(),
            EventFilter::Custom(f) => f.matches(e),
        }
    }
}

impl FromStr for EventFilter {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "non_economic" => Ok(EventFilter::NonEconomic),
            "material_conflict_nonecon" => Ok(EventFilter::MaterialConflictNonEcon),
            "economic_only" => Ok(EventFilter::EconomicOnly),
            other => match other.strip_prefix("custom:") {
                Some(spec) => Ok(EventFilter::Custom(spec.parse()?)),
                None => Err(Error::validation(format!("unknown event filter `{other}`"))),
            },
        }
    }
}

pub fn filter_events(events: &[EventRecord], filter: &EventFilter) -> Vec<EventRecord> {
    events.iter().filter(|e| filter.matches(e)).cloned().collect()
}

/// Default conflict indicators: militarized conflict (force posture, assault,
/// fighting, mass violence), coercive measures, and reduced relations.
pub const CONFLICT_INDICATORS: [(&str, &[u8]); 3] = [
    ("militarized", &[15, 18, 19, 20]),
    ("coercive", &[17]),
    ("dispute", &[16]),
];

/// 0/1 dyad-year indicators of non-economic events whose CAMEO root falls in
/// each named root set. Every dyad with at least one event gets a row for
/// every year spanned by the event set, in both directions, so the tables
/// join onto a directed panel.
pub fn indicator_table(events: &[EventRecord], indicators: &[(&str, &[u8])]) -> Vec<(String, KeyedTable)> {
    let dyads: BTreeSet<_> = events.iter().map(EventRecord::dyad).collect();
    let (Some(y0), Some(y1)) = (events.iter().map(|e| e.year).min(), events.iter().map(|e| e.year).max()) else {
        return indicators.iter().map(|(n, _)| (n.to_string(), KeyedTable::new())).collect();
    };
    indicators
        .iter()
        .map(|(name, roots)| {
            let hits: BTreeSet<_> = events
                .iter()
                .filter(|e| !e.economic.is_economic() && roots.contains(&e.cameo_root))
                .map(|e| (e.dyad(), e.year))
                .collect();
            let table = dyads
                .iter()
                .flat_map(|d| (y0..=y1).map(move |y| (*d, y)))
                .flat_map(|(d, y)| {
                    let v = if hits.contains(&(d, y)) { 1.0 } else { 0.0 };
                    [((d.a(), d.b(), Some(y)), v), ((d.b(), d.a(), Some(y)), v)]
                })
                .collect();
            (name.to_string(), table)
        })
        .collect()
}
