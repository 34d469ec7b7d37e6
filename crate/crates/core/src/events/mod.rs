//! Bilateral political event records and the alignment scores built from them.
//!
//! Records arrive already classified (CAMEO root code and quad class, Goldstein
//! intensity, economic type). This module validates them, folds both
//! directions of a pair into one unordered dyad, and turns each dyad's stream
//! into an annual average score and an event-weighted dynamic score with
//! depreciating event mass. Trade-weighted aggregates of those scores live in
//! [`aggregate`].

mod aggregate;
mod filter;
mod parse;
mod score;

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::country::{CountryCode, Dyad};
use crate::error::{Error, Result};

pub use aggregate::{trade_weighted_score, weighted_change, DyadWeights, WeightedScore};
pub use filter::{filter_events, indicator_table, EventFilter, FieldFilter, CONFLICT_INDICATORS};
pub use parse::{parse_events, write_events, EventFormat};
pub use score::{
    annual_average, dynamic_scores, read_scores, score_events, write_scores, ScoreSeries,
    DEFAULT_DELTA,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum CameoQuad {
    VerbalCooperation,
    MaterialCooperation,
    VerbalConflict,
    MaterialConflict,
}

impl CameoQuad {
    /// Quad class implied by a CAMEO root code (01–20).
    pub fn for_root(root: u8) -> Option<CameoQuad> {
        match root {
            1..=5 => Some(CameoQuad::VerbalCooperation),
            6..=9 => Some(CameoQuad::MaterialCooperation),
            10..=14 => Some(CameoQuad::VerbalConflict),
            15..=20 => Some(CameoQuad::MaterialConflict),
            _ => None,
        }
    }
}

fn normalize_label(s: &str) -> String {
    s.chars()
        .filter(char::is_ascii_alphanumeric)
        .map(|c| c.to_ascii_lowercase())
        .collect()
}

impl FromStr for CameoQuad {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match normalize_label(s).as_str() {
            "verbalcooperation" | "verbalcoop" => Ok(CameoQuad::VerbalCooperation),
            "materialcooperation" | "materialcoop" => Ok(CameoQuad::MaterialCooperation),
            "verbalconflict" => Ok(CameoQuad::VerbalConflict),
            "materialconflict" => Ok(CameoQuad::MaterialConflict),
            _ => Err(Error::validation(format!("unknown CAMEO quad class `{s}`"))),
        }
    }
}

impl fmt::Display for CameoQuad {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum EconomicType {
    NotEconomic,
    Trade,
    Sanctions,
    AssetSeizure,
    /// Catch-all for economic categories outside the named ones.
    OtherEconomic,
}

impl EconomicType {
    pub fn is_economic(self) -> bool {
        self != EconomicType::NotEconomic
    }
}

impl FromStr for EconomicType {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match normalize_label(s).as_str() {
            "noteconomic" | "notecon" | "none" => Ok(EconomicType::NotEconomic),
            "trade" => Ok(EconomicType::Trade),
            "sanctions" | "sanction" => Ok(EconomicType::Sanctions),
            "assetseizure" => Ok(EconomicType::AssetSeizure),
            "othereconomic" | "other" => Ok(EconomicType::OtherEconomic),
            _ => Err(Error::validation(format!("unknown economic type `{s}`"))),
        }
    }
}

impl fmt::Display for EconomicType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

/// One classified bilateral political event.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventRecord {
    pub origin: CountryCode,
    pub partner: CountryCode,
    pub year: i32,
    pub cameo_root: u8,
    pub cameo_quad: CameoQuad,
    pub goldstein: f64,
    pub economic: EconomicType,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub description: Option<String>,
}

impl EventRecord {
    /// Checks the record invariants, naming the offending field.
    pub fn validate(&self) -> std::result::Result<(), (&'static str, String)> {
        if self.origin == self.partner {
            return Err(("partner", format!("self-dyad {}-{}", self.origin, self.partner)));
        }
        let Some(quad) = CameoQuad::for_root(self.cameo_root) else {
            return Err(("cameo_root", format!("CAMEO root {} outside 1..=20", self.cameo_root)));
        };
        if quad != self.cameo_quad {
            return Err((
                "cameo_quad",
                format!("{} does not match root {:02} ({quad})", self.cameo_quad, self.cameo_root),
            ));
        }
        if !self.goldstein.is_finite() || !(-10.0..=10.0).contains(&self.goldstein) {
            return Err(("goldstein", format!("Goldstein score {} outside [-10, 10]", self.goldstein)));
        }
        Ok(())
    }

    pub fn dyad(&self) -> Dyad {
        Dyad::new(self.origin, self.partner).expect("validated record")
    }
}

/// A possible duplicate: same dyad, year and description seen more than once.
#[derive(Debug, Clone, PartialEq)]
pub struct DuplicateWarning {
    pub dyad: Dyad,
    pub year: i32,
    pub description: String,
    pub count: usize,
}

/// Flags repeated (dyad, year, description) triples. Repeats are legitimate
/// in source data, so this only warns.
pub fn duplicate_warnings(events: &[EventRecord]) -> Vec<DuplicateWarning> {
    let mut seen: HashMap<(Dyad, i32, &str), usize> = HashMap::new();
    for e in events {
        if let Some(d) = e.description.as_deref().filter(|d| !d.trim().is_empty()) {
            *seen.entry((e.dyad(), e.year, d)).or_default() += 1;
        }
    }
    let mut out: Vec<DuplicateWarning> = seen
        .into_iter()
        .filter(|(_, n)| *n > 1)
        .map(|((dyad, year, d), count)| DuplicateWarning {
            dyad,
            year,
            description: d.to_owned(),
            count,
        })
        .collect();
    out.sort_by(|a, b| (a.dyad, a.year, &a.description).cmp(&(b.dyad, b.year, &b.description)));
    out
}

/// Groups events by unordered dyad; both directions land in the same bucket.
pub fn group_by_dyad(events: &[EventRecord]) -> BTreeMap<Dyad, Vec<&EventRecord>> {
    let mut out: BTreeMap<Dyad, Vec<&EventRecord>> = BTreeMap::new();
    for e in events {
        out.entry(e.dyad()).or_default().push(e);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quad_partition_matches_roots() {
        assert_eq!(CameoQuad::for_root(1), Some(CameoQuad::VerbalCooperation));
        assert_eq!(CameoQuad::for_root(5), Some(CameoQuad::VerbalCooperation));
        assert_eq!(CameoQuad::for_root(6), Some(CameoQuad::MaterialCooperation));
        assert_eq!(CameoQuad::for_root(9), Some(CameoQuad::MaterialCooperation));
        assert_eq!(CameoQuad::for_root(10), Some(CameoQuad::VerbalConflict));
        assert_eq!(CameoQuad::for_root(14), Some(CameoQuad::VerbalConflict));
        assert_eq!(CameoQuad::for_root(15), Some(CameoQuad::MaterialConflict));
        assert_eq!(CameoQuad::for_root(20), Some(CameoQuad::MaterialConflict));
        assert_eq!(CameoQuad::for_root(0), None);
        assert_eq!(CameoQuad::for_root(21), None);
    }

    #[test]
    fn labels_parse_loosely() {
        assert_eq!("Material Coop.".parse::<CameoQuad>().unwrap(), CameoQuad::MaterialCooperation);
        assert_eq!("Not econ.".parse::<EconomicType>().unwrap(), EconomicType::NotEconomic);
        assert_eq!("Asset seizure".parse::<EconomicType>().unwrap(), EconomicType::AssetSeizure);
        assert!("Barter".parse::<EconomicType>().is_err());
    }

    #[test]
    fn duplicates_are_reported_not_rejected() {
        let us = CountryCode::new("USA").unwrap();
        let ru = CountryCode::new("RUS").unwrap();
        let mk = |o, p| EventRecord {
            origin: o,
            partner: p,
            year: 2024,
            cameo_root: 17,
            cameo_quad: CameoQuad::MaterialConflict,
            goldstein: -5.0,
            economic: EconomicType::NotEconomic,
            description: Some("detention".into()),
        };
        let w = duplicate_warnings(&[mk(us, ru), mk(ru, us)]);
        assert_eq!(w.len(), 1);
        assert_eq!(w[0].count, 2);
    }
}
