use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::Panel;
use crate::country::{CountryCode, Dyad};
use crate::error::{Error, Result};
use crate::events::ScoreSeries;
use crate::table::KeyedTable;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SampleKind {
    MajorMajor,
    /// Exactly one side is a major economy.
    MajorNonMajor,
    All,
}

impl FromStr for SampleKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "major_major" => Ok(SampleKind::MajorMajor),
            "major_nonmajor" => Ok(SampleKind::MajorNonMajor),
            "all" => Ok(SampleKind::All),
            other => Err(Error::validation(format!("unknown sample `{other}`"))),
        }
    }
}

impl fmt::Display for SampleKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SampleKind::MajorMajor => "major_major",
            SampleKind::MajorNonMajor => "major_nonmajor",
            SampleKind::All => "all",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleSpec {
    pub kind: SampleKind,
    pub majors: Vec<CountryCode>,
}

impl SampleSpec {
    /// Uses the default 32 major economies.
    pub fn new(kind: SampleKind) -> Self {
        SampleSpec { kind, majors: CountryCode::majors() }
    }

    pub fn all() -> Self {
        SampleSpec::new(SampleKind::All)
    }

    pub fn keeps(&self, origin: CountryCode, dest: CountryCode) -> bool {
        let (a, b) = (self.majors.contains(&origin), self.majors.contains(&dest));
        match self.kind {
            SampleKind::MajorMajor => a && b,
            SampleKind::MajorNonMajor => a != b,
            SampleKind::All => true,
        }
    }
}

/// Tables joined into a panel. Trade and the primary scores are inner-joined;
/// every other table is attached where it has a value and left missing
/// otherwise, so each regression selects its own complete rows.
#[derive(Debug, Clone)]
pub struct PanelInputs<'a> {
    /// Bilateral trade values; domestic and time-invariant rows are ignored.
    pub trade: &'a KeyedTable,
    /// Dynamic scores, attached as `score` to both directions of a dyad.
    pub scores: &'a [ScoreSeries],
    /// Further score collections under their own column names.
    pub extra_scores: Vec<(&'a str, &'a [ScoreSeries])>,
    /// Ad valorem tariff rates τ; stored as `log_gross_tariff` = ln(1+τ).
    pub tariffs: Option<&'a KeyedTable>,
    /// 0/1 sanction indicators, stored as `sanction`.
    pub sanctions: Option<&'a KeyedTable>,
    /// Named controls, e.g. `log_distance`, `contiguity`, `ipd`.
    pub controls: Vec<(&'a str, &'a KeyedTable)>,
    pub sample: SampleSpec,
}

impl<'a> PanelInputs<'a> {
    pub fn new(trade: &'a KeyedTable, scores: &'a [ScoreSeries], sample: SampleSpec) -> Self {
        PanelInputs {
            trade,
            scores,
            extra_scores: Vec::new(),
            tariffs: None,
            sanctions: None,
            controls: Vec::new(),
            sample,
        }
    }
}

fn score_index<'s>(name: &str, series: &'s [ScoreSeries]) -> Result<HashMap<Dyad, &'s ScoreSeries>> {
    let mut out = HashMap::new();
    for s in series {
        if out.insert(s.dyad, s).is_some() {
            return Err(Error::validation(format!("two `{name}` series for dyad {}", s.dyad)));
        }
    }
    Ok(out)
}

fn check_binary(name: &str, t: &KeyedTable) -> Result<()> {
    match t.iter().find(|(_, v)| **v != 0.0 && **v != 1.0) {
        Some(((o, d, y), v)) => Err(Error::validation(format!(
            "`{name}` must be 0 or 1, found {v} at {o},{d},{}",
            y.map(|y| y.to_string()).unwrap_or_default()
        ))),
        None => Ok(()),
    }
}

/// Joins trade, scores and policy/control tables into a directed panel.
/// Rows with zero trade are dropped and counted in
/// [`Panel::zero_trade_dropped`]; rows without a score are dropped.
pub fn build_panel(inputs: &PanelInputs) -> Result<Panel> {
    let scores = score_index("score", inputs.scores)?;
    let extras: Vec<(&str, HashMap<Dyad, &ScoreSeries>)> = inputs
        .extra_scores
        .iter()
        .map(|(n, s)| Ok((*n, score_index(n, s)?)))
        .collect::<Result<_>>()?;
    if let Some(s) = inputs.sanctions {
        check_binary("sanction", s)?;
    }
    for (name, t) in &inputs.controls {
        if *name == "contiguity" {
            check_binary(name, t)?;
        }
    }
    if let Some(t) = inputs.tariffs {
        if let Some((k, v)) = t.iter().find(|(_, v)| **v <= -1.0) {
            return Err(Error::validation(format!("tariff rate {v} at {},{} is not above −100%", k.0, k.1)));
        }
    }

    let mut keys = Vec::new();
    let mut cols: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    let mut zero = 0usize;
    for (&(o, d, year), &value) in inputs.trade.iter() {
        let Some(year) = year else { continue };
        if o == d || !inputs.sample.keeps(o, d) {
            continue;
        }
        let dyad = Dyad::new(o, d)?;
        let Some(score) = scores.get(&dyad).and_then(|s| s.dynamic_at(year)) else {
            continue;
        };
        if !(value > 0.0) {
            zero += 1;
            continue;
        }
        keys.push((o, d, year));
        let mut push = |name: &str, v: f64| cols.entry(name.to_owned()).or_default().push(v);
        push("trade", value);
        push("log_trade", value.ln());
        push("score", score);
        for (name, idx) in &extras {
            push(name, idx.get(&dyad).and_then(|s| s.dynamic_at(year)).unwrap_or(f64::NAN));
        }
        if let Some(t) = inputs.tariffs {
            push("log_gross_tariff", t.get(o, d, year).map_or(f64::NAN, f64::ln_1p));
        }
        if let Some(t) = inputs.sanctions {
            push("sanction", t.get(o, d, year).unwrap_or(f64::NAN));
        }
        for (name, t) in &inputs.controls {
            push(name, t.get(o, d, year).unwrap_or(f64::NAN));
        }
    }
    if keys.is_empty() {
        return Err(Error::validation("trade and score inputs share no observations"));
    }
    let mut panel = Panel::from_rows(keys, cols)?;
    panel.zero_trade_dropped = zero;
    Ok(panel)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(s: &str) -> CountryCode {
        CountryCode::new(s).unwrap()
    }

    fn flat_scores(codes: &[CountryCode], years: std::ops::RangeInclusive<i32>) -> Vec<ScoreSeries> {
        let mut out = Vec::new();
        for (i, &a) in codes.iter().enumerate() {
            for &b in &codes[i + 1..] {
                let n = years.clone().count();
                out.push(ScoreSeries {
                    dyad: Dyad::new(a, b).unwrap(),
                    first_year: *years.start(),
                    raw: vec![Some(0.1); n],
                    dynamic: vec![0.1; n],
                    event_count: vec![1; n],
                    effective_count: vec![1.0; n],
                    delta: 0.3,
                });
            }
        }
        out
    }

    fn full_trade(codes: &[CountryCode], years: std::ops::RangeInclusive<i32>) -> KeyedTable {
        let mut t = KeyedTable::new();
        for &o in codes {
            for &d in codes {
                for y in years.clone() {
                    t.insert(o, d, Some(y), 1.0).unwrap();
                }
            }
        }
        t
    }

    #[test]
    fn three_countries_two_years() {
        let codes = [c("USA"), c("CHN"), c("JPN")];
        let trade = full_trade(&codes, 2000..=2001);
        let scores = flat_scores(&codes, 2000..=2001);
        let p = build_panel(&PanelInputs::new(&trade, &scores, SampleSpec::all())).unwrap();
        assert_eq!(p.len(), 12);
        assert_eq!(p.zero_trade_dropped, 0);
    }

    #[test]
    fn zero_trade_counted() {
        let codes = [c("USA"), c("CHN")];
        let mut trade = KeyedTable::new();
        trade.insert(codes[0], codes[1], Some(2000), 0.0).unwrap();
        trade.insert(codes[1], codes[0], Some(2000), 2.0).unwrap();
        let scores = flat_scores(&codes, 2000..=2000);
        let p = build_panel(&PanelInputs::new(&trade, &scores, SampleSpec::all())).unwrap();
        assert_eq!(p.len(), 1);
        assert_eq!(p.zero_trade_dropped, 1);
        assert_eq!(p.column("log_trade").unwrap(), &[2.0f64.ln()]);
    }

    #[test]
    fn major_sample_filters() {
        let mut codes = CountryCode::majors();
        codes.extend(["NOR", "FIN", "PRT"].map(c));
        let trade = full_trade(&codes, 2000..=2000);
        let scores = flat_scores(&codes, 2000..=2000);
        let mm = build_panel(&PanelInputs::new(&trade, &scores, SampleSpec::new(SampleKind::MajorMajor))).unwrap();
        assert_eq!(mm.len(), 32 * 31);
        let mn = build_panel(&PanelInputs::new(&trade, &scores, SampleSpec::new(SampleKind::MajorNonMajor))).unwrap();
        assert_eq!(mn.len(), 2 * 32 * 3);
    }

    #[test]
    fn policy_columns_and_validation() {
        let codes = [c("USA"), c("CHN")];
        let trade = full_trade(&codes, 2000..=2000);
        let scores = flat_scores(&codes, 2000..=2000);
        let mut tariffs = KeyedTable::new();
        tariffs.insert(codes[0], codes[1], Some(2000), 0.25).unwrap();
        let mut sanctions = KeyedTable::new();
        sanctions.insert(codes[0], codes[1], None, 2.0).unwrap();
        let mut inputs = PanelInputs::new(&trade, &scores, SampleSpec::all());
        inputs.tariffs = Some(&tariffs);
        let p = build_panel(&inputs).unwrap();
        let r = p.find(codes[0], codes[1], 2000).unwrap();
        assert!((p.column("log_gross_tariff").unwrap()[r] - 1.25f64.ln()).abs() < 1e-15);
        assert!(p.column("log_gross_tariff").unwrap()[1 - r].is_nan());
        inputs.sanctions = Some(&sanctions);
        assert!(build_panel(&inputs).is_err());
    }

    #[test]
    fn duplicate_series_and_empty_join() {
        let codes = [c("USA"), c("CHN")];
        let trade = full_trade(&codes, 2000..=2000);
        let mut scores = flat_scores(&codes, 2000..=2000);
        scores.push(scores[0].clone());
        assert!(build_panel(&PanelInputs::new(&trade, &scores, SampleSpec::all())).is_err());
        let late = flat_scores(&codes, 2005..=2006);
        assert!(build_panel(&PanelInputs::new(&trade, &late, SampleSpec::all())).is_err());
    }
}
