//! Directed dyad-year observation store, high-dimensional fixed-effect
//! absorption and weighted least squares with pluggable variance engines.
//!
//! Rows are directed `(origin, dest, year)` observations. Each row carries two
//! integer ids: the *unit* (directed pair, the `Dyad` fixed effect and the
//! time-series index used for leads and lags) and the *cluster* (unordered
//! pair, used for dyad clustering and block resampling). Missing values are
//! stored as NaN.

mod absorb;
mod build;
mod export;
pub(crate) mod wls;

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::country::{CountryCode, Dyad};
use crate::error::{Error, Result};

pub use absorb::{absorb, AbsorbOptions, Absorbed, FeIndex};
pub use build::{build_panel, PanelInputs, SampleKind, SampleSpec};
pub use export::{residual_lead_series, write_panel_csv, LeadPair, PanelManifest};
pub use wls::{fit, wls, Bandwidth, Design, FitResult, SeEngine, WlsInput};

/// Fixed-effect keys a group can be formed from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum FeKey {
    OriginYear,
    DestYear,
    /// Directed origin-destination pair.
    Dyad,
    Origin,
    Dest,
    Year,
    /// A single group spanning every row: plain demeaning.
    Constant,
}

impl FromStr for FeKey {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "origin_year" | "origin×year" => Ok(FeKey::OriginYear),
            "dest_year" | "dest×year" => Ok(FeKey::DestYear),
            "dyad" => Ok(FeKey::Dyad),
            "origin" => Ok(FeKey::Origin),
            "dest" => Ok(FeKey::Dest),
            "year" => Ok(FeKey::Year),
            "constant" | "none" => Ok(FeKey::Constant),
            other => Err(Error::validation(format!("unknown fixed-effect key `{other}`"))),
        }
    }
}

impl fmt::Display for FeKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            FeKey::OriginYear => "origin_year",
            FeKey::DestYear => "dest_year",
            FeKey::Dyad => "dyad",
            FeKey::Origin => "origin",
            FeKey::Dest => "dest",
            FeKey::Year => "year",
            FeKey::Constant => "constant",
        })
    }
}

/// Ordered, non-empty list of distinct fixed-effect keys.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<FeKey>", into = "Vec<FeKey>")]
pub struct FeSpec(Vec<FeKey>);

impl FeSpec {
    pub fn new(keys: Vec<FeKey>) -> Result<Self> {
        if keys.is_empty() {
            return Err(Error::validation("fixed-effect spec is empty"));
        }
        for (i, k) in keys.iter().enumerate() {
            if keys[..i].contains(k) {
                return Err(Error::validation(format!("fixed-effect key `{k}` repeated")));
            }
        }
        Ok(FeSpec(keys))
    }

    /// Origin×year, destination×year and directed pair.
    pub fn triple() -> Self {
        FeSpec(vec![FeKey::OriginYear, FeKey::DestYear, FeKey::Dyad])
    }

    /// Origin×year and destination×year.
    pub fn multilateral() -> Self {
        FeSpec(vec![FeKey::OriginYear, FeKey::DestYear])
    }

    /// Intercept only.
    pub fn intercept() -> Self {
        FeSpec(vec![FeKey::Constant])
    }

    pub fn keys(&self) -> &[FeKey] {
        &self.0
    }
}

impl TryFrom<Vec<FeKey>> for FeSpec {
    type Error = Error;
    fn try_from(v: Vec<FeKey>) -> Result<Self> {
        FeSpec::new(v)
    }
}

impl From<FeSpec> for Vec<FeKey> {
    fn from(s: FeSpec) -> Self {
        s.0
    }
}

impl FromStr for FeSpec {
    type Err = Error;
    /// Comma- or plus-separated keys, e.g. `origin_year+dest_year+dyad`.
    fn from_str(s: &str) -> Result<Self> {
        FeSpec::new(s.split([',', '+']).map(str::parse).collect::<Result<_>>()?)
    }
}

impl fmt::Display for FeSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.0.iter().map(ToString::to_string).collect();
        f.write_str(&parts.join("+"))
    }
}

/// Immutable table of directed observations with named real columns.
#[derive(Debug, Clone, PartialEq)]
pub struct Panel {
    origin: Vec<CountryCode>,
    dest: Vec<CountryCode>,
    year: Vec<i32>,
    unit: Vec<u32>,
    cluster: Vec<u32>,
    columns: BTreeMap<String, Vec<f64>>,
    index: HashMap<(u32, i32), usize>,
    /// Rows excluded during construction because trade was zero or missing.
    pub zero_trade_dropped: usize,
}

impl Panel {
    /// Builds a panel from row keys and aligned columns. Unit ids follow the
    /// sorted directed pairs and cluster ids the sorted unordered pairs.
    pub fn from_rows(keys: Vec<(CountryCode, CountryCode, i32)>, columns: BTreeMap<String, Vec<f64>>) -> Result<Self> {
        for (name, col) in &columns {
            if col.len() != keys.len() {
                return Err(Error::validation(format!(
                    "column `{name}` has {} values for {} rows",
                    col.len(),
                    keys.len()
                )));
            }
        }
        let mut pairs: Vec<(CountryCode, CountryCode)> = keys.iter().map(|k| (k.0, k.1)).collect();
        pairs.sort_unstable();
        pairs.dedup();
        let unit_of: HashMap<_, u32> = pairs.iter().enumerate().map(|(i, p)| (*p, i as u32)).collect();
        let mut dyads: Vec<Dyad> = Vec::with_capacity(pairs.len());
        for &(o, d) in &pairs {
            dyads.push(Dyad::new(o, d)?);
        }
        dyads.sort_unstable();
        dyads.dedup();
        let cluster_of: HashMap<Dyad, u32> = dyads.iter().enumerate().map(|(i, d)| (*d, i as u32)).collect();

        let n = keys.len();
        let mut panel = Panel {
            origin: Vec::with_capacity(n),
            dest: Vec::with_capacity(n),
            year: Vec::with_capacity(n),
            unit: Vec::with_capacity(n),
            cluster: Vec::with_capacity(n),
            columns,
            index: HashMap::with_capacity(n),
            zero_trade_dropped: 0,
        };
        for (i, &(o, d, y)) in keys.iter().enumerate() {
            let unit = unit_of[&(o, d)];
            if panel.index.insert((unit, y), i).is_some() {
                return Err(Error::validation(format!("duplicate observation {o},{d},{y}")));
            }
            panel.origin.push(o);
            panel.dest.push(d);
            panel.year.push(y);
            panel.unit.push(unit);
            panel.cluster.push(cluster_of[&Dyad::new(o, d)?]);
        }
        Ok(panel)
    }

    pub fn len(&self) -> usize {
        self.year.len()
    }

    pub fn is_empty(&self) -> bool {
        self.year.is_empty()
    }

    pub fn origin(&self, row: usize) -> CountryCode {
        self.origin[row]
    }

    pub fn dest(&self, row: usize) -> CountryCode {
        self.dest[row]
    }

    pub fn year(&self, row: usize) -> i32 {
        self.year[row]
    }

    pub fn years(&self) -> &[i32] {
        &self.year
    }

    pub fn unit(&self, row: usize) -> u32 {
        self.unit[row]
    }

    pub fn units(&self) -> &[u32] {
        &self.unit
    }

    pub fn clusters(&self) -> &[u32] {
        &self.cluster
    }

    pub fn n_clusters(&self) -> usize {
        self.cluster.iter().max().map_or(0, |m| *m as usize + 1)
    }

    pub fn column_names(&self) -> impl Iterator<Item = &str> {
        self.columns.keys().map(String::as_str)
    }

    pub fn has_column(&self, name: &str) -> bool {
        self.columns.contains_key(name)
    }

    pub fn column(&self, name: &str) -> Result<&[f64]> {
        self.columns
            .get(name)
            .map(Vec::as_slice)
            .ok_or_else(|| Error::validation(format!("panel has no column `{name}`")))
    }

    /// Adds or replaces a column.
    pub fn set_column(&mut self, name: &str, values: Vec<f64>) -> Result<()> {
        if values.len() != self.len() {
            return Err(Error::validation(format!("column `{name}` has {} values for {} rows", values.len(), self.len())));
        }
        self.columns.insert(name.to_owned(), values);
        Ok(())
    }

    /// Row of `unit` in `year`, if observed.
    pub fn row_at(&self, unit: u32, year: i32) -> Option<usize> {
        self.index.get(&(unit, year)).copied()
    }

    /// Row of the directed pair `(origin, dest)` in `year`.
    pub fn find(&self, origin: CountryCode, dest: CountryCode, year: i32) -> Option<usize> {
        (0..self.len()).find(|&i| self.origin[i] == origin && self.dest[i] == dest && self.year[i] == year)
    }

    /// `column` of the same unit `shift` years after `row` (negative for
    /// lags). `None` when the shifted row is absent or the value missing.
    pub fn shifted(&self, column: &[f64], row: usize, shift: i32) -> Option<f64> {
        let r = self.row_at(self.unit[row], self.year[row] + shift)?;
        Some(column[r]).filter(|v| !v.is_nan())
    }

    /// Stacks whole clusters in the given order; repeated clusters receive
    /// fresh unit and cluster ids so each copy is a distinct block.
    pub fn resample_clusters(&self, draw: &[u32]) -> Panel {
        let mut by_cluster: Vec<Vec<usize>> = vec![Vec::new(); self.n_clusters()];
        for (i, &c) in self.cluster.iter().enumerate() {
            by_cluster[c as usize].push(i);
        }
        let mut out = Panel {
            origin: Vec::new(),
            dest: Vec::new(),
            year: Vec::new(),
            unit: Vec::new(),
            cluster: Vec::new(),
            columns: self.columns.keys().map(|k| (k.clone(), Vec::new())).collect(),
            index: HashMap::new(),
            zero_trade_dropped: self.zero_trade_dropped,
        };
        let mut next_unit = 0u32;
        for (copy, &c) in draw.iter().enumerate() {
            let mut unit_map: HashMap<u32, u32> = HashMap::new();
            for &i in &by_cluster[c as usize] {
                let unit = *unit_map.entry(self.unit[i]).or_insert_with(|| {
                    next_unit += 1;
                    next_unit - 1
                });
                out.index.insert((unit, self.year[i]), out.year.len());
                out.origin.push(self.origin[i]);
                out.dest.push(self.dest[i]);
                out.year.push(self.year[i]);
                out.unit.push(unit);
                out.cluster.push(copy as u32);
                for (k, col) in &self.columns {
                    out.columns.get_mut(k).expect("same keys").push(col[i]);
                }
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(s: &str) -> CountryCode {
        CountryCode::new(s).unwrap()
    }

    fn small() -> Panel {
        let keys = vec![
            (c("USA"), c("CHN"), 2000),
            (c("CHN"), c("USA"), 2000),
            (c("USA"), c("CHN"), 2001),
            (c("USA"), c("JPN"), 2001),
        ];
        let cols = BTreeMap::from([("x".to_string(), vec![1.0, 2.0, 3.0, f64::NAN])]);
        Panel::from_rows(keys, cols).unwrap()
    }

    #[test]
    fn ids_and_shifts() {
        let p = small();
        assert_eq!(p.len(), 4);
        assert_eq!(p.n_clusters(), 2);
        assert_eq!(p.clusters()[0], p.clusters()[1]);
        assert_ne!(p.unit(0), p.unit(1));
        let x = p.column("x").unwrap();
        assert_eq!(p.shifted(x, 0, 1), Some(3.0));
        assert_eq!(p.shifted(x, 2, -1), Some(1.0));
        assert_eq!(p.shifted(x, 1, 1), None);
        assert!(p.column("y").is_err());
    }

    #[test]
    fn duplicate_rows_rejected() {
        let keys = vec![(c("USA"), c("CHN"), 2000), (c("USA"), c("CHN"), 2000)];
        assert!(Panel::from_rows(keys, BTreeMap::new()).is_err());
    }

    #[test]
    fn resampled_copies_are_distinct_blocks() {
        let p = small();
        let cl = p.clusters()[0];
        let r = p.resample_clusters(&[cl, cl]);
        assert_eq!(r.len(), 6);
        assert_eq!(r.n_clusters(), 2);
        let units: std::collections::BTreeSet<u32> = r.units().iter().copied().collect();
        assert_eq!(units.len(), 4);
        let x = r.column("x").unwrap();
        assert_eq!(r.shifted(x, 0, 1), Some(3.0));
    }

    #[test]
    fn fe_spec_validation() {
        assert!(FeSpec::new(vec![]).is_err());
        assert!(FeSpec::new(vec![FeKey::Year, FeKey::Year]).is_err());
        let s: FeSpec = "origin_year+dest_year+dyad".parse().unwrap();
        assert_eq!(s, FeSpec::triple());
        assert_eq!(s.to_string(), "origin_year+dest_year+dyad");
        assert!("origin_year+colour".parse::<FeSpec>().is_err());
    }
}
