//! `origin,dest,year,value` keyed tables and small CSV helpers shared by the
//! trade, tariff, sanction and control inputs.

use std::collections::BTreeMap;
use std::io::{Read, Write};

use serde::Deserialize;

use crate::country::CountryCode;
use crate::error::{Error, Location, Result};

/// Formats a real with 17 significant digits, enough to round-trip any f64.
pub fn fmt_real(x: f64) -> String {
    if x.is_nan() {
        String::new()
    } else if x == 0.0 {
        "0".to_owned()
    } else {
        format!("{x:.16e}")
    }
}

/// Directed key: origin, destination, and an optional year. A missing year
/// marks a time-invariant entry (distance, contiguity, ...).
pub type DirectedKey = (CountryCode, CountryCode, Option<i32>);

#[derive(Debug, Clone, Default, PartialEq)]
pub struct KeyedTable {
    entries: BTreeMap<DirectedKey, f64>,
}

#[derive(Deserialize)]
struct Row {
    origin: String,
    dest: String,
    year: Option<String>,
    value: String,
}

impl KeyedTable {
    pub fn new() -> Self {
        Self::default()
    }

    /// Inserts a value; a repeated key is an error.
    pub fn insert(&mut self, origin: CountryCode, dest: CountryCode, year: Option<i32>, value: f64) -> Result<()> {
        if self.entries.insert((origin, dest, year), value).is_some() {
            return Err(Error::validation(format!(
                "duplicate key {origin},{dest},{}",
                year.map(|y| y.to_string()).unwrap_or_default()
            )));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Exact-year lookup, falling back to the time-invariant entry.
    pub fn get(&self, origin: CountryCode, dest: CountryCode, year: i32) -> Option<f64> {
        self.entries
            .get(&(origin, dest, Some(year)))
            .or_else(|| self.entries.get(&(origin, dest, None)))
            .copied()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&DirectedKey, &f64)> {
        self.entries.iter()
    }

    /// Distinct years present (time-invariant rows excluded).
    pub fn years(&self) -> Vec<i32> {
        let mut ys: Vec<i32> = self.entries.keys().filter_map(|k| k.2).collect();
        ys.sort_unstable();
        ys.dedup();
        ys
    }

    pub fn countries(&self) -> Vec<CountryCode> {
        let mut cs: Vec<CountryCode> = self.entries.keys().flat_map(|k| [k.0, k.1]).collect();
        cs.sort_unstable();
        cs.dedup();
        cs
    }

    pub fn read_csv<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let mut table = KeyedTable::new();
        for rec in rdr.records() {
            let rec = rec?;
            let line = rec.position().map(|p| p.line()).unwrap_or(0);
            let loc = || Location::Line(line);
            let row: Row = rec
                .deserialize(None)
                .map_err(|e| Error::parse(loc(), None, e.to_string()))?;
            let origin = CountryCode::new(&row.origin).map_err(|e| Error::parse(loc(), Some("origin"), e.to_string()))?;
            let dest = CountryCode::new(&row.dest).map_err(|e| Error::parse(loc(), Some("dest"), e.to_string()))?;
            let year = match row.year.as_deref() {
                None | Some("") => None,
                Some(y) => Some(
                    y.parse::<i32>()
                        .map_err(|_| Error::parse(loc(), Some("year"), format!("`{y}` is not a year")))?,
                ),
            };
            let value: f64 = row
                .value
                .parse()
                .map_err(|_| Error::parse(loc(), Some("value"), format!("`{}` is not a number", row.value)))?;
            if !value.is_finite() {
                return Err(Error::parse(loc(), Some("value"), "value must be finite"));
            }
            table
                .insert(origin, dest, year, value)
                .map_err(|e| Error::parse(loc(), None, e.to_string()))?;
        }
        Ok(table)
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["origin", "dest", "year", "value"])?;
        for ((o, d, y), v) in &self.entries {
            let year = y.map(|y| y.to_string()).unwrap_or_default();
            w.write_record([o.as_str(), d.as_str(), &year, &fmt_real(*v)])?;
        }
        w.flush()?;
        Ok(())
    }
}

impl FromIterator<(DirectedKey, f64)> for KeyedTable {
    /// Later duplicates overwrite earlier ones; use [`KeyedTable::insert`]
    /// when duplicates must be rejected.
    fn from_iter<I: IntoIterator<Item = (DirectedKey, f64)>>(iter: I) -> Self {
        KeyedTable {
            entries: iter.into_iter().collect(),
        }
    }
}
