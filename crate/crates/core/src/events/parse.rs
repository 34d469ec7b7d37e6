use std::io::{Read, Write};
use std::str::FromStr;

use serde_json::Value;

use super::{CameoQuad, EconomicType, EventRecord};
use crate::country::CountryCode;
use crate::error::{Error, Location, Result};
use crate::table::fmt_real;

const REQUIRED: [&str; 7] = [
    "origin",
    "partner",
    "year",
    "cameo_root",
    "cameo_quad",
    "goldstein",
    "economic",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EventFormat {
    /// Headed CSV: `origin,partner,year,cameo_root,cameo_quad,goldstein,economic[,description]`.
    Csv,
    /// JSON array of objects with the same field names.
    Json,
}

impl FromStr for EventFormat {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "csv" => Ok(EventFormat::Csv),
            "json" => Ok(EventFormat::Json),
            _ => Err(Error::validation(format!("unknown event format `{s}`"))),
        }
    }
}

/// Parses and validates an event stream. The first rejected record aborts the
/// parse with its location and field.
pub fn parse_events<R: Read>(reader: R, format: EventFormat) -> Result<Vec<EventRecord>> {
    match format {
        EventFormat::Csv => parse_csv(reader),
        EventFormat::Json => parse_json(reader),
    }
}

fn field<T: FromStr>(raw: &str, name: &str, loc: &Location) -> Result<T>
where
    T::Err: std::fmt::Display,
{
    raw.trim()
        .parse::<T>()
        .map_err(|e| Error::parse(loc.clone(), Some(name), format!("`{raw}`: {e}")))
}

fn build(get: impl Fn(&str) -> Option<String>, loc: Location) -> Result<EventRecord> {
    let req = |name: &str| -> Result<String> {
        get(name).ok_or_else(|| Error::parse(loc.clone(), Some(name), "missing field"))
    };
    let record = EventRecord {
        origin: field::<CountryCode>(&req("origin")?, "origin", &loc)?,
        partner: field::<CountryCode>(&req("partner")?, "partner", &loc)?,
        year: field(&req("year")?, "year", &loc)?,
        cameo_root: field(&req("cameo_root")?, "cameo_root", &loc)?,
        cameo_quad: field::<CameoQuad>(&req("cameo_quad")?, "cameo_quad", &loc)?,
        goldstein: field(&req("goldstein")?, "goldstein", &loc)?,
        economic: field::<EconomicType>(&req("economic")?, "economic", &loc)?,
        description: get("description").filter(|d| !d.is_empty()),
    };
    record
        .validate()
        .map_err(|(f, msg)| Error::parse(loc, Some(f), msg))?;
    Ok(record)
}

/// Writes events in the headed CSV layout read by [`parse_events`].
pub fn write_events<W: Write>(events: &[EventRecord], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(REQUIRED.iter().chain(std::iter::once(&"description")))?;
    for e in events {
        w.write_record([
            e.origin.as_str(),
            e.partner.as_str(),
            &e.year.to_string(),
            &e.cameo_root.to_string(),
            &e.cameo_quad.to_string(),
            &fmt_real(e.goldstein),
            &e.economic.to_string(),
            e.description.as_deref().unwrap_or(""),
        ])?;
    }
    w.flush()?;
    Ok(())
}

fn parse_csv<R: Read>(reader: R) -> Result<Vec<EventRecord>> {
    let mut rdr = csv::ReaderBuilder::new()
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let headers = rdr.headers()?.clone();
    if headers.is_empty() {
        return Ok(Vec::new());
    }
    for name in REQUIRED {
        if !headers.iter().any(|h| h == name) {
            return Err(Error::parse(Location::Line(1), Some(name), "column missing from header"));
        }
    }
    let col = |name: &str| headers.iter().position(|h| h == name);
    let idx: Vec<(String, usize)> = REQUIRED
        .iter()
        .chain(std::iter::once(&"description"))
        .filter_map(|n| col(n).map(|i| (n.to_string(), i)))
        .collect();

    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| {
            let line = e.position().map(|p| p.line()).unwrap_or(0);
            Error::parse(Location::Line(line), None, e.to_string())
        })?;
        let line = rec.position().map(|p| p.line()).unwrap_or(0);
        if rec.len() > headers.len() {
            return Err(Error::parse(
                Location::Line(line),
                None,
                format!("{} fields, header has {}", rec.len(), headers.len()),
            ));
        }
        let get = |name: &str| {
            idx.iter()
                .find(|(n, _)| n == name)
                .and_then(|(_, i)| rec.get(*i))
                .filter(|v| !v.is_empty() || name == "description")
                .map(str::to_owned)
        };
        out.push(build(get, Location::Line(line))?);
    }
    Ok(out)
}

fn parse_json<R: Read>(reader: R) -> Result<Vec<EventRecord>> {
    let mut text = String::new();
    let mut reader = reader;
    reader.read_to_string(&mut text)?;
    if text.trim().is_empty() {
        return Ok(Vec::new());
    }
    let value: Value = serde_json::from_str(&text)?;
    let Value::Array(items) = value else {
        return Err(Error::validation("event JSON must be an array of objects"));
    };
    items
        .iter()
        .enumerate()
        .map(|(i, item)| {
            let Value::Object(map) = item else {
                return Err(Error::parse(Location::Record(i), None, "not an object"));
            };
            let get = |name: &str| match map.get(name) {
                Some(Value::String(s)) => Some(s.clone()),
                Some(Value::Number(n)) => Some(n.to_string()),
                _ => None,
            };
            build(get, Location::Record(i))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    const HEADER: &str = "origin,partner,year,cameo_root,cameo_quad,goldstein,economic,description\n";

    #[test]
    fn repo_act_row() {
        let text = "origin,partner,year,cameo_root,cameo_quad,goldstein,economic\n\
                    USA,RUS,2024,17,MaterialConflict,-8.0,AssetSeizure\n";
        let ev = parse_events(text.as_bytes(), EventFormat::Csv).unwrap();
        assert_eq!(ev.len(), 1);
        let e = &ev[0];
        assert_eq!(e.origin.as_str(), "USA");
        assert_eq!(e.partner.as_str(), "RUS");
        assert_eq!(e.year, 2024);
        assert_eq!(e.cameo_root, 17);
        assert_eq!(e.cameo_quad, CameoQuad::MaterialConflict);
        assert_eq!(e.goldstein, -8.0);
        assert_eq!(e.economic, EconomicType::AssetSeizure);
        assert_eq!(e.description, None);
    }

    #[test]
    fn goldstein_out_of_range_reports_line_and_field() {
        let text = format!("{HEADER}USA,RUS,2024,17,MaterialConflict,-8.0,AssetSeizure,ok\nUSA,RUS,2024,17,MaterialConflict,12.0,AssetSeizure,bad\n");
        match parse_events(text.as_bytes(), EventFormat::Csv).unwrap_err() {
            Error::Parse { location, field, .. } => {
                assert_eq!(location, Location::Line(3));
                assert_eq!(field.as_deref(), Some("goldstein"));
            }
            e => panic!("unexpected {e}"),
        }
    }

    #[test]
    fn writer_round_trips() {
        let text = format!("{HEADER}USA,RUS,2024,17,MaterialConflict,-8.0,AssetSeizure,seizure\nCHN,USA,2023,4,VerbalCooperation,0.1,Not econ.,\n");
        let ev = parse_events(text.as_bytes(), EventFormat::Csv).unwrap();
        let mut buf = Vec::new();
        write_events(&ev, &mut buf).unwrap();
        assert_eq!(parse_events(buf.as_slice(), EventFormat::Csv).unwrap(), ev);
    }

    #[test]
    fn empty_stream_is_empty_list() {
        assert!(parse_events("".as_bytes(), EventFormat::Csv).unwrap().is_empty());
        assert!(parse_events(HEADER.as_bytes(), EventFormat::Csv).unwrap().is_empty());
        assert!(parse_events("".as_bytes(), EventFormat::Json).unwrap().is_empty());
        assert!(parse_events("[]".as_bytes(), EventFormat::Json).unwrap().is_empty());
    }

    #[test]
    fn rejects_unknown_country_self_dyad_and_bad_quad() {
        let cases = [
            ("USA,XXX,2024,17,MaterialConflict,-8,AssetSeizure,", "partner"),
            ("USA,USA,2024,17,MaterialConflict,-8,AssetSeizure,", "partner"),
            ("USA,RUS,2024,17,VerbalConflict,-8,AssetSeizure,", "cameo_quad"),
            ("USA,RUS,2024,21,MaterialConflict,-8,AssetSeizure,", "cameo_root"),
            ("USA,RUS,twenty,17,MaterialConflict,-8,AssetSeizure,", "year"),
        ];
        for (row, expect) in cases {
            let text = format!("{HEADER}{row}\n");
            match parse_events(text.as_bytes(), EventFormat::Csv) {
                Err(Error::Parse { field, location, .. }) => {
                    assert_eq!(field.as_deref(), Some(expect), "{row}");
                    assert_eq!(location, Location::Line(2));
                }
                other => panic!("{row}: {other:?}"),
            }
        }
    }

    #[test]
    fn missing_header_column() {
        let text = "origin,partner,year,cameo_root,cameo_quad,goldstein\nUSA,RUS,2024,17,MaterialConflict,-8\n";
        assert!(parse_events(text.as_bytes(), EventFormat::Csv).is_err());
    }

    #[test]
    fn json_matches_csv() {
        let json = r#"[{"origin":"USA","partner":"RUS","year":2024,"cameo_root":17,
            "cameo_quad":"MaterialConflict","goldstein":-8.0,"economic":"AssetSeizure",
            "description":"US Enacts REPO Act"}]"#;
        let csv = format!("{HEADER}USA,RUS,2024,17,MaterialConflict,-8.0,AssetSeizure,US Enacts REPO Act\n");
        assert_eq!(
            parse_events(json.as_bytes(), EventFormat::Json).unwrap(),
            parse_events(csv.as_bytes(), EventFormat::Csv).unwrap()
        );
        let bad = r#"[{"origin":"USA"}]"#;
        match parse_events(bad.as_bytes(), EventFormat::Json).unwrap_err() {
            Error::Parse { location, .. } => assert_eq!(location, Location::Record(0)),
            e => panic!("{e}"),
        }
    }
}
