//! Country codes and the default major-economy sample.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

/// ISO 3166-1 alpha-3 codes, followed by a handful of withdrawn codes that
/// historical event data still uses (Soviet Union, Yugoslavia, ...) and the
/// user-assigned Kosovo code.
const KNOWN_CODES: &[&str] = &[
    "AFG", "ALA", "ALB", "DZA", "ASM", "AND", "AGO", "AIA", "ATA", "ATG", "ARG", "ARM", "ABW",
    "AUS", "AUT", "AZE", "BHS", "BHR", "BGD", "BRB", "BLR", "BEL", "BLZ", "BEN", "BMU", "BTN",
    "BOL", "BES", "BIH", "BWA", "BVT", "BRA", "IOT", "BRN", "BGR", "BFA", "BDI", "CPV", "KHM",
    "CMR", "CAN", "CYM", "CAF", "TCD", "CHL", "CHN", "CXR", "CCK", "COL", "COM", "COG", "COD",
    "COK", "CRI", "CIV", "HRV", "CUB", "CUW", "CYP", "CZE", "DNK", "DJI", "DMA", "DOM", "ECU",
    "EGY", "SLV", "GNQ", "ERI", "EST", "SWZ", "ETH", "FLK", "FRO", "FJI", "FIN", "FRA", "GUF",
    "PYF", "ATF", "GAB", "GMB", "GEO", "DEU", "GHA", "GIB", "GRC", "GRL", "GRD", "GLP", "GUM",
    "GTM", "GGY", "GIN", "GNB", "GUY", "HTI", "HMD", "VAT", "HND", "HKG", "HUN", "ISL", "IND",
    "IDN", "IRN", "IRQ", "IRL", "IMN", "ISR", "ITA", "JAM", "JPN", "JEY", "JOR", "KAZ", "KEN",
    "KIR", "PRK", "KOR", "KWT", "KGZ", "LAO", "LVA", "LBN", "LSO", "LBR", "LBY", "LIE", "LTU",
    "LUX", "MAC", "MDG", "MWI", "MYS", "MDV", "MLI", "MLT", "MHL", "MTQ", "MRT", "MUS", "MYT",
    "MEX", "FSM", "MDA", "MCO", "MNG", "MNE", "MSR", "MAR", "MOZ", "MMR", "NAM", "NRU", "NPL",
    "NLD", "NCL", "NZL", "NIC", "NER", "NGA", "NIU", "NFK", "MKD", "MNP", "NOR", "OMN", "PAK",
    "PLW", "PSE", "PAN", "PNG", "PRY", "PER", "PHL", "PCN", "POL", "PRT", "PRI", "QAT", "REU",
    "ROU", "RUS", "RWA", "BLM", "SHN", "KNA", "LCA", "MAF", "SPM", "VCT", "WSM", "SMR", "STP",
    "SAU", "SEN", "SRB", "SYC", "SLE", "SGP", "SXM", "SVK", "SVN", "SLB", "SOM", "ZAF", "SGS",
    "SSD", "ESP", "LKA", "SDN", "SUR", "SJM", "SWE", "CHE", "SYR", "TWN", "TJK", "TZA", "THA",
    "TLS", "TGO", "TKL", "TON", "TTO", "TUN", "TUR", "TKM", "TCA", "TUV", "UGA", "UKR", "ARE",
    "GBR", "USA", "UMI", "URY", "UZB", "VUT", "VEN", "VNM", "VGB", "VIR", "WLF", "ESH", "YEM",
    "ZMB", "ZWE", // withdrawn / user-assigned
    "SUN", "YUG", "DDR", "CSK", "SCG", "YMD", "XKX",
];

/// The 32 economies that ranked among the world's top 20 by GDP at some
/// point since 1960.
pub const MAJOR_ECONOMIES: [&str; 32] = [
    "ARG", "AUS", "AUT", "BEL", "BRA", "CAN", "CHN", "DNK", "FRA", "DEU", "IND", "IDN", "IRN",
    "IRQ", "ITA", "JPN", "MEX", "NLD", "NGA", "PHL", "POL", "RUS", "SAU", "KOR", "ESP", "SWE",
    "CHE", "TUR", "GBR", "USA", "VEN", "ZAF",
];

/// A validated three-letter country code.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct CountryCode([u8; 3]);

impl CountryCode {
    pub fn new(code: &str) -> Result<Self> {
        let bytes = code.as_bytes();
        if bytes.len() != 3 || !bytes.iter().all(u8::is_ascii_uppercase) {
            return Err(Error::validation(format!(
                "`{code}` is not a three-letter upper-case country code"
            )));
        }
        if !KNOWN_CODES.contains(&code) {
            return Err(Error::validation(format!("unknown country code `{code}`")));
        }
        Ok(CountryCode([bytes[0], bytes[1], bytes[2]]))
    }

    pub fn as_str(&self) -> &str {
        // Construction guarantees ASCII.
        std::str::from_utf8(&self.0).expect("ascii country code")
    }

    /// All codes accepted by [`CountryCode::new`], in table order.
    pub fn all() -> impl Iterator<Item = CountryCode> {
        KNOWN_CODES.iter().map(|c| CountryCode::new(c).expect("table entry"))
    }

    pub fn majors() -> Vec<CountryCode> {
        MAJOR_ECONOMIES
            .iter()
            .map(|c| CountryCode::new(c).expect("table entry"))
            .collect()
    }
}

impl fmt::Debug for CountryCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl fmt::Display for CountryCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for CountryCode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        CountryCode::new(s.trim())
    }
}

impl Serialize for CountryCode {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(self.as_str())
    }
}

impl<'de> Deserialize<'de> for CountryCode {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        CountryCode::new(&s).map_err(serde::de::Error::custom)
    }
}

/// An unordered country pair; `a() < b()` always holds.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub struct Dyad {
    a: CountryCode,
    b: CountryCode,
}

impl Dyad {
    pub fn new(x: CountryCode, y: CountryCode) -> Result<Self> {
        match x.cmp(&y) {
            std::cmp::Ordering::Less => Ok(Dyad { a: x, b: y }),
            std::cmp::Ordering::Greater => Ok(Dyad { a: y, b: x }),
            std::cmp::Ordering::Equal => Err(Error::validation(format!("self-dyad {x}-{x}"))),
        }
    }

    pub fn a(&self) -> CountryCode {
        self.a
    }

    pub fn b(&self) -> CountryCode {
        self.b
    }

    pub fn contains(&self, c: CountryCode) -> bool {
        self.a == c || self.b == c
    }
}

impl fmt::Debug for Dyad {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}-{}", self.a, self.b)
    }
}

impl fmt::Display for Dyad {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}-{}", self.a, self.b)
    }
}
