//! Local projections: one absorbed regression per horizon of a future
//! outcome on today's shock, with lags of both as controls.
//!
//! Horizons in `[-L, -1]` are not estimated. There the outcome `y_{t+h}` is
//! itself one of the lag controls, so the coefficient on the shock is zero by
//! construction; those horizons are reported as exact zeros and flagged.

mod bootstrap;
pub(crate) mod estimate;

use std::fmt;
use std::io::{Read, Write};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Location, Result};
use crate::panel::{AbsorbOptions, Bandwidth, FeSpec, SeEngine};
use crate::table::fmt_real;

pub use bootstrap::{block_bootstrap, resample_draws, BootstrapBands};
pub use estimate::{lp_autocorr, lp_irf, lp_iv, reverse_lp};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LpSpec {
    pub outcome: String,
    pub shock: String,
    pub h_min: i32,
    pub h_max: i32,
    /// Lags of the outcome and of the shock used as controls.
    pub lags: usize,
    pub fe: FeSpec,
    pub se_engine: SeEngine,
    /// Excluded instruments for the shock; empty unless running LP-IV.
    pub instruments: Vec<String>,
    /// Coverage of the reported bands.
    pub level: f64,
    pub absorb: AbsorbOptions,
}

impl LpSpec {
    /// Horizons −8..20, three lags, triple fixed effects, Driscoll–Kraay.
    pub fn new(outcome: &str, shock: &str) -> Self {
        LpSpec {
            outcome: outcome.to_owned(),
            shock: shock.to_owned(),
            h_min: -8,
            h_max: 20,
            lags: 3,
            fe: FeSpec::triple(),
            se_engine: SeEngine::DriscollKraay(Bandwidth::Auto),
            instruments: Vec::new(),
            level: 0.95,
            absorb: AbsorbOptions::default(),
        }
    }

    pub fn horizons(mut self, h_min: i32, h_max: i32) -> Self {
        self.h_min = h_min;
        self.h_max = h_max;
        self
    }

    pub fn lags(mut self, lags: usize) -> Self {
        self.lags = lags;
        self
    }

    pub fn fe(mut self, fe: FeSpec) -> Self {
        self.fe = fe;
        self
    }

    pub fn se(mut self, engine: SeEngine) -> Self {
        self.se_engine = engine;
        self
    }

    pub fn instruments(mut self, z: &[&str]) -> Self {
        self.instruments = z.iter().map(|s| s.to_string()).collect();
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.h_min > self.h_max {
            return Err(Error::validation(format!("horizon range {}..{} is empty", self.h_min, self.h_max)));
        }
        if !(self.level > 0.0 && self.level < 1.0) {
            return Err(Error::validation(format!("band level {} outside (0, 1)", self.level)));
        }
        Ok(())
    }

    /// Whether horizon `h` coincides with one of the outcome lags.
    pub fn identically_zero(&self, h: i32) -> bool {
        h < 0 && h.unsigned_abs() as usize <= self.lags
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum IrfKind {
    OutcomeOnShock,
    ShockAutocorr,
    Iv,
}

impl fmt::Display for IrfKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            IrfKind::OutcomeOnShock => "outcome_on_shock",
            IrfKind::ShockAutocorr => "shock_autocorr",
            IrfKind::Iv => "iv",
        })
    }
}

impl FromStr for IrfKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "outcome_on_shock" => Ok(IrfKind::OutcomeOnShock),
            "shock_autocorr" => Ok(IrfKind::ShockAutocorr),
            "iv" => Ok(IrfKind::Iv),
            other => Err(Error::validation(format!("unknown IRF kind `{other}`"))),
        }
    }
}

/// Horizon-indexed response path. Horizons are strictly increasing and every
/// band contains its point estimate.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Irf {
    pub horizons: Vec<i32>,
    pub beta: Vec<f64>,
    pub se: Vec<f64>,
    pub band_low: Vec<f64>,
    pub band_high: Vec<f64>,
    pub n_obs: Vec<usize>,
    pub kind: IrfKind,
    /// True where the value is fixed by construction rather than estimated.
    pub fixed: Vec<bool>,
    /// First-stage F per horizon (IV only, NaN otherwise).
    pub first_stage_f: Vec<f64>,
    pub warnings: Vec<String>,
}

impl Irf {
    pub fn empty(kind: IrfKind) -> Self {
        Irf {
            horizons: Vec::new(),
            beta: Vec::new(),
            se: Vec::new(),
            band_low: Vec::new(),
            band_high: Vec::new(),
            n_obs: Vec::new(),
            kind,
            fixed: Vec::new(),
            first_stage_f: Vec::new(),
            warnings: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.horizons.len()
    }

    pub fn is_empty(&self) -> bool {
        self.horizons.is_empty()
    }

    pub fn index_of(&self, h: i32) -> Option<usize> {
        self.horizons.iter().position(|&x| x == h)
    }

    pub fn beta_at(&self, h: i32) -> Option<f64> {
        self.index_of(h).map(|i| self.beta[i])
    }

    /// Coefficients for horizons 0, 1, … up to the first gap.
    pub fn nonnegative_path(&self) -> Vec<f64> {
        (0..).map_while(|h| self.beta_at(h)).collect()
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["horizon", "beta", "se", "band_low", "band_high", "n_obs", "kind"])?;
        for i in 0..self.len() {
            w.write_record([
                self.horizons[i].to_string(),
                fmt_real(self.beta[i]),
                fmt_real(self.se[i]),
                fmt_real(self.band_low[i]),
                fmt_real(self.band_high[i]),
                self.n_obs[i].to_string(),
                self.kind.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let mut irf: Option<Irf> = None;
        for rec in rdr.records() {
            let rec = rec?;
            let loc = Location::Line(rec.position().map_or(0, |p| p.line()));
            let field = |i: usize, name: &str| -> Result<&str> {
                rec.get(i).ok_or_else(|| Error::parse(loc.clone(), Some(name), "missing field"))
            };
            let real = |i: usize, name: &str| -> Result<f64> {
                let s = field(i, name)?;
                s.parse().map_err(|_| Error::parse(loc.clone(), Some(name), format!("`{s}` is not a number")))
            };
            let kind: IrfKind = field(6, "kind")?.parse().map_err(|e: Error| Error::parse(loc.clone(), Some("kind"), e.to_string()))?;
            let out = irf.get_or_insert_with(|| Irf::empty(kind));
            let h: i32 = field(0, "horizon")?
                .parse()
                .map_err(|_| Error::parse(loc.clone(), Some("horizon"), "not an integer"))?;
            if out.horizons.last().is_some_and(|&p| p >= h) {
                return Err(Error::parse(loc, Some("horizon"), "horizons must increase"));
            }
            out.horizons.push(h);
            out.beta.push(real(1, "beta")?);
            out.se.push(real(2, "se")?);
            out.band_low.push(real(3, "band_low")?);
            out.band_high.push(real(4, "band_high")?);
            out.n_obs.push(
                field(5, "n_obs")?
                    .parse()
                    .map_err(|_| Error::parse(loc.clone(), Some("n_obs"), "not a count"))?,
            );
            out.fixed.push(false);
            out.first_stage_f.push(f64::NAN);
        }
        irf.ok_or_else(|| Error::validation("IRF file has no rows"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_and_validation() {
        let s = LpSpec::new("log_trade", "score");
        assert_eq!((s.h_min, s.h_max, s.lags), (-8, 20, 3));
        assert!(s.identically_zero(-3) && s.identically_zero(-1));
        assert!(!s.identically_zero(-4) && !s.identically_zero(0));
        assert!(s.clone().horizons(3, 2).validate().is_err());
    }

    #[test]
    fn csv_round_trip() {
        let mut irf = Irf::empty(IrfKind::OutcomeOnShock);
        for h in [-1, 0, 2] {
            irf.horizons.push(h);
            irf.beta.push(h as f64 * 0.1);
            irf.se.push(0.01);
            irf.band_low.push(h as f64 * 0.1 - 0.02);
            irf.band_high.push(h as f64 * 0.1 + 0.02);
            irf.n_obs.push(10);
            irf.fixed.push(false);
            irf.first_stage_f.push(f64::NAN);
        }
        let mut buf = Vec::new();
        irf.write_csv(&mut buf).unwrap();
        let back = Irf::read_csv(buf.as_slice()).unwrap();
        assert_eq!(back.horizons, irf.horizons);
        assert_eq!(back.beta, irf.beta);
        assert_eq!(back.nonnegative_path(), vec![0.0]);
    }
}
