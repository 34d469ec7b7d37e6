//! Responses to one-period and permanent shocks, recovered from an impulse
//! response and the shock's own autocorrelation function.
//!
//! An estimated response β_h mixes the effect of the initial shock with the
//! effect of its persistence φ_h. Solving Φp = e₁ for the lower-triangular
//! Toeplitz Φ built from φ gives an auxiliary shock sequence p whose
//! combined path is a one-period impulse; convolving β with p yields the
//! transitory response, and its running sum the permanent one.

use std::io::{Read, Write};

use serde::Serialize;

use crate::error::{Error, Location, Result};
use crate::lp::{lp_autocorr, lp_irf, lp_iv, resample_draws, Irf, LpSpec};
use crate::panel::Panel;
use crate::stats::quantile;
use crate::table::fmt_real;

/// Auxiliary shock sequence p_0..p_H.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ShockWeights {
    pub p: Vec<f64>,
}

/// Solves Φp = e₁ by forward substitution, Φ_ij = φ_{i−j} for i ≥ j.
pub fn transitory_weights(acf: &[f64]) -> Result<ShockWeights> {
    let Some(&phi0) = acf.first() else {
        return Err(Error::validation("autocorrelation function is empty"));
    };
    if phi0 == 0.0 || !phi0.is_finite() {
        return Err(Error::validation("leading autocorrelation coefficient must be finite and nonzero"));
    }
    if acf.iter().any(|v| !v.is_finite()) {
        return Err(Error::validation("autocorrelation function has non-finite values"));
    }
    let mut p = Vec::with_capacity(acf.len());
    p.push(1.0 / phi0);
    for i in 1..acf.len() {
        let s: f64 = (1..=i).map(|j| acf[j] * p[i - j]).sum();
        p.push(-s / phi0);
    }
    Ok(ShockWeights { p })
}

/// β̃_h = Σ_{s≤h} p_s β_{h−s} over horizons 0..H.
pub fn transitory_irf(beta: &[f64], weights: &ShockWeights) -> Result<Vec<f64>> {
    if beta.len() != weights.p.len() {
        return Err(Error::validation(format!(
            "response has {} horizons but the shock weights have {}",
            beta.len(),
            weights.p.len()
        )));
    }
    Ok((0..beta.len())
        .map(|h| (0..=h).map(|s| weights.p[s] * beta[h - s]).sum())
        .collect())
}

/// Running sum of a transitory path.
pub fn permanent_irf(transitory: &[f64]) -> Vec<f64> {
    transitory
        .iter()
        .scan(0.0, |acc, &b| {
            *acc += b;
            Some(*acc)
        })
        .collect()
}

/// The ACF at horizons 0..len, zero beyond its estimated range.
pub fn padded_acf(acf: &Irf, len: usize) -> Result<Vec<f64>> {
    let path = acf.nonnegative_path();
    if path.is_empty() {
        return Err(Error::validation("autocorrelation function has no horizon 0"));
    }
    Ok((0..len).map(|h| path.get(h).copied().unwrap_or(0.0)).collect())
}

/// Transitory and permanent paths with optional bootstrap bands.
///
/// `transitory` holds the first differences of `permanent`, so the two
/// paths telescope exactly.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DecomposedIrf {
    pub horizons: Vec<i32>,
    pub transitory: Vec<f64>,
    pub permanent: Vec<f64>,
    /// Band vectors are NaN when no bootstrap was run.
    pub transitory_low: Vec<f64>,
    pub transitory_high: Vec<f64>,
    pub permanent_low: Vec<f64>,
    pub permanent_high: Vec<f64>,
    pub draws: usize,
    pub failed: usize,
}

impl DecomposedIrf {
    fn from_transitory(raw: &[f64]) -> Self {
        let permanent = permanent_irf(raw);
        let transitory = (0..permanent.len())
            .map(|h| if h == 0 { permanent[0] } else { permanent[h] - permanent[h - 1] })
            .collect();
        let nan = vec![f64::NAN; permanent.len()];
        DecomposedIrf {
            horizons: (0..permanent.len() as i32).collect(),
            transitory,
            permanent,
            transitory_low: nan.clone(),
            transitory_high: nan.clone(),
            permanent_low: nan.clone(),
            permanent_high: nan,
            draws: 0,
            failed: 0,
        }
    }

    /// Permanent response at the last horizon.
    pub fn long_run(&self) -> f64 {
        self.permanent.last().copied().unwrap_or(f64::NAN)
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record([
            "horizon",
            "transitory",
            "transitory_low",
            "transitory_high",
            "permanent",
            "permanent_low",
            "permanent_high",
        ])?;
        for i in 0..self.horizons.len() {
            w.write_record([
                self.horizons[i].to_string(),
                fmt_real(self.transitory[i]),
                fmt_real(self.transitory_low[i]),
                fmt_real(self.transitory_high[i]),
                fmt_real(self.permanent[i]),
                fmt_real(self.permanent_low[i]),
                fmt_real(self.permanent_high[i]),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    /// Reads a file written by [`DecomposedIrf::write_csv`]. Horizons must
    /// run 0, 1, 2, … without gaps; empty band cells read as NaN.
    pub fn read_csv<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let mut out = DecomposedIrf::from_transitory(&[]);
        for rec in rdr.records() {
            let rec = rec?;
            let loc = Location::Line(rec.position().map_or(0, |p| p.line()));
            let num = |i: usize, name: &str, required: bool| -> Result<f64> {
                match rec.get(i) {
                    Some("") if !required => Ok(f64::NAN),
                    Some(s) => s
                        .parse()
                        .map_err(|_| Error::parse(loc.clone(), Some(name), format!("`{s}` is not a number"))),
                    None => Err(Error::parse(loc.clone(), Some(name), "missing field")),
                }
            };
            let h = num(0, "horizon", true)?;
            if h != out.horizons.len() as f64 {
                return Err(Error::parse(loc, Some("horizon"), "horizons must run 0, 1, 2, …"));
            }
            out.horizons.push(h as i32);
            out.transitory.push(num(1, "transitory", true)?);
            out.transitory_low.push(num(2, "transitory_low", false)?);
            out.transitory_high.push(num(3, "transitory_high", false)?);
            out.permanent.push(num(4, "permanent", true)?);
            out.permanent_low.push(num(5, "permanent_low", false)?);
            out.permanent_high.push(num(6, "permanent_high", false)?);
        }
        if out.horizons.is_empty() {
            return Err(Error::validation("decomposition file has no rows"));
        }
        Ok(out)
    }
}

/// Decomposes `irf` (horizons 0..H used) with the shock ACF `acf`.
pub fn decompose(acf: &Irf, irf: &Irf) -> Result<DecomposedIrf> {
    let beta = irf.nonnegative_path();
    if beta.is_empty() {
        return Err(Error::validation("impulse response has no horizon 0"));
    }
    let weights = transitory_weights(&padded_acf(acf, beta.len())?)?;
    Ok(DecomposedIrf::from_transitory(&transitory_irf(&beta, &weights)?))
}

/// Point decomposition on `panel` plus dyad block-bootstrap bands, re-running
/// both projections on every draw. Fails when more than a fifth of the draws
/// fail.
pub fn bootstrap_decomposition(
    panel: &Panel,
    acf_spec: &LpSpec,
    outcome_spec: &LpSpec,
    draws: usize,
    seed: u64,
) -> Result<DecomposedIrf> {
    let run = |p: &Panel| -> Result<DecomposedIrf> {
        let acf = lp_autocorr(p, &acf_spec.shock, acf_spec)?;
        let irf = if outcome_spec.instruments.is_empty() { lp_irf(p, outcome_spec) } else { lp_iv(p, outcome_spec) }?;
        decompose(&acf, &irf)
    };
    let mut point = run(panel)?;
    let len = point.horizons.len();
    let results = resample_draws(panel, draws, seed, |p| {
        let d = run(p)?;
        if d.horizons.len() < len {
            return Err(Error::validation("bootstrap draw lost horizons"));
        }
        Ok(d)
    })?;
    let ok: Vec<DecomposedIrf> = results.into_iter().flatten().collect();
    let failed = draws - ok.len();
    if failed * 5 > draws {
        return Err(Error::Numerical(format!("{failed} of {draws} bootstrap draws failed")));
    }
    let band = |get: &dyn Fn(&DecomposedIrf) -> f64| -> (f64, f64) {
        let v: Vec<f64> = ok.iter().map(get).collect();
        (quantile(&v, 0.025), quantile(&v, 0.975))
    };
    for h in 0..len {
        (point.transitory_low[h], point.transitory_high[h]) = band(&|d| d.transitory[h]);
        (point.permanent_low[h], point.permanent_high[h]) = band(&|d| d.permanent[h]);
    }
    point.draws = draws;
    point.failed = failed;
    Ok(point)
}
