use log::warn;
use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use super::{Irf, IrfKind, LpSpec};
use crate::error::{Error, Result};
use crate::panel::wls::{sandwich, solve};
use crate::panel::{absorb, wls, Absorbed, Panel, WlsInput};
use crate::stats::critical_value;

/// Regression sample for one horizon, before absorption.
struct HorizonSample {
    rows: Vec<usize>,
    /// Outcome, shock, lag controls, then instruments.
    columns: Vec<Vec<f64>>,
    names: Vec<String>,
    n_lags: usize,
    n_instruments: usize,
}

fn horizon_sample(panel: &Panel, spec: &LpSpec, h: i32) -> Result<HorizonSample> {
    let y = panel.column(&spec.outcome)?;
    let s = panel.column(&spec.shock)?;
    let z: Vec<&[f64]> = spec.instruments.iter().map(|n| panel.column(n)).collect::<Result<_>>()?;
    let same = spec.outcome == spec.shock;

    let mut names = vec![spec.outcome.clone(), spec.shock.clone()];
    let mut lag_sources: Vec<(&[f64], i32)> = Vec::new();
    for l in 1..=spec.lags as i32 {
        if !same {
            lag_sources.push((y, -l));
            names.push(format!("{}_lag{l}", spec.outcome));
        }
        lag_sources.push((s, -l));
        names.push(format!("{}_lag{l}", spec.shock));
    }
    names.extend(spec.instruments.iter().cloned());

    let width = 2 + lag_sources.len() + z.len();
    let mut columns = vec![Vec::new(); width];
    let mut rows = Vec::new();
    let mut buf = vec![0.0; width];
    'row: for r in 0..panel.len() {
        let Some(lead) = panel.shifted(y, r, h) else { continue };
        if s[r].is_nan() {
            continue;
        }
        buf[0] = lead;
        buf[1] = s[r];
        for (j, (col, shift)) in lag_sources.iter().enumerate() {
            match panel.shifted(col, r, *shift) {
                Some(v) => buf[2 + j] = v,
                None => continue 'row,
            }
        }
        for (j, col) in z.iter().enumerate() {
            if col[r].is_nan() {
                continue 'row;
            }
            buf[2 + lag_sources.len() + j] = col[r];
        }
        rows.push(r);
        for (c, v) in columns.iter_mut().zip(&buf) {
            c.push(*v);
        }
    }
    Ok(HorizonSample {
        rows,
        columns,
        names,
        n_lags: lag_sources.len(),
        n_instruments: z.len(),
    })
}

struct HorizonFit {
    beta: f64,
    se: f64,
    critical: f64,
    n_obs: usize,
    first_stage_f: f64,
}

enum Outcome {
    Fit(HorizonFit),
    Skipped(String),
}

fn distinct_years(panel: &Panel, rows: &[usize]) -> usize {
    let mut years: Vec<i32> = rows.iter().map(|&r| panel.year(r)).collect();
    years.sort_unstable();
    years.dedup();
    years.len()
}

fn estimate_horizon(panel: &Panel, spec: &LpSpec, h: i32, iv: bool) -> Result<Outcome> {
    let mut sample = horizon_sample(panel, spec, h)?;
    if sample.rows.is_empty() {
        return Ok(Outcome::Skipped(format!("horizon {h}: empty estimation sample")));
    }
    let too_short = |years: usize| years < spec.lags + 2;
    let years = distinct_years(panel, &sample.rows);
    if too_short(years) {
        return Ok(Outcome::Skipped(format!(
            "horizon {h}: {years} periods, fewer than the {} required",
            spec.lags + 2
        )));
    }
    let a = absorb(panel, &sample.rows, std::mem::take(&mut sample.columns), None, &spec.fe, &spec.absorb)?;
    let years = distinct_years(panel, &a.rows);
    if too_short(years) {
        return Ok(Outcome::Skipped(format!(
            "horizon {h}: {years} periods, fewer than the {} required",
            spec.lags + 2
        )));
    }
    for (j, name) in sample.names.iter().enumerate().skip(1) {
        if a.norm_ratio[j] < 1e-9 {
            return Err(Error::RankDeficient(name.clone()));
        }
    }
    let clusters: Vec<u32> = a.rows.iter().map(|&r| panel.clusters()[r]).collect();
    let periods: Vec<i32> = a.rows.iter().map(|&r| panel.year(r)).collect();
    let k = 1 + sample.n_lags;
    let x = &a.columns[1..1 + k];
    let names = &sample.names[1..1 + k];
    let input = WlsInput {
        y: &a.columns[0],
        x,
        names,
        weights: None,
        clusters: &clusters,
        periods: &periods,
        fe_dof: a.fe_dof,
        horizon: h,
    };
    if !iv {
        let fit = wls(&input, spec.se_engine)?;
        return Ok(Outcome::Fit(HorizonFit {
            beta: fit.coefficients[0],
            se: fit.se(0),
            critical: fit.critical(spec.level),
            n_obs: fit.n_obs,
            first_stage_f: f64::NAN,
        }));
    }
    two_stage(&a, &input, &sample, spec).map(Outcome::Fit)
}

/// Two-stage least squares on absorbed columns. The first stage regresses
/// the shock on the lag controls and the excluded instruments.
fn two_stage(a: &Absorbed, input: &WlsInput, sample: &HorizonSample, spec: &LpSpec) -> Result<HorizonFit> {
    let n = input.y.len();
    let k = input.x.len();
    let q = sample.n_instruments;
    let s = &a.columns[1];

    // First stage: controls first so a redundant instrument is the one named.
    let mut zx: Vec<Vec<f64>> = a.columns[2..2 + sample.n_lags].to_vec();
    let mut z_names: Vec<String> = sample.names[2..2 + sample.n_lags].to_vec();
    zx.extend_from_slice(&a.columns[1 + k..1 + k + q]);
    z_names.extend_from_slice(&sample.names[1 + k..1 + k + q]);
    let (pi, bread1) = solve(&zx, s, &z_names, None)?;
    let fitted: Vec<f64> = (0..n).map(|i| zx.iter().zip(&pi).map(|(c, b)| c[i] * b).sum()).collect();
    let v: Vec<f64> = (0..n).map(|i| s[i] - fitted[i]).collect();
    let fs_input = WlsInput { x: &zx, names: &z_names, y: s, ..*input };
    let fs_cov = sandwich(&fs_input, &zx, &v, &bread1, spec.se_engine)?;
    let first_stage_f = wald_f(&pi, &fs_cov.vcov, sample.n_lags, q)?;

    // Second stage on [ŝ, controls]; residuals use the actual shock.
    let mut xhat: Vec<Vec<f64>> = Vec::with_capacity(k);
    xhat.push(fitted);
    xhat.extend_from_slice(&input.x[1..]);
    let (beta, bread2) = solve(&xhat, input.y, input.names, None)?;
    let resid: Vec<f64> = (0..n)
        .map(|i| input.y[i] - input.x.iter().zip(&beta).map(|(c, b)| c[i] * b).sum::<f64>())
        .collect();
    let cov = sandwich(input, &xhat, &resid, &bread2, spec.se_engine)?;
    Ok(HorizonFit {
        beta: beta[0],
        se: cov.vcov[(0, 0)].max(0.0).sqrt(),
        critical: critical_value(spec.level, Some(cov.inference_dof)),
        n_obs: n,
        first_stage_f,
    })
}

/// Wald statistic over q for the coefficients `start..start+q`.
fn wald_f(coef: &[f64], vcov: &DMatrix<f64>, start: usize, q: usize) -> Result<f64> {
    let b = DVector::from_fn(q, |i, _| coef[start + i]);
    let v = vcov.view((start, start), (q, q)).into_owned();
    let inv = v
        .try_inverse()
        .ok_or_else(|| Error::Numerical("first-stage covariance is singular; F is not computable".into()))?;
    let f = (b.transpose() * inv * &b)[(0, 0)] / q as f64;
    if !f.is_finite() {
        return Err(Error::Numerical("first-stage F is not finite".into()));
    }
    Ok(f)
}

fn run(panel: &Panel, spec: &LpSpec, kind: IrfKind, horizons: Vec<i32>) -> Result<Irf> {
    spec.validate()?;
    let iv = kind == IrfKind::Iv;
    let results: Vec<Result<Option<Outcome>>> = horizons
        .par_iter()
        .map(|&h| {
            let fixed = spec.identically_zero(h) || (kind == IrfKind::ShockAutocorr && h == 0);
            if fixed { Ok(None) } else { estimate_horizon(panel, spec, h, iv).map(Some) }
        })
        .collect();

    let mut irf = Irf::empty(kind);
    for (&h, res) in horizons.iter().zip(results) {
        let (beta, se, crit, n_obs, fixed, f) = match res? {
            None => {
                let value = if h == 0 { 1.0 } else { 0.0 };
                (value, 0.0, 0.0, 0, true, f64::NAN)
            }
            Some(Outcome::Skipped(msg)) => {
                warn!("{msg}");
                irf.warnings.push(msg);
                continue;
            }
            Some(Outcome::Fit(hf)) => (hf.beta, hf.se, hf.critical, hf.n_obs, false, hf.first_stage_f),
        };
        if iv && f < 10.0 {
            let msg = format!("horizon {h}: weak instruments, first-stage F = {f:.3}");
            warn!("{msg}");
            irf.warnings.push(msg);
        }
        irf.horizons.push(h);
        irf.beta.push(beta);
        irf.se.push(se);
        irf.band_low.push(beta - crit * se);
        irf.band_high.push(beta + crit * se);
        irf.n_obs.push(n_obs);
        irf.fixed.push(fixed);
        irf.first_stage_f.push(f);
    }
    if irf.is_empty() {
        return Err(Error::validation("no horizon has a usable estimation sample"));
    }
    Ok(irf)
}

/// Response of `outcome_{t+h}` to `shock_t` for each horizon in the spec.
pub fn lp_irf(panel: &Panel, spec: &LpSpec) -> Result<Irf> {
    if !spec.instruments.is_empty() {
        return Err(Error::validation("instruments given to a non-IV projection; use lp_iv"));
    }
    run(panel, spec, IrfKind::OutcomeOnShock, (spec.h_min..=spec.h_max).collect())
}

/// Projection of the shock on its own past, for horizons 0..=h_max. The
/// value at horizon 0 is 1 by convention.
pub fn lp_autocorr(panel: &Panel, shock: &str, spec: &LpSpec) -> Result<Irf> {
    let mut spec = spec.clone();
    spec.outcome = shock.to_owned();
    spec.shock = shock.to_owned();
    spec.instruments.clear();
    run(panel, &spec, IrfKind::ShockAutocorr, (0..=spec.h_max.max(0)).collect())
}

/// Local projection with the shock instrumented by `spec.instruments`.
pub fn lp_iv(panel: &Panel, spec: &LpSpec) -> Result<Irf> {
    if spec.instruments.is_empty() {
        return Err(Error::validation("LP-IV needs at least one instrument"));
    }
    for z in &spec.instruments {
        if !panel.has_column(z) {
            return Err(Error::validation(format!("instrument column `{z}` is not in the panel")));
        }
    }
    run(panel, spec, IrfKind::Iv, (spec.h_min..=spec.h_max).collect())
}

/// Response of future scores to trade, with trade instrumented by an
/// externally predicted trade series.
pub fn reverse_lp(panel: &Panel, trade: &str, score: &str, instrument: &str, spec: &LpSpec) -> Result<Irf> {
    let mut spec = spec.clone();
    spec.outcome = score.to_owned();
    spec.shock = trade.to_owned();
    spec.instruments = vec![instrument.to_owned()];
    lp_iv(panel, &spec)
}
