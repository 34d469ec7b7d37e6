use std::io::Write;

use serde::Serialize;

use super::{absorb, AbsorbOptions, FeSpec, Panel};
use crate::country::CountryCode;
use crate::error::{Error, Result};
use crate::table::fmt_real;

/// Sidecar record for an exported panel.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PanelManifest {
    pub fe: String,
    pub tol: f64,
    pub max_sweeps: usize,
    pub sweeps: usize,
    pub singletons_dropped: usize,
    pub rows: usize,
    pub zero_trade_dropped: usize,
    pub residualized: Vec<String>,
}

/// Writes every raw column plus the residualized ones (aligned with panel
/// rows, NaN where a row was not part of the absorption sample).
pub fn write_panel_csv<W: Write>(panel: &Panel, residualized: &[(String, Vec<f64>)], writer: W) -> Result<()> {
    for (name, col) in residualized {
        if col.len() != panel.len() {
            return Err(Error::validation(format!("residual column `{name}` is not aligned with the panel")));
        }
    }
    let raw: Vec<&str> = panel.column_names().collect();
    let mut w = csv::Writer::from_writer(writer);
    let mut header = vec!["origin".to_string(), "dest".to_string(), "year".to_string()];
    header.extend(raw.iter().map(|s| s.to_string()));
    header.extend(residualized.iter().map(|(n, _)| n.clone()));
    w.write_record(&header)?;
    let raw_cols: Vec<&[f64]> = raw.iter().map(|n| panel.column(n)).collect::<Result<_>>()?;
    for i in 0..panel.len() {
        let mut rec = vec![
            panel.origin(i).to_string(),
            panel.dest(i).to_string(),
            panel.year(i).to_string(),
        ];
        rec.extend(raw_cols.iter().map(|c| fmt_real(c[i])));
        rec.extend(residualized.iter().map(|(_, c)| fmt_real(c[i])));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LeadPair {
    /// Year of the score; the outcome is from `year + lead`.
    pub year: i32,
    pub score: f64,
    pub outcome: f64,
}

/// Fixed-effect residuals of `score` at t paired with residuals of `outcome`
/// at t + `lead` for one directed pair. Both columns are residualized on the
/// rows where both are present.
#[allow(clippy::too_many_arguments)]
pub fn residual_lead_series(
    panel: &Panel,
    origin: CountryCode,
    dest: CountryCode,
    lead: i32,
    score: &str,
    outcome: &str,
    fe: &FeSpec,
    opts: &AbsorbOptions,
) -> Result<Vec<LeadPair>> {
    if lead < 0 {
        return Err(Error::validation("lead must be nonnegative"));
    }
    let Some(unit) = (0..panel.len())
        .find(|&i| panel.origin(i) == origin && panel.dest(i) == dest)
        .map(|i| panel.unit(i))
    else {
        return Err(Error::validation(format!("pair {origin}-{dest} is not in the panel")));
    };
    let (s, y) = (panel.column(score)?, panel.column(outcome)?);
    let rows: Vec<usize> = (0..panel.len()).filter(|&i| !s[i].is_nan() && !y[i].is_nan()).collect();
    let cols = vec![rows.iter().map(|&i| s[i]).collect(), rows.iter().map(|&i| y[i]).collect()];
    let a = absorb(panel, &rows, cols, None, fe, opts)?;

    let mut s_res = vec![f64::NAN; panel.len()];
    let mut y_res = vec![f64::NAN; panel.len()];
    for (k, &r) in a.rows.iter().enumerate() {
        s_res[r] = a.columns[0][k];
        y_res[r] = a.columns[1][k];
    }
    let mut out: Vec<LeadPair> = a
        .rows
        .iter()
        .filter(|&&r| panel.unit(r) == unit)
        .filter_map(|&r| {
            let ahead = panel.row_at(unit, panel.year(r) + lead)?;
            Some(LeadPair {
                year: panel.year(r),
                score: s_res[r],
                outcome: y_res[ahead],
            })
        })
        .filter(|p| !p.outcome.is_nan())
        .collect();
    out.sort_by_key(|p| p.year);
    Ok(out)
}
