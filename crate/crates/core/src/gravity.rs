//! Static gravity regressions, score×year interactions, R²-loss variance
//! decomposition and two-anchor bloc classification.

use std::collections::BTreeMap;
use std::fmt;
use std::io::Write;
use std::str::FromStr;

use log::warn;
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::country::CountryCode;
use crate::error::{Error, Result};
use crate::panel::{absorb, fit, AbsorbOptions, Design, FeKey, FeSpec, FitResult, Panel, SampleSpec, SeEngine};
use crate::stats::{wald_test, WaldTest};
use crate::table::fmt_real;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GravitySpec {
    pub outcome: String,
    /// The first regressor is the one interacted with year dummies.
    pub regressors: Vec<String>,
    pub fe: FeSpec,
    pub se_engine: SeEngine,
    /// Restricts rows by major-economy membership.
    pub sample: Option<SampleSpec>,
    pub absorb: AbsorbOptions,
}

impl GravitySpec {
    /// `log_trade` on `regressors` with origin×year and destination×year
    /// effects and dyad-clustered errors.
    pub fn new<S: AsRef<str>>(regressors: &[S]) -> Self {
        GravitySpec {
            outcome: "log_trade".into(),
            regressors: regressors.iter().map(|s| s.as_ref().to_string()).collect(),
            fe: FeSpec::multilateral(),
            se_engine: SeEngine::ClusterDyad,
            sample: None,
            absorb: AbsorbOptions::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.regressors.is_empty() {
            return Err(Error::validation("gravity needs at least one regressor"));
        }
        for (i, r) in self.regressors.iter().enumerate() {
            if self.regressors[..i].contains(r) {
                return Err(Error::validation(format!("regressor `{r}` listed twice")));
            }
            if *r == self.outcome {
                return Err(Error::validation(format!("`{r}` is both outcome and regressor")));
            }
        }
        if self.regressors.iter().any(|r| r == "score") && self.regressors.iter().any(|r| r == "ipd") {
            return Err(Error::validation("`score` and `ipd` are alternative measures; include one"));
        }
        Ok(())
    }

    fn design(&self, panel: &Panel, regressors: &[&str]) -> Result<Design> {
        let mut d = Design::from_columns(panel, &self.outcome, regressors)?;
        if let Some(sample) = &self.sample {
            let keep: Vec<bool> = d.rows.iter().map(|&r| sample.keeps(panel.origin(r), panel.dest(r))).collect();
            let filter = |v: &mut Vec<f64>| {
                let mut it = keep.iter();
                v.retain(|_| *it.next().unwrap());
            };
            filter(&mut d.y);
            d.x.iter_mut().for_each(filter);
            let mut it = keep.iter();
            d.rows.retain(|_| *it.next().unwrap());
        }
        if d.rows.is_empty() {
            return Err(Error::validation("no complete rows for the gravity regression"));
        }
        Ok(d)
    }

    fn names(&self) -> Vec<&str> {
        self.regressors.iter().map(String::as_str).collect()
    }
}

/// Pooled gravity regression.
pub fn static_gravity(panel: &Panel, spec: &GravitySpec) -> Result<FitResult> {
    spec.validate()?;
    let design = spec.design(panel, &spec.names())?;
    Ok(fit(panel, design, &spec.fe, spec.se_engine, 0, &spec.absorb)?.0)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct YearlyCoefficients {
    pub regressor: String,
    pub years: Vec<i32>,
    pub coefficients: Vec<f64>,
    pub se: Vec<f64>,
    /// Years whose interaction was not identified.
    pub omitted: Vec<i32>,
    /// Coefficient and SE of the non-interacted regression.
    pub pooled: (f64, f64),
    /// Joint test that every yearly coefficient is equal.
    pub equality: Option<WaldTest>,
    pub warnings: Vec<String>,
    pub fit: FitResult,
}

/// Interacts the first regressor with year dummies, keeping the remaining
/// regressors and the fixed effects common.
pub fn yearly_coefficients(panel: &Panel, spec: &GravitySpec) -> Result<YearlyCoefficients> {
    spec.validate()?;
    let key = spec.regressors[0].clone();
    let base = spec.design(panel, &spec.names())?;
    let row_years: Vec<i32> = base.rows.iter().map(|&r| panel.year(r)).collect();
    let mut years = row_years.clone();
    years.sort_unstable();
    years.dedup();
    if years.len() < 2 {
        return Err(Error::validation("yearly coefficients need at least two years"));
    }
    let pooled = fit(panel, base.clone(), &spec.fe, spec.se_engine, 0, &spec.absorb)?.0;
    let pooled = pooled.coef(&key).expect("key regressor fitted");

    let mut warnings = Vec::new();
    let mut omitted = Vec::new();
    let name_of = |y: i32| format!("{key}:{y}");
    let interaction = |y: i32| -> Vec<f64> {
        base.x[0].iter().zip(&row_years).map(|(v, &ry)| if ry == y { *v } else { 0.0 }).collect()
    };
    let mut active: Vec<i32> = Vec::new();
    for &y in &years {
        let col = interaction(y);
        let vals: Vec<f64> = col.iter().zip(&row_years).filter(|(_, &ry)| ry == y).map(|(v, _)| *v).collect();
        if vals.iter().all(|v| *v == vals[0]) {
            let msg = format!("{y}: `{key}` does not vary; coefficient omitted");
            warn!("{msg}");
            warnings.push(msg);
            omitted.push(y);
        } else {
            active.push(y);
        }
    }
    let fitted = loop {
        if active.is_empty() {
            return Err(Error::validation(format!("`{key}` is not identified in any year")));
        }
        let mut d = base.clone();
        let controls = d.x.split_off(1);
        let control_names = d.names.split_off(1);
        d.x = active.iter().map(|&y| interaction(y)).chain(controls).collect();
        d.names = active.iter().map(|&y| name_of(y)).chain(control_names).collect();
        match fit(panel, d, &spec.fe, spec.se_engine, 0, &spec.absorb) {
            Ok((f, _)) => break f,
            Err(Error::RankDeficient(name)) => match active.iter().position(|&y| name_of(y) == name) {
                Some(i) => {
                    let y = active.remove(i);
                    let msg = format!("{y}: `{key}` absorbed by the fixed effects; coefficient omitted");
                    warn!("{msg}");
                    warnings.push(msg);
                    omitted.push(y);
                }
                None => return Err(Error::RankDeficient(name)),
            },
            Err(e) => return Err(e),
        }
    };
    omitted.sort_unstable();
    let k = active.len();
    let equality = if k >= 2 {
        let mut r = DMatrix::zeros(k - 1, fitted.coefficients.len());
        for i in 1..k {
            r[(i - 1, 0)] = -1.0;
            r[(i - 1, i)] = 1.0;
        }
        match wald_test(&r, &fitted.coefficients, &fitted.vcov, fitted.inference_dof) {
            Ok(w) => Some(w),
            Err(e) => {
                let msg = format!("equality test unavailable: {e}");
                warn!("{msg}");
                warnings.push(msg);
                None
            }
        }
    } else {
        None
    };
    Ok(YearlyCoefficients {
        regressor: key,
        coefficients: fitted.coefficients[..k].to_vec(),
        se: (0..k).map(|i| fitted.se(i)).collect(),
        years: active,
        omitted,
        pooled,
        equality,
        warnings,
        fit: fitted,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct R2Loss {
    pub regressor: String,
    pub r_squared_without: f64,
    /// Percentage points of within R² lost when the regressor is excluded.
    pub loss_pp: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VarianceDecomposition {
    pub r_squared: f64,
    pub n_obs: usize,
    pub losses: Vec<R2Loss>,
}

/// Refits without each regressor in turn on the full model's rows.
pub fn variance_decomposition(panel: &Panel, spec: &GravitySpec) -> Result<VarianceDecomposition> {
    spec.validate()?;
    let base = spec.design(panel, &spec.names())?;
    let (full, _) = fit(panel, base.clone(), &spec.fe, SeEngine::Iid, 0, &spec.absorb)?;
    let mut losses = Vec::with_capacity(base.names.len());
    for (j, name) in base.names.iter().enumerate() {
        let r2 = if base.x.len() == 1 {
            0.0
        } else {
            let mut d = base.clone();
            d.x.remove(j);
            d.names.remove(j);
            fit(panel, d, &spec.fe, SeEngine::Iid, 0, &spec.absorb)?.0.r_squared
        };
        losses.push(R2Loss {
            regressor: name.clone(),
            r_squared_without: r2,
            loss_pp: 100.0 * (full.r_squared - r2),
        });
    }
    Ok(VarianceDecomposition { r_squared: full.r_squared, n_obs: full.n_obs, losses })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Bloc {
    #[serde(rename = "US")]
    Us,
    China,
    #[serde(rename = "Both-closer")]
    BothCloser,
    #[serde(rename = "Both-farther")]
    BothFarther,
    Unclassified,
}

impl fmt::Display for Bloc {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Bloc::Us => "US",
            Bloc::China => "China",
            Bloc::BothCloser => "Both-closer",
            Bloc::BothFarther => "Both-farther",
            Bloc::Unclassified => "Unclassified",
        })
    }
}

impl FromStr for Bloc {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "US" => Ok(Bloc::Us),
            "China" => Ok(Bloc::China),
            "Both-closer" => Ok(Bloc::BothCloser),
            "Both-farther" => Ok(Bloc::BothFarther),
            "Unclassified" => Ok(Bloc::Unclassified),
            other => Err(Error::validation(format!("unknown bloc `{other}`"))),
        }
    }
}

/// Residuals at or below this magnitude count as no change.
pub const BLOC_ZERO: f64 = 1e-9;

impl Bloc {
    /// Applies the sign rule to cost changes toward the first and second
    /// anchor: a cost that falls toward one anchor and rises toward the
    /// other joins the first's bloc.
    pub fn from_costs(toward_first: Option<f64>, toward_second: Option<f64>) -> Bloc {
        let (Some(a), Some(b)) = (toward_first, toward_second) else {
            return Bloc::Unclassified;
        };
        if !(a.abs() > BLOC_ZERO && b.abs() > BLOC_ZERO) {
            return Bloc::Unclassified;
        }
        match (a < 0.0, b < 0.0) {
            (true, false) => Bloc::Us,
            (false, true) => Bloc::China,
            (true, true) => Bloc::BothCloser,
            (false, false) => Bloc::BothFarther,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BlocAssignment {
    pub country: CountryCode,
    pub trade_bloc: Bloc,
    pub geo_bloc: Bloc,
    pub window: (i32, i32),
    /// Trade-cost change (negative of the trade residual) toward each anchor.
    pub trade_cost: (Option<f64>, Option<f64>),
    /// Geopolitical-distance change (negative of the score residual).
    pub geo_cost: (Option<f64>, Option<f64>),
}

/// Residuals of the change in `column` between `t0` and `t1` after origin
/// and destination effects, per directed pair present in both years.
pub fn change_residuals(panel: &Panel, column: &str, (t0, t1): (i32, i32)) -> Result<BTreeMap<(CountryCode, CountryCode), f64>> {
    let values = panel.column(column)?;
    let mut keys = Vec::new();
    let mut change = Vec::new();
    for r in 0..panel.len() {
        if panel.year(r) != t1 {
            continue;
        }
        let Some(before) = panel.row_at(panel.unit(r), t0) else { continue };
        let d = values[r] - values[before];
        if d.is_finite() {
            keys.push((panel.origin(r), panel.dest(r), t1));
            change.push(d);
        }
    }
    if keys.is_empty() {
        return Err(Error::validation(format!("no pair observes `{column}` in both {t0} and {t1}")));
    }
    let mut cols = BTreeMap::new();
    cols.insert("change".to_string(), change.clone());
    let cross = Panel::from_rows(keys.clone(), cols)?;
    let rows: Vec<usize> = (0..cross.len()).collect();
    let opts = AbsorbOptions { tol: 1e-13, drop_singletons: false, ..AbsorbOptions::default() };
    let fe = FeSpec::new(vec![FeKey::Origin, FeKey::Dest])?;
    let a = absorb(&cross, &rows, vec![change], None, &fe, &opts)?;
    Ok(keys.iter().zip(&a.columns[0]).map(|(&(o, d, _), &v)| ((o, d), v)).collect())
}

/// Cost change of `c` toward `anchor`: minus the mean residual over the
/// directions observed.
fn cost_toward(res: &BTreeMap<(CountryCode, CountryCode), f64>, c: CountryCode, anchor: CountryCode) -> Option<f64> {
    let v: Vec<f64> = [res.get(&(c, anchor)), res.get(&(anchor, c))].into_iter().flatten().copied().collect();
    (!v.is_empty()).then(|| -v.iter().sum::<f64>() / v.len() as f64)
}

/// Trade and geopolitical bloc of every country in the panel relative to
/// the two anchors, from `log_trade` and `score` changes over `window`.
pub fn bloc_classification(panel: &Panel, window: (i32, i32), anchors: (CountryCode, CountryCode)) -> Result<Vec<BlocAssignment>> {
    if window.0 >= window.1 {
        return Err(Error::validation(format!("window {}–{} is not increasing", window.0, window.1)));
    }
    if anchors.0 == anchors.1 {
        return Err(Error::validation("the two anchors must differ"));
    }
    for y in [window.0, window.1] {
        if !panel.years().contains(&y) {
            return Err(Error::validation(format!("panel has no rows in {y}")));
        }
    }
    let trade = change_residuals(panel, "log_trade", window)?;
    let geo = change_residuals(panel, "score", window)?;
    for a in [anchors.0, anchors.1] {
        if !trade.keys().any(|&(o, d)| o == a || d == a) {
            return Err(Error::validation(format!("anchor {a} has no trade observed in both years")));
        }
    }
    let mut countries: Vec<CountryCode> = (0..panel.len()).flat_map(|r| [panel.origin(r), panel.dest(r)]).collect();
    countries.sort_unstable();
    countries.dedup();
    Ok(countries
        .into_iter()
        .map(|c| {
            let is_anchor = c == anchors.0 || c == anchors.1;
            let costs = |res: &BTreeMap<_, f64>| {
                if is_anchor {
                    (None, None)
                } else {
                    (cost_toward(res, c, anchors.0), cost_toward(res, c, anchors.1))
                }
            };
            let (trade_cost, geo_cost) = (costs(&trade), costs(&geo));
            BlocAssignment {
                country: c,
                trade_bloc: Bloc::from_costs(trade_cost.0, trade_cost.1),
                geo_bloc: Bloc::from_costs(geo_cost.0, geo_cost.1),
                window,
                trade_cost,
                geo_cost,
            }
        })
        .collect())
}

/// `regressor,coefficient,se`.
pub fn write_coefficients_csv<W: Write>(fit: &FitResult, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["regressor", "coefficient", "se"])?;
    for (i, name) in fit.names.iter().enumerate() {
        w.write_record([name.clone(), fmt_real(fit.coefficients[i]), fmt_real(fit.se(i))])?;
    }
    w.flush()?;
    Ok(())
}

/// `year,coefficient,se`, with empty cells for omitted years.
pub fn write_yearly_csv<W: Write>(y: &YearlyCoefficients, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["year", "coefficient", "se"])?;
    let mut rows: Vec<(i32, f64, f64)> = y.years.iter().enumerate().map(|(i, &yr)| (yr, y.coefficients[i], y.se[i])).collect();
    rows.extend(y.omitted.iter().map(|&yr| (yr, f64::NAN, f64::NAN)));
    rows.sort_by_key(|r| r.0);
    for (yr, c, s) in rows {
        w.write_record([yr.to_string(), fmt_real(c), fmt_real(s)])?;
    }
    w.flush()?;
    Ok(())
}

/// `regressor,r_squared_without,r2_loss_pp` followed by a `full` row.
pub fn write_variance_csv<W: Write>(v: &VarianceDecomposition, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["regressor", "r_squared_without", "r2_loss_pp"])?;
    for l in &v.losses {
        w.write_record([l.regressor.clone(), fmt_real(l.r_squared_without), fmt_real(l.loss_pp)])?;
    }
    w.write_record(["full".to_string(), fmt_real(v.r_squared), String::new()])?;
    w.flush()?;
    Ok(())
}

/// `country,trade_bloc,geo_bloc`.
pub fn write_blocs_csv<W: Write>(blocs: &[BlocAssignment], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["country", "trade_bloc", "geo_bloc"])?;
    for b in blocs {
        w.write_record([b.country.to_string(), b.trade_bloc.to_string(), b.geo_bloc.to_string()])?;
    }
    w.flush()?;
    Ok(())
}
