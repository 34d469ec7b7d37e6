use std::fs::File;
use std::io::BufReader;
use std::path::{Path, PathBuf};

use clap::Args;
use serde::{Deserialize, Serialize};
use serde_json::json;

use super::{add_manifest, sidecar, Outputs};
use crate::country::CountryCode;
use crate::decomposition::{
    decompose_costs, run_counterfactuals, welfare_distribution, write_contributions_csv, write_decomposition_csv,
    write_scenarios_csv, write_welfare_csv, write_welfare_summary_csv, Annualization, Decomposition, Scenario,
};
use crate::equilibrium::{calibrate, matrices_from_tables, SolverOptions, DEFAULT_SIGMA};
use crate::error::{Error, Result};
use crate::events::{
    filter_events, indicator_table, parse_events, read_scores, score_events, write_scores, EventFilter, EventFormat,
    EventRecord, ScoreSeries, CONFLICT_INDICATORS, DEFAULT_DELTA,
};
use crate::gravity::{
    bloc_classification, static_gravity, variance_decomposition, write_blocs_csv, write_coefficients_csv,
    write_variance_csv, write_yearly_csv, yearly_coefficients, GravitySpec,
};
use crate::lp::{block_bootstrap, lp_autocorr, lp_irf, lp_iv, reverse_lp, LpSpec};
use crate::panel::{absorb, build_panel, write_panel_csv, AbsorbOptions, FeSpec, Panel, PanelInputs, PanelManifest, SampleKind, SampleSpec, SeEngine};
use crate::shocks::{self, bootstrap_decomposition, DecomposedIrf};
use crate::synthworld::{generate_world, TradeMode, WorldConfig};
use crate::table::{fmt_real, KeyedTable};

fn open(path: &Path) -> Result<BufReader<File>> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|e| Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display()))))
}

fn context<T>(path: &Path, r: Result<T>) -> Result<T> {
    r.map_err(|e| match e {
        Error::Validation(m) => Error::Validation(format!("{}: {m}", path.display())),
        Error::Parse { location, field, message } => Error::Parse { location, field, message: format!("{}: {message}", path.display()) },
        other => other,
    })
}

fn read_table(path: &Path) -> Result<KeyedTable> {
    context(path, KeyedTable::read_csv(open(path)?))
}

fn read_score_file(path: &Path) -> Result<Vec<ScoreSeries>> {
    context(path, read_scores(open(path)?))
}

fn read_event_file(path: &Path, format: Option<&str>) -> Result<Vec<EventRecord>> {
    let format: EventFormat = match format {
        Some(f) => f.parse()?,
        None if path.extension().is_some_and(|e| e.eq_ignore_ascii_case("json")) => EventFormat::Json,
        None => EventFormat::Csv,
    };
    context(path, parse_events(open(path)?, format))
}

fn required<'a, T>(v: &'a Option<T>, flag: &str) -> Result<&'a T> {
    v.as_ref().ok_or_else(|| Error::validation(format!("missing required parameter `{flag}`")))
}

fn named_path(spec: &str) -> Result<(String, PathBuf)> {
    let (name, path) = spec
        .split_once('=')
        .ok_or_else(|| Error::validation(format!("`{spec}` is not NAME=PATH")))?;
    if name.trim().is_empty() {
        return Err(Error::validation(format!("`{spec}` has an empty name")));
    }
    Ok((name.trim().to_string(), PathBuf::from(path.trim())))
}

fn csv_bytes(write: impl FnOnce(&mut Vec<u8>) -> Result<()>) -> Result<Vec<u8>> {
    let mut v = Vec::new();
    write(&mut v)?;
    Ok(v)
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(default)]
pub struct ScoreArgs {
    /// Event file (CSV or JSON).
    #[arg(long)]
    pub events: Option<PathBuf>,
    /// `csv` or `json`; inferred from the extension when omitted.
    #[arg(long)]
    pub format: Option<String>,
    /// Depreciation of event mass; 1 gives unsmoothed annual scores.
    #[arg(long)]
    pub delta: Option<f64>,
    /// Extend every series to this year.
    #[arg(long)]
    pub end_year: Option<i32>,
    /// Event subset: `non_economic`, `economic_only`, `material_conflict_nonecon` or `custom:<clauses>`.
    #[arg(long)]
    pub filter: Option<String>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

pub fn score(a: ScoreArgs) -> Result<Outputs> {
    let out = required(&a.out, "out")?.clone();
    let delta = a.delta.unwrap_or(DEFAULT_DELTA);
    let filter: Option<EventFilter> = a.filter.as_deref().map(str::parse).transpose()?;
    let mut events = read_event_file(required(&a.events, "events")?, a.format.as_deref())?;
    let total = events.len();
    if let Some(f) = &filter {
        events = filter_events(&events, f);
    }
    let series = score_events(&events, delta, a.end_year)?;
    let mut o = Outputs::default();
    o.add(out.clone(), csv_bytes(|w| write_scores(&series, w))?);
    let params = json!({ "events": a.events, "format": a.format, "delta": delta, "end_year": a.end_year, "filter": a.filter, "out": out });
    add_manifest(&mut o, sidecar(&out), "score", &params, json!({ "events_read": total, "events_scored": events.len(), "dyads": series.len() }))?;
    Ok(o)
}

/// Tables joined into the dyad-year panel.
#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(default)]
pub struct PanelInputArgs {
    /// Trade values `origin,dest,year,value`.
    #[arg(long)]
    pub trade: Option<PathBuf>,
    /// Score file written by `score`.
    #[arg(long)]
    pub scores: Option<PathBuf>,
    /// Ad valorem tariff rates `origin,dest,year,value`.
    #[arg(long)]
    pub tariffs: Option<PathBuf>,
    /// 0/1 sanction indicators.
    #[arg(long)]
    pub sanctions: Option<PathBuf>,
    /// Extra column from a keyed table, NAME=PATH (repeatable).
    #[arg(long = "control", value_name = "NAME=PATH")]
    pub controls: Option<Vec<String>>,
    /// Further score series as a column, NAME=PATH (repeatable).
    #[arg(long = "extra-score", value_name = "NAME=PATH")]
    pub extra_scores: Option<Vec<String>>,
    /// Event file whose material-conflict indicators become columns.
    #[arg(long)]
    pub conflict_events: Option<PathBuf>,
    /// `all`, `major_major` or `major_nonmajor`.
    #[arg(long)]
    pub sample: Option<String>,
}

fn load_panel(a: &PanelInputArgs) -> Result<Panel> {
    let trade = read_table(required(&a.trade, "trade")?)?;
    let scores = read_score_file(required(&a.scores, "scores")?)?;
    let tariffs = a.tariffs.as_deref().map(read_table).transpose()?;
    let sanctions = a.sanctions.as_deref().map(read_table).transpose()?;
    let sample: SampleKind = a.sample.as_deref().unwrap_or("all").parse()?;
    let mut controls: Vec<(String, KeyedTable)> = Vec::new();
    for spec in a.controls.iter().flatten() {
        let (name, path) = named_path(spec)?;
        controls.push((name, read_table(&path)?));
    }
    if let Some(path) = &a.conflict_events {
        let events = read_event_file(path, None)?;
        controls.extend(indicator_table(&events, &CONFLICT_INDICATORS));
    }
    let mut extra: Vec<(String, Vec<ScoreSeries>)> = Vec::new();
    for spec in a.extra_scores.iter().flatten() {
        let (name, path) = named_path(spec)?;
        extra.push((name, read_score_file(&path)?));
    }
    let mut inputs = PanelInputs::new(&trade, &scores, SampleSpec::new(sample));
    inputs.tariffs = tariffs.as_ref();
    inputs.sanctions = sanctions.as_ref();
    inputs.controls = controls.iter().map(|(n, t)| (n.as_str(), t)).collect();
    inputs.extra_scores = extra.iter().map(|(n, s)| (n.as_str(), s.as_slice())).collect();
    let panel = build_panel(&inputs)?;
    if panel.is_empty() {
        return Err(Error::validation("no trade row matches a scored dyad"));
    }
    Ok(panel)
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(default)]
pub struct PanelArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub inputs: PanelInputArgs,
    /// Columns to residualize on the fixed effects, added as `<name>_resid`.
    #[arg(long, value_delimiter = ',')]
    pub residualize: Option<Vec<String>>,
    /// Fixed effects, e.g. `origin_year+dest_year+dyad`.
    #[arg(long)]
    pub fe: Option<String>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

pub fn panel(a: PanelArgs) -> Result<Outputs> {
    let out = required(&a.out, "out")?.clone();
    let fe: FeSpec = a.fe.as_deref().unwrap_or("origin_year+dest_year+dyad").parse()?;
    let panel = load_panel(&a.inputs)?;
    let names = a.residualize.clone().unwrap_or_default();
    let opts = AbsorbOptions::default();
    let mut residualized = Vec::new();
    let mut sweeps = 0;
    let mut singletons = 0;
    for name in &names {
        let col = panel.column(name)?;
        let rows: Vec<usize> = (0..panel.len()).filter(|&r| col[r].is_finite()).collect();
        let values = rows.iter().map(|&r| col[r]).collect();
        let ab = absorb(&panel, &rows, vec![values], None, &fe, &opts)?;
        let mut full = vec![f64::NAN; panel.len()];
        for (&r, v) in ab.rows.iter().zip(&ab.columns[0]) {
            full[r] = *v;
        }
        sweeps = sweeps.max(ab.sweeps);
        singletons = singletons.max(ab.singletons_dropped);
        residualized.push((format!("{name}_resid"), full));
    }
    let mut o = Outputs::default();
    o.add(out.clone(), csv_bytes(|w| write_panel_csv(&panel, &residualized, w))?);
    let manifest = PanelManifest {
        fe: fe.to_string(),
        tol: opts.tol,
        max_sweeps: opts.max_sweeps,
        sweeps,
        singletons_dropped: singletons,
        rows: panel.len(),
        zero_trade_dropped: panel.zero_trade_dropped,
        residualized: names,
    };
    add_manifest(&mut o, sidecar(&out), "panel", &a, manifest)?;
    Ok(o)
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(default)]
pub struct GravityArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub inputs: PanelInputArgs,
    /// Regressors; the first one is interacted with years. Defaults to the
    /// score plus whichever of distance, contiguity and tariffs are loaded.
    #[arg(long, value_delimiter = ',')]
    pub regressors: Option<Vec<String>>,
    #[arg(long)]
    pub fe: Option<String>,
    /// `cluster`, `iid`, `dk` or `dk:<lags>`.
    #[arg(long)]
    pub se: Option<String>,
    /// Also estimate year-interacted coefficients.
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub yearly: Option<bool>,
    /// Also report R² losses per regressor.
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub variance: Option<bool>,
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
}

pub fn gravity(a: GravityArgs) -> Result<Outputs> {
    let dir = required(&a.out_dir, "out_dir")?.clone();
    let panel = load_panel(&a.inputs)?;
    let regressors = a.regressors.clone().unwrap_or_else(|| {
        std::iter::once("score")
            .chain(["log_distance", "contiguity", "log_gross_tariff"].into_iter().filter(|c| panel.has_column(c)))
            .map(String::from)
            .collect()
    });
    let mut spec = GravitySpec::new(&regressors);
    if let Some(fe) = &a.fe {
        spec.fe = fe.parse()?;
    }
    if let Some(se) = &a.se {
        spec.se_engine = se.parse()?;
    }
    spec.validate()?;
    let pooled = static_gravity(&panel, &spec)?;
    let mut o = Outputs::default();
    o.add(dir.join("coefficients.csv"), csv_bytes(|w| write_coefficients_csv(&pooled, w))?);
    let mut diagnostics = json!({ "n_obs": pooled.n_obs, "r_squared_within": pooled.r_squared, "n_clusters": pooled.n_clusters });
    if a.yearly.unwrap_or(false) {
        let y = yearly_coefficients(&panel, &spec)?;
        o.add(dir.join("yearly.csv"), csv_bytes(|w| write_yearly_csv(&y, w))?);
        diagnostics["yearly_equality"] = serde_json::to_value(y.equality)?;
        diagnostics["yearly_warnings"] = serde_json::to_value(&y.warnings)?;
    }
    if a.variance.unwrap_or(false) {
        let v = variance_decomposition(&panel, &spec)?;
        o.add(dir.join("variance.csv"), csv_bytes(|w| write_variance_csv(&v, w))?);
    }
    let params = json!({ "inputs": a.inputs, "spec": spec, "yearly": a.yearly.unwrap_or(false), "variance": a.variance.unwrap_or(false) });
    add_manifest(&mut o, dir.join("manifest.json"), "gravity", &params, diagnostics)?;
    Ok(o)
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(default)]
pub struct LpArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub inputs: PanelInputArgs,
    #[arg(long)]
    pub outcome: Option<String>,
    #[arg(long)]
    pub shock: Option<String>,
    /// First and last horizon.
    #[arg(long, num_args = 2, value_names = ["MIN", "MAX"], allow_negative_numbers = true)]
    pub horizons: Option<Vec<i32>>,
    #[arg(long)]
    pub lags: Option<usize>,
    #[arg(long)]
    pub fe: Option<String>,
    /// `dk`, `dk:<lags>`, `cluster` or `iid`.
    #[arg(long)]
    pub se: Option<String>,
    /// Band coverage.
    #[arg(long)]
    pub level: Option<f64>,
    /// Also project the shock on itself.
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub autocorr: Option<bool>,
    /// Instrument the shock with these columns (`a,b` or `instruments=a,b`).
    #[arg(long, value_delimiter = ',')]
    pub iv: Option<Vec<String>>,
    /// Transitory and permanent responses from the shock autocorrelation.
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub decompose: Option<bool>,
    /// Dyad block-bootstrap draws (0 for none).
    #[arg(long)]
    pub bootstrap: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Reverse projection of the score on trade instrumented by this column.
    #[arg(long)]
    pub reverse: Option<String>,
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
}

pub fn lp(a: LpArgs) -> Result<Outputs> {
    let dir = required(&a.out_dir, "out_dir")?.clone();
    let mut spec = LpSpec::new(a.outcome.as_deref().unwrap_or("log_trade"), a.shock.as_deref().unwrap_or("score"));
    if let Some(h) = &a.horizons {
        spec = spec.horizons(h[0], h[1]);
    }
    if let Some(l) = a.lags {
        spec = spec.lags(l);
    }
    if let Some(fe) = &a.fe {
        spec = spec.fe(fe.parse()?);
    }
    if let Some(se) = &a.se {
        spec = spec.se(se.parse::<SeEngine>()?);
    }
    if let Some(level) = a.level {
        spec.level = level;
    }
    if let Some(z) = &a.iv {
        spec.instruments = z.iter().map(|s| s.strip_prefix("instruments=").unwrap_or(s).to_string()).collect();
    }
    spec.validate()?;
    let draws = a.bootstrap.unwrap_or(0);
    let seed = a.seed.unwrap_or(0);
    let want_decompose = a.decompose.unwrap_or(false);
    let want_acf = a.autocorr.unwrap_or(false) || want_decompose;
    if want_decompose && spec.h_max < 0 {
        return Err(Error::validation("decomposition needs nonnegative horizons"));
    }
    let panel = load_panel(&a.inputs)?;

    let irf = if spec.instruments.is_empty() { lp_irf(&panel, &spec)? } else { lp_iv(&panel, &spec)? };
    let mut o = Outputs::default();
    o.add(dir.join("irf.csv"), csv_bytes(|w| irf.write_csv(w))?);
    let mut warnings = irf.warnings.clone();
    let acf_spec = spec.clone().horizons(0, spec.h_max.max(0));
    if want_acf {
        let acf = lp_autocorr(&panel, &spec.shock, &acf_spec)?;
        warnings.extend(acf.warnings.iter().cloned());
        o.add(dir.join("autocorr.csv"), csv_bytes(|w| acf.write_csv(w))?);
        if want_decompose {
            let dec: DecomposedIrf = if draws > 0 {
                bootstrap_decomposition(&panel, &acf_spec, &spec, draws, seed)?
            } else {
                shocks::decompose(&acf, &irf)?
            };
            o.add(dir.join("decomposition.csv"), csv_bytes(|w| dec.write_csv(w))?);
        }
    }
    let mut failed_draws = None;
    if draws > 0 {
        let bands = block_bootstrap(&panel, &spec, draws, seed)?;
        failed_draws = Some(bands.failed);
        o.add(
            dir.join("bootstrap.csv"),
            csv_bytes(|buf| {
                let mut w = csv::Writer::from_writer(buf);
                w.write_record(["horizon", "low", "high", "draws"])?;
                for i in 0..bands.horizons.len() {
                    w.write_record([bands.horizons[i].to_string(), fmt_real(bands.low[i]), fmt_real(bands.high[i]), bands.n_draws[i].to_string()])?;
                }
                w.flush()?;
                Ok(())
            })?,
        );
    }
    if let Some(z) = &a.reverse {
        let rev_spec = LpSpec { instruments: Vec::new(), ..spec.clone() };
        let rev = reverse_lp(&panel, &spec.outcome, &spec.shock, z, &rev_spec)?;
        warnings.extend(rev.warnings.iter().cloned());
        o.add(dir.join("reverse.csv"), csv_bytes(|w| rev.write_csv(w))?);
    }
    let params = json!({
        "inputs": a.inputs,
        "spec": spec,
        "autocorr": want_acf,
        "decompose": want_decompose,
        "bootstrap": draws,
        "seed": seed,
        "reverse": a.reverse,
    });
    let diag = json!({ "rows": panel.len(), "warnings": warnings, "first_stage_f": irf.first_stage_f, "failed_draws": failed_draws });
    add_manifest(&mut o, dir.join("manifest.json"), "lp", &params, diag)?;
    Ok(o)
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(default)]
pub struct BlocArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub inputs: PanelInputArgs,
    /// Start and end year of the comparison.
    #[arg(long, num_args = 2, value_names = ["FROM", "TO"])]
    pub window: Option<Vec<i32>>,
    /// The two anchors, e.g. `USA,CHN`.
    #[arg(long, value_delimiter = ',')]
    pub anchors: Option<Vec<String>>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

pub fn bloc(a: BlocArgs) -> Result<Outputs> {
    let out = required(&a.out, "out")?.clone();
    let window = required(&a.window, "window")?;
    let anchors = a.anchors.clone().unwrap_or_else(|| vec!["USA".into(), "CHN".into()]);
    if anchors.len() != 2 {
        return Err(Error::validation("exactly two anchors are needed"));
    }
    let (x, y) = (CountryCode::new(&anchors[0])?, CountryCode::new(&anchors[1])?);
    let panel = load_panel(&a.inputs)?;
    let blocs = bloc_classification(&panel, (window[0], window[1]), (x, y))?;
    let mut o = Outputs::default();
    o.add(out.clone(), csv_bytes(|w| write_blocs_csv(&blocs, w))?);
    add_manifest(&mut o, sidecar(&out), "bloc", &a, json!({ "countries": blocs.len() }))?;
    Ok(o)
}

/// Inputs shared by `decompose` and `counterfactual`.
#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(default)]
pub struct CostArgs {
    /// Trade values including domestic absorption, gross of tariffs.
    #[arg(long)]
    pub trade: Option<PathBuf>,
    /// Ad valorem tariff rates.
    #[arg(long)]
    pub tariffs: Option<PathBuf>,
    #[arg(long)]
    pub scores: Option<PathBuf>,
    /// Decomposition CSV from `lp --decompose`; its permanent path is used.
    #[arg(long)]
    pub irf: Option<PathBuf>,
    #[arg(long)]
    pub sigma: Option<f64>,
    #[arg(long)]
    pub base_year: Option<i32>,
    /// Last year decomposed (default: last trade year).
    #[arg(long)]
    pub end_year: Option<i32>,
}

struct CostInputs {
    trade: KeyedTable,
    tariffs: Option<KeyedTable>,
    decomposition: Decomposition,
}

fn load_costs(a: &CostArgs) -> Result<CostInputs> {
    let trade = read_table(required(&a.trade, "trade")?)?;
    let tariffs = a.tariffs.as_deref().map(read_table).transpose()?;
    let scores = read_score_file(required(&a.scores, "scores")?)?;
    let irf_path = required(&a.irf, "irf")?;
    let irf = context(irf_path, DecomposedIrf::read_csv(open(irf_path)?))?;
    let sigma = a.sigma.unwrap_or(DEFAULT_SIGMA);
    let t0 = *required(&a.base_year, "base_year")?;
    let t1 = match a.end_year {
        Some(y) => y,
        None => *trade.years().last().ok_or_else(|| Error::validation("trade table has no yearly rows"))?,
    };
    let decomposition = decompose_costs(&trade, tariffs.as_ref(), &scores, &irf.permanent, sigma, (t0, t1))?;
    Ok(CostInputs { trade, tariffs, decomposition })
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(default)]
pub struct DecomposeArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub costs: CostArgs,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

pub fn decompose(a: DecomposeArgs) -> Result<Outputs> {
    let out = required(&a.out, "out")?.clone();
    let c = load_costs(&a.costs)?;
    let mut o = Outputs::default();
    o.add(out.clone(), csv_bytes(|w| write_decomposition_csv(&c.decomposition, w))?);
    let diag = json!({ "countries": c.decomposition.countries.len(), "warnings": c.decomposition.warnings, "missing_scores": c.decomposition.missing_scores.len() });
    add_manifest(&mut o, sidecar(&out), "decompose", &a, diag)?;
    Ok(o)
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(default)]
pub struct CounterfactualArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub costs: CostArgs,
    /// Subset of `baseline,no_geo,no_tariff,only_unobserved`.
    #[arg(long, value_delimiter = ',')]
    pub scenarios: Option<Vec<String>>,
    #[arg(long)]
    pub damping: Option<f64>,
    #[arg(long)]
    pub tol: Option<f64>,
    #[arg(long)]
    pub max_iter: Option<usize>,
    /// `geometric` or `arithmetic` annualized contributions.
    #[arg(long)]
    pub annualization: Option<String>,
    /// Year of the welfare comparison (default: last year).
    #[arg(long)]
    pub welfare_year: Option<i32>,
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
}

pub fn counterfactual(a: CounterfactualArgs) -> Result<Outputs> {
    let dir = required(&a.out_dir, "out_dir")?.clone();
    let scenarios: Vec<Scenario> = match &a.scenarios {
        Some(s) => s.iter().map(|x| x.parse()).collect::<Result<_>>()?,
        None => Scenario::ALL.to_vec(),
    };
    let annualization = match a.annualization.as_deref().unwrap_or("geometric") {
        "geometric" => Annualization::Geometric,
        "arithmetic" => Annualization::Arithmetic,
        other => return Err(Error::validation(format!("unknown annualization `{other}`"))),
    };
    let mut opts = SolverOptions::default();
    opts.damping = a.damping.unwrap_or(opts.damping);
    opts.tol = a.tol.unwrap_or(opts.tol);
    opts.max_iter = a.max_iter.unwrap_or(opts.max_iter);
    let c = load_costs(&a.costs)?;
    let dec = &c.decomposition;
    let (countries, values, tariff) = matrices_from_tables(&c.trade, c.tariffs.as_ref(), dec.base_year)?;
    let (world, balance) = calibrate(countries, &values, &tariff, dec.sigma)?;
    let suite = run_counterfactuals(&world, dec, &scenarios, &opts, annualization)?;
    let welfare_year = a.welfare_year.unwrap_or_else(|| dec.years.last().map_or(dec.base_year, |d| d.year));
    let comparisons = match suite.scenario(Scenario::Baseline) {
        Some(base) => suite
            .scenarios
            .iter()
            .filter(|s| s.scenario != Scenario::Baseline)
            .map(|s| welfare_distribution(base, s, welfare_year))
            .collect::<Result<Vec<_>>>()?,
        None => Vec::new(),
    };
    let mut o = Outputs::default();
    o.add(dir.join("decomposition.csv"), csv_bytes(|w| write_decomposition_csv(dec, w))?);
    o.add(dir.join("scenarios.csv"), csv_bytes(|w| write_scenarios_csv(&suite, w))?);
    o.add(dir.join("welfare.csv"), csv_bytes(|w| write_welfare_csv(&suite, w))?);
    o.add(dir.join("contributions.csv"), csv_bytes(|w| write_contributions_csv(&suite, w))?);
    o.add(dir.join("welfare_summary.csv"), csv_bytes(|w| write_welfare_summary_csv(&comparisons, w))?);
    let params = json!({
        "costs": a.costs,
        "sigma": dec.sigma,
        "scenarios": scenarios,
        "solver": opts,
        "numeraire": "world labor income",
        "annualization": annualization,
        "welfare_year": welfare_year,
    });
    let max_iter = suite.scenarios.iter().flat_map(|s| s.iterations.iter().copied()).max();
    let max_resid = suite.scenarios.iter().flat_map(|s| s.residuals.iter().copied()).fold(0.0, f64::max);
    let diag = json!({
        "balance": balance,
        "warnings": dec.warnings,
        "max_iterations": max_iter,
        "max_residual": max_resid,
    });
    add_manifest(&mut o, dir.join("manifest.json"), "counterfactual", &params, diag)?;
    Ok(o)
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
pub struct SynthArgs {
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub countries: Option<usize>,
    #[arg(long)]
    pub years: Option<usize>,
    #[arg(long)]
    pub burn_in: Option<usize>,
    #[arg(long)]
    pub first_year: Option<i32>,
    /// `gravity` or `armington`.
    #[arg(long)]
    pub mode: Option<String>,
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
}

/// The `[synth]` table holds world parameters plus `out_dir`.
pub fn synth(section: Option<toml::Value>, a: SynthArgs) -> Result<Outputs> {
    let mut table = match section {
        Some(toml::Value::Table(t)) => t,
        Some(_) => return Err(Error::validation("config section `synth` must be a table")),
        None => toml::Table::new(),
    };
    let dir_cfg = table.remove("out_dir").map(|v| v.as_str().map(PathBuf::from).ok_or_else(|| Error::validation("`out_dir` must be a string"))).transpose()?;
    let mut cfg: WorldConfig = toml::Value::Table(table).try_into().map_err(|e| Error::validation(format!("synth config: {e}")))?;
    let dir = a.out_dir.clone().or(dir_cfg).ok_or_else(|| Error::validation("missing required parameter `out_dir`"))?;
    if let Some(v) = a.seed {
        cfg.seed = v;
    }
    if let Some(v) = a.countries {
        cfg.n_countries = v;
    }
    if let Some(v) = a.years {
        cfg.years = v;
    }
    if let Some(v) = a.burn_in {
        cfg.burn_in = v;
    }
    if let Some(v) = a.first_year {
        cfg.first_year = v;
    }
    if let Some(m) = &a.mode {
        cfg.mode = match m.as_str() {
            "gravity" => TradeMode::Gravity,
            "armington" => TradeMode::Armington,
            other => return Err(Error::validation(format!("unknown trade mode `{other}`"))),
        };
    }
    let world = generate_world(&cfg)?;
    let tmp = tempdir_in_memory(&world)?;
    let mut o = Outputs::default();
    for (name, bytes) in tmp {
        o.add(dir.join(name), bytes);
    }
    let diag = json!({ "events": world.events.len(), "trade_rows": world.trade.len(), "beta_exact": world.truth.beta_exact });
    add_manifest(&mut o, dir.join("manifest.json"), "synth", &cfg, diag)?;
    Ok(o)
}

/// Every file `SynthWorld::write_dir` would produce, rendered in memory.
fn tempdir_in_memory(world: &crate::synthworld::SynthWorld) -> Result<Vec<(&'static str, Vec<u8>)>> {
    Ok(vec![
        ("events.csv", csv_bytes(|w| crate::events::write_events(&world.events, w))?),
        ("trade.csv", csv_bytes(|w| world.trade.write_csv(w))?),
        ("tariffs.csv", csv_bytes(|w| world.tariffs.write_csv(w))?),
        ("sanctions.csv", csv_bytes(|w| world.sanctions.write_csv(w))?),
        ("log_distance.csv", csv_bytes(|w| world.log_distance.write_csv(w))?),
        ("contiguity.csv", csv_bytes(|w| world.contiguity.write_csv(w))?),
        ("predicted_trade.csv", csv_bytes(|w| world.predicted_trade.write_csv(w))?),
        ("ground_truth.json", {
            let mut b = serde_json::to_vec_pretty(&world.truth)?;
            b.push(b'\n');
            b
        }),
    ])
}
