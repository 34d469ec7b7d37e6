//! Command-line front end.
//!
//! Every command resolves its parameters from an optional TOML file (one
//! table per command) overlaid by flags, validates and computes everything
//! in memory, and only then writes its outputs together with a JSON
//! manifest echoing the resolved parameters. A failed run leaves no files.

mod commands;

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::{Map, Value};

use crate::error::{Error, Result};

pub use commands::{
    BlocArgs, CounterfactualArgs, DecomposeArgs, GravityArgs, LpArgs, PanelArgs, PanelInputArgs, ScoreArgs, SynthArgs,
};

#[derive(Debug, Parser)]
#[command(name = "geotrade", version, about = "Geopolitical alignment, trade dynamics and counterfactuals")]
pub struct Cli {
    /// TOML file with one table per command, e.g. `[lp]`; flags override it.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Worker threads for parallel estimation (default: all cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// More log output (repeatable).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
    /// Errors only.
    #[arg(short, long, global = true)]
    pub quiet: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Dynamic alignment scores from an event file.
    Score(ScoreArgs),
    /// Joined dyad-year panel with optional residualized columns.
    Panel(PanelArgs),
    /// Static gravity, yearly coefficients and R² losses.
    Gravity(GravityArgs),
    /// Local projections, shock autocorrelation, IV, bootstrap and shock decomposition.
    Lp(LpArgs),
    /// Trade and geopolitical bloc labels relative to two anchors.
    Bloc(BlocArgs),
    /// Geopolitical, tariff and unobserved trade-cost factors.
    Decompose(DecomposeArgs),
    /// Four-scenario counterfactual suite with contributions and welfare.
    Counterfactual(CounterfactualArgs),
    /// Synthetic world with known ground truth.
    Synth(SynthArgs),
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Score(_) => "score",
            Command::Panel(_) => "panel",
            Command::Gravity(_) => "gravity",
            Command::Lp(_) => "lp",
            Command::Bloc(_) => "bloc",
            Command::Decompose(_) => "decompose",
            Command::Counterfactual(_) => "counterfactual",
            Command::Synth(_) => "synth",
        }
    }
}

/// Runs the tool on `args` (program name first) and returns the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    let level = match (cli.quiet, cli.verbose) {
        (true, _) => log::LevelFilter::Error,
        (false, 0) => log::LevelFilter::Warn,
        (false, 1) => log::LevelFilter::Info,
        _ => log::LevelFilter::Debug,
    };
    let _ = env_logger::Builder::new().filter_level(level).format_timestamp(None).try_init();
    match execute(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn execute(cli: Cli) -> Result<()> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(Error::validation("--threads must be at least 1"));
        }
        // A pool already built by an earlier call in this process is kept.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    let config = match &cli.config {
        Some(p) => {
            let text = fs::read_to_string(p)?;
            let v: toml::Table = toml::from_str(&text).map_err(|e| Error::validation(format!("{}: {e}", p.display())))?;
            Some(v)
        }
        None => None,
    };
    let section = config.as_ref().and_then(|c| c.get(cli.command.name())).cloned();
    let outputs = match cli.command {
        Command::Score(a) => commands::score(merge(section, a)?),
        Command::Panel(a) => commands::panel(merge(section, a)?),
        Command::Gravity(a) => commands::gravity(merge(section, a)?),
        Command::Lp(a) => commands::lp(merge(section, a)?),
        Command::Bloc(a) => commands::bloc(merge(section, a)?),
        Command::Decompose(a) => commands::decompose(merge(section, a)?),
        Command::Counterfactual(a) => commands::counterfactual(merge(section, a)?),
        Command::Synth(a) => commands::synth(section, a),
    }?;
    outputs.commit()
}

/// Overlays the flags given on the command line onto the config table.
/// Unknown config keys are rejected.
fn merge<A: Serialize + DeserializeOwned>(section: Option<toml::Value>, flags: A) -> Result<A> {
    let mut base: Map<String, Value> = match section {
        Some(v) => match serde_json::to_value(v)? {
            Value::Object(m) => m,
            _ => return Err(Error::validation("config section must be a table")),
        },
        None => Map::new(),
    };
    let Value::Object(over) = serde_json::to_value(&flags)? else {
        unreachable!("argument structs serialize to objects")
    };
    let known: Vec<String> = over.keys().cloned().collect();
    if let Some(k) = base.keys().find(|k| !known.contains(k)) {
        return Err(Error::validation(format!("unknown config key `{k}`")));
    }
    for (k, v) in over {
        if !v.is_null() {
            base.insert(k, v);
        }
    }
    serde_json::from_value(Value::Object(base)).map_err(|e| Error::validation(format!("config: {e}")))
}

/// Files produced by a command, written only once everything succeeded.
#[derive(Debug, Default)]
pub struct Outputs {
    files: Vec<(PathBuf, Vec<u8>)>,
}

impl Outputs {
    pub fn add(&mut self, path: PathBuf, bytes: Vec<u8>) {
        self.files.push((path, bytes));
    }

    /// Renders with `write` into memory and queues the bytes for `path`.
    pub fn render(&mut self, path: PathBuf, write: impl FnOnce(&mut Vec<u8>) -> Result<()>) -> Result<()> {
        let mut buf = Vec::new();
        write(&mut buf)?;
        self.add(path, buf);
        Ok(())
    }

    pub fn paths(&self) -> Vec<String> {
        self.files.iter().map(|(p, _)| p.display().to_string()).collect()
    }

    fn commit(self) -> Result<()> {
        for (path, bytes) in &self.files {
            if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
                fs::create_dir_all(dir)?;
            }
            fs::write(path, bytes)?;
        }
        Ok(())
    }
}

/// Run record written next to the outputs.
#[derive(Debug, Serialize)]
pub struct Manifest<'a, P: Serialize, D: Serialize> {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: &'a str,
    pub parameters: &'a P,
    pub outputs: Vec<String>,
    pub diagnostics: D,
}

/// Queues `manifest_path` echoing `parameters` and listing every queued output.
pub fn add_manifest<P: Serialize, D: Serialize>(
    outputs: &mut Outputs,
    manifest_path: PathBuf,
    command: &str,
    parameters: &P,
    diagnostics: D,
) -> Result<()> {
    let m = Manifest {
        tool: env!("CARGO_PKG_NAME"),
        version: env!("CARGO_PKG_VERSION"),
        command,
        parameters,
        outputs: outputs.paths(),
        diagnostics,
    };
    let mut bytes = serde_json::to_vec_pretty(&m)?;
    bytes.push(b'\n');
    outputs.add(manifest_path, bytes);
    Ok(())
}

/// `<file>.manifest.json` beside a single-file output.
pub fn sidecar(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".manifest.json");
    PathBuf::from(s)
}
