use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use anyhow::Context;
use clap::{Parser, Subcommand, ValueEnum};
use multiwell::analysis::{self, AnalysisConfig, SweepParameter, SweepSettings};
use serde::Serialize;
use sha2::{Digest, Sha256};

mod render;

#[derive(Parser, Debug)]
#[command(name = "multiwell", version)]
#[command(about = "Instanton tunnelling amplitudes for 1D polynomial multi-well potentials")]
#[command(after_help = "Configuration is a JSON document; run `multiwell print-config` for every field \
with its default. Exit codes: 0 ok, 1 numerical failure, 2 usage or configuration error.")]
struct Cli {
    /// JSON configuration file (defaults to the built-in configuration)
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Write the result here instead of stdout
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Output format; each subcommand has its own default
    #[arg(long, global = true, value_enum)]
    format: Option<Format>,

    /// Suppress progress messages on stderr
    #[arg(long, global = true)]
    quiet: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum Format {
    Json,
    Csv,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run the full pipeline on every adjacent well pair
    Analyze,
    /// Tabulate the resummed overlaps against the 2×2 propagator
    Overlaps {
        #[arg(long)]
        tau_max: Option<f64>,
        #[arg(long)]
        samples: Option<usize>,
        /// Index of the adjacent well pair
        #[arg(long)]
        pair: Option<usize>,
    },
    /// Compare instanton and grid splittings over a parameter list
    Sweep {
        #[arg(long, value_enum)]
        parameter: Option<Param>,
        /// Comma-separated parameter values
        #[arg(long, value_delimiter = ',', num_args = 0..)]
        values: Option<Vec<f64>>,
    },
    /// Diagonalize the Schrödinger operator on a grid
    Oracle {
        #[arg(long)]
        levels: Option<usize>,
    },
    /// Determinant quantities for every pair
    Gy,
    /// Print the configuration in effect, with defaults filled in
    PrintConfig,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum Param {
    Lambda,
    Hbar,
}

impl From<Param> for SweepParameter {
    fn from(p: Param) -> Self {
        match p {
            Param::Lambda => SweepParameter::Lambda,
            Param::Hbar => SweepParameter::Hbar,
        }
    }
}

/// Marks failures that map to exit code 2.
#[derive(Debug)]
struct UsageError(String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

fn usage(msg: impl Into<String>) -> anyhow::Error {
    anyhow::Error::new(UsageError(msg.into()))
}

#[derive(Serialize)]
struct Timestamp {
    unix_seconds: u64,
    wall_time_seconds: f64,
}

#[derive(Serialize)]
struct Provenance {
    tool: &'static str,
    version: &'static str,
    config_sha256: String,
    /// The only field that varies between identical runs.
    timestamp: Timestamp,
}

#[derive(Serialize)]
struct Envelope<'a, T: Serialize> {
    #[serde(flatten)]
    body: &'a T,
    config: &'a AnalysisConfig,
    provenance: Provenance,
}

fn load_config(path: Option<&Path>) -> anyhow::Result<AnalysisConfig> {
    let config = match path {
        None => AnalysisConfig::default(),
        Some(p) => {
            let text = fs::read_to_string(p).map_err(|e| usage(format!("cannot read {}: {e}", p.display())))?;
            serde_json::from_str(&text).map_err(|e| usage(format!("invalid config {}: {e}", p.display())))?
        }
    };
    config.validate().map_err(|e| usage(e.to_string()))?;
    Ok(config)
}

fn config_hash(config: &AnalysisConfig) -> anyhow::Result<String> {
    let canonical = serde_json::to_vec(config)?;
    Ok(format!("{:x}", Sha256::digest(&canonical)))
}

struct Session {
    config: AnalysisConfig,
    out: Option<PathBuf>,
    quiet: bool,
    started: Instant,
}

impl Session {
    fn note(&self, msg: &str) {
        if !self.quiet {
            eprintln!("{msg}");
        }
    }

    fn provenance(&self) -> anyhow::Result<Provenance> {
        Ok(Provenance {
            tool: "multiwell",
            version: env!("CARGO_PKG_VERSION"),
            config_sha256: config_hash(&self.config)?,
            timestamp: Timestamp {
                unix_seconds: SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0),
                wall_time_seconds: self.started.elapsed().as_secs_f64(),
            },
        })
    }

    fn json<T: Serialize>(&self, body: &T) -> anyhow::Result<Vec<u8>> {
        let env = Envelope {
            body,
            config: &self.config,
            provenance: self.provenance()?,
        };
        let mut bytes = serde_json::to_vec_pretty(&env)?;
        bytes.push(b'\n');
        Ok(bytes)
    }

    fn emit(&self, bytes: &[u8], fallback: Option<&str>) -> anyhow::Result<()> {
        let target = self.out.clone().or_else(|| fallback.map(PathBuf::from));
        match target {
            Some(p) => fs::write(&p, bytes).with_context(|| format!("writing {}", p.display())),
            None => {
                let mut stdout = std::io::stdout().lock();
                stdout.write_all(bytes)?;
                stdout.flush()?;
                Ok(())
            }
        }
    }
}

fn run(cli: Cli) -> anyhow::Result<()> {
    let config = load_config(cli.config.as_deref())?;
    let s = Session {
        config,
        out: cli.out,
        quiet: cli.quiet,
        started: Instant::now(),
    };
    let cfg = &s.config;
    match cli.command {
        Command::PrintConfig => {
            let mut bytes = serde_json::to_vec_pretty(cfg)?;
            bytes.push(b'\n');
            s.emit(&bytes, None)
        }
        Command::Analyze => {
            let report = analysis::analyze(cfg)?;
            s.note(&format!(
                "analyzed {} well pair(s) in {:.2} s",
                report.pairs.len(),
                s.started.elapsed().as_secs_f64()
            ));
            let bytes = match cli.format.unwrap_or(Format::Json) {
                Format::Json => s.json(&report)?,
                Format::Csv => render::comparisons_csv(&report.comparisons)?,
            };
            s.emit(&bytes, cfg.outputs.report.as_deref())
        }
        Command::Overlaps { tau_max, samples, pair } => {
            let model = cfg.potential.build()?;
            let wells = analysis::locate_wells(&model, cfg)?;
            let pairs = multiwell::potential::adjacent_pairs(&model, &wells);
            let index = pair.unwrap_or(cfg.overlaps.pair);
            let chosen = pairs
                .get(index)
                .ok_or_else(|| usage(format!("pair {index} out of range ({} pairs)", pairs.len())))?;
            let a = analysis::analyze_pair(&model, &wells, chosen, cfg)?;
            let rows = analysis::overlap_series(
                &a.report.two_level,
                tau_max.or(cfg.overlaps.tau_max),
                samples.unwrap_or(cfg.overlaps.n_samples),
            )
            .map_err(|e| usage(e.to_string()))?;
            s.note(&format!("{} overlap samples", rows.len()));
            let bytes = match cli.format.unwrap_or(Format::Csv) {
                Format::Csv => render::rows_csv(&rows)?,
                Format::Json => s.json(&serde_json::json!({ "two_level": a.report.two_level, "overlaps": rows }))?,
            };
            s.emit(&bytes, cfg.outputs.overlaps.as_deref())
        }
        Command::Sweep { parameter, values } => {
            let settings = match (&cfg.sweep, parameter, values) {
                (_, p, Some(v)) => SweepSettings {
                    parameter: p.map(Into::into).unwrap_or(SweepParameter::Lambda),
                    values: v,
                },
                (Some(c), p, None) => SweepSettings {
                    parameter: p.map(Into::into).unwrap_or(c.parameter),
                    values: c.values.clone(),
                },
                (None, _, None) => return Err(usage("no sweep values given")),
            };
            if settings.values.is_empty() {
                return Err(usage("sweep values list is empty"));
            }
            let rows = analysis::sweep(cfg, &settings)?;
            let failed = rows.iter().filter(|r| r.error.is_some()).count();
            s.note(&format!("{} sweep rows, {failed} failed", rows.len()));
            let bytes = match cli.format.unwrap_or(Format::Csv) {
                Format::Csv => render::rows_csv(&rows)?,
                Format::Json => s.json(&serde_json::json!({ "parameter": settings.parameter, "rows": rows }))?,
            };
            s.emit(&bytes, cfg.outputs.sweep.as_deref())
        }
        Command::Oracle { levels } => {
            let model = cfg.potential.build()?;
            let wells = analysis::locate_wells(&model, cfg)?;
            let c = AnalysisConfig {
                n_levels: levels.or(cfg.n_levels),
                ..cfg.clone()
            };
            let spec = analysis::run_oracle(&model, &wells, &c)?;
            s.note(&format!("{} levels on {} points", spec.energies.len(), spec.x.len()));
            let bytes = match cli.format.unwrap_or(Format::Json) {
                Format::Csv => render::wavefunctions_csv(&spec)?,
                Format::Json => s.json(&serde_json::json!({
                    "grid": spec.grid,
                    "energies": spec.energies,
                    "error_estimates": spec.error_estimates,
                }))?,
            };
            s.emit(&bytes, None)
        }
        Command::Gy => {
            let model = cfg.potential.build()?;
            let wells = analysis::locate_wells(&model, cfg)?;
            let mut out = Vec::new();
            for p in multiwell::potential::adjacent_pairs(&model, &wells) {
                out.push(analysis::analyze_pair(&model, &wells, &p, cfg)?.report.gy);
            }
            let bytes = match cli.format.unwrap_or(Format::Json) {
                Format::Csv => render::rows_csv(&out)?,
                Format::Json => s.json(&serde_json::json!({ "gy": out }))?,
            };
            s.emit(&bytes, None)
        }
    }
}

fn classify(err: &anyhow::Error) -> (u8, String) {
    if err.downcast_ref::<UsageError>().is_some() {
        return (2, "config".to_string());
    }
    if let Some(e) = err.downcast_ref::<multiwell::Error>() {
        let code = if matches!(e, multiwell::Error::InvalidInput(_)) { 2 } else { 1 };
        return (code, e.kind().to_string());
    }
    (1, "io".to_string())
}

fn fail(code: u8, kind: &str, message: &str) -> ExitCode {
    let body = serde_json::json!({ "error": { "kind": kind, "message": message, "exit_code": code } });
    eprintln!("{body}");
    ExitCode::from(code)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                let _ = e.print();
                return ExitCode::SUCCESS;
            }
            return fail(2, "usage", &e.render().to_string());
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            let (code, kind) = classify(&err);
            fail(code, &kind, &format!("{err:#}"))
        }
    }
}
