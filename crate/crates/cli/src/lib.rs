//! Command-line runner: configuration, thread budget, subcommand dispatch
//! and CSV/JSON output stamped with the config digest and tool version.

pub mod commands;
pub mod config;

use std::io::Write;
use std::path::{Path, PathBuf};

use serde_json::{json, Value};

use commands::{Command, Report};
use config::RunConfig;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");
pub const THREADS_ENV: &str = "FRACHEAT_THREADS";

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("configuration error:\n  {}", .0.join("\n  "))]
    Config(Vec<String>),
    #[error("computation failed: {0}")]
    Compute(String),
    #[error("cannot write output: {0}")]
    Io(#[from] std::io::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Compute(_) | CliError::Io(_) => 1,
        }
    }
}

/// Command-line overrides, applied on top of the file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub threads: Option<usize>,
    pub out: Option<PathBuf>,
}

pub fn load_config(path: Option<&Path>, overrides: &Overrides) -> Result<RunConfig, CliError> {
    let mut cfg = match path {
        Some(p) => {
            let text = std::fs::read_to_string(p)
                .map_err(|e| CliError::Config(vec![format!("{}: {e}", p.display())]))?;
            config::parse_config(&text).map_err(CliError::Config)?
        }
        None => RunConfig::default(),
    };
    if let Some(seed) = overrides.seed {
        cfg.seed = seed;
    }
    if overrides.out.is_some() {
        cfg.out = overrides.out.clone();
    }
    Ok(cfg)
}

/// Flag, then environment, then the config file.
pub fn thread_budget(flag: Option<usize>, cfg: &RunConfig) -> Result<Option<usize>, CliError> {
    if flag.is_some() {
        return Ok(flag);
    }
    match std::env::var(THREADS_ENV) {
        Ok(v) => v
            .trim()
            .parse::<usize>()
            .map(Some)
            .map_err(|_| CliError::Config(vec![format!("{THREADS_ENV}: expected a positive integer, got {v:?}")])),
        Err(_) => Ok(cfg.threads),
    }
}

pub fn write_csv(report: &Report, digest: &str, sink: impl Write) -> Result<(), CliError> {
    let mut w = csv::Writer::from_writer(sink);
    let mut header: Vec<&str> = report.columns.clone();
    header.extend(["config_digest", "version"]);
    w.write_record(&header).map_err(csv_error)?;
    for row in &report.rows {
        let mut record: Vec<String> = row.iter().map(|v| format_number(*v)).collect();
        record.push(digest.to_string());
        record.push(VERSION.to_string());
        w.write_record(&record).map_err(csv_error)?;
    }
    w.flush()?;
    Ok(())
}

/// Shortest round-trip text, in exponent form outside `[1e-4, 1e15)`.
pub fn format_number(v: f64) -> String {
    let a = v.abs();
    if v == 0.0 || !v.is_finite() || (1e-4..1e15).contains(&a) {
        v.to_string()
    } else {
        format!("{v:e}")
    }
}

fn csv_error(e: csv::Error) -> CliError {
    CliError::Io(std::io::Error::other(e))
}

pub fn summary(command: Command, cfg: &RunConfig, report: &Report) -> Value {
    let mut s = serde_json::Map::new();
    s.insert("subcommand".into(), json!(command.name()));
    s.insert("version".into(), json!(VERSION));
    s.insert("config_digest".into(), json!(cfg.digest(command.name())));
    s.insert("seed".into(), json!(cfg.seed));
    s.insert("rows".into(), json!(report.rows.len()));
    s.extend(report.summary.clone());
    Value::Object(s)
}

/// `<out>.summary.json` beside the CSV.
pub fn summary_path(out: &Path) -> PathBuf {
    let mut name = out.file_name().unwrap_or_default().to_os_string();
    name.push(".summary.json");
    out.with_file_name(name)
}

/// Runs `command` and writes its outputs; the digest is echoed on stderr.
pub fn execute(command: Command, cfg: &RunConfig, threads: Option<usize>) -> Result<(), CliError> {
    let problems = cfg.validate_section(command.name());
    if !problems.is_empty() {
        return Err(CliError::Config(problems));
    }
    let report = match threads {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| CliError::Config(vec![format!("threads: {e}")]))?
            .install(|| commands::run(command, cfg))?,
        None => commands::run(command, cfg)?,
    };
    let digest = cfg.digest(command.name());
    let summary = serde_json::to_string_pretty(&summary(command, cfg, &report)).expect("summary serializes");
    match &cfg.out {
        Some(path) => {
            write_csv(&report, &digest, std::fs::File::create(path)?)?;
            std::fs::write(summary_path(path), summary + "\n")?;
        }
        None => match write_csv(&report, &digest, std::io::stdout().lock()) {
            Err(CliError::Io(e)) if e.kind() == std::io::ErrorKind::BrokenPipe => {}
            other => other?,
        },
    }
    eprintln!("config_digest={digest}");
    Ok(())
}
