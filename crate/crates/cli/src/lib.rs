//! Batch front end: configuration, seeded experiment orchestration and
//! versioned JSON reports.
//!
//! Each subcommand turns a [`RunConfig`] into a `result` object. The report
//! envelope adds the schema version, the resolved configuration and a
//! timestamp; the timestamp is the only field that varies between runs with
//! the same seed and configuration.

pub mod analyze;
pub mod config;
pub mod export;
pub mod find;
pub mod source;
pub mod sweep;
pub mod verify;

use std::fmt;
use std::path::{Path, PathBuf};

use serde_json::{json, Value};

pub use config::{load_config, parse_config, RunConfig};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Find,
    Sweep,
    Analyze,
    Verify,
    Export,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Find => "find",
            Command::Sweep => "sweep",
            Command::Analyze => "analyze",
            Command::Verify => "verify",
            Command::Export => "export",
        }
    }
}

impl fmt::Display for Command {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Why a run did not succeed; each kind has its own exit code.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Failure {
    #[error("config error: {0}")]
    Config(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("assertion failed: {0}")]
    Assertion(String),
}

impl Failure {
    pub fn exit_code(&self) -> i32 {
        match self {
            Failure::Config(_) => 2,
            Failure::Numerical(_) => 3,
            Failure::Assertion(_) => 4,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            Failure::Config(_) => "config",
            Failure::Numerical(_) => "numerical",
            Failure::Assertion(_) => "assertion",
        }
    }

    fn message(&self) -> &str {
        match self {
            Failure::Config(m) | Failure::Numerical(m) | Failure::Assertion(m) => m,
        }
    }

    pub fn to_json(&self) -> Value {
        json!({ "kind": self.kind(), "exit_code": self.exit_code(), "message": self.message() })
    }
}

impl From<loopgeo_core::Error> for Failure {
    fn from(e: loopgeo_core::Error) -> Self {
        use loopgeo_core::Error as E;
        match e {
            E::OracleMismatch(_) => Failure::Assertion(e.to_string()),
            E::InvalidArgument(_) => Failure::Config(e.to_string()),
            _ => Failure::Numerical(e.to_string()),
        }
    }
}

/// What a subcommand produced: its result and any violated assertions.
#[derive(Debug, Clone)]
pub struct Outcome {
    pub result: Value,
    pub assertions: Vec<String>,
    /// One-line human summary for stderr.
    pub summary: String,
}

/// Run-time context not stored in the configuration.
#[derive(Debug, Clone, Default)]
pub struct Context {
    /// Directory against which relative paths in the config are resolved.
    pub base_dir: PathBuf,
    /// `--out`: the report file, or the output directory for `export`.
    pub out: Option<PathBuf>,
}

impl Context {
    pub fn resolve(&self, path: &str) -> PathBuf {
        let p = Path::new(path);
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }
}

pub fn run(cmd: Command, cfg: &RunConfig, ctx: &Context) -> Result<Outcome, Failure> {
    cfg.validate()?;
    match cmd {
        Command::Find => find::run(cfg),
        Command::Sweep => sweep::run(cfg),
        Command::Analyze => analyze::run(cfg, ctx),
        Command::Verify => verify::run(cfg),
        Command::Export => export::run(cfg, ctx),
    }
}

/// A finished report with the exit code it implies.
#[derive(Debug, Clone)]
pub struct Report {
    pub json: Value,
    pub exit_code: i32,
    pub summary: String,
}

pub fn envelope(cmd: Command, cfg: Option<&RunConfig>, result: Option<Value>, failure: Option<&Failure>) -> Value {
    let mut doc = serde_json::Map::new();
    doc.insert("schema".into(), json!(SCHEMA_VERSION));
    doc.insert("command".into(), json!(cmd.name()));
    doc.insert("version".into(), json!(env!("CARGO_PKG_VERSION")));
    doc.insert("timestamp".into(), json!(chrono::Utc::now().to_rfc3339()));
    doc.insert(
        "config".into(),
        cfg.map_or(Value::Null, |c| {
            serde_json::to_value(c).expect("config is serializable")
        }),
    );
    if let Some(r) = result {
        doc.insert("result".into(), r);
    }
    if let Some(f) = failure {
        doc.insert("failure".into(), f.to_json());
    }
    Value::Object(doc)
}

/// Runs `cmd` and wraps the outcome, turning violated assertions into exit code 4.
pub fn execute(cmd: Command, cfg: &RunConfig, ctx: &Context) -> Report {
    match run(cmd, cfg, ctx) {
        Ok(out) if out.assertions.is_empty() => Report {
            json: envelope(cmd, Some(cfg), Some(out.result), None),
            exit_code: 0,
            summary: out.summary,
        },
        Ok(out) => {
            let f = Failure::Assertion(out.assertions.join("; "));
            Report {
                json: envelope(cmd, Some(cfg), Some(out.result), Some(&f)),
                exit_code: f.exit_code(),
                summary: format!("{}; {f}", out.summary),
            }
        }
        Err(f) => Report {
            json: envelope(cmd, Some(cfg), None, Some(&f)),
            exit_code: f.exit_code(),
            summary: f.to_string(),
        },
    }
}

/// The report with its timestamp removed, for reproducibility comparisons.
pub fn without_timestamp(report: &Value) -> Value {
    let mut r = report.clone();
    if let Some(obj) = r.as_object_mut() {
        obj.remove("timestamp");
    }
    r
}

/// Where the JSON report of `cmd` goes (`None` means stdout).
pub fn report_path(cmd: Command, out: Option<&Path>) -> Option<PathBuf> {
    match (cmd, out) {
        (Command::Export, Some(dir)) => Some(dir.join("manifest.json")),
        (_, out) => out.map(Path::to_path_buf),
    }
}

pub fn write_report(report: &Value, path: Option<&Path>) -> std::io::Result<()> {
    let text = serde_json::to_string_pretty(report).expect("reports are serializable");
    match path {
        Some(p) => {
            if let Some(dir) = p.parent().filter(|d| !d.as_os_str().is_empty()) {
                std::fs::create_dir_all(dir)?;
            }
            std::fs::write(p, text + "\n")
        }
        None => {
            println!("{text}");
            Ok(())
        }
    }
}
