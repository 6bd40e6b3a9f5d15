use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use loopgeo_cli::{envelope, execute, load_config, report_path, write_report, Command, Context, Failure, RunConfig};

#[derive(Parser)]
#[command(name = "loopgeo", version, about = "Closed geodesic experiments on model surfaces")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
    /// TOML run configuration; defaults are used when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the configured seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Report file (stdout when omitted); an output directory for `export`.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Suppresses the summary line on stderr.
    #[arg(long, global = true)]
    quiet: bool,
}

#[derive(Subcommand, Clone, Copy)]
enum Cmd {
    /// Multistart search for critical loops.
    Find,
    /// Minimax over a sweepout family.
    Sweep,
    /// Index, nullity, conjugate points and iteration data of one loop.
    Analyze,
    /// Chart self-tests and the close-conjugate-points check.
    Verify,
    /// Writes loops and curves of a report as CSV files.
    Export,
}

impl From<Cmd> for Command {
    fn from(c: Cmd) -> Self {
        match c {
            Cmd::Find => Command::Find,
            Cmd::Sweep => Command::Sweep,
            Cmd::Analyze => Command::Analyze,
            Cmd::Verify => Command::Verify,
            Cmd::Export => Command::Export,
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let cmd = Command::from(cli.command);
    let ctx = Context {
        base_dir: cli
            .config
            .as_ref()
            .and_then(|p| p.parent())
            .map(PathBuf::from)
            .unwrap_or_default(),
        out: cli.out.clone(),
    };
    let loaded: Result<RunConfig, Failure> = match &cli.config {
        Some(p) => load_config(p),
        None => Ok(RunConfig::default()),
    };
    let (json, code, summary) = match loaded {
        Ok(mut cfg) => {
            if let Some(s) = cli.seed {
                cfg.seed = s;
            }
            let r = execute(cmd, &cfg, &ctx);
            (r.json, r.exit_code, r.summary)
        }
        Err(f) => (envelope(cmd, None, None, Some(&f)), f.exit_code(), f.to_string()),
    };
    let path = report_path(cmd, ctx.out.as_deref());
    if let Err(e) = write_report(&json, path.as_deref()) {
        eprintln!("loopgeo: cannot write report: {e}");
        return ExitCode::from(3);
    }
    if !cli.quiet {
        eprintln!("loopgeo {cmd}: {summary}");
    }
    ExitCode::from(code as u8)
}
