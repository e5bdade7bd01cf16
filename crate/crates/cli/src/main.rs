//! `acopf-tighten`: root relaxation gaps, bound tightening and ablations
//! for MATPOWER cases.
//!
//! Exit codes: 0 success, 1 I/O or checkpoint failure, 2 unreadable or
//! invalid input, 3 solver failure, 4 time limit (the partial report is
//! still written).

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use acopf_core::report::{Command, Format, Report, ReportRow};
use acopf_core::sdpbt::{self, resolve_upper_bound, BtConfig, Outcome, RunStatus, UpperBound};
use acopf_core::{parse_case, Network, Relaxation, TightenError};
use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(name = "acopf-tighten", version, about = "Convex relaxation gaps and bound tightening for AC optimal power flow")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Solve the root relaxation once and report its gap.
    Root(Opts),
    /// Run bound tightening from the root relaxation.
    Tighten(Opts),
    /// Tighten with rlt-only, det3 and det3+rlt and compare.
    Ablate(Opts),
}

#[derive(Args)]
struct Opts {
    /// MATPOWER case file.
    case: PathBuf,
    /// soc, det3, rlt-only or det3+rlt (ignored by `ablate`).
    #[arg(long, default_value = "det3+rlt")]
    relax: Relaxation,
    /// Target gap in percent.
    #[arg(long, default_value_t = 1.0)]
    eps_o: f64,
    /// Domain closure tolerance.
    #[arg(long, default_value_t = 1e-3)]
    eps_d: f64,
    /// Worker threads; defaults to the available cores.
    #[arg(long)]
    threads: Option<usize>,
    /// Maximum major iterations.
    #[arg(long, default_value_t = 15)]
    max_iter: usize,
    /// Wall-clock limit in seconds per tightening run.
    #[arg(long, default_value_t = 1800.0)]
    time_limit: f64,
    /// Objective of a known feasible point.
    #[arg(long, conflicts_with = "fbar_file")]
    fbar: Option<f64>,
    /// Two-column `case,objective` file to look the case up in.
    #[arg(long)]
    fbar_file: Option<PathBuf>,
    /// Local solves when the upper bound comes from multistart.
    #[arg(long, default_value_t = 20)]
    starts: usize,
    /// Multistart seed.
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Report file; `.csv` and `.txt` pick those formats, anything else JSON.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Standard output format: table, csv or json.
    #[arg(long, default_value = "table")]
    format: Format,
    /// Checkpoint file written after every major iteration of `tighten`.
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    /// Log progress to standard error.
    #[arg(short, long)]
    verbose: bool,
}

#[derive(Debug)]
struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn new(code: u8, message: impl Into<String>) -> Self {
        Failure {
            code,
            message: message.into(),
        }
    }
}

impl From<TightenError> for Failure {
    fn from(e: TightenError) -> Self {
        let code = match e {
            TightenError::UpperBound(_) | TightenError::Config(_) => 2,
            TightenError::Checkpoint(_) => 1,
            TightenError::RootRelaxation(_) | TightenError::NoUpperBound | TightenError::Model(_) => 3,
        };
        Failure::new(code, e.to_string())
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (command, opts) = match cli.command {
        Cmd::Root(o) => (Command::Root, o),
        Cmd::Tighten(o) => (Command::Tighten, o),
        Cmd::Ablate(o) => (Command::Ablate, o),
    };
    let level = if opts.verbose { "info" } else { "warn" };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match execute(command, &opts) {
        Ok(code) => ExitCode::from(code),
        Err(f) => {
            eprintln!("acopf-tighten: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}

fn load(path: &Path) -> Result<Network, Failure> {
    let text = std::fs::read_to_string(path).map_err(|e| Failure::new(2, format!("{}: {e}", path.display())))?;
    parse_case(&text).map_err(|e| Failure::new(2, format!("{}: {e}", path.display())))
}

fn config(opts: &Opts) -> BtConfig {
    let mut cfg = BtConfig {
        eps_o: opts.eps_o,
        eps_d: opts.eps_d,
        max_iter: opts.max_iter,
        time_limit: Some(opts.time_limit),
        checkpoint: opts.checkpoint.clone(),
        ..BtConfig::default()
    };
    if let Some(t) = opts.threads {
        cfg.threads = t;
    }
    cfg
}

fn execute(command: Command, opts: &Opts) -> Result<u8, Failure> {
    let net = load(&opts.case)?;
    let cfg = config(opts);
    cfg.validate()?;
    if !(opts.time_limit > 0.0) {
        return Err(Failure::new(2, "time limit must be positive"));
    }
    let upper = resolve_upper_bound(&net, opts.fbar, opts.fbar_file.as_deref(), opts.starts, opts.seed)?;
    log::info!("{}: upper bound {} ({:?})", net.name, upper.value, upper.source);

    let relaxations = match command {
        Command::Ablate => vec![Relaxation::RltOnly, Relaxation::Det3, Relaxation::Det3Rlt],
        _ => vec![opts.relax],
    };
    let mut report = Report::new(command, &net.name);
    for relaxation in relaxations {
        let outcome: Outcome = match command {
            Command::Root => sdpbt::root(&net, relaxation, upper.clone(), &cfg)?,
            _ => sdpbt::run(&net, relaxation, upper.clone(), &cfg)?,
        };
        report.rows.push(row(relaxation, &upper, outcome));
    }

    print!("{}", ensure_newline(report.render(opts.format)));
    if let Some(path) = &opts.out {
        let text = ensure_newline(report.render(format_for(path)));
        std::fs::write(path, text).map_err(|e| Failure::new(1, format!("{}: {e}", path.display())))?;
    }
    let timed_out = report.rows.iter().any(|r| r.result.status == RunStatus::TimeLimit);
    Ok(if timed_out { 4 } else { 0 })
}

fn row(relaxation: Relaxation, upper: &UpperBound, outcome: Outcome) -> ReportRow {
    ReportRow {
        relaxation,
        upper_bound: upper.clone(),
        result: outcome.report,
    }
}

fn format_for(path: &Path) -> Format {
    match path.extension().and_then(|e| e.to_str()) {
        Some("csv") => Format::Csv,
        Some("txt") => Format::Table,
        _ => Format::Json,
    }
}

fn ensure_newline(mut s: String) -> String {
    if !s.ends_with('\n') {
        s.push('\n');
    }
    s
}
