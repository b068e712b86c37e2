//! Command-line driver: graph generation, experiment runs, reports.

pub mod config;
pub mod generate;
pub mod graph_io;
pub mod run;
pub mod verify;

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde_json::json;

use crate::config::{ModeArg, Settings};
use crate::generate::{generate, GenKind, GenParams};
use crate::run::{run_experiment, write_csv, Experiment};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("usage: {0}")]
    Usage(String),
    #[error("parse error on line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("io: {0}")]
    Io(String),
    #[error(transparent)]
    Lib(#[from] hetmpc::Error),
}

impl CliError {
    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Usage(_) => "usage",
            CliError::Parse { .. } => "parse",
            CliError::Io(_) => "io",
            CliError::Lib(_) => "library",
        }
    }

    /// 2 for bad input, 1 for everything else.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) | CliError::Parse { .. } => 2,
            _ => 1,
        }
    }

    pub fn to_json(&self) -> String {
        let mut v = json!({ "error": self.kind(), "message": self.to_string() });
        if let CliError::Parse { line, .. } = self {
            v["line"] = json!(line);
        }
        v.to_string()
    }
}

#[derive(Debug, Parser)]
#[command(name = "hetmpc", about = "Heterogeneous MPC graph algorithms on a simulated cluster")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// write a generated graph to a file
    Gen(GenArgs),
    /// run an algorithm over one or more seeds
    Run(Box<RunArgs>),
}

#[derive(Debug, Args)]
pub struct GenArgs {
    #[arg(long = "gen", value_enum)]
    pub kind: GenKind,
    #[arg(long)]
    pub n: usize,
    #[arg(long)]
    pub m: Option<usize>,
    #[arg(long)]
    pub p: Option<f64>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub weighted: bool,
    #[arg(long)]
    pub max_w: Option<u64>,
    /// output path; stdout when absent
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    /// key-value settings file; flags override it
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[command(flatten)]
    pub settings: Settings,
    #[arg(long)]
    pub weighted: bool,
    #[arg(long)]
    pub verify: bool,
    #[arg(long, conflicts_with = "tolerant")]
    pub strict: bool,
    #[arg(long)]
    pub tolerant: bool,
    /// start with one round that exceeds a small machine's budget by a word
    #[arg(long)]
    pub inject_overflow: bool,
}

impl RunArgs {
    pub fn resolve(self) -> Result<Experiment, CliError> {
        let mut s = self.settings;
        if self.weighted {
            s.weighted = Some(true);
        }
        if self.verify {
            s.verify = Some(true);
        }
        if self.strict {
            s.mode = Some(ModeArg::Strict);
        }
        if self.tolerant {
            s.mode = Some(ModeArg::Tolerant);
        }
        if let Some(path) = &self.config {
            let text = read(path)?;
            s = s.or(Settings::from_file_text(&text)?);
        }
        Experiment::from_settings(&s, self.inject_overflow)
    }
}

fn read(path: &Path) -> Result<String, CliError> {
    std::fs::read_to_string(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}

fn write(path: &Path, text: &str) -> Result<(), CliError> {
    std::fs::write(path, text).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}

/// Runs a parsed command and returns the process exit code.
pub fn execute(cli: Cli) -> Result<i32, CliError> {
    match cli.command {
        Command::Gen(a) => {
            let params = GenParams { n: a.n, m: a.m, p: a.p, weighted: a.weighted, max_w: a.max_w };
            let g = generate(a.kind, &params, a.seed)?;
            let text = graph_io::write_graph(&g, a.weighted);
            match a.out {
                Some(p) => write(&p, &text)?,
                None => print!("{text}"),
            }
            Ok(0)
        }
        Command::Run(a) => {
            let exp = a.resolve()?;
            let report = run_experiment(&exp)?;
            let body = serde_json::to_string_pretty(&report).map_err(|e| CliError::Io(e.to_string()))?;
            match &exp.report {
                Some(p) => {
                    write(p, &body)?;
                    write(&p.with_extension("csv"), &write_csv(&report, exp.algo)?)?;
                }
                None => println!("{body}"),
            }
            for r in report.runs.iter().filter(|r| !r.passed()) {
                eprintln!("{}", json!({ "seed": r.seed, "status": r.status, "error": r.error }));
            }
            Ok(if report.passed { 0 } else { 1 })
        }
    }
}
