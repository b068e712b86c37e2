//! Experiment settings from flags and an optional key-value file.
//! Flags win over the file.

use std::path::PathBuf;

use clap::{Args, ValueEnum};
use hetmpc::simcore::{Mode, Ratio};
use serde::{Deserialize, Serialize};

use crate::generate::GenKind;
use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Algo {
    Mst,
    MstSuper,
    Spanner,
    Matching,
    MatchingSuper,
    Cc,
    MstApprox,
}

impl Algo {
    pub fn name(self) -> &'static str {
        match self {
            Algo::Mst => "mst",
            Algo::MstSuper => "mst-super",
            Algo::Spanner => "spanner",
            Algo::Matching => "matching",
            Algo::MatchingSuper => "matching-super",
            Algo::Cc => "cc",
            Algo::MstApprox => "mst-approx",
        }
    }

    /// Polylog (c, e) used when none is given. Sketches need Θ(log² n)
    /// words per vertex, and the estimator runs ~log_{1+ε} W of them at once.
    pub fn default_polylog(self) -> (u64, u32) {
        match self {
            Algo::Cc => (32, 2),
            Algo::MstApprox => (16, 4),
            _ => (8, 1),
        }
    }
}

/// Every setting, all optional so the file and the flags can be merged.
#[derive(Debug, Clone, Default, Args, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "kebab-case")]
pub struct Settings {
    /// algorithm to run
    #[arg(long, value_enum)]
    pub algo: Option<Algo>,
    /// graph file ("n m [w]" header, then "u v [w]" lines)
    #[arg(long)]
    pub graph: Option<PathBuf>,
    /// generate the input instead of reading it, one graph per seed
    #[arg(long = "gen", value_enum)]
    #[serde(rename = "gen")]
    pub generator: Option<GenKind>,
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub m: Option<usize>,
    #[arg(long)]
    pub p: Option<f64>,
    /// draw weights uniformly from {1, …, max-w}
    #[arg(skip)]
    pub weighted: Option<bool>,
    /// largest generated weight, n³ by default
    #[arg(long)]
    pub max_w: Option<u64>,
    /// spanner stretch parameter
    #[arg(long)]
    pub k: Option<usize>,
    /// mst-approx accuracy, in (0, 1]
    #[arg(long)]
    pub eps: Option<f64>,
    #[arg(long)]
    pub gamma: Option<f64>,
    #[arg(long)]
    pub polylog_c: Option<u64>,
    #[arg(long)]
    pub polylog_e: Option<u32>,
    /// large-machine exponent for the superlinear variants, e.g. 1/2
    #[arg(long)]
    pub f: Option<String>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// comma-separated seeds or a range a..b
    #[arg(long)]
    pub seeds: Option<String>,
    /// compare every run against a sequential oracle
    #[arg(skip)]
    pub verify: Option<bool>,
    /// directory for per-seed output files
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// report JSON path; a CSV summary goes beside it
    #[arg(long)]
    pub report: Option<PathBuf>,
    /// strict (abort on a budget violation) or tolerant (record it)
    #[arg(skip)]
    pub mode: Option<ModeArg>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum ModeArg {
    Strict,
    Tolerant,
}

impl Settings {
    /// Fills every unset field from `file`.
    pub fn or(self, file: Settings) -> Settings {
        Settings {
            algo: self.algo.or(file.algo),
            graph: self.graph.or(file.graph),
            generator: self.generator.or(file.generator),
            n: self.n.or(file.n),
            m: self.m.or(file.m),
            p: self.p.or(file.p),
            weighted: self.weighted.or(file.weighted),
            max_w: self.max_w.or(file.max_w),
            k: self.k.or(file.k),
            eps: self.eps.or(file.eps),
            gamma: self.gamma.or(file.gamma),
            polylog_c: self.polylog_c.or(file.polylog_c),
            polylog_e: self.polylog_e.or(file.polylog_e),
            f: self.f.or(file.f),
            seed: self.seed.or(file.seed),
            seeds: self.seeds.or(file.seeds),
            verify: self.verify.or(file.verify),
            out: self.out.or(file.out),
            report: self.report.or(file.report),
            mode: self.mode.or(file.mode),
        }
    }

    pub fn from_file_text(text: &str) -> Result<Settings, CliError> {
        toml::from_str(text).map_err(|e| CliError::Usage(format!("config file: {e}")))
    }

    pub fn mode(&self) -> Mode {
        match self.mode {
            Some(ModeArg::Tolerant) => Mode::Tolerant,
            _ => Mode::Strict,
        }
    }

    pub fn f_ratio(&self) -> Result<Option<Ratio>, CliError> {
        self.f.as_deref().map(|s| s.parse::<Ratio>().map_err(|e| CliError::Usage(format!("--f: {e}")))).transpose()
    }

    pub fn seed_list(&self) -> Result<Vec<u64>, CliError> {
        match (&self.seeds, self.seed) {
            (Some(s), _) => parse_seeds(s),
            (None, Some(s)) => Ok(vec![s]),
            (None, None) => Ok(vec![0]),
        }
    }
}

pub fn parse_seeds(s: &str) -> Result<Vec<u64>, CliError> {
    let bad = || CliError::Usage(format!("--seeds `{s}` is neither a list nor a range a..b"));
    if let Some((a, b)) = s.split_once("..") {
        let (a, b): (u64, u64) = (a.trim().parse().map_err(|_| bad())?, b.trim().parse().map_err(|_| bad())?);
        if a >= b {
            return Err(bad());
        }
        return Ok((a..b).collect());
    }
    s.split(',').map(|x| x.trim().parse().map_err(|_| bad())).collect()
}
