//! Runs one algorithm over a list of seeds and collects the report.

use std::path::PathBuf;

use hetmpc::connectivity::{connected_components, mst_weight_estimate, CcOptions};
use hetmpc::graph::{SimGraph, WEdge};
use hetmpc::matching::{matching_superlinear, maximal_matching, SuperlinearOptions};
use hetmpc::mst::{mst, mst_superlinear, MstOptions};
use hetmpc::simcore::{Cluster, ClusterConfig, Mode, Placement, Ratio, TrafficSummary};
use hetmpc::spanner::spanner;
use hetmpc::Error;
use serde::Serialize;
use serde_json::{json, Value};

use crate::config::{Algo, Settings};
use crate::generate::{generate, GenKind, GenParams};
use crate::graph_io::read_graph;
use crate::verify;
use crate::CliError;

#[derive(Debug, Clone)]
pub enum Source {
    File(PathBuf),
    Gen(GenKind, GenParams),
}

/// A validated experiment.
#[derive(Debug, Clone)]
pub struct Experiment {
    pub algo: Algo,
    pub source: Source,
    pub k: Option<usize>,
    pub eps: Option<f64>,
    pub gamma: f64,
    pub polylog: (u64, u32),
    pub f: Option<Ratio>,
    pub seeds: Vec<u64>,
    pub verify: bool,
    pub mode: Mode,
    pub out: Option<PathBuf>,
    pub report: Option<PathBuf>,
    pub inject_overflow: bool,
}

impl Experiment {
    pub fn from_settings(s: &Settings, inject_overflow: bool) -> Result<Experiment, CliError> {
        let usage = |m: &str| CliError::Usage(m.into());
        let algo = s.algo.ok_or_else(|| usage("--algo is required"))?;
        let source = match (&s.graph, s.generator) {
            (Some(p), None) => Source::File(p.clone()),
            (None, Some(kind)) => {
                let n = s.n.ok_or_else(|| usage("--gen needs --n"))?;
                Source::Gen(kind, GenParams { n, m: s.m, p: s.p, weighted: s.weighted.unwrap_or(false), max_w: s.max_w })
            }
            (Some(_), Some(_)) => return Err(usage("give either --graph or --gen, not both")),
            (None, None) => return Err(usage("an input is required: --graph FILE or --gen KIND")),
        };
        let f = s.f_ratio()?;
        match algo {
            Algo::Spanner if s.k.is_none_or(|k| k == 0) => return Err(usage("spanner needs --k ≥ 1")),
            Algo::MstApprox if s.eps.is_none_or(|e| !(e > 0.0 && e <= 1.0)) => {
                return Err(usage("mst-approx needs --eps in (0, 1]"))
            }
            Algo::MstSuper | Algo::MatchingSuper if f.is_none() => return Err(usage("superlinear variants need --f")),
            _ => {}
        }
        let (dc, de) = algo.default_polylog();
        Ok(Experiment {
            algo,
            source,
            k: s.k,
            eps: s.eps,
            gamma: s.gamma.unwrap_or(0.5),
            polylog: (s.polylog_c.unwrap_or(dc), s.polylog_e.unwrap_or(de)),
            f,
            seeds: s.seed_list()?,
            verify: s.verify.unwrap_or(false),
            mode: s.mode(),
            out: s.out.clone(),
            report: s.report.clone(),
            inject_overflow,
        })
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ErrorInfo {
    pub kind: &'static str,
    pub message: String,
}

impl ErrorInfo {
    pub fn of(e: &Error) -> Self {
        let kind = match e {
            Error::Sim(hetmpc::simcore::SimError::Config(_)) => "config",
            Error::Sim(hetmpc::simcore::SimError::Budget { .. }) => "budget",
            Error::Sim(hetmpc::simcore::SimError::Capacity { .. }) => "capacity",
            Error::Sim(hetmpc::simcore::SimError::Decode(_)) => "decode",
            Error::RunFailed(_) => "run-failed",
            Error::Precondition(_) => "precondition",
            Error::Internal(_) => "internal",
        };
        ErrorInfo { kind, message: e.to_string() }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Verdict {
    pub passed: bool,
    pub detail: Value,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunRecord {
    pub seed: u64,
    /// ok, error, violations or verify-failed
    pub status: &'static str,
    pub n: usize,
    pub m: usize,
    pub config: Option<ClusterConfig>,
    pub rounds_used: usize,
    pub traffic: Option<TrafficSummary>,
    pub metrics: Value,
    pub verify: Option<Verdict>,
    pub error: Option<ErrorInfo>,
}

impl RunRecord {
    pub fn passed(&self) -> bool {
        self.status == "ok"
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Report {
    /// seconds since the epoch; the only field that differs between identical runs
    pub timestamp: u64,
    pub algo: &'static str,
    pub input: Value,
    pub gamma: f64,
    pub polylog_c: u64,
    pub polylog_e: u32,
    pub verify: bool,
    pub runs: Vec<RunRecord>,
    pub passed: bool,
}

struct Output {
    metrics: Value,
    /// lines for the per-seed output file
    lines: String,
    verdict: Option<Verdict>,
}

fn edge_lines(es: &[WEdge]) -> String {
    es.iter().map(|e| format!("{} {} {}\n", e.u, e.v, e.w)).collect()
}

fn check(passed: bool, detail: Value) -> Option<Verdict> {
    Some(Verdict { passed, detail })
}

fn execute(exp: &Experiment, cluster: &mut Cluster, g: &SimGraph) -> Result<Output, Error> {
    let placement = Placement::Seeded;
    let v = exp.verify;
    Ok(match exp.algo {
        Algo::Mst | Algo::MstSuper => {
            let opts = MstOptions { placement, ..Default::default() };
            let out = if exp.algo == Algo::Mst { mst(cluster, g, &opts)? } else { mst_superlinear(cluster, g, &opts)? };
            let verdict = v.then(|| {
                let want = verify::kruskal(g);
                let same = verify::edge_keys(&want) == verify::edge_keys(&out.edges);
                Verdict { passed: same, detail: json!({ "oracle": "kruskal", "weight": want.iter().map(|e| e.w).sum::<u64>() }) }
            });
            Output {
                metrics: json!({ "weight": out.weight, "edges": out.edges.len(), "components": out.components,
                                 "boruvka_steps": out.t, "repetition_used": out.succeeded }),
                lines: edge_lines(&out.edges),
                verdict,
            }
        }
        Algo::Spanner => {
            let k = exp.k.unwrap_or(2);
            let out = spanner(cluster, g, k, placement)?;
            let verdict = if v {
                let stretch = verify::all_pairs_stretch(g, &out.edges);
                let bound = (6 * k - 1) as f64;
                check(stretch.is_some_and(|s| s <= bound), json!({ "oracle": "bfs", "stretch": stretch, "bound": bound }))
            } else {
                None
            };
            Output {
                metrics: json!({ "size": out.edges.len(), "k": k, "delta": out.delta, "stars": out.stars }),
                lines: edge_lines(&out.edges),
                verdict,
            }
        }
        Algo::Matching => {
            let out = maximal_matching(cluster, g, placement)?;
            let verdict = if v {
                let free = verify::free_edges(g, &out.matching);
                check(verify::is_matching(g, &out.matching) && free == 0, json!({ "oracle": "maximality", "free_edges": free }))
            } else {
                None
            };
            Output {
                metrics: json!({ "size": out.matching.len(), "report": out.report }),
                lines: edge_lines(&out.matching),
                verdict,
            }
        }
        Algo::MatchingSuper => {
            let out = matching_superlinear(cluster, g, placement, SuperlinearOptions::default())?;
            let verdict = if v {
                let free = verify::free_edges(g, &out.matching);
                check(verify::is_matching(g, &out.matching) && free == 0, json!({ "oracle": "maximality", "free_edges": free }))
            } else {
                None
            };
            Output {
                metrics: json!({ "size": out.matching.len(), "depth": out.depth, "attempts": out.attempts }),
                lines: edge_lines(&out.matching),
                verdict,
            }
        }
        Algo::Cc => {
            let out = connected_components(cluster, g, placement, &CcOptions::default())?;
            let verdict = if v {
                let want = verify::component_labels(g);
                check(want == out.labels, json!({ "oracle": "union-find", "components": want.iter().enumerate().filter(|&(i, &l)| i as u64 == l).count() }))
            } else {
                None
            };
            Output {
                metrics: json!({ "components": out.components, "phases": out.phases, "attempts": out.attempts,
                                 "sampler_failures": out.sampler_failures, "sketch_words": out.sketch_words }),
                lines: out.labels.iter().enumerate().map(|(v, c)| format!("{v} {c}\n")).collect(),
                verdict,
            }
        }
        Algo::MstApprox => {
            let eps = exp.eps.unwrap_or(0.1);
            let out = mst_weight_estimate(cluster, g, eps, placement, &CcOptions::default())?;
            let verdict = if v {
                let exact = verify::kruskal(g).iter().map(|e| e.w).sum::<u64>() as f64;
                let ratio = if exact > 0.0 { out.estimate / exact } else if out.estimate == 0.0 { 1.0 } else { f64::INFINITY };
                check(
                    (1.0 - 2.0 * eps..=1.0 + 2.0 * eps).contains(&ratio),
                    json!({ "oracle": "kruskal", "exact": exact, "ratio": ratio }),
                )
            } else {
                None
            };
            Output {
                metrics: json!({ "estimate": out.estimate, "w_max": out.w_max, "cc": out.cc, "thresholds": out.thresholds.len() }),
                lines: format!("{}\n", out.estimate),
                verdict,
            }
        }
    })
}

fn load_graph(exp: &Experiment, seed: u64) -> Result<SimGraph, CliError> {
    match &exp.source {
        Source::File(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| CliError::Io(format!("{}: {e}", p.display())))?;
            Ok(read_graph(&text)?.0)
        }
        Source::Gen(kind, params) => generate(*kind, params, seed),
    }
}

/// One seed. Algorithm failures end up in the record, input problems are errors.
pub fn run_seed(exp: &Experiment, seed: u64) -> Result<RunRecord, CliError> {
    let g = load_graph(exp, seed)?;
    let mut cfg = ClusterConfig::new(g.n, g.m().max(1))
        .with_gamma(exp.gamma)
        .with_polylog(exp.polylog.0, exp.polylog.1)
        .with_seed(seed)
        .with_mode(exp.mode);
    if let Some(f) = exp.f {
        cfg = cfg.with_f(f);
    }
    let mut rec = RunRecord {
        seed,
        status: "ok",
        n: g.n,
        m: g.m(),
        config: Some(cfg.clone()),
        rounds_used: 0,
        traffic: None,
        metrics: Value::Null,
        verify: None,
        error: None,
    };
    let mut cluster = match Cluster::new(cfg) {
        Ok(c) => c,
        Err(e) => {
            rec.status = "error";
            rec.error = Some(ErrorInfo::of(&e.into()));
            return Ok(rec);
        }
    };
    let result = if exp.inject_overflow { cluster.inject_overflow().map_err(Error::from) } else { Ok(()) };
    match result.and_then(|()| execute(exp, &mut cluster, &g)) {
        Ok(out) => {
            rec.metrics = out.metrics;
            rec.verify = out.verdict;
            if let Some(dir) = &exp.out {
                std::fs::create_dir_all(dir).map_err(|e| CliError::Io(e.to_string()))?;
                let path = dir.join(format!("{}-seed{seed}.txt", exp.algo.name()));
                std::fs::write(&path, out.lines).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
            }
        }
        Err(e) => {
            rec.status = "error";
            rec.error = Some(ErrorInfo::of(&e));
        }
    }
    let summary = cluster.summary();
    rec.rounds_used = summary.rounds_used;
    if rec.status == "ok" && summary.violations > 0 {
        rec.status = "violations";
    }
    if rec.status == "ok" && rec.verify.as_ref().is_some_and(|v| !v.passed) {
        rec.status = "verify-failed";
    }
    rec.traffic = Some(summary);
    Ok(rec)
}

pub fn run_experiment(exp: &Experiment) -> Result<Report, CliError> {
    let runs = exp.seeds.iter().map(|&s| run_seed(exp, s)).collect::<Result<Vec<_>, _>>()?;
    let input = match &exp.source {
        Source::File(p) => json!({ "file": p.display().to_string() }),
        Source::Gen(kind, params) => json!({ "generator": kind, "params": params }),
    };
    let timestamp = std::time::SystemTime::now().duration_since(std::time::UNIX_EPOCH).map_or(0, |d| d.as_secs());
    Ok(Report {
        timestamp,
        algo: exp.algo.name(),
        input,
        gamma: exp.gamma,
        polylog_c: exp.polylog.0,
        polylog_e: exp.polylog.1,
        verify: exp.verify,
        passed: runs.iter().all(RunRecord::passed),
        runs,
    })
}

/// Headline number of a run for the CSV summary.
fn headline(algo: Algo, metrics: &Value) -> Value {
    let key = match algo {
        Algo::Mst | Algo::MstSuper => "weight",
        Algo::Spanner | Algo::Matching | Algo::MatchingSuper => "size",
        Algo::Cc => "components",
        Algo::MstApprox => "estimate",
    };
    metrics.get(key).cloned().unwrap_or(Value::Null)
}

pub fn write_csv(report: &Report, algo: Algo) -> Result<String, CliError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let io = |e: csv::Error| CliError::Io(e.to_string());
    w.write_record(["seed", "status", "n", "m", "rounds_used", "total_words", "violations", "result", "verified"]).map_err(io)?;
    for r in &report.runs {
        let t = r.traffic.unwrap_or_default();
        let result = match headline(algo, &r.metrics) {
            Value::Null => String::new(),
            v => v.to_string(),
        };
        let verified = r.verify.as_ref().map_or(String::new(), |v| v.passed.to_string());
        w.write_record([
            r.seed.to_string(),
            r.status.to_string(),
            r.n.to_string(),
            r.m.to_string(),
            r.rounds_used.to_string(),
            t.total_words.to_string(),
            t.violations.to_string(),
            result,
            verified,
        ])
        .map_err(io)?;
    }
    let bytes = w.into_inner().map_err(|e| CliError::Io(e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| CliError::Io(e.to_string()))
}
