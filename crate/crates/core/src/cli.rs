//! Command-line front end.
//!
//! Every command produces a JSON report tagged with `"schema": "ki-decomp/1"`
//! and the crate version, or a short text rendering of it. Reports are
//! deterministic in (inputs, seed, tolerances, version) and are written once,
//! atomically, at the end of the run.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::{json, Value};

use crate::classical;
use crate::error::{Error, Result};
use crate::experiment::{self, StatisticalExperiment};
use crate::linalg::Tolerance;
use crate::products;
use crate::structure;
use crate::suite::{self, Suite, SuiteSizes};

pub const SCHEMA: &str = "ki-decomp/1";
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum OutputFormat {
    Json,
    Text,
}

#[derive(Debug, Parser)]
#[command(name = "kidecomp", version, about = "Koashi-Imoto decompositions of finite quantum statistical experiments")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    #[command(flatten)]
    pub common: CommonArgs,
}

#[derive(Debug, Args)]
pub struct CommonArgs {
    /// Seed for every randomized step.
    #[arg(long, global = true, env = "KIDECOMP_SEED", default_value_t = 0)]
    pub seed: u64,
    /// Relative rank cutoff.
    #[arg(long, global = true, default_value_t = Tolerance::default().rank_cut)]
    pub tol_rank: f64,
    /// Absolute verification threshold.
    #[arg(long, global = true, default_value_t = Tolerance::default().residual)]
    pub tol_residual: f64,
    /// Relative eigenvalue clustering threshold.
    #[arg(long, global = true, default_value_t = Tolerance::default().cluster_gap)]
    pub cluster_gap: f64,
    #[arg(long, global = true, value_enum, default_value_t = OutputFormat::Json)]
    pub format: OutputFormat,
    /// Report destination (stdout when absent). For gen-planted, a file prefix.
    #[arg(long, global = true)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Clone, Subcommand)]
pub enum Command {
    /// Decompose an experiment and verify the result.
    Decompose {
        #[arg(long)]
        input: PathBuf,
    },
    /// Classical part and its non-disturbing extraction.
    Classical {
        #[arg(long)]
        input: PathBuf,
    },
    /// Broadcastability verdict with a certified witness channel.
    BroadcastCheck {
        #[arg(long)]
        input: PathBuf,
    },
    /// Direct-product checks for two experiments (pass --input twice).
    TensorCheck {
        #[arg(long, required = true)]
        input: Vec<PathBuf>,
    },
    /// Sample a planted experiment and its ground truth.
    GenPlanted {
        /// Block dims as `n x m` pairs, e.g. `2x1,1x2`.
        #[arg(long)]
        dims: String,
        #[arg(long, default_value_t = 2)]
        labels: usize,
        /// Expected total dimension (checked against the dims).
        #[arg(long)]
        dim: Option<usize>,
    },
    /// Run the seeded property suites.
    Verify {
        /// Suites to run (repeat or comma-separate); all when absent.
        #[arg(long, value_delimiter = ',')]
        suite: Vec<String>,
        /// Ensemble sizes as `key=value,...`.
        #[arg(long)]
        sizes: Option<String>,
        /// Negate the conditional expectation to self-test the harness.
        #[arg(long)]
        inject_bug: bool,
    },
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Decompose { .. } => "decompose",
            Command::Classical { .. } => "classical",
            Command::BroadcastCheck { .. } => "broadcast-check",
            Command::TensorCheck { .. } => "tensor-check",
            Command::GenPlanted { .. } => "gen-planted",
            Command::Verify { .. } => "verify",
        }
    }
}

#[derive(Debug, Clone)]
pub struct RunConfig {
    pub command: Command,
    pub input_paths: Vec<PathBuf>,
    pub seed: u64,
    pub tol: Tolerance,
    pub output_format: OutputFormat,
    pub output: Option<PathBuf>,
}

impl RunConfig {
    pub fn from_cli(cli: Cli) -> Result<RunConfig> {
        let tol = Tolerance {
            rank_cut: cli.common.tol_rank,
            residual: cli.common.tol_residual,
            cluster_gap: cli.common.cluster_gap,
        };
        tol.validate()?;
        let input_paths = match &cli.command {
            Command::Decompose { input }
            | Command::Classical { input }
            | Command::BroadcastCheck { input } => vec![input.clone()],
            Command::TensorCheck { input } => input.clone(),
            _ => vec![],
        };
        Ok(RunConfig {
            command: cli.command,
            input_paths,
            seed: cli.common.seed,
            tol,
            output_format: cli.common.format,
            output: cli.common.output,
        })
    }

    fn header(&self) -> serde_json::Map<String, Value> {
        let mut m = serde_json::Map::new();
        m.insert("schema".into(), json!(SCHEMA));
        m.insert("version".into(), json!(VERSION));
        m.insert("command".into(), json!(self.command.name()));
        m.insert("seed".into(), json!(self.seed));
        m.insert("tolerance".into(), serde_json::to_value(self.tol).expect("plain struct"));
        m
    }
}

/// Result of a command: exit code, JSON report, text rendering and any
/// additional files to write.
#[derive(Debug, Clone)]
pub struct Outcome {
    pub exit_code: i32,
    pub report: Value,
    pub text: String,
    pub files: Vec<(PathBuf, String)>,
}

fn load(path: &Path) -> Result<StatisticalExperiment> {
    let s = std::fs::read_to_string(path)?;
    StatisticalExperiment::from_json_str(&s)
}

fn to_value<T: serde::Serialize>(x: &T) -> Value {
    serde_json::to_value(x).expect("report types serialize")
}

fn finish(cfg: &RunConfig, body: Value, passed: bool, text: String) -> Outcome {
    let mut report = cfg.header();
    if let Value::Object(b) = body {
        report.extend(b);
    }
    report.insert("passed".into(), json!(passed));
    Outcome {
        exit_code: if passed { 0 } else { 3 },
        report: Value::Object(report),
        text,
        files: vec![],
    }
}

pub fn run_decompose(cfg: &RunConfig) -> Result<Outcome> {
    let e = load(&cfg.input_paths[0])?;
    let k = structure::ki_decomposition(&e, &cfg.tol, cfg.seed)?;
    let report = structure::verify_ki(&e, &k, &cfg.tol)?;
    let cl = classical::classical_part(&k);
    let mut text = format!(
        "support dimension {} of {}, {} block(s)\n",
        k.support_dim(),
        k.source_dim,
        k.blocks.len()
    );
    for (i, b) in k.blocks.iter().enumerate() {
        text += &format!("  block {i}: n={} m={}\n", b.n, b.m);
    }
    for item in &report.items {
        text += &format!(
            "  [{}] {}: {:.3e} (threshold {:.1e})\n",
            if item.passed { "PASS" } else { "FAIL" },
            item.name,
            item.value,
            item.threshold
        );
    }
    let body = json!({
        "decomposition": to_value(&k.to_json()),
        "verification": to_value(&report),
        "classical": to_value(&cl.to_json()),
    });
    Ok(finish(cfg, body, report.passed, text))
}

pub fn run_classical(cfg: &RunConfig) -> Result<Outcome> {
    let e = load(&cfg.input_paths[0])?;
    let k = structure::ki_decomposition(&e, &cfg.tol, cfg.seed)?;
    let cl = classical::classical_part(&k);
    let cert = classical::certify_extraction(&k, &e, &cfg.tol)?;
    let mut text = format!("classical part: {} outcome(s)\n", cl.size());
    for (label, dist) in cl.labels.iter().zip(&cl.distributions) {
        let row: Vec<String> = dist.iter().map(|p| format!("{p:.6}")).collect();
        text += &format!("  {label}: [{}]\n", row.join(", "));
    }
    text += &format!(
        "extraction: disturbance {:.3e}, outcome deviation {:.3e}\n",
        cert.disturbance, cert.outcome_deviation
    );
    let body = json!({
        "block_dims": k.block_dims(),
        "classical": to_value(&cl.to_json()),
        "extraction": to_value(&cert),
    });
    Ok(finish(cfg, body, cert.passed, text))
}

pub fn run_broadcast_check(cfg: &RunConfig) -> Result<Outcome> {
    let e = load(&cfg.input_paths[0])?;
    let k = structure::ki_decomposition(&e, &cfg.tol, cfg.seed)?;
    let broadcastable = classical::is_broadcastable(&k);
    let mut body = json!({
        "block_dims": k.block_dims(),
        "broadcastable": broadcastable,
    });
    let mut passed = true;
    let mut text = format!("broadcastable: {broadcastable}\n");
    if broadcastable {
        let w = classical::broadcast_channel(&k)?;
        let cert = classical::certify_broadcast(&w, &e, &cfg.tol)?;
        passed = cert.cp && cert.tp && cert.worst_marginal() <= cfg.tol.residual / 10.0;
        text += &format!(
            "witness: cp {} tp {}, worst marginal {:.3e}\n",
            cert.cp,
            cert.tp,
            cert.worst_marginal()
        );
        body["certificate"] = to_value(&cert);
        body["witness"] = to_value(&w.to_json());
    }
    Ok(finish(cfg, body, passed, text))
}

pub fn run_tensor_check(cfg: &RunConfig) -> Result<Outcome> {
    let [a, b] = cfg.input_paths.as_slice() else {
        return Err(Error::InvalidInput(format!(
            "tensor-check needs exactly two --input files, got {}",
            cfg.input_paths.len()
        )));
    };
    let (e, f) = (load(a)?, load(b)?);
    let rep = products::check_product_classical(&e, &f, &cfg.tol, cfg.seed)?;
    let [me, mf, mef] = rep.minimal_sufficiency_checks;
    let text = format!(
        "minimal sufficiency: left {me}, right {mf}, product {mef}\nblock dims: {:?} x {:?} -> {:?}\nmatched: {}, q residual: {}\n",
        rep.left_dims,
        rep.right_dims,
        rep.product_dims,
        rep.matched,
        rep.q_factorization_residual
            .map(|r| format!("{r:.3e}"))
            .unwrap_or_else(|| "n/a".into())
    );
    let passed = rep.theorems_hold();
    Ok(finish(cfg, json!({ "product": to_value(&rep) }), passed, text))
}

/// Parses `2x1,1x2` into [(2,1),(1,2)].
pub fn parse_dims(s: &str) -> Result<Vec<(usize, usize)>> {
    s.split(',')
        .map(str::trim)
        .filter(|p| !p.is_empty())
        .map(|p| {
            let (n, m) = p
                .split_once(['x', 'X'])
                .ok_or_else(|| Error::InvalidInput(format!("block '{p}' is not of the form NxM")))?;
            let n: usize = n.trim().parse().map_err(|_| Error::InvalidInput(format!("bad n in '{p}'")))?;
            let m: usize = m.trim().parse().map_err(|_| Error::InvalidInput(format!("bad m in '{p}'")))?;
            Ok((n, m))
        })
        .collect()
}

pub fn run_gen_planted(cfg: &RunConfig) -> Result<Outcome> {
    let Command::GenPlanted { dims, labels, dim } = &cfg.command else {
        unreachable!("dispatched on command");
    };
    let block_dims = parse_dims(dims)?;
    let total: usize = block_dims.iter().map(|&(n, m)| n * m).sum();
    if let Some(d) = dim {
        if *d != total {
            return Err(Error::InvalidInput(format!(
                "block dims sum to {total}, expected dimension {d}"
            )));
        }
    }
    let (e, truth) = experiment::gen_planted(&block_dims, *labels, cfg.seed)?;
    let exp_json = to_value(&e.to_json());
    let truth_json = to_value(&truth.to_json(&e.labels));
    let mut out = finish(
        cfg,
        json!({ "dim": total, "block_dims": block_dims, "labels": e.labels }),
        true,
        format!("planted experiment: dim {total}, {} label(s), blocks {block_dims:?}\n", e.num_labels()),
    );
    match &cfg.output {
        Some(prefix) => {
            let path = |suffix: &str| {
                let mut p = prefix.clone().into_os_string();
                p.push(suffix);
                PathBuf::from(p)
            };
            let (pe, pt) = (path(".experiment.json"), path(".truth.json"));
            out.report["files"] = json!([pe.display().to_string(), pt.display().to_string()]);
            out.text += &format!("wrote {} and {}\n", pe.display(), pt.display());
            out.files.push((pe, pretty(&exp_json)));
            out.files.push((pt, pretty(&truth_json)));
        }
        None => {
            out.report["experiment"] = exp_json;
            out.report["truth"] = truth_json;
        }
    }
    Ok(out)
}

pub fn run_verify(cfg: &RunConfig) -> Result<Outcome> {
    let Command::Verify { suite, sizes, inject_bug } = &cfg.command else {
        unreachable!("dispatched on command");
    };
    let selected: Vec<Suite> = suite.iter().map(|s| Suite::parse(s.trim())).collect::<Result<_>>()?;
    let sizes = match sizes {
        Some(s) => SuiteSizes::parse(s)?,
        None => SuiteSizes::default(),
    };
    let rep = suite::run_suites(&selected, &sizes, cfg.seed, &cfg.tol, *inject_bug);
    let mut text = String::new();
    for r in &rep.results {
        text += &r.line();
        text.push('\n');
    }
    let body = json!({
        "suites": rep.suites,
        "sizes": rep.sizes,
        "inject_bug": inject_bug,
        "results": rep.results,
    });
    Ok(finish(cfg, body, rep.passed, text))
}

pub fn run(cfg: &RunConfig) -> Result<Outcome> {
    match cfg.command {
        Command::Decompose { .. } => run_decompose(cfg),
        Command::Classical { .. } => run_classical(cfg),
        Command::BroadcastCheck { .. } => run_broadcast_check(cfg),
        Command::TensorCheck { .. } => run_tensor_check(cfg),
        Command::GenPlanted { .. } => run_gen_planted(cfg),
        Command::Verify { .. } => run_verify(cfg),
    }
}

fn pretty(v: &Value) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("values serialize");
    s.push('\n');
    s
}

/// Writes `contents` to `path` via a temporary file in the same directory.
pub fn write_atomic(path: &Path, contents: &str) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(contents.as_bytes())?;
    tmp.flush()?;
    tmp.persist(path).map_err(|e| Error::Io(e.error))?;
    Ok(())
}

fn emit(cfg: &RunConfig, out: &Outcome) -> Result<()> {
    let rendered = match cfg.output_format {
        OutputFormat::Json => pretty(&out.report),
        OutputFormat::Text => out.text.clone(),
    };
    for (path, contents) in &out.files {
        write_atomic(path, contents)?;
    }
    match (&cfg.output, cfg.command.name()) {
        (Some(path), name) if name != "gen-planted" => write_atomic(path, &rendered),
        _ => {
            std::io::stdout().write_all(rendered.as_bytes())?;
            Ok(())
        }
    }
}

/// Parses arguments, runs the command and returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let result = RunConfig::from_cli(cli).and_then(|cfg| {
        let out = run(&cfg)?;
        emit(&cfg, &out)?;
        Ok(out.exit_code)
    });
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("kidecomp: {e}");
            e.exit_code()
        }
    }
}
