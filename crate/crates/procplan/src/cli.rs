//! Command-line surface: dataset synthesis, transition-graph
//! construction/scoring/corruption, training, evaluation, plan decoding,
//! and the three benchmark sweeps. Every artifact written here carries
//! the fully resolved configuration so a run can be reproduced from its
//! outputs alone.
//!
//! Configuration precedence is file < environment < flags. The
//! `PROCPLAN_OUT` environment variable supplies the default output root.
//!
//! Exit codes: 0 success, 1 usage error, 2 data/validation error,
//! 3 numerical failure.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::bootstrap::{
    bootstrap_compare, bootstrap_single, DEFAULT_ALPHA, DEFAULT_K_COMPARE, DEFAULT_K_SINGLE,
};
use crate::error::{Error, Result};
use crate::harness::{
    cross_horizon_sweep, description_table, robustness_sweep, sample_efficiency_sweep,
    BenchParams, ABLATION_MODES,
};
use crate::metrics::EvalReport;
use crate::model::{load_checkpoint, save_checkpoint};
use crate::pkg::{
    build_graph, corrupt_graph, coverage, deserialize_graph, read_corpus, serialize_graph,
    SequenceCorpus,
};
use crate::synth::{
    generate_world, read_dataset, read_world, sample_instances, write_dataset, write_world,
};
use crate::taxonomy::ActionTaxonomy;
use crate::losses::LossSwitches;
use crate::train::{
    evaluate_on, infer_plan_at_horizon, train, write_training_log, InferenceMode, TrainConfig,
};
use crate::viterbi::DEFAULT_LOG_FLOOR;

/// Environment variable naming the default output root.
pub const OUT_ENV: &str = "PROCPLAN_OUT";

#[derive(Parser)]
#[command(name = "procplan", version, about = "Structure-aware procedure planning toolkit")]
pub struct Cli {
    /// JSON config file supplying defaults; flags override its values.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,

    /// Output directory (created if missing). Overrides PROCPLAN_OUT.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,

    /// Worker threads. 1 forces fully serial, bit-reproducible execution;
    /// this build computes serially with a fixed reduction order at any
    /// value, so results never depend on this flag.
    #[arg(long, global = true)]
    pub threads: Option<usize>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand)]
pub enum Command {
    /// Generate a synthetic world plus train/test planning datasets.
    Synth(SynthArgs),
    /// Build, score, or corrupt a transition graph.
    #[command(subcommand)]
    Pkg(PkgCmd),
    /// Train emission networks, one checkpoint per seed.
    Train(TrainArgs),
    /// Evaluate checkpoints on a dataset under one or all inference modes.
    Eval(EvalArgs),
    /// Decode plans for dataset instances.
    Decode(DecodeArgs),
    /// Run a benchmark sweep.
    #[command(subcommand)]
    Bench(BenchCmd),
}

/// File-level configuration. Unknown keys are rejected so a typo cannot
/// silently fall back to a default.
#[derive(Debug, Default, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FileConfig {
    pub out: Option<PathBuf>,
    pub seed: Option<u64>,
    pub seeds: Option<Vec<u64>>,
    pub n_actions: Option<usize>,
    pub n_tasks: Option<usize>,
    pub embed_dim: Option<usize>,
    pub horizon: Option<usize>,
    pub branching: Option<f64>,
    pub sigma: Option<f64>,
    pub n_train: Option<usize>,
    pub n_test: Option<usize>,
    pub smoothing: Option<f64>,
    pub epochs: Option<usize>,
    pub learning_rate: Option<f64>,
    pub hidden_dim: Option<usize>,
    pub batch_size: Option<usize>,
    pub dropout: Option<f64>,
    pub temperature: Option<f64>,
    pub attention: Option<bool>,
    pub train_dvl: Option<bool>,
    pub loss_plan: Option<bool>,
    pub loss_task: Option<bool>,
    pub loss_align: Option<bool>,
    pub mode: Option<String>,
    pub base_mode: Option<String>,
    pub fractions: Option<Vec<f64>>,
    pub test_horizons: Option<Vec<usize>>,
    pub dropouts: Option<Vec<f64>>,
}

impl FileConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        serde_json::from_str(&text)
            .map_err(|e| Error::Malformed(format!("config {}: {e}", path.display())))
    }
}

/// World/benchmark shape flags shared by synth and bench.
#[derive(Args, Clone, Default)]
pub struct WorldArgs {
    #[arg(long)]
    pub n_actions: Option<usize>,
    #[arg(long)]
    pub n_tasks: Option<usize>,
    #[arg(long)]
    pub embed_dim: Option<usize>,
    /// Plan length T.
    #[arg(long)]
    pub horizon: Option<usize>,
    /// Mean out-degree of each task graph (1.0 = deterministic chains).
    #[arg(long)]
    pub branching: Option<f64>,
    /// Embedding noise scale.
    #[arg(long)]
    pub sigma: Option<f64>,
    #[arg(long)]
    pub n_train: Option<usize>,
    #[arg(long)]
    pub n_test: Option<usize>,
    /// Laplace smoothing used when building graphs from the data.
    #[arg(long)]
    pub smoothing: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
}

/// Optimizer/network flags shared by train and bench.
#[derive(Args, Clone, Default)]
pub struct NetFlags {
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub learning_rate: Option<f64>,
    #[arg(long)]
    pub hidden_dim: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    /// Dropout rate inside the prediction head.
    #[arg(long)]
    pub dropout: Option<f64>,
    /// Relaxation temperature of the differentiable decoder.
    #[arg(long)]
    pub temperature: Option<f64>,
    #[arg(long, value_parser = clap::builder::BoolishValueParser::new())]
    pub attention: Option<bool>,
    /// Train through the differentiable decoder (off = base variant).
    #[arg(long, value_parser = clap::builder::BoolishValueParser::new())]
    pub train_dvl: Option<bool>,
    #[arg(long, value_parser = clap::builder::BoolishValueParser::new())]
    pub loss_plan: Option<bool>,
    #[arg(long, value_parser = clap::builder::BoolishValueParser::new())]
    pub loss_task: Option<bool>,
    #[arg(long, value_parser = clap::builder::BoolishValueParser::new())]
    pub loss_align: Option<bool>,
}

#[derive(Args)]
pub struct SynthArgs {
    #[command(flatten)]
    pub world: WorldArgs,
}

#[derive(Subcommand)]
pub enum PkgCmd {
    /// Estimate a transition graph from a plan corpus.
    Build(PkgBuildArgs),
    /// Fraction of corpus plans fully covered by graph edges.
    Coverage(PkgCoverageArgs),
    /// Apply edge dropout and weight noise; reports coverage per dropout.
    Corrupt(PkgCorruptArgs),
}

#[derive(Args)]
pub struct PkgBuildArgs {
    /// Line-delimited JSON corpus, one {"task", "actions"} object per line.
    #[arg(long)]
    pub corpus: PathBuf,
    #[arg(long)]
    pub smoothing: Option<f64>,
    /// Taxonomy size; defaults to (largest action id in corpus) + 1.
    #[arg(long)]
    pub n_actions: Option<usize>,
}

#[derive(Args)]
pub struct PkgCoverageArgs {
    #[arg(long)]
    pub graph: PathBuf,
    #[arg(long)]
    pub corpus: PathBuf,
}

#[derive(Args)]
pub struct PkgCorruptArgs {
    #[arg(long)]
    pub graph: PathBuf,
    /// Dropout grid; each value yields one corrupted graph file.
    #[arg(long, value_delimiter = ',')]
    pub dropouts: Vec<f64>,
    /// Additive Gaussian weight noise.
    #[arg(long)]
    pub sigma: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Corpus used to report coverage of each corrupted graph.
    #[arg(long)]
    pub corpus: Option<PathBuf>,
}

#[derive(Args)]
pub struct TrainArgs {
    /// Training dataset (line-delimited JSON instances).
    #[arg(long)]
    pub data: PathBuf,
    /// World file providing the context-description table.
    #[arg(long)]
    pub world: PathBuf,
    /// Transition graph file.
    #[arg(long)]
    pub graph: PathBuf,
    /// One checkpoint is written per seed.
    #[arg(long, value_delimiter = ',')]
    pub seeds: Vec<u64>,
    #[command(flatten)]
    pub net: NetFlags,
}

#[derive(Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub graph: PathBuf,
    /// Checkpoints of the variant under test (one per seed).
    #[arg(long, value_delimiter = ',', required = true)]
    pub ckpt: Vec<PathBuf>,
    /// Baseline checkpoints for the comparison / full mode grid.
    #[arg(long, value_delimiter = ',')]
    pub base_ckpt: Vec<PathBuf>,
    /// argmax-emissions | vd-emissions | argmax-dvl | vd-dvl
    #[arg(long)]
    pub mode: Option<String>,
    #[arg(long)]
    pub base_mode: Option<String>,
    /// Evaluate every checkpoint under all four inference modes
    /// (with --base-ckpt this yields the eight-configuration table).
    #[arg(long)]
    pub grid: bool,
    /// Paired per-seed comparison of --ckpt against --base-ckpt.
    #[arg(long)]
    pub compare: bool,
    #[arg(long)]
    pub temperature: Option<f64>,
}

#[derive(Args)]
pub struct DecodeArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub graph: PathBuf,
    #[arg(long)]
    pub ckpt: PathBuf,
    #[arg(long)]
    pub mode: Option<String>,
    /// Decode at most this many instances.
    #[arg(long, default_value_t = 10)]
    pub limit: usize,
    /// Decode horizon; defaults to each instance's plan length.
    #[arg(long)]
    pub t_len: Option<usize>,
    #[arg(long)]
    pub temperature: Option<f64>,
}

#[derive(Subcommand)]
pub enum BenchCmd {
    /// Both variants trained on nested fractions of the training data.
    SampleEfficiency(BenchSweepArgs),
    /// Train at the long horizon, evaluate at each shorter one.
    CrossHorizon(BenchSweepArgs),
    /// Decoder-trained SR when the inference graph loses random edges.
    PkgRobustness(BenchSweepArgs),
}

#[derive(Args)]
pub struct BenchSweepArgs {
    #[command(flatten)]
    pub world: WorldArgs,
    #[command(flatten)]
    pub net: NetFlags,
    #[arg(long, value_delimiter = ',')]
    pub seeds: Vec<u64>,
    /// sample-efficiency: training fractions in (0, 1].
    #[arg(long, value_delimiter = ',')]
    pub fractions: Vec<f64>,
    /// cross-horizon: test horizons, each at most the training horizon.
    #[arg(long, value_delimiter = ',')]
    pub test_horizons: Vec<usize>,
    /// pkg-robustness: edge-dropout grid.
    #[arg(long, value_delimiter = ',')]
    pub dropouts: Vec<f64>,
}

fn pick<T: Clone>(flag: &Option<T>, file: &Option<T>, default: T) -> T {
    flag.clone().or_else(|| file.clone()).unwrap_or(default)
}

fn resolve_out(flag: &Option<PathBuf>, file: &FileConfig) -> PathBuf {
    flag.clone()
        .or_else(|| std::env::var_os(OUT_ENV).map(PathBuf::from))
        .or_else(|| file.out.clone())
        .unwrap_or_else(|| PathBuf::from("procplan-out"))
}

fn resolve_params(w: &WorldArgs, file: &FileConfig) -> BenchParams {
    let d = BenchParams::default();
    BenchParams {
        n_actions: pick(&w.n_actions, &file.n_actions, d.n_actions),
        n_tasks: pick(&w.n_tasks, &file.n_tasks, d.n_tasks),
        embed_dim: pick(&w.embed_dim, &file.embed_dim, d.embed_dim),
        horizon: pick(&w.horizon, &file.horizon, d.horizon),
        branching: pick(&w.branching, &file.branching, d.branching),
        sigma: pick(&w.sigma, &file.sigma, d.sigma),
        n_train: pick(&w.n_train, &file.n_train, d.n_train),
        n_test: pick(&w.n_test, &file.n_test, d.n_test),
        smoothing: pick(&w.smoothing, &file.smoothing, d.smoothing),
    }
}

fn resolve_train(n: &NetFlags, file: &FileConfig, seed: u64) -> TrainConfig {
    let d = TrainConfig::default();
    TrainConfig {
        learning_rate: pick(&n.learning_rate, &file.learning_rate, d.learning_rate),
        dropout: pick(&n.dropout, &file.dropout, d.dropout),
        batch_size: pick(&n.batch_size, &file.batch_size, d.batch_size),
        epochs: pick(&n.epochs, &file.epochs, d.epochs),
        temperature: pick(&n.temperature, &file.temperature, d.temperature),
        hidden_dim: pick(&n.hidden_dim, &file.hidden_dim, d.hidden_dim),
        attention: pick(&n.attention, &file.attention, d.attention),
        use_dvl: pick(&n.train_dvl, &file.train_dvl, d.use_dvl),
        switches: LossSwitches {
            plan: pick(&n.loss_plan, &file.loss_plan, true),
            task: pick(&n.loss_task, &file.loss_task, true),
            align: pick(&n.loss_align, &file.loss_align, true),
        },
        seed,
        ..d
    }
}

fn resolve_seeds(flag: &[u64], file: &FileConfig, default: &[u64]) -> Vec<u64> {
    if !flag.is_empty() {
        flag.to_vec()
    } else {
        file.seeds.clone().unwrap_or_else(|| default.to_vec())
    }
}

fn parse_mode(flag: &Option<String>, file: &Option<String>, default: InferenceMode) -> Result<InferenceMode> {
    match flag.as_ref().or(file.as_ref()) {
        Some(s) => s.parse(),
        None => Ok(default),
    }
}

fn ensure_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    Ok(())
}

/// Re-open a JSON artifact and splice the resolved run config into it.
fn inject_config(path: &Path, resolved: &Value) -> Result<()> {
    let text = std::fs::read_to_string(path)?;
    let mut v: Value = serde_json::from_str(&text)?;
    match v.as_object_mut() {
        Some(map) => {
            map.insert("run_config".to_string(), resolved.clone());
        }
        None => return Err(Error::Malformed(format!("{} is not a JSON object", path.display()))),
    }
    let f = std::fs::File::create(path)?;
    let mut w = std::io::BufWriter::new(f);
    serde_json::to_writer_pretty(&mut w, &v)?;
    w.flush()?;
    Ok(())
}

fn write_json(path: &Path, v: &Value) -> Result<()> {
    let f = std::fs::File::create(path)?;
    let mut w = std::io::BufWriter::new(f);
    serde_json::to_writer_pretty(&mut w, v)?;
    w.flush()?;
    Ok(())
}

/// CSV plus a `<name>.config.json` sidecar carrying the resolved config
/// (line-oriented formats cannot embed it in-band).
fn write_csv(path: &Path, header: &str, rows: &[String], resolved: &Value) -> Result<()> {
    let mut text = String::from(header);
    text.push('\n');
    for r in rows {
        text.push_str(r);
        text.push('\n');
    }
    std::fs::write(path, text)?;
    write_json(&sidecar(path), resolved)
}

fn sidecar(path: &Path) -> PathBuf {
    let mut name = path.file_name().unwrap_or_default().to_os_string();
    name.push(".config.json");
    path.with_file_name(name)
}

/// Largest action id in a line-delimited corpus/dataset file, for sizing
/// the taxonomy when none is given.
fn scan_max_action(path: &Path) -> Result<usize> {
    let text = std::fs::read_to_string(path)?;
    let mut max = None;
    for line in text.lines().filter(|l| !l.trim().is_empty()) {
        let v: Value = serde_json::from_str(line)
            .map_err(|e| Error::Malformed(format!("{}: {e}", path.display())))?;
        for a in v["actions"].as_array().into_iter().flatten() {
            let id = a.as_u64().ok_or_else(|| {
                Error::Malformed(format!("{}: non-integer action id", path.display()))
            })? as usize;
            max = Some(max.map_or(id, |m: usize| m.max(id)));
        }
    }
    max.ok_or(Error::EmptyCorpus)
}

fn load_corpus(path: &Path, n_actions: Option<usize>) -> Result<SequenceCorpus> {
    let n = match n_actions {
        Some(n) => n,
        None => scan_max_action(path)? + 1,
    };
    read_corpus(path, ActionTaxonomy::with_size(n))
}

/// Run the CLI against an explicit argument list; returns the process
/// exit code. The binary forwards `std::env::args_os()` here.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            // --help/--version land here too; they are not usage errors.
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match dispatch(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                Error::Numerical(_) | Error::SearchSpaceTooLarge { .. } => 3,
                Error::InvalidArgument(_) => 1,
                _ => 2,
            }
        }
    }
}

fn dispatch(cli: Cli) -> Result<()> {
    let file = match &cli.config {
        Some(p) => FileConfig::load(p)?,
        None => FileConfig::default(),
    };
    let out = resolve_out(&cli.out, &file);
    let threads = cli.threads.unwrap_or(1);
    if threads == 0 {
        return Err(Error::InvalidArgument("--threads must be >= 1".into()));
    }
    ensure_dir(&out)?;
    match cli.command {
        Command::Synth(a) => cmd_synth(&a, &file, &out, threads),
        Command::Pkg(a) => cmd_pkg(&a, &file, &out, threads),
        Command::Train(a) => cmd_train(&a, &file, &out, threads),
        Command::Eval(a) => cmd_eval(&a, &file, &out, threads),
        Command::Decode(a) => cmd_decode(&a, &file, &out, threads),
        Command::Bench(a) => cmd_bench(&a, &file, &out, threads),
    }
}

fn echo(resolved: &Value) {
    println!("resolved config: {resolved}");
}

fn cmd_synth(a: &SynthArgs, file: &FileConfig, out: &Path, threads: usize) -> Result<()> {
    let params = resolve_params(&a.world, file);
    let seed = pick(&a.world.seed, &file.seed, 0);
    let resolved = json!({
        "command": "synth",
        "out": out,
        "threads": threads,
        "seed": seed,
        "params": params,
    });
    echo(&resolved);
    let world = generate_world(
        params.n_actions,
        params.n_tasks,
        params.embed_dim,
        params.branching,
        params.sigma,
        seed,
    )?;
    // Same per-task rounding and derived seeds as the benchmark harness,
    // so file-based runs reproduce in-process experiments.
    let per_train = params.n_train.div_ceil(params.n_tasks);
    let per_test = params.n_test.div_ceil(params.n_tasks);
    let train_data: Vec<_> = sample_instances(&world, per_train, params.horizon, seed ^ 0xa5a5)?
        .into_iter()
        .take(params.n_train)
        .collect();
    let test_data: Vec<_> = sample_instances(&world, per_test, params.horizon, seed ^ 0x5a5a)?
        .into_iter()
        .take(params.n_test)
        .collect();
    let world_path = out.join("world.json");
    write_world(&world_path, &world)?;
    inject_config(&world_path, &resolved)?;
    let train_path = out.join("train.ldjson");
    let test_path = out.join("test.ldjson");
    write_dataset(&train_path, &train_data)?;
    write_json(&sidecar(&train_path), &resolved)?;
    write_dataset(&test_path, &test_data)?;
    write_json(&sidecar(&test_path), &resolved)?;
    println!(
        "wrote {} ({} train, {} test instances)",
        out.display(),
        train_data.len(),
        test_data.len()
    );
    Ok(())
}

fn cmd_pkg(cmd: &PkgCmd, file: &FileConfig, out: &Path, threads: usize) -> Result<()> {
    match cmd {
        PkgCmd::Build(a) => {
            let smoothing = pick(&a.smoothing, &file.smoothing, 0.0);
            let resolved = json!({
                "command": "pkg build",
                "out": out,
                "threads": threads,
                "corpus": a.corpus,
                "smoothing": smoothing,
                "n_actions": a.n_actions.or(file.n_actions),
            });
            echo(&resolved);
            let corpus = load_corpus(&a.corpus, a.n_actions.or(file.n_actions))?;
            let graph = build_graph(&corpus, smoothing)?;
            let path = out.join("graph.json");
            serialize_graph(&path, &graph)?;
            inject_config(&path, &resolved)?;
            println!(
                "wrote {} ({} actions, {} edges, {} sink rows)",
                path.display(),
                graph.n(),
                graph.edge_count(),
                graph.sink_rows().len()
            );
            Ok(())
        }
        PkgCmd::Coverage(a) => {
            let resolved = json!({
                "command": "pkg coverage",
                "out": out,
                "threads": threads,
                "graph": a.graph,
                "corpus": a.corpus,
            });
            echo(&resolved);
            let graph = deserialize_graph(&a.graph)?;
            let corpus = load_corpus(&a.corpus, Some(graph.n()))?;
            let cov = coverage(&graph, &corpus)?;
            println!("coverage: {cov:.6}");
            write_json(
                &out.join("coverage.json"),
                &json!({ "coverage": cov, "run_config": resolved }),
            )
        }
        PkgCmd::Corrupt(a) => {
            if a.dropouts.is_empty() {
                return Err(Error::InvalidArgument("--dropouts requires at least one value".into()));
            }
            let sigma = pick(&a.sigma, &None, 0.0);
            let seed = pick(&a.seed, &file.seed, 0);
            let resolved = json!({
                "command": "pkg corrupt",
                "out": out,
                "threads": threads,
                "graph": a.graph,
                "dropouts": a.dropouts,
                "sigma": sigma,
                "seed": seed,
            });
            echo(&resolved);
            let graph = deserialize_graph(&a.graph)?;
            let corpus = match &a.corpus {
                Some(p) => Some(load_corpus(p, Some(graph.n()))?),
                None => None,
            };
            let mut rows = Vec::new();
            for &d in &a.dropouts {
                let corrupted = corrupt_graph(&graph, d, sigma, seed)?;
                let path = out.join(format!("graph-dropout{d}.json"));
                serialize_graph(&path, &corrupted)?;
                inject_config(&path, &resolved)?;
                let cov = match &corpus {
                    Some(c) => coverage(&corrupted, c)?,
                    None => f64::NAN,
                };
                println!("dropout {d}: {} edges, coverage {cov:.6}", corrupted.edge_count());
                rows.push(format!("{d},{},{cov}", corrupted.edge_count()));
            }
            write_csv(&out.join("corrupt.csv"), "dropout,edges,coverage", &rows, &resolved)
        }
    }
}

fn cmd_train(a: &TrainArgs, file: &FileConfig, out: &Path, threads: usize) -> Result<()> {
    let seeds = resolve_seeds(&a.seeds, file, &[0]);
    let dataset = read_dataset(&a.data)?;
    let world = read_world(&a.world)?;
    let graph = deserialize_graph(&a.graph)?;
    let descriptions = description_table(&world);
    for &seed in &seeds {
        let cfg = resolve_train(&a.net, file, seed);
        let resolved = json!({
            "command": "train",
            "out": out,
            "threads": threads,
            "data": a.data,
            "world": a.world,
            "graph": a.graph,
            "train": cfg,
        });
        echo(&resolved);
        let result = train(&dataset, &graph, &descriptions, &cfg)?;
        let ckpt = out.join(format!("ckpt-seed{seed}.json"));
        save_checkpoint(&ckpt, &result.net)?;
        inject_config(&ckpt, &resolved)?;
        let log = out.join(format!("train-log-seed{seed}.csv"));
        write_training_log(&log, &result.log)?;
        write_json(&sidecar(&log), &resolved)?;
        let last = result.log.last().expect("training ran at least one epoch");
        println!(
            "seed {seed}: final loss {:.6}, train SR {:.2} -> {}",
            last.loss,
            last.train_sr,
            ckpt.display()
        );
    }
    Ok(())
}

fn cmd_eval(a: &EvalArgs, file: &FileConfig, out: &Path, threads: usize) -> Result<()> {
    // Flag values are validated before any file is touched so bad usage
    // reports as such rather than as a data error.
    let temperature = pick(&a.temperature, &file.temperature, 1.0);
    let mode = parse_mode(&a.mode, &file.mode, InferenceMode::VdOnDvl)?;
    let base_mode = parse_mode(&a.base_mode, &file.base_mode, InferenceMode::ArgmaxEmissions)?;
    let dataset = read_dataset(&a.data)?;
    let graph = deserialize_graph(&a.graph)?;
    let resolved = json!({
        "command": "eval",
        "out": out,
        "threads": threads,
        "data": a.data,
        "graph": a.graph,
        "ckpt": a.ckpt,
        "base_ckpt": a.base_ckpt,
        "mode": mode.to_string(),
        "base_mode": base_mode.to_string(),
        "grid": a.grid,
        "compare": a.compare,
        "temperature": temperature,
    });
    echo(&resolved);

    let sets: Vec<(&str, &[PathBuf], InferenceMode)> = if a.base_ckpt.is_empty() {
        vec![("model", &a.ckpt, mode)]
    } else {
        vec![("base", &a.base_ckpt, base_mode), ("model", &a.ckpt, mode)]
    };

    let mut table = Vec::new();
    let mut report_rows = Vec::new();
    println!("{}", EvalReport::table_header());
    for (set_idx, (label, ckpts, set_mode)) in sets.iter().enumerate() {
        let modes: Vec<InferenceMode> =
            if a.grid { ABLATION_MODES.to_vec() } else { vec![*set_mode] };
        for (m_idx, &m) in modes.iter().enumerate() {
            let mut srs = Vec::new();
            for path in ckpts.iter() {
                let net = load_checkpoint(path)?;
                let report = evaluate_on(&net, &graph, &dataset, m, temperature, DEFAULT_LOG_FLOOR)?;
                println!("{}", report.table_row());
                srs.push(report.sr);
                let conf = if a.grid { Some(set_idx * ABLATION_MODES.len() + m_idx + 1) } else { None };
                report_rows.push(json!({
                    "set": label,
                    "conf": conf,
                    "ckpt": path,
                    "report": report,
                }));
            }
            let agg = bootstrap_single(&srs, DEFAULT_K_SINGLE, DEFAULT_ALPHA, 0)?;
            println!("  {label}/{m}: {}", agg.summary());
            table.push(json!({ "set": label, "mode": m.to_string(), "sr": agg }));
        }
    }

    let comparison = if a.compare {
        if a.base_ckpt.len() != a.ckpt.len() || a.ckpt.is_empty() {
            return Err(Error::InvalidArgument(
                "--compare needs --ckpt and --base-ckpt lists of equal nonzero length".into(),
            ));
        }
        let mut model_sr = Vec::new();
        let mut base_sr = Vec::new();
        for (m_path, b_path) in a.ckpt.iter().zip(&a.base_ckpt) {
            let m_net = load_checkpoint(m_path)?;
            let b_net = load_checkpoint(b_path)?;
            model_sr.push(
                evaluate_on(&m_net, &graph, &dataset, mode, temperature, DEFAULT_LOG_FLOOR)?.sr,
            );
            base_sr.push(
                evaluate_on(&b_net, &graph, &dataset, base_mode, temperature, DEFAULT_LOG_FLOOR)?.sr,
            );
        }
        let cmp = bootstrap_compare(&model_sr, &base_sr, DEFAULT_K_COMPARE, DEFAULT_ALPHA, 0)?;
        println!(
            "delta SR {:+.2}, {}% CI [{:.2}, {:.2}], significant: {}",
            cmp.delta_obs,
            (1.0 - DEFAULT_ALPHA) * 100.0,
            cmp.ci_low,
            cmp.ci_high,
            cmp.significant
        );
        Some(cmp)
    } else {
        None
    };

    write_json(
        &out.join("eval_report.json"),
        &json!({
            "rows": report_rows,
            "aggregates": table,
            "comparison": comparison,
            "config": resolved,
        }),
    )
}

fn cmd_decode(a: &DecodeArgs, file: &FileConfig, out: &Path, threads: usize) -> Result<()> {
    let temperature = pick(&a.temperature, &file.temperature, 1.0);
    let mode = parse_mode(&a.mode, &file.mode, InferenceMode::VdOnDvl)?;
    let dataset = read_dataset(&a.data)?;
    let graph = deserialize_graph(&a.graph)?;
    let net = load_checkpoint(&a.ckpt)?;
    let resolved = json!({
        "command": "decode",
        "out": out,
        "threads": threads,
        "data": a.data,
        "graph": a.graph,
        "ckpt": a.ckpt,
        "mode": mode.to_string(),
        "limit": a.limit,
        "t_len": a.t_len,
        "temperature": temperature,
    });
    echo(&resolved);
    let mut lines = Vec::new();
    for inst in dataset.iter().take(a.limit) {
        let t_len = a.t_len.unwrap_or_else(|| inst.horizon());
        let pred = infer_plan_at_horizon(
            &net,
            &graph,
            &inst.start,
            &inst.goal,
            t_len,
            mode,
            temperature,
            DEFAULT_LOG_FLOOR,
        )?;
        let correct = pred == inst.actions[..t_len.min(inst.horizon())];
        let line = json!({
            "task": inst.task,
            "ground_truth": inst.actions,
            "predicted": pred,
            "correct": correct,
        });
        println!("{line}");
        lines.push(line.to_string());
    }
    let path = out.join("decoded.ldjson");
    std::fs::write(&path, lines.join("\n") + "\n")?;
    write_json(&sidecar(&path), &resolved)
}

fn cmd_bench(cmd: &BenchCmd, file: &FileConfig, out: &Path, threads: usize) -> Result<()> {
    let default_seeds: &[u64] = &[0, 1, 2, 3, 4];
    match cmd {
        BenchCmd::SampleEfficiency(a) => {
            let params = resolve_params(&a.world, file);
            let cfg = resolve_train(&a.net, file, 0);
            let seeds = resolve_seeds(&a.seeds, file, default_seeds);
            let fractions = if a.fractions.is_empty() {
                file.fractions.clone().unwrap_or_else(|| vec![0.05, 0.10, 0.25, 0.50, 1.0])
            } else {
                a.fractions.clone()
            };
            let resolved = json!({
                "command": "bench sample-efficiency",
                "out": out,
                "threads": threads,
                "params": params,
                "train": cfg,
                "seeds": seeds,
                "fractions": fractions,
            });
            echo(&resolved);
            let points = sample_efficiency_sweep(&params, &cfg, &fractions, &seeds)?;
            let rows: Vec<String> = points
                .iter()
                .map(|p| format!("{},{},{}", p.x, p.base_sr_mean, p.dvl_sr_mean))
                .collect();
            for (p, r) in points.iter().zip(&rows) {
                println!("fraction {r}");
                let _ = p;
            }
            write_csv(
                &out.join("sample_efficiency.csv"),
                "fraction,base_sr_mean,dvl_sr_mean",
                &rows,
                &resolved,
            )?;
            write_json(
                &out.join("sample_efficiency.json"),
                &json!({ "points": points, "config": resolved }),
            )
        }
        BenchCmd::CrossHorizon(a) => {
            // The training horizon defaults to 6 here: the sweep's point is
            // evaluation below the trained horizon.
            let params = BenchParams {
                horizon: pick(&a.world.horizon, &file.horizon, 6),
                ..resolve_params(&a.world, file)
            };
            let cfg = resolve_train(&a.net, file, 0);
            let seeds = resolve_seeds(&a.seeds, file, default_seeds);
            let horizons = if a.test_horizons.is_empty() {
                file.test_horizons.clone().unwrap_or_else(|| vec![3, 4, 5])
            } else {
                a.test_horizons.clone()
            };
            let resolved = json!({
                "command": "bench cross-horizon",
                "out": out,
                "threads": threads,
                "params": params,
                "train": cfg,
                "seeds": seeds,
                "test_horizons": horizons,
            });
            echo(&resolved);
            let points = cross_horizon_sweep(&params, &cfg, &horizons, &seeds)?;
            let rows: Vec<String> = points
                .iter()
                .map(|p| format!("{},{},{}", p.x, p.base_sr_mean, p.dvl_sr_mean))
                .collect();
            for r in &rows {
                println!("horizon {r}");
            }
            write_csv(
                &out.join("cross_horizon.csv"),
                "test_horizon,base_sr_mean,dvl_sr_mean",
                &rows,
                &resolved,
            )?;
            write_json(
                &out.join("cross_horizon.json"),
                &json!({ "points": points, "config": resolved }),
            )
        }
        BenchCmd::PkgRobustness(a) => {
            let params = resolve_params(&a.world, file);
            let cfg = resolve_train(&a.net, file, 0);
            let seeds = resolve_seeds(&a.seeds, file, default_seeds);
            let dropouts = if a.dropouts.is_empty() {
                file.dropouts.clone().unwrap_or_else(|| vec![0.0, 0.1, 0.3, 0.5])
            } else {
                a.dropouts.clone()
            };
            let resolved = json!({
                "command": "bench pkg-robustness",
                "out": out,
                "threads": threads,
                "params": params,
                "train": cfg,
                "seeds": seeds,
                "dropouts": dropouts,
            });
            echo(&resolved);
            let points = robustness_sweep(&params, &cfg, &dropouts, &seeds)?;
            let rows: Vec<String> = points
                .iter()
                .map(|p| format!("{},{}", p.edge_dropout, p.sr_mean))
                .collect();
            for r in &rows {
                println!("dropout {r}");
            }
            write_csv(&out.join("pkg_robustness.csv"), "edge_dropout,sr_mean", &rows, &resolved)?;
            write_json(
                &out.join("pkg_robustness.json"),
                &json!({ "points": points, "config": resolved }),
            )
        }
    }
}
