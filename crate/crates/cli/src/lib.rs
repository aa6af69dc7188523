//! Command-line front end: dataset preparation, training, evaluation,
//! hyperparameter sweeps, cluster inspection and export.

pub mod config;

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::Command as Process;

use clap::{Parser, Subcommand, ValueEnum};
use serde::Serialize;

use clustergcf::cluster::{self, ClusterAssignment};
use clustergcf::dataset::{self, InputFormat};
use clustergcf::evaluation::{self, EvalResult};
use clustergcf::export::{self, Precision};
use clustergcf::propagation;
use clustergcf::sparse::spmm;
use clustergcf::training::{self, Checkpoint};
use clustergcf::{BipartiteGraph, Error, ErrorKind, InteractionDataset, Result, Split, SplitConfig};

pub use config::RunConfig;

pub const THREADS_ENV: &str = "CGCF_THREADS";
pub const DATASET_FILE: &str = "dataset.bin";
pub const CHECKPOINT_FILE: &str = "checkpoint.bin";
pub const LOG_FILE: &str = "log.jsonl";
pub const METRICS_FILE: &str = "metrics.json";
pub const CONFIG_ECHO_FILE: &str = "config.txt";

#[derive(Debug, Parser)]
#[command(name = "clustergcf", version, about = "Cluster-based graph collaborative filtering")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Ingest, k-core filter and split an interaction log into a dataset cache.
    Prepare(PrepareArgs),
    /// Train a model from a config file.
    Train(TrainArgs),
    /// Evaluate a checkpoint on the validation or test split.
    Evaluate(EvaluateArgs),
    /// Train once per value of one hyperparameter and tabulate test metrics.
    Sweep(SweepArgs),
    /// Print noise-free cluster probabilities for chosen nodes.
    Inspect(InspectArgs),
    /// Write final embeddings or cluster probabilities to a file.
    Export(ExportArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum FormatArg {
    Tsv,
    Csv,
}

#[derive(Debug, clap::Args)]
pub struct PrepareArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long, value_enum, default_value_t = FormatArg::Tsv)]
    pub format: FormatArg,
    #[arg(long, default_value_t = 5)]
    pub k_core: usize,
    #[arg(long, default_value_t = 2024)]
    pub seed: u64,
    /// Output directory; the cache is written as `dataset.bin` inside it.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, clap::Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub config: PathBuf,
    /// Override a config key, e.g. `--set clusters=3`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SplitArg {
    Validation,
    Test,
}

#[derive(Debug, clap::Args)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub dataset: PathBuf,
    #[arg(long, value_enum, default_value_t = SplitArg::Test)]
    pub split: SplitArg,
    #[arg(long, default_value_t = 20)]
    pub k: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Axis {
    Layers,
    Clusters,
    Tau,
}

impl Axis {
    pub fn key(self) -> &'static str {
        match self {
            Axis::Layers => "layers",
            Axis::Clusters => "clusters",
            Axis::Tau => "tau",
        }
    }

    pub fn default_values(self) -> Vec<String> {
        let v: &[&str] = match self {
            Axis::Layers => &["1", "2", "3", "4", "5", "6", "7", "8"],
            Axis::Clusters => &["2", "3", "4"],
            Axis::Tau => &["0.01", "0.1", "1", "10", "100"],
        };
        v.iter().map(|s| s.to_string()).collect()
    }
}

#[derive(Debug, clap::Args)]
pub struct SweepArgs {
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long, value_enum)]
    pub axis: Axis,
    /// Comma-separated values; defaults to the standard grid for the axis.
    #[arg(long, value_delimiter = ',')]
    pub values: Vec<String>,
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
    /// Run every value as a separate process at once.
    #[arg(long)]
    pub parallel: bool,
    /// CSV path; defaults to `<out_dir>/sweep_<axis>.csv`.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, clap::Args)]
pub struct InspectArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub dataset: PathBuf,
    /// Raw user key from the input log. Repeatable.
    #[arg(long = "user")]
    pub users: Vec<String>,
    /// Raw item key from the input log. Repeatable.
    #[arg(long = "item")]
    pub items: Vec<String>,
    /// Global node index (users first, then items). Repeatable.
    #[arg(long = "node")]
    pub nodes: Vec<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ExportWhat {
    Embeddings,
    Clusters,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ExportFormat {
    Csv,
    Bin,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum PrecisionArg {
    F32,
    F64,
}

#[derive(Debug, clap::Args)]
pub struct ExportArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub dataset: PathBuf,
    #[arg(long, value_enum)]
    pub what: ExportWhat,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, value_enum, default_value_t = ExportFormat::Csv)]
    pub format: ExportFormat,
    #[arg(long, value_enum, default_value_t = PrecisionArg::F64)]
    pub precision: PrecisionArg,
}

/// Process exit code for an error: 1 usage or config, 2 data, 3 numeric.
pub fn exit_code(err: &Error) -> u8 {
    match err.kind() {
        ErrorKind::Usage => 1,
        ErrorKind::Data => 2,
        ErrorKind::Numeric => 3,
    }
}

/// Builds the global thread pool from `CGCF_THREADS` when it is set.
pub fn init_threads() -> Result<()> {
    let Ok(raw) = std::env::var(THREADS_ENV) else {
        return Ok(());
    };
    let n: usize = raw
        .trim()
        .parse()
        .ok()
        .filter(|&n| n >= 1)
        .ok_or_else(|| Error::InvalidArgument(format!("{THREADS_ENV} must be a positive integer, found {raw:?}")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| Error::InvalidState(format!("thread pool: {e}")))
}

fn stdout_err(e: std::io::Error) -> Error {
    Error::io(Path::new("<stdout>"), e)
}

pub fn run(cli: Cli, out: &mut dyn Write) -> Result<()> {
    match cli.command {
        Command::Prepare(a) => cmd_prepare(&a, out),
        Command::Train(a) => {
            let mut cfg = RunConfig::load(&a.config)?;
            cfg.apply_overrides(&a.overrides)?;
            let report = cmd_train(&cfg)?;
            writeln!(out, "run {}  best epoch {}", report.run, report.best_epoch).map_err(stdout_err)?;
            writeln!(out, "test {}", report.test).map_err(stdout_err)
        }
        Command::Evaluate(a) => cmd_evaluate(&a, out),
        Command::Sweep(a) => cmd_sweep(&a, out),
        Command::Inspect(a) => cmd_inspect(&a, out),
        Command::Export(a) => cmd_export(&a, out),
    }
}

pub fn cmd_prepare(a: &PrepareArgs, out: &mut dyn Write) -> Result<()> {
    let format = match a.format {
        FormatArg::Tsv => InputFormat::TsvTriples,
        FormatArg::Csv => InputFormat::CsvTriples,
    };
    let raw = dataset::ingest(&a.input, format)?;
    if raw.is_empty() {
        return Err(Error::EmptyDataset(format!("{} has no interactions", a.input.display())));
    }
    let filtered = dataset::k_core_filter(&raw, a.k_core)?;
    let ds = dataset::split(&filtered, &SplitConfig::default(), a.seed)?;
    fs::create_dir_all(&a.out).map_err(|e| Error::io(&a.out, e))?;
    let cache = a.out.join(DATASET_FILE);
    ds.save(&cache)?;
    write!(out, "{}", format_stats(&ds)).map_err(stdout_err)?;
    writeln!(out, "cache          {}", cache.display()).map_err(stdout_err)
}

pub fn format_stats(ds: &InteractionDataset) -> String {
    let st = ds.stats();
    format!(
        "users          {}\nitems          {}\ninteractions   {}\nsparsity       {:.2}%\ntrain          {}\nvalidation     {}\ntest           {}\n",
        st.n_users,
        st.n_items,
        st.n_interactions,
        100.0 * st.sparsity,
        ds.train.len(),
        ds.validation.len(),
        ds.test.len()
    )
}

#[derive(Debug, Clone, Serialize)]
pub struct TrainReport {
    pub run: String,
    pub best_epoch: usize,
    pub validation: Option<EvalResult>,
    pub test: EvalResult,
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

/// Trains per `cfg` and writes the effective config, checkpoint, JSONL log
/// and test metrics into `cfg.out_dir`.
pub fn cmd_train(cfg: &RunConfig) -> Result<TrainReport> {
    cfg.validate()?;
    let prop = cfg.propagation()?;
    let ds = InteractionDataset::load(&cfg.dataset)?;
    let graph = BipartiteGraph::build(&ds)?;
    fs::create_dir_all(&cfg.out_dir).map_err(|e| Error::io(&cfg.out_dir, e))?;
    write_file(&cfg.out_dir.join(CONFIG_ECHO_FILE), cfg.render().as_bytes())?;

    let mut init = training::init_params(ds.n_nodes(), cfg.embedding_dim, cfg.clusters, cfg.train.seed)?;
    init.cluster.tau = cfg.tau;
    init.cluster.leaky_slope = cfg.leaky_slope;
    let outcome = training::train(&ds, &graph, &cfg.train, &prop, init)?;

    let run = prop.variant_name().to_string();
    let mut log = serde_json::to_string(&serde_json::json!({
        "run": run,
        "layers": cfg.layers,
        "clusters": cfg.clusters,
        "start_layer": cfg.start_layer,
        "tau": cfg.tau,
        "embedding_dim": cfg.embedding_dim,
        "seed": cfg.train.seed,
    }))
    .expect("header serializes");
    log.push('\n');
    for rec in &outcome.log {
        log.push_str(&serde_json::to_string(rec).expect("log record serializes"));
        log.push('\n');
    }
    write_file(&cfg.out_dir.join(LOG_FILE), log.as_bytes())?;

    let (fin, _) = propagation::infer_final(&graph, &outcome.params, &prop)?;
    let test = evaluation::evaluate(&fin, &ds, Split::Test, cfg.train.eval_k)?;
    let report = TrainReport {
        run,
        best_epoch: outcome.best_epoch,
        validation: outcome.best_validation.clone(),
        test,
    };
    let ck = Checkpoint {
        n_users: ds.n_users,
        n_items: ds.n_items,
        prop,
        params: outcome.params,
        adam: outcome.adam,
        cursor: outcome.cursor,
    };
    ck.save(&cfg.out_dir.join(CHECKPOINT_FILE))?;
    let metrics = serde_json::to_string_pretty(&report).expect("metrics serialize");
    write_file(&cfg.out_dir.join(METRICS_FILE), metrics.as_bytes())?;
    Ok(report)
}

/// Loads a checkpoint with the dataset it was trained on.
pub fn load_model(checkpoint: &Path, dataset: &Path) -> Result<(Checkpoint, InteractionDataset, BipartiteGraph)> {
    let ck = Checkpoint::load(checkpoint)?;
    let ds = InteractionDataset::load(dataset)?;
    if ck.n_users != ds.n_users || ck.n_items != ds.n_items {
        return Err(Error::InvalidDataset(format!(
            "checkpoint is for {} users and {} items, dataset has {} and {}",
            ck.n_users, ck.n_items, ds.n_users, ds.n_items
        )));
    }
    let graph = BipartiteGraph::build(&ds)?;
    Ok((ck, ds, graph))
}

pub fn cmd_evaluate(a: &EvaluateArgs, out: &mut dyn Write) -> Result<()> {
    let (ck, ds, graph) = load_model(&a.checkpoint, &a.dataset)?;
    let (fin, _) = propagation::infer_final(&graph, &ck.params, &ck.prop)?;
    let split = match a.split {
        SplitArg::Validation => Split::Validation,
        SplitArg::Test => Split::Test,
    };
    let res = evaluation::evaluate(&fin, &ds, split, a.k)?;
    writeln!(out, "{} {res}", format!("{split:?}").to_lowercase()).map_err(stdout_err)
}

/// Noise-free cluster probabilities for every node. With one cluster every
/// probability is exactly 1.
pub fn node_probabilities(ck: &Checkpoint, graph: &BipartiteGraph) -> Result<ClusterAssignment> {
    let e0 = &ck.params.e0;
    let e1 = spmm(graph.laplacian(), e0)?;
    let (assignment, _) = cluster::assign_clusters_with_noise(e0, &e1, &ck.params.cluster, None)?;
    Ok(assignment)
}

pub fn cmd_inspect(a: &InspectArgs, out: &mut dyn Write) -> Result<()> {
    let (ck, ds, graph) = load_model(&a.checkpoint, &a.dataset)?;
    let n_users = ds.n_users;
    let mut nodes = Vec::new();
    for key in &a.users {
        let id = ds
            .user_vocab
            .id(key)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown user {key:?}")))?;
        nodes.push(id as usize);
    }
    for key in &a.items {
        let id = ds
            .item_vocab
            .id(key)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown item {key:?}")))?;
        nodes.push(n_users + id as usize);
    }
    for &n in &a.nodes {
        if n >= ds.n_nodes() {
            return Err(Error::InvalidArgument(format!("unknown node {n} (graph has {} nodes)", ds.n_nodes())));
        }
        nodes.push(n);
    }
    if nodes.is_empty() {
        nodes = (0..ds.n_nodes()).collect();
    }
    let probs = node_probabilities(&ck, &graph)?.probs;
    let c = probs.n_cols();
    let header: Vec<String> = (0..c).map(|j| format!("p{j}")).collect();
    writeln!(out, "node\ttype\tkey\t{}\ttop", header.join("\t")).map_err(stdout_err)?;
    for n in nodes {
        let (kind, key) = if n < n_users {
            ("user", ds.user_vocab.key(n as u32))
        } else {
            ("item", ds.item_vocab.key((n - n_users) as u32))
        };
        let row = probs.row(n);
        let top = (0..c).fold(0, |best, j| if row[j] > row[best] { j } else { best });
        let cells: Vec<String> = row.iter().map(|p| format!("{p:.4}")).collect();
        writeln!(out, "{n}\t{kind}\t{}\t{}\t{top}", key.unwrap_or("?"), cells.join("\t")).map_err(stdout_err)?;
    }
    Ok(())
}

pub fn cmd_export(a: &ExportArgs, out: &mut dyn Write) -> Result<()> {
    let (ck, ds, graph) = load_model(&a.checkpoint, &a.dataset)?;
    let precision = match a.precision {
        PrecisionArg::F32 => Precision::F32,
        PrecisionArg::F64 => Precision::F64,
    };
    match (a.what, a.format) {
        (ExportWhat::Embeddings, fmt) => {
            let (fin, _) = propagation::infer_final(&graph, &ck.params, &ck.prop)?;
            match fmt {
                ExportFormat::Csv => export::write_embeddings_csv(&a.out, &fin, ds.n_users, precision)?,
                ExportFormat::Bin => export::write_embeddings_bin(&a.out, &fin, ds.n_users, precision)?,
            }
        }
        (ExportWhat::Clusters, ExportFormat::Csv) => {
            let probs = node_probabilities(&ck, &graph)?.probs;
            export::write_clusters_csv(&a.out, &probs, ds.n_users)?;
        }
        (ExportWhat::Clusters, ExportFormat::Bin) => {
            return Err(Error::InvalidArgument("cluster export supports csv only".into()));
        }
    }
    writeln!(out, "wrote {}", a.out.display()).map_err(stdout_err)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub value: String,
    pub outcome: std::result::Result<(EvalResult, usize), String>,
}

impl SweepRow {
    pub fn csv_line(&self) -> String {
        match &self.outcome {
            Ok((r, epoch)) => format!("{},{},{},{},{},", self.value, r.recall, r.hr, r.ndcg, epoch),
            Err(msg) => format!("{},,,,,{}", self.value, msg.replace([',', '\n', '\r'], ";")),
        }
    }
}

pub const SWEEP_HEADER: &str = "value,recall,hr,ndcg,best_epoch,error";

fn sweep_metrics(dir: &Path) -> std::result::Result<(EvalResult, usize), String> {
    let path = dir.join(METRICS_FILE);
    let text = fs::read_to_string(&path).map_err(|e| format!("{}: {e}", path.display()))?;
    let v: serde_json::Value = serde_json::from_str(&text).map_err(|e| e.to_string())?;
    let t = &v["test"];
    let num = |x: &serde_json::Value| x.as_f64().ok_or_else(|| "malformed metrics".to_string());
    Ok((
        EvalResult {
            recall: num(&t["recall"])?,
            hr: num(&t["hr"])?,
            ndcg: num(&t["ndcg"])?,
            k: t["k"].as_u64().unwrap_or(0) as usize,
            n_users_evaluated: t["n_users_evaluated"].as_u64().unwrap_or(0) as usize,
        },
        v["best_epoch"].as_u64().unwrap_or(0) as usize,
    ))
}

pub fn cmd_sweep(a: &SweepArgs, out: &mut dyn Write) -> Result<()> {
    let mut base = RunConfig::load(&a.config)?;
    base.apply_overrides(&a.overrides)?;
    let key = a.axis.key();
    let values = if a.values.is_empty() { a.axis.default_values() } else { a.values.clone() };
    // Reject bad values before any training starts.
    let mut runs = Vec::with_capacity(values.len());
    for v in &values {
        let mut cfg = base.clone();
        cfg.set(key, v, Path::new(""))?;
        cfg.out_dir = base.out_dir.join(format!("{key}-{v}"));
        cfg.validate()?;
        runs.push((v.clone(), cfg));
    }

    let rows: Vec<SweepRow> = if a.parallel {
        let exe = std::env::current_exe().map_err(|e| Error::io(Path::new("<current exe>"), e))?;
        let mut children = Vec::new();
        for (v, cfg) in &runs {
            let mut cmd = Process::new(&exe);
            cmd.arg("train").arg("--config").arg(&a.config);
            for o in &a.overrides {
                cmd.arg("--set").arg(o);
            }
            cmd.arg("--set").arg(format!("{key}={v}"));
            cmd.arg("--set").arg(format!("out_dir={}", cfg.out_dir.display()));
            cmd.stdout(std::process::Stdio::null());
            children.push((v.clone(), cfg.out_dir.clone(), cmd.spawn()));
        }
        children
            .into_iter()
            .map(|(value, dir, child)| {
                let outcome = match child.and_then(|c| c.wait_with_output()) {
                    Ok(o) if o.status.success() => sweep_metrics(&dir),
                    Ok(o) => Err(format!("train exited with {}", o.status)),
                    Err(e) => Err(format!("could not run train: {e}")),
                };
                SweepRow { value, outcome }
            })
            .collect()
    } else {
        runs.iter()
            .map(|(v, cfg)| SweepRow {
                value: v.clone(),
                outcome: cmd_train(cfg).map(|r| (r.test, r.best_epoch)).map_err(|e| e.to_string()),
            })
            .collect()
    };

    let csv_path = a
        .out
        .clone()
        .unwrap_or_else(|| base.out_dir.join(format!("sweep_{key}.csv")));
    if let Some(parent) = csv_path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    let mut csv = String::from(SWEEP_HEADER);
    csv.push('\n');
    for row in &rows {
        csv.push_str(&row.csv_line());
        csv.push('\n');
    }
    write_file(&csv_path, csv.as_bytes())?;
    for row in &rows {
        match &row.outcome {
            Ok((r, epoch)) => writeln!(out, "{key}={}  best epoch {epoch}  {r}", row.value),
            Err(msg) => writeln!(out, "{key}={}  FAILED: {msg}", row.value),
        }
        .map_err(stdout_err)?;
    }
    writeln!(out, "wrote {}", csv_path.display()).map_err(stdout_err)?;
    if rows.iter().all(|r| r.outcome.is_err()) {
        return Err(Error::InvalidState("every sweep run failed".into()));
    }
    Ok(())
}
