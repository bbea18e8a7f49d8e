//! Pipeline driver: ingest → mine → train → eval, plus embedding export.
//!
//! Stages communicate only through documented files (vocab dumps, path
//! sets, confidence stats, embeddings), so the expensive mining step runs
//! once and training/evaluation iterate on its output. Every run writes a
//! manifest echoing the resolved settings and a content hash of each input
//! file, so any reported number can be traced to its inputs.

use std::collections::HashMap;
use std::fs::File;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use sha2::{Digest, Sha256};

use ptranse::compose::{Activation, ComposeKind};
use ptranse::error::{Error, Result};
use ptranse::eval::{evaluate, PathResolver, ScoreMode, Task};
use ptranse::kg::KnowledgeGraph;
use ptranse::model::{EmbeddingStore, Norm};
use ptranse::paths::{
    coverage_summary, mine_training_paths, path_relation_confidence, PathRelationStats, PathSet,
};
use ptranse::trainer::{train, TrainConfig};

#[derive(Parser)]
#[command(name = "ptranse", version, about = "Path-augmented translation embeddings for knowledge graphs")]
struct Cli {
    /// Flat key=value config file; command-line flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Load a dataset, materialize reverse relations, dump vocabularies.
    Ingest(IngestArgs),
    /// Mine reliable relation paths and path→relation confidences.
    Mine(MineArgs),
    /// Train embeddings by margin-ranking SGD.
    Train(TrainArgs),
    /// Evaluate entity or relation prediction on the test split.
    Eval(EvalArgs),
    /// Re-serialize a trained embedding file (format round-trip).
    Export(ExportArgs),
}

#[derive(Args, Default)]
struct DatasetArgs {
    #[arg(long)]
    train: Option<PathBuf>,
    #[arg(long)]
    valid: Option<PathBuf>,
    #[arg(long)]
    test: Option<PathBuf>,
}

#[derive(Args)]
struct IngestArgs {
    #[command(flatten)]
    dataset: DatasetArgs,
    /// Output directory for entity2id / relation2id.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct MineArgs {
    #[command(flatten)]
    dataset: DatasetArgs,
    #[arg(long)]
    max_len: Option<usize>,
    #[arg(long)]
    threshold: Option<f64>,
    /// Output path-set file.
    #[arg(long)]
    paths: Option<PathBuf>,
    /// Output confidence-stats file.
    #[arg(long)]
    stats: Option<PathBuf>,
}

#[derive(Args)]
struct TrainArgs {
    #[command(flatten)]
    dataset: DatasetArgs,
    #[arg(long)]
    paths: Option<PathBuf>,
    #[arg(long)]
    stats: Option<PathBuf>,
    #[arg(long)]
    compose: Option<String>,
    #[arg(long)]
    dim: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    margin: Option<f64>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    norm: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    /// Checkpoint directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Ablation: train without the path loss (TransE with reverses).
    #[arg(long)]
    no_path: bool,
    /// RNN activation (identity or tanh).
    #[arg(long)]
    activation: Option<String>,
    #[arg(long)]
    checkpoint_every: Option<usize>,
    /// 1 = deterministic; >1 = non-deterministic throughput mode.
    #[arg(long)]
    workers: Option<usize>,
}

#[derive(Args)]
struct EvalArgs {
    #[command(flatten)]
    dataset: DatasetArgs,
    #[arg(long)]
    task: Option<String>,
    #[arg(long)]
    emb: Option<PathBuf>,
    #[arg(long)]
    paths: Option<PathBuf>,
    #[arg(long)]
    stats: Option<PathBuf>,
    #[arg(long)]
    rerank: Option<usize>,
    #[arg(long)]
    mode: Option<String>,
    /// Mining parameters for pairs resolved on the fly at test time.
    #[arg(long)]
    max_len: Option<usize>,
    #[arg(long)]
    threshold: Option<f64>,
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Args)]
struct ExportArgs {
    #[arg(long)]
    emb: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
}

/// Flat key=value file, one pair per line; `#` starts a comment.
struct ConfigFile(HashMap<String, String>);

impl ConfigFile {
    fn load(path: Option<&Path>) -> Result<Self> {
        let mut map = HashMap::new();
        if let Some(path) = path {
            let content = std::fs::read_to_string(path)
                .map_err(|e| Error::Io { path: path.into(), source: e })?;
            for line in content.lines() {
                let line = line.trim();
                if line.is_empty() || line.starts_with('#') {
                    continue;
                }
                let (k, v) = line.split_once('=').ok_or_else(|| {
                    Error::Config(format!("bad config line (expected key=value): '{line}'"))
                })?;
                map.insert(k.trim().to_string(), v.trim().to_string());
            }
        }
        Ok(ConfigFile(map))
    }

    fn path(&self, flag: Option<PathBuf>, key: &str) -> Option<PathBuf> {
        flag.or_else(|| self.0.get(key).map(PathBuf::from))
    }

    fn parse<T: std::str::FromStr>(&self, flag: Option<T>, key: &str) -> Result<Option<T>> {
        match flag {
            Some(v) => Ok(Some(v)),
            None => match self.0.get(key) {
                Some(s) => s
                    .parse()
                    .map(Some)
                    .map_err(|_| Error::Config(format!("bad config value for {key}: '{s}'"))),
                None => Ok(None),
            },
        }
    }
}

fn require<T>(v: Option<T>, flag: &str) -> Result<T> {
    v.ok_or_else(|| Error::Config(format!("missing required option --{flag}")))
}

fn require_artifact(path: &Path, what: &str, command: &str) -> Result<()> {
    if path.exists() {
        Ok(())
    } else {
        Err(Error::MissingArtifact { what: format!("{what} ({})", path.display()), command: command.into() })
    }
}

fn load_graph(cfg: &ConfigFile, args: &DatasetArgs) -> Result<(KnowledgeGraph, Vec<PathBuf>)> {
    let train = require(cfg.path(args.train.clone(), "train"), "train")?;
    let valid = require(cfg.path(args.valid.clone(), "valid"), "valid")?;
    let test = require(cfg.path(args.test.clone(), "test"), "test")?;
    let graph = KnowledgeGraph::load(&train, &valid, &test)?.augment_reverse()?;
    Ok((graph, vec![train, valid, test]))
}

fn sha256_file(path: &Path) -> Result<String> {
    let mut file = File::open(path).map_err(|e| Error::Io { path: path.into(), source: e })?;
    let mut hasher = Sha256::new();
    let mut buf = [0u8; 65536];
    loop {
        let n = file.read(&mut buf).map_err(|e| Error::Io { path: path.into(), source: e })?;
        if n == 0 {
            break;
        }
        hasher.update(&buf[..n]);
    }
    Ok(format!("{:x}", hasher.finalize()))
}

/// Settings echo plus a content hash per input, written next to the main
/// output so a run can be reproduced from the manifest alone.
fn write_manifest(path: &Path, settings: &[(&str, String)], inputs: &[PathBuf]) -> Result<()> {
    let mut f = File::create(path).map_err(|e| Error::Io { path: path.into(), source: e })?;
    let io = |e| Error::Io { path: path.into(), source: e };
    for (k, v) in settings {
        writeln!(f, "{k}={v}").map_err(io)?;
    }
    for input in inputs {
        writeln!(f, "input.sha256 {} {}", input.display(), sha256_file(input)?).map_err(io)?;
    }
    Ok(())
}

fn cmd_ingest(cfg: &ConfigFile, args: IngestArgs) -> Result<()> {
    let (graph, inputs) = load_graph(cfg, &args.dataset)?;
    let out = require(cfg.path(args.out, "out"), "out")?;
    std::fs::create_dir_all(&out).map_err(|e| Error::Io { path: out.clone(), source: e })?;
    graph.dump_vocabs(&out)?;
    write_manifest(
        &out.join("ingest.manifest"),
        &[
            ("command", "ingest".into()),
            ("entities", graph.n_entities().to_string()),
            ("relations", graph.n_original_relations.to_string()),
            ("relations_augmented", graph.n_relations().to_string()),
            ("train_triples", graph.train.len().to_string()),
            ("valid_triples", graph.valid.len().to_string()),
            ("test_triples", graph.test.len().to_string()),
        ],
        &inputs,
    )?;
    println!(
        "ingested {} entities, {} relations ({} after reverse augmentation), {} train / {} valid / {} test triples",
        graph.n_entities(),
        graph.n_original_relations,
        graph.n_relations(),
        graph.train.len(),
        graph.valid.len(),
        graph.test.len()
    );
    Ok(())
}

fn cmd_mine(cfg: &ConfigFile, args: MineArgs) -> Result<()> {
    let (graph, inputs) = load_graph(cfg, &args.dataset)?;
    let max_len = cfg.parse(args.max_len, "max_len")?.unwrap_or(ptranse::paths::DEFAULT_MAX_LEN);
    let threshold =
        cfg.parse(args.threshold, "threshold")?.unwrap_or(ptranse::paths::DEFAULT_THRESHOLD);
    let paths_out = require(cfg.path(args.paths, "paths"), "paths")?;
    let stats_out = require(cfg.path(args.stats, "stats"), "stats")?;
    let mined = mine_training_paths(&graph, max_len, threshold);
    let stats = path_relation_confidence(&graph, &mined);
    mined.save(&paths_out)?;
    stats.save(&stats_out)?;
    let (p, l) = coverage_summary(&mined);
    write_manifest(
        &paths_out.with_extension("manifest"),
        &[
            ("command", "mine".into()),
            ("max_len", max_len.to_string()),
            ("threshold", threshold.to_string()),
            ("pairs_covered", mined.n_pairs().to_string()),
            ("paths_total", mined.n_paths().to_string()),
            ("expected_paths_per_pair", format!("{p:.3}")),
            ("expected_path_length", format!("{l:.3}")),
        ],
        &inputs,
    )?;
    println!(
        "mined {} paths over {} pairs (P = {:.2} paths/pair, L = {:.2} mean length)",
        mined.n_paths(),
        mined.n_pairs(),
        p,
        l
    );
    Ok(())
}

fn cmd_train(cfg: &ConfigFile, args: TrainArgs) -> Result<()> {
    let (graph, mut inputs) = load_graph(cfg, &args.dataset)?;
    let use_paths = !(args.no_path || cfg.0.get("no_path").map(|v| v == "true").unwrap_or(false));
    let paths_file = cfg.path(args.paths, "paths");
    let pathset = if use_paths {
        let p = require(paths_file, "paths")?;
        require_artifact(&p, "path set", "mine")?;
        inputs.push(p.clone());
        PathSet::load(&p)?
    } else {
        PathSet::default()
    };
    let defaults = TrainConfig::default();
    let activation = match cfg
        .parse(args.activation, "activation")?
        .unwrap_or_else(|| "identity".to_string())
        .as_str()
    {
        "identity" => Activation::Identity,
        "tanh" => Activation::Tanh,
        other => return Err(Error::Config(format!("unknown activation '{other}'"))),
    };
    let train_cfg = TrainConfig {
        learning_rate: cfg.parse(args.lr, "lr")?.unwrap_or(defaults.learning_rate),
        margin: cfg.parse(args.margin, "margin")?.unwrap_or(defaults.margin),
        dim: cfg.parse(args.dim, "dim")?.unwrap_or(defaults.dim),
        epochs: cfg.parse(args.epochs, "epochs")?.unwrap_or(defaults.epochs),
        compose: match cfg.parse(args.compose, "compose")? {
            Some(s) => s.parse::<ComposeKind>()?,
            None => defaults.compose,
        },
        activation,
        norm: match cfg.parse(args.norm, "norm")? {
            Some(s) => s.parse::<Norm>()?,
            None => defaults.norm,
        },
        seed: cfg.parse(args.seed, "seed")?.unwrap_or(defaults.seed),
        use_paths,
        checkpoint_every: cfg
            .parse(args.checkpoint_every, "checkpoint_every")?
            .unwrap_or(defaults.checkpoint_every),
        workers: cfg.parse(args.workers, "workers")?.unwrap_or(defaults.workers),
    };
    let out = require(cfg.path(args.out, "out"), "out")?;
    let store = train(&graph, &pathset, &train_cfg, Some(&out))?;
    let model_path = out.join("model.emb");
    store.save(&model_path)?;
    write_manifest(
        &out.join("train.manifest"),
        &[
            ("command", "train".into()),
            ("lr", train_cfg.learning_rate.to_string()),
            ("margin", train_cfg.margin.to_string()),
            ("dim", train_cfg.dim.to_string()),
            ("epochs", train_cfg.epochs.to_string()),
            ("compose", train_cfg.compose.to_string()),
            ("norm", train_cfg.norm.to_string()),
            ("seed", train_cfg.seed.to_string()),
            ("use_paths", train_cfg.use_paths.to_string()),
            ("workers", train_cfg.workers.to_string()),
        ],
        &inputs,
    )?;
    println!("trained {} epochs; final model at {}", train_cfg.epochs, model_path.display());
    Ok(())
}

fn cmd_eval(cfg: &ConfigFile, args: EvalArgs) -> Result<()> {
    let (graph, mut inputs) = load_graph(cfg, &args.dataset)?;
    let task: Task = require(cfg.parse(args.task, "task")?, "task")?.parse()?;
    let mode: ScoreMode =
        cfg.parse(args.mode, "mode")?.unwrap_or_else(|| "ptranse".to_string()).parse()?;
    let rerank = cfg.parse(args.rerank, "rerank")?.unwrap_or(500);
    let emb = require(cfg.path(args.emb, "emb"), "emb")?;
    require_artifact(&emb, "embedding file", "train")?;
    inputs.push(emb.clone());
    let store = EmbeddingStore::load(&emb)?;
    let (pathset, stats) = match (cfg.path(args.paths, "paths"), cfg.path(args.stats, "stats")) {
        (Some(p), Some(s)) => {
            require_artifact(&p, "path set", "mine")?;
            require_artifact(&s, "confidence stats", "mine")?;
            inputs.push(p.clone());
            inputs.push(s.clone());
            (PathSet::load(&p)?, PathRelationStats::load(&s)?)
        }
        _ => (PathSet::default(), PathRelationStats::default()),
    };
    let max_len = cfg.parse(args.max_len, "max_len")?.unwrap_or(ptranse::paths::DEFAULT_MAX_LEN);
    let threshold =
        cfg.parse(args.threshold, "threshold")?.unwrap_or(ptranse::paths::DEFAULT_THRESHOLD);
    let resolver = PathResolver::new(&graph, &pathset, max_len, threshold);
    let report = evaluate(&store, &graph, &resolver, &stats, task, mode, rerank)?;
    print!("{}", report.summary());
    if let Some(report_path) = cfg.path(args.report, "report") {
        report.write(&report_path)?;
        write_manifest(
            &report_path.with_extension("manifest"),
            &[
                ("command", "eval".into()),
                ("task", format!("{task:?}").to_lowercase()),
                ("mode", mode.to_string()),
                ("rerank", rerank.to_string()),
            ],
            &inputs,
        )?;
        println!("report written to {}", report_path.display());
    }
    Ok(())
}

fn cmd_export(cfg: &ConfigFile, args: ExportArgs) -> Result<()> {
    let emb = require(cfg.path(args.emb, "emb"), "emb")?;
    require_artifact(&emb, "embedding file", "train")?;
    let out = require(cfg.path(args.out, "out"), "out")?;
    let store = EmbeddingStore::load(&emb)?;
    store.save(&out)?;
    write_manifest(
        &out.with_extension("manifest"),
        &[("command", "export".into())],
        &[emb],
    )?;
    println!("exported embeddings to {}", out.display());
    Ok(())
}

fn run() -> Result<()> {
    let cli = Cli::parse();
    let cfg = ConfigFile::load(cli.config.as_deref())?;
    match cli.command {
        Command::Ingest(args) => cmd_ingest(&cfg, args),
        Command::Mine(args) => cmd_mine(&cfg, args),
        Command::Train(args) => cmd_train(&cfg, args),
        Command::Eval(args) => cmd_eval(&cfg, args),
        Command::Export(args) => cmd_export(&cfg, args),
    }
}

fn main() -> ExitCode {
    match run() {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
