//! Command-line interface. Every subcommand reads the shared configuration,
//! applies its flags on top, writes its artifacts plus a manifest, and maps
//! failures to an exit code.

use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use hetgcot_core::fastgtn::{extract_relation_weights, train_reconstruction, RelationWeightVector};
use hetgcot_core::features::build_features;
use hetgcot_core::hgt::{train_link_prediction, venue_ranking_auc};
use hetgcot_core::pipeline::{
    build_queries, finetune_inputs, mine, prepare, run_query, Artifacts, CandidateOrder, Query, Transcript, Variant,
};
use hetgcot_core::prompt::{export_finetune_dataset, FinetuneRecord, QaTask};
use hetgcot_core::{EmbeddingTable, HetGraph, NodeId};
use serde::Serialize;
use serde_json::json;

use crate::bench::{benchmark, make_client};
use crate::config::{EmbedderKind, Provider, RunConfig};
use crate::embedder;
use crate::error::{CliError, FailureKind, StageExt};
use crate::formats::{self, read_graph, read_table, read_weights, write_graph, write_json, write_jsonl, write_table};
use crate::manifest::Manifest;

#[derive(Debug, Parser)]
#[command(name = "hetgcot", version, about = "Graph-grounded chain-of-thought QA over scholarly networks")]
pub struct Cli {
    /// TOML run configuration; flags override its values.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Seed for splits, candidate shuffles and the test embedder.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Validate node and edge files and write a graph snapshot.
    Ingest(IngestArgs),
    /// Build layer-normalized node features.
    Featurize(FeaturizeArgs),
    /// Train the graph transformer with link prediction.
    TrainHgt(TrainHgtArgs),
    /// Train the FastGTN autoencoder and export relation weights.
    TrainFastgtn(TrainFastgtnArgs),
    /// Mine, score and select metapaths for one query.
    MinePaths(MinePathsArgs),
    /// Write the prompts for every held-out query.
    BuildPrompts(BuildPromptsArgs),
    /// Write weighted fine-tuning records from the training split.
    ExportFinetune(ExportFinetuneArgs),
    /// Answer one query end to end and print the transcript.
    RunQa(RunQaArgs),
    /// Run the benchmark on the held-out split.
    Evaluate(EvaluateArgs),
    /// Run every ablation variant on the held-out split.
    Ablate(AblateArgs),
}

#[derive(Debug, Clone, Args)]
pub struct IngestArgs {
    #[arg(long)]
    pub nodes: Option<PathBuf>,
    #[arg(long)]
    pub edges: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Drop bad lines and records instead of failing; they are listed in
    /// `<out>.rejects.jsonl`.
    #[arg(long)]
    pub lenient: bool,
}

#[derive(Debug, Clone, Args)]
pub struct FeaturizeArgs {
    #[arg(long)]
    pub graph: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub embedder: Option<EmbedderKind>,
    /// Text embedding width.
    #[arg(long)]
    pub dim: Option<usize>,
    /// External embedder program and arguments.
    #[arg(long, num_args = 1.., allow_hyphen_values = true)]
    pub embedder_cmd: Option<Vec<String>>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct TrainHgtArgs {
    #[arg(long)]
    pub graph: Option<PathBuf>,
    #[arg(long)]
    pub feats: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// CSV of per-epoch mean loss.
    #[arg(long)]
    pub loss_log: Option<PathBuf>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub layers: Option<usize>,
    #[arg(long)]
    pub heads: Option<usize>,
    #[arg(long)]
    pub hidden: Option<usize>,
}

#[derive(Debug, Clone, Args)]
pub struct TrainFastgtnArgs {
    #[arg(long)]
    pub graph: Option<PathBuf>,
    #[arg(long)]
    pub emb: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub layers: Option<usize>,
    #[arg(long)]
    pub channels: Option<usize>,
    #[arg(long)]
    pub hidden: Option<usize>,
}

#[derive(Debug, Clone, Default, Args)]
pub struct ArtifactArgs {
    #[arg(long)]
    pub graph: Option<PathBuf>,
    #[arg(long)]
    pub emb: Option<PathBuf>,
    #[arg(long)]
    pub weights: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, Args)]
pub struct MetapathArgs {
    /// Length normalization exponent in [0, 1].
    #[arg(long)]
    pub gamma: Option<f64>,
    /// Instances kept per template.
    #[arg(long)]
    pub k: Option<usize>,
    #[arg(long)]
    pub seed_pool: Option<usize>,
}

#[derive(Debug, Clone, Default, Args)]
pub struct QueryArgs {
    #[arg(long, value_parser = parse_task)]
    pub task: Option<QaTask>,
    #[arg(long, value_parser = parse_order)]
    pub candidate_order: Option<CandidateOrder>,
    #[arg(long)]
    pub max_queries: Option<usize>,
    #[arg(long)]
    pub split_ratio: Option<f64>,
}

#[derive(Debug, Clone, Default, Args)]
pub struct LlmArgs {
    #[arg(long, value_enum)]
    pub llm: Option<Provider>,
    #[arg(long)]
    pub mock_k: Option<usize>,
    #[arg(long)]
    pub max_in_flight: Option<usize>,
}

#[derive(Debug, Clone, Args)]
pub struct MinePathsArgs {
    #[command(flatten)]
    pub artifacts: ArtifactArgs,
    /// Held-out paper the query is built from.
    #[arg(long)]
    pub query: String,
    #[command(flatten)]
    pub queries: QueryArgs,
    #[command(flatten)]
    pub metapath: MetapathArgs,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct BuildPromptsArgs {
    #[command(flatten)]
    pub artifacts: ArtifactArgs,
    #[command(flatten)]
    pub queries: QueryArgs,
    #[command(flatten)]
    pub metapath: MetapathArgs,
    #[arg(long, value_parser = parse_variant, default_value = "full")]
    pub variant: Variant,
    /// Only this held-out paper.
    #[arg(long)]
    pub query: Option<String>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct ExportFinetuneArgs {
    #[command(flatten)]
    pub artifacts: ArtifactArgs,
    #[command(flatten)]
    pub queries: QueryArgs,
    #[command(flatten)]
    pub metapath: MetapathArgs,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct RunQaArgs {
    #[command(flatten)]
    pub artifacts: ArtifactArgs,
    /// Held-out paper the query is built from.
    #[arg(long)]
    pub query: String,
    #[command(flatten)]
    pub queries: QueryArgs,
    #[command(flatten)]
    pub metapath: MetapathArgs,
    #[command(flatten)]
    pub llm: LlmArgs,
    #[arg(long, value_parser = parse_variant, default_value = "full")]
    pub variant: Variant,
    /// Ingest (when node and edge files are given), featurize and train
    /// before answering.
    #[arg(long)]
    pub train: bool,
    #[arg(long)]
    pub nodes: Option<PathBuf>,
    #[arg(long)]
    pub edges: Option<PathBuf>,
    /// Transcript file.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct EvaluateArgs {
    #[command(flatten)]
    pub artifacts: ArtifactArgs,
    #[command(flatten)]
    pub queries: QueryArgs,
    #[command(flatten)]
    pub metapath: MetapathArgs,
    #[command(flatten)]
    pub llm: LlmArgs,
    #[arg(long, value_parser = parse_variant, default_value = "full")]
    pub variant: Variant,
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct AblateArgs {
    #[command(flatten)]
    pub artifacts: ArtifactArgs,
    #[command(flatten)]
    pub queries: QueryArgs,
    #[command(flatten)]
    pub metapath: MetapathArgs,
    #[command(flatten)]
    pub llm: LlmArgs,
    /// Variants to run; defaults to the task's full matrix.
    #[arg(long, value_parser = parse_variant, num_args = 1..)]
    pub variants: Option<Vec<Variant>>,
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
}

fn parse_task(s: &str) -> Result<QaTask, String> {
    QaTask::parse(&s.replace('-', "_")).ok_or_else(|| {
        let names: Vec<&str> = QaTask::ALL.iter().map(|t| t.name()).collect();
        format!("unknown task {s:?}; expected one of {}", names.join(", "))
    })
}

fn parse_variant(s: &str) -> Result<Variant, String> {
    Variant::parse(s).ok_or_else(|| format!("unknown variant {s:?}; expected full, zero_shot, no_fastgtn or drop_step_N"))
}

fn parse_order(s: &str) -> Result<CandidateOrder, String> {
    serde_json::from_value(json!(s.replace('-', "_")))
        .map_err(|_| format!("unknown candidate order {s:?}; expected shuffled, similarity or gold_first"))
}

/// Effective configuration plus path resolution.
struct Ctx {
    cfg: RunConfig,
}

impl Ctx {
    fn out_dir(&self) -> PathBuf {
        self.cfg.paths.output_dir.clone().unwrap_or_else(|| PathBuf::from("out"))
    }

    /// Flag, then configured path, then `<output_dir>/<default_name>`.
    fn resolve(&self, flag: &Option<PathBuf>, configured: &Option<PathBuf>, default_name: &str) -> PathBuf {
        flag.clone()
            .or_else(|| configured.clone())
            .unwrap_or_else(|| self.out_dir().join(default_name))
    }

    fn existing(&self, what: &str, flag: &Option<PathBuf>, configured: &Option<PathBuf>, default_name: &str) -> Result<PathBuf, CliError> {
        let p = self.resolve(flag, configured, default_name);
        if !p.is_file() {
            return Err(anyhow::anyhow!("{what} not found: {}", p.display())).invalid("inputs");
        }
        Ok(p)
    }

    fn graph_path(&self, flag: &Option<PathBuf>) -> Result<PathBuf, CliError> {
        self.existing("graph snapshot", flag, &self.cfg.paths.graph, "graph.snap")
    }

    fn apply_metapath(&mut self, a: &MetapathArgs) {
        let m = &mut self.cfg.metapath;
        if let Some(g) = a.gamma {
            m.gamma = g;
        }
        if let Some(k) = a.k {
            m.k = k;
        }
        if let Some(n) = a.seed_pool {
            m.seed_pool = n;
        }
    }

    fn apply_queries(&mut self, a: &QueryArgs) {
        if let Some(t) = a.task {
            self.cfg.task = t;
        }
        let b = &mut self.cfg.benchmark;
        if let Some(o) = a.candidate_order {
            b.candidate_order = o;
        }
        if a.max_queries.is_some() {
            b.max_queries = a.max_queries;
        }
        if let Some(r) = a.split_ratio {
            b.split_ratio = r;
        }
    }

    fn apply_llm(&mut self, a: &LlmArgs) {
        let l = &mut self.cfg.llm;
        if let Some(p) = a.llm {
            l.provider = p;
        }
        if let Some(k) = a.mock_k {
            l.mock_k = k;
        }
        if let Some(n) = a.max_in_flight {
            l.settings.max_in_flight = n;
        }
    }

    fn validate(&self) -> Result<(), CliError> {
        self.cfg.validate().invalid("config")
    }
}

pub fn load_config(cli: &Cli) -> Result<RunConfig, CliError> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p).invalid("config")?,
        None => RunConfig::default(),
    };
    cfg.apply_env();
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    Ok(cfg)
}

pub fn run(cli: Cli) -> Result<(), CliError> {
    let mut ctx = Ctx { cfg: load_config(&cli)? };
    match cli.command {
        Command::Ingest(a) => ingest(&ctx, &a),
        Command::Featurize(a) => featurize(&mut ctx, &a),
        Command::TrainHgt(a) => train_hgt(&mut ctx, &a),
        Command::TrainFastgtn(a) => train_fastgtn(&mut ctx, &a),
        Command::MinePaths(a) => mine_paths(&mut ctx, &a),
        Command::BuildPrompts(a) => build_prompts(&mut ctx, &a),
        Command::ExportFinetune(a) => export_finetune(&mut ctx, &a),
        Command::RunQa(a) => run_qa(&mut ctx, &a),
        Command::Evaluate(a) => evaluate(&mut ctx, &a),
        Command::Ablate(a) => ablate(&mut ctx, &a),
    }
}

fn io_stage<T>(r: anyhow::Result<T>) -> Result<T, CliError> {
    r.stage(FailureKind::Validation, "io")
}

fn ingest(ctx: &Ctx, a: &IngestArgs) -> Result<(), CliError> {
    ctx.validate()?;
    let nodes = ctx.existing("node file", &a.nodes, &ctx.cfg.paths.nodes, "nodes.jsonl")?;
    let edges = ctx.existing("edge file", &a.edges, &ctx.cfg.paths.edges, "edges.jsonl")?;
    let out = ctx.resolve(&a.out, &ctx.cfg.paths.graph, "graph.snap");
    let ingested = formats::ingest(&nodes, &edges, a.lenient).invalid("ingest")?;
    io_stage(write_graph(&ingested.graph, &out))?;
    let stats = ingested.graph.stats();
    let mut m = Manifest::new("ingest", &ctx.cfg);
    io_stage(m.input(&nodes))?;
    io_stage(m.input(&edges))?;
    io_stage(m.output(&out))?;
    m.detail("stats", stats);
    m.detail("rejected", ingested.rejected.len());
    if a.lenient {
        let rejects = with_suffix(&out, ".rejects.jsonl");
        io_stage(write_jsonl(&ingested.rejected, &rejects))?;
        io_stage(m.output(&rejects))?;
    }
    for r in &ingested.rejected {
        log::warn!("rejected {}:{}: {}", r.file, r.line, r.reason);
    }
    io_stage(m.write_for(&out))?;
    println!("{}", json!({"stats": stats, "rejected": ingested.rejected.len()}));
    Ok(())
}

fn with_suffix(p: &Path, suffix: &str) -> PathBuf {
    let mut name = p.file_name().unwrap_or_default().to_os_string();
    name.push(suffix);
    p.with_file_name(name)
}

fn featurize(ctx: &mut Ctx, a: &FeaturizeArgs) -> Result<(), CliError> {
    let e = &mut ctx.cfg.embedder;
    if let Some(k) = a.embedder {
        e.kind = k;
    }
    if let Some(d) = a.dim {
        e.dim = d;
    }
    if let Some(c) = &a.embedder_cmd {
        e.command = c.clone();
    }
    ctx.validate()?;
    let graph_path = ctx.graph_path(&a.graph)?;
    let out = ctx.resolve(&a.out, &ctx.cfg.paths.features, "feats.bin");
    let g = read_graph(&graph_path).invalid("load graph")?;
    let embedder = embedder::from_config(&ctx.cfg.embedder, ctx.cfg.seed).invalid("embedder")?;
    let (feats, report) = build_features(&g, &embedder.as_ref()).invalid("featurize")?;
    if !report.missing_fwci.is_empty() {
        log::warn!("{} paper(s) have no fwci; using 0", report.missing_fwci.len());
        for id in &report.missing_fwci {
            log::debug!("missing fwci: {id}");
        }
    }
    io_stage(write_table(&feats, &out))?;
    let mut m = Manifest::new("featurize", &ctx.cfg);
    io_stage(m.input(&graph_path))?;
    io_stage(m.output(&out))?;
    m.detail("dim", feats.dim());
    m.detail("missing_fwci", &report.missing_fwci);
    io_stage(m.write_for(&out))?;
    println!("{}", json!({"nodes": feats.len(), "dim": feats.dim()}));
    Ok(())
}

fn train_hgt(ctx: &mut Ctx, a: &TrainHgtArgs) -> Result<(), CliError> {
    let h = &mut ctx.cfg.hgt;
    set(&mut h.epochs, a.epochs);
    set(&mut h.learning_rate, a.lr);
    set(&mut h.layers, a.layers);
    set(&mut h.heads, a.heads);
    set(&mut h.hidden_dim, a.hidden);
    ctx.validate()?;
    let graph_path = ctx.graph_path(&a.graph)?;
    let feats_path = ctx.existing("feature table", &a.feats, &ctx.cfg.paths.features, "feats.bin")?;
    let out = ctx.resolve(&a.out, &ctx.cfg.paths.embeddings, "emb.bin");
    let loss_log = a.loss_log.clone().unwrap_or_else(|| with_suffix(&out, ".loss.csv"));
    let g = read_graph(&graph_path).invalid("load graph")?;
    let feats = read_table(&feats_path).invalid("load features")?;
    let c = &ctx.cfg.hgt;
    if c.effective_hidden() != c.hidden_dim {
        log::warn!(
            "hidden size {} is not a multiple of {} heads; using {}",
            c.hidden_dim,
            c.heads,
            c.effective_hidden()
        );
    }
    let trained = train_link_prediction(&g, &feats, c).stage(FailureKind::Training, "train-hgt")?;
    let auc = venue_ranking_auc(&g, &trained.embeddings).stage(FailureKind::Training, "train-hgt")?;
    io_stage(write_table(&trained.embeddings, &out))?;
    io_stage(write_loss_csv(&trained.loss_history, &loss_log))?;
    let mut m = Manifest::new("train-hgt", &ctx.cfg);
    io_stage(m.input(&graph_path))?;
    io_stage(m.input(&feats_path))?;
    io_stage(m.output(&out))?;
    io_stage(m.output(&loss_log))?;
    m.detail("requested_hidden", c.hidden_dim);
    m.detail("effective_hidden", c.effective_hidden());
    m.detail("heads", c.heads);
    m.detail("epochs", c.epochs);
    m.detail("final_loss", trained.loss_history.last());
    m.detail("train_auc", auc);
    io_stage(m.write_for(&out))?;
    println!(
        "{}",
        json!({"dim": trained.embeddings.dim(), "final_loss": trained.loss_history.last(), "train_auc": auc})
    );
    Ok(())
}

fn set<T>(slot: &mut T, v: Option<T>) {
    if let Some(v) = v {
        *slot = v;
    }
}

fn write_loss_csv(losses: &[f64], path: &Path) -> anyhow::Result<()> {
    let mut w = std::io::BufWriter::new(formats::create(path)?);
    writeln!(w, "epoch,loss")?;
    for (i, l) in losses.iter().enumerate() {
        writeln!(w, "{},{l}", i + 1)?;
    }
    w.flush()?;
    Ok(())
}

fn train_fastgtn(ctx: &mut Ctx, a: &TrainFastgtnArgs) -> Result<(), CliError> {
    let f = &mut ctx.cfg.fastgtn;
    set(&mut f.epochs, a.epochs);
    set(&mut f.learning_rate, a.lr);
    set(&mut f.layers, a.layers);
    set(&mut f.channels, a.channels);
    set(&mut f.hidden_dim, a.hidden);
    ctx.validate()?;
    let graph_path = ctx.graph_path(&a.graph)?;
    let emb_path = ctx.existing("embedding table", &a.emb, &ctx.cfg.paths.embeddings, "emb.bin")?;
    let out = ctx.resolve(&a.out, &ctx.cfg.paths.weights, "weights.json");
    let g = read_graph(&graph_path).invalid("load graph")?;
    let emb = read_table(&emb_path).invalid("load embeddings")?;
    let c = &ctx.cfg.fastgtn;
    let trained = train_reconstruction(&g, &emb, c).stage(FailureKind::Training, "train-fastgtn")?;
    let report = extract_relation_weights(&trained.params);
    let extra = json!({
        "config": c,
        "loss_history": trained.loss_history,
        "final_loss": trained.final_loss,
    });
    io_stage(write_json(&formats::weights_json(&report, c.channels, extra), &out))?;
    let mut m = Manifest::new("train-fastgtn", &ctx.cfg);
    io_stage(m.input(&graph_path))?;
    io_stage(m.input(&emb_path))?;
    io_stage(m.output(&out))?;
    m.detail("final_loss", trained.final_loss);
    io_stage(m.write_for(&out))?;
    let w = report.weights;
    println!(
        "{}",
        json!({"paper_venue": w.get(hetgcot_core::EdgeKind::PaperVenue), "paper_author": w.get(hetgcot_core::EdgeKind::PaperAuthor), "final_loss": trained.final_loss})
    );
    Ok(())
}

struct Loaded {
    graph: HetGraph,
    emb: EmbeddingTable,
    weights: RelationWeightVector,
    inputs: Vec<PathBuf>,
}

impl Loaded {
    fn artifacts(&self) -> Artifacts<'_> {
        Artifacts {
            graph: &self.graph,
            embeddings: &self.emb,
            weights: &self.weights,
        }
    }

    fn record_inputs(&self, m: &mut Manifest) -> Result<(), CliError> {
        for p in &self.inputs {
            io_stage(m.input(p))?;
        }
        Ok(())
    }
}

fn load(ctx: &Ctx, a: &ArtifactArgs) -> Result<Loaded, CliError> {
    let graph_path = ctx.graph_path(&a.graph)?;
    let emb_path = ctx.existing("embedding table", &a.emb, &ctx.cfg.paths.embeddings, "emb.bin")?;
    let weights_path = ctx.existing("fastgtn weights", &a.weights, &ctx.cfg.paths.weights, "weights.json")?;
    let graph = read_graph(&graph_path).invalid("load graph")?;
    let emb = read_table(&emb_path).invalid("load embeddings")?;
    emb.aligned_to(&graph).invalid("load embeddings")?;
    let weights = read_weights(&weights_path).invalid("load weights")?;
    Ok(Loaded {
        graph,
        emb,
        weights,
        inputs: vec![graph_path, emb_path, weights_path],
    })
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Side {
    Train,
    Test,
}

fn queries(ctx: &Ctx, l: &Loaded, only: Option<&str>, side: Side) -> Result<Vec<Query>, CliError> {
    let art = l.artifacts();
    let bcfg = ctx.cfg.benchmark_config();
    let task = ctx.cfg.task;
    let papers: BTreeSet<NodeId> = match only {
        Some(id) => {
            let id = NodeId::from(id);
            if l.graph.kind_of(&id) != Some(hetgcot_core::NodeKind::Paper) {
                return Err(anyhow::anyhow!("{id} is not a paper in the graph")).invalid("query");
            }
            [id].into_iter().collect()
        }
        None => {
            let split = l.graph.split(ctx.cfg.benchmark.split_ratio, ctx.cfg.seed).invalid("split")?;
            match side {
                Side::Train => split.train,
                Side::Test => split.test,
            }
        }
    };
    let qs = build_queries(&art, task, &papers, &bcfg);
    if qs.is_empty() {
        return Err(anyhow::anyhow!("no {} queries can be formed from the selected papers", task.name())).invalid("query");
    }
    Ok(qs)
}

#[derive(Serialize)]
struct PathsFile<'a> {
    task: QaTask,
    case: &'a NodeId,
    query: &'a NodeId,
    k: usize,
    gamma: f64,
    seed_pool: usize,
    weights: BTreeMap<&'static str, f64>,
    hidden_edges: &'a BTreeSet<(NodeId, NodeId)>,
    enumerated: usize,
    seeds: BTreeMap<String, Vec<(NodeId, f64)>>,
    templates: BTreeMap<String, &'a [hetgcot_core::metapath::MetapathInstance]>,
}

fn mine_paths(ctx: &mut Ctx, a: &MinePathsArgs) -> Result<(), CliError> {
    ctx.apply_queries(&a.queries);
    ctx.apply_metapath(&a.metapath);
    ctx.validate()?;
    let l = load(ctx, &a.artifacts)?;
    let q = queries(ctx, &l, Some(&a.query), Side::Test)?.remove(0);
    let mined = mine(&l.artifacts(), &q, &l.weights, &ctx.cfg.metapath).invalid("mine-paths")?;
    let out = a.out.clone().unwrap_or_else(|| ctx.out_dir().join("paths.json"));
    let m_cfg = &ctx.cfg.metapath;
    let file = PathsFile {
        task: q.task,
        case: &q.case,
        query: &q.query,
        k: m_cfg.k,
        gamma: m_cfg.gamma,
        seed_pool: m_cfg.seed_pool,
        weights: l.weights.iter().map(|(k, v)| (k.key(), v)).collect(),
        hidden_edges: &q.hidden_edges,
        enumerated: mined.enumerated,
        seeds: mined.seeds.iter().map(|(t, p)| (t.name().to_string(), p.seeds.clone())).collect(),
        templates: mined
            .selection
            .per_template
            .iter()
            .map(|(t, v)| (t.name().to_string(), v.as_slice()))
            .collect(),
    };
    io_stage(write_json(&file, &out))?;
    let mut m = Manifest::new("mine-paths", &ctx.cfg);
    l.record_inputs(&mut m)?;
    io_stage(m.output(&out))?;
    io_stage(m.write_for(&out))?;
    println!("{}", json!({"enumerated": mined.enumerated, "selected": mined.selection.len()}));
    Ok(())
}

#[derive(Serialize)]
struct PromptLine<'a> {
    case: &'a NodeId,
    variant: String,
    prompt: &'a hetgcot_core::prompt::PromptBundle,
}

fn build_prompts(ctx: &mut Ctx, a: &BuildPromptsArgs) -> Result<(), CliError> {
    ctx.apply_queries(&a.queries);
    ctx.apply_metapath(&a.metapath);
    ctx.validate()?;
    check_variant(ctx.cfg.task, a.variant)?;
    let l = load(ctx, &a.artifacts)?;
    let qs = queries(ctx, &l, a.query.as_deref(), Side::Test)?;
    let art = l.artifacts();
    let mut prepared = Vec::with_capacity(qs.len());
    for q in &qs {
        let p = prepare(&art, q, a.variant, &ctx.cfg.metapath).invalid("build-prompts")?;
        for w in &p.warnings {
            log::warn!("{}: {w}", q.case);
        }
        prepared.push(p);
    }
    let lines: Vec<PromptLine> = qs
        .iter()
        .zip(&prepared)
        .map(|(q, p)| PromptLine {
            case: &q.case,
            variant: a.variant.name(),
            prompt: &p.prompt,
        })
        .collect();
    let out = a.out.clone().unwrap_or_else(|| ctx.out_dir().join("prompts.jsonl"));
    io_stage(write_jsonl(&lines, &out))?;
    let mut m = Manifest::new("build-prompts", &ctx.cfg);
    l.record_inputs(&mut m)?;
    io_stage(m.output(&out))?;
    m.detail("variant", a.variant.name());
    m.detail("prompts", lines.len());
    io_stage(m.write_for(&out))?;
    println!("{}", json!({"prompts": lines.len()}));
    Ok(())
}

fn check_variant(task: QaTask, v: Variant) -> Result<(), CliError> {
    if let Variant::DropStep(n) = v {
        if n >= task.step_count() {
            return Err(anyhow::anyhow!(
                "{} has {} steps; only steps 1..{} can be dropped",
                task.name(),
                task.step_count(),
                task.step_count() - 1
            ))
            .invalid("variant");
        }
    }
    Ok(())
}

fn export_finetune(ctx: &mut Ctx, a: &ExportFinetuneArgs) -> Result<(), CliError> {
    ctx.apply_queries(&a.queries);
    ctx.apply_metapath(&a.metapath);
    ctx.validate()?;
    let l = load(ctx, &a.artifacts)?;
    let qs = queries(ctx, &l, None, Side::Train)?;
    let inputs = finetune_inputs(&l.artifacts(), &qs, &ctx.cfg.metapath).invalid("export-finetune")?;
    let (examples, skipped) = export_finetune_dataset(inputs);
    for s in &skipped {
        log::warn!("skipped {}: {}", s.query, s.reason);
    }
    let records: Vec<FinetuneRecord> = examples.iter().map(|e| e.record()).collect();
    let out = a.out.clone().unwrap_or_else(|| ctx.out_dir().join("finetune.jsonl"));
    io_stage(write_jsonl(&records, &out))?;
    let mut m = Manifest::new("export-finetune", &ctx.cfg);
    l.record_inputs(&mut m)?;
    io_stage(m.output(&out))?;
    m.detail("examples", records.len());
    m.detail("skipped", &skipped);
    io_stage(m.write_for(&out))?;
    println!("{}", json!({"examples": records.len(), "skipped": skipped.len()}));
    Ok(())
}

fn failure_kind(stage: &str) -> FailureKind {
    match stage {
        "llm" => FailureKind::Transport,
        "parse" => FailureKind::Parse,
        _ => FailureKind::Validation,
    }
}

fn run_qa(ctx: &mut Ctx, a: &RunQaArgs) -> Result<(), CliError> {
    ctx.apply_queries(&a.queries);
    ctx.apply_metapath(&a.metapath);
    ctx.apply_llm(&a.llm);
    ctx.validate()?;
    check_variant(ctx.cfg.task, a.variant)?;
    if a.train {
        train_all(ctx, a)?;
    }
    let l = load(ctx, &a.artifacts)?;
    let q = queries(ctx, &l, Some(&a.query), Side::Test)?.remove(0);
    let client = make_client(&ctx.cfg.llm);
    let t = run_query(&l.artifacts(), &q, a.variant, &ctx.cfg.metapath, &*client);
    let out = a
        .out
        .clone()
        .unwrap_or_else(|| ctx.out_dir().join(format!("transcript-{}.json", sanitize(q.case.as_str()))));
    io_stage(write_json(&t, &out))?;
    let mut m = Manifest::new("run-qa", &ctx.cfg);
    l.record_inputs(&mut m)?;
    io_stage(m.output(&out))?;
    m.detail("client", client.name());
    io_stage(m.write_for(&out))?;
    print_answer(&t);
    match &t.failure {
        Some(f) => Err(CliError {
            kind: failure_kind(&f.stage),
            stage: f.stage.clone(),
            source: anyhow::anyhow!("{}", f.message),
        }),
        None => Ok(()),
    }
}

/// Runs ingest (if node and edge files are available), featurize,
/// train-hgt and train-fastgtn with the current configuration, writing to
/// the same paths the individual commands would use.
fn train_all(ctx: &mut Ctx, a: &RunQaArgs) -> Result<(), CliError> {
    let nodes = a.nodes.clone().or_else(|| ctx.cfg.paths.nodes.clone());
    let edges = a.edges.clone().or_else(|| ctx.cfg.paths.edges.clone());
    let graph = a.artifacts.graph.clone();
    if nodes.is_some() || edges.is_some() {
        ingest(
            ctx,
            &IngestArgs {
                nodes,
                edges,
                out: graph.clone(),
                lenient: false,
            },
        )?;
    }
    featurize(
        ctx,
        &FeaturizeArgs {
            graph: graph.clone(),
            embedder: None,
            dim: None,
            embedder_cmd: None,
            out: None,
        },
    )?;
    train_hgt(
        ctx,
        &TrainHgtArgs {
            graph: graph.clone(),
            feats: None,
            out: a.artifacts.emb.clone(),
            loss_log: None,
            epochs: None,
            lr: None,
            layers: None,
            heads: None,
            hidden: None,
        },
    )?;
    train_fastgtn(
        ctx,
        &TrainFastgtnArgs {
            graph,
            emb: a.artifacts.emb.clone(),
            out: a.artifacts.weights.clone(),
            epochs: None,
            lr: None,
            layers: None,
            channels: None,
            hidden: None,
        },
    )
}

fn sanitize(s: &str) -> String {
    s.chars().map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' }).collect()
}

fn print_answer(t: &Transcript) {
    match &t.parsed {
        Some(p) => {
            for item in &p.items {
                let id = item.candidate.as_ref().map_or("unmatched", |c| c.as_str());
                println!("{}. {} [{id}]", item.rank, item.answer);
            }
        }
        None => println!("(no answer)"),
    }
}

#[derive(Serialize)]
struct ReportFile<'a> {
    task: QaTask,
    variant: String,
    client: String,
    config_digest: String,
    failures: usize,
    valid: bool,
    #[serde(flatten)]
    report: &'a hetgcot_core::eval::EvalReport,
}

fn dominant_failure(ts: &[Transcript]) -> FailureKind {
    let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
    for t in ts {
        if let Some(f) = &t.failure {
            *counts.entry(f.stage.as_str()).or_default() += 1;
        }
    }
    counts
        .into_iter()
        .max_by_key(|&(_, n)| n)
        .map_or(FailureKind::Validation, |(s, _)| failure_kind(s))
}

fn evaluate(ctx: &mut Ctx, a: &EvaluateArgs) -> Result<(), CliError> {
    ctx.apply_queries(&a.queries);
    ctx.apply_metapath(&a.metapath);
    ctx.apply_llm(&a.llm);
    ctx.validate()?;
    check_variant(ctx.cfg.task, a.variant)?;
    let l = load(ctx, &a.artifacts)?;
    let qs = queries(ctx, &l, None, Side::Test)?;
    let client = make_client(&ctx.cfg.llm);
    let dir = a
        .out_dir
        .clone()
        .unwrap_or_else(|| ctx.out_dir().join(format!("eval-{}-{}", ctx.cfg.task.name(), a.variant.name())));
    let outcome = benchmark(
        &l.artifacts(),
        ctx.cfg.task,
        &qs,
        a.variant,
        &ctx.cfg.benchmark_config(),
        &*client,
        ctx.cfg.llm.settings.max_in_flight,
    )
    .invalid("evaluate")?;
    let report = ReportFile {
        task: outcome.task,
        variant: outcome.variant.name(),
        client: client.name(),
        config_digest: ctx.cfg.digest(),
        failures: outcome.failures,
        valid: outcome.valid,
        report: &outcome.report,
    };
    let report_path = dir.join("report.json");
    let transcripts_path = dir.join("transcripts.jsonl");
    io_stage(write_json(&report, &report_path))?;
    io_stage(write_jsonl(&outcome.transcripts, &transcripts_path))?;
    let mut m = Manifest::new("evaluate", &ctx.cfg);
    l.record_inputs(&mut m)?;
    io_stage(m.output(&report_path))?;
    io_stage(m.output(&transcripts_path))?;
    io_stage(m.write_for(&dir))?;
    let r = &outcome.report;
    println!(
        "{} {}: n={} Hit={:.2} H@1={:.2} F1={:.2} NDCG={:.2} failures={}",
        outcome.task, report.variant, r.n, r.hit, r.h_at_1, r.f1, r.ndcg, outcome.failures
    );
    if !outcome.valid {
        return Err(CliError {
            kind: dominant_failure(&outcome.transcripts),
            stage: String::from("evaluate"),
            source: anyhow::anyhow!(
                "{} of {} queries failed; run marked invalid",
                outcome.failures,
                outcome.transcripts.len()
            ),
        });
    }
    Ok(())
}

#[derive(Serialize)]
struct AblationRow {
    variant: String,
    n: usize,
    hit: f64,
    h_at_1: f64,
    f1: f64,
    ndcg: f64,
    failures: usize,
    valid: bool,
}

fn ablate(ctx: &mut Ctx, a: &AblateArgs) -> Result<(), CliError> {
    ctx.apply_queries(&a.queries);
    ctx.apply_metapath(&a.metapath);
    ctx.apply_llm(&a.llm);
    ctx.validate()?;
    let task = ctx.cfg.task;
    let variants = a.variants.clone().unwrap_or_else(|| Variant::matrix(task));
    for &v in &variants {
        check_variant(task, v)?;
    }
    let l = load(ctx, &a.artifacts)?;
    let qs = queries(ctx, &l, None, Side::Test)?;
    let client = make_client(&ctx.cfg.llm);
    let dir = a
        .out_dir
        .clone()
        .unwrap_or_else(|| ctx.out_dir().join(format!("ablation-{}", task.name())));
    let bcfg = ctx.cfg.benchmark_config();
    let mut rows = Vec::new();
    let mut m = Manifest::new("ablate", &ctx.cfg);
    l.record_inputs(&mut m)?;
    for &v in &variants {
        let o = benchmark(&l.artifacts(), task, &qs, v, &bcfg, &*client, ctx.cfg.llm.settings.max_in_flight)
            .invalid("ablate")?;
        let path = dir.join(format!("transcripts-{}.jsonl", v.name()));
        io_stage(write_jsonl(&o.transcripts, &path))?;
        io_stage(m.output(&path))?;
        let r = &o.report;
        println!(
            "{:<12} n={} Hit={:.2} H@1={:.2} F1={:.2} NDCG={:.2} failures={}",
            v.name(),
            r.n,
            r.hit,
            r.h_at_1,
            r.f1,
            r.ndcg,
            o.failures
        );
        rows.push(AblationRow {
            variant: v.name(),
            n: r.n,
            hit: r.hit,
            h_at_1: r.h_at_1,
            f1: r.f1,
            ndcg: r.ndcg,
            failures: o.failures,
            valid: o.valid,
        });
    }
    let summary = dir.join("ablation.json");
    io_stage(write_json(
        &json!({"task": task, "client": client.name(), "config_digest": ctx.cfg.digest(), "variants": rows}),
        &summary,
    ))?;
    io_stage(m.output(&summary))?;
    io_stage(m.write_for(&dir))?;
    Ok(())
}
