//! Per-query reasoning pipeline and benchmark runs: seed selection,
//! enumeration, scoring, stratified top-k, naturalization, prompting,
//! completion, parsing and scoring.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;

use rand::seq::{IndexedRandom, SliceRandom};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::eval::{aggregate_scores, score_record, EvalError, EvalReport, QaRecord, RecordScore};
use crate::fastgtn::RelationWeightVector;
use crate::graph::{HetGraph, MaskedView, NodeId, NodeKind};
use crate::llm::{parse_ranked, LlmClient, RankedAnswer};
use crate::math::cosine;
use crate::metapath::{
    enumerate_instances, score_instance, select_seeds, stratified_top_k, EnumerationOptions, MetapathError,
    MetapathInstance, MetapathTemplate, SeedPool, Selection,
};
use crate::naturalize::{render_context_block, selection_scale, NaturalizeError};
use crate::prompt::{build_prompt, FinetuneInput, PromptBundle, PromptError, PromptMode, PromptRequest, QaTask};
use crate::table::EmbeddingTable;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MetapathConfig {
    pub gamma: f64,
    pub k: usize,
    pub seed_pool: usize,
    pub max_per_seed: usize,
    pub max_total: usize,
    /// Author tasks also seed the `seed_pool` authors most similar to the target.
    pub similar_author_seeds: bool,
}

impl Default for MetapathConfig {
    fn default() -> Self {
        Self {
            gamma: 0.5,
            k: 5,
            seed_pool: 10,
            max_per_seed: 200,
            max_total: 200,
            similar_author_seeds: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CandidateOrder {
    /// Gold answers first; only useful as a rigged oracle.
    GoldFirst,
    /// Descending embedding similarity to the query.
    Similarity,
    #[default]
    Shuffled,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BenchmarkConfig {
    pub metapath: MetapathConfig,
    /// Journal queries list every venue when there are at most this many,
    /// otherwise this many venues most similar to the paper.
    pub journal_candidates: usize,
    pub candidate_order: CandidateOrder,
    pub seed: u64,
    pub max_queries: Option<usize>,
    /// Runs with a larger share of failed queries are marked invalid.
    pub max_failure_rate: f64,
}

impl Default for BenchmarkConfig {
    fn default() -> Self {
        Self {
            metapath: MetapathConfig::default(),
            journal_candidates: 111,
            candidate_order: CandidateOrder::Shuffled,
            seed: 0,
            max_queries: None,
            max_failure_rate: 0.1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    Full,
    ZeroShot,
    NoFastgtn,
    DropStep(usize),
}

impl Variant {
    pub fn name(self) -> String {
        match self {
            Variant::Full => String::from("full"),
            Variant::ZeroShot => String::from("zero_shot"),
            Variant::NoFastgtn => String::from("no_fastgtn"),
            Variant::DropStep(n) => format!("drop_step_{n}"),
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        let s = s.replace('-', "_");
        match s.as_str() {
            "full" => Some(Variant::Full),
            "zero_shot" => Some(Variant::ZeroShot),
            "no_fastgtn" => Some(Variant::NoFastgtn),
            other => other
                .strip_prefix("drop_step_")
                .and_then(|n| n.parse().ok())
                .filter(|&n| n >= 1)
                .map(Variant::DropStep),
        }
    }

    /// The ablation matrix for a task.
    pub fn matrix(task: QaTask) -> Vec<Variant> {
        let mut v = alloc::vec![Variant::ZeroShot, Variant::NoFastgtn];
        v.extend((1..task.step_count()).map(Variant::DropStep));
        v.push(Variant::Full);
        v
    }

    fn prompt_mode(self) -> PromptMode {
        match self {
            Variant::ZeroShot => PromptMode::ZeroShot,
            Variant::DropStep(n) => PromptMode::DropStep(n),
            _ => PromptMode::ChainOfThought,
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.name())
    }
}

/// Trained inputs to the reasoning stage.
#[derive(Debug, Clone, Copy)]
pub struct Artifacts<'a> {
    pub graph: &'a HetGraph,
    pub embeddings: &'a EmbeddingTable,
    pub weights: &'a RelationWeightVector,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Query {
    pub task: QaTask,
    /// The held-out paper this query was built from.
    pub case: NodeId,
    /// Node the question is about: the paper, or the target author.
    pub query: NodeId,
    pub gold: Vec<NodeId>,
    pub candidates: Vec<NodeId>,
    pub hidden_edges: BTreeSet<(NodeId, NodeId)>,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum PipelineError {
    #[error("metapath stage: {0}")]
    Metapath(#[from] MetapathError),
    #[error("naturalization stage: {0}")]
    Naturalize(#[from] NaturalizeError),
    #[error("prompt stage: {0}")]
    Prompt(#[from] PromptError),
    #[error("evaluation: {0}")]
    Eval(#[from] EvalError),
    #[error("query {0} is not in the graph")]
    UnknownQuery(NodeId),
}

fn stable_hash(s: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in s.bytes() {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

fn query_rng(seed: u64, task: QaTask, case: &NodeId) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed ^ stable_hash(task.name()) ^ stable_hash(case.as_str()).rotate_left(17))
}

fn similarity(emb: &EmbeddingTable, a: &NodeId, b: &NodeId) -> f64 {
    match (emb.get(a), emb.get(b)) {
        (Some(x), Some(y)) => cosine(x, y).unwrap_or(0.0),
        _ => 0.0,
    }
}

fn by_similarity(emb: &EmbeddingTable, query: &NodeId, ids: &mut [NodeId]) {
    ids.sort_by(|a, b| {
        similarity(emb, query, b)
            .total_cmp(&similarity(emb, query, a))
            .then_with(|| a.cmp(b))
    });
}

fn order_candidates(
    art: &Artifacts<'_>,
    query: &NodeId,
    gold: &[NodeId],
    mut ids: Vec<NodeId>,
    order: CandidateOrder,
    rng: &mut ChaCha8Rng,
) -> Vec<NodeId> {
    ids.sort();
    match order {
        CandidateOrder::Shuffled => ids.shuffle(rng),
        CandidateOrder::Similarity => by_similarity(art.embeddings, query, &mut ids),
        CandidateOrder::GoldFirst => {
            by_similarity(art.embeddings, query, &mut ids);
            let (mut first, rest): (Vec<NodeId>, Vec<NodeId>) = ids.into_iter().partition(|id| gold.contains(id));
            first.sort_by_key(|id| gold.iter().position(|g| g == id));
            first.extend(rest);
            ids = first;
        }
    }
    ids
}

/// Queries for `task`, one per eligible held-out paper, ordered by paper id.
///
/// Journal queries hide the paper's venue edge. Author queries take the
/// paper's first author as the target and hide that author's edge to the
/// paper; authorship asks for the paper among 4 distractors the target never
/// wrote, collaboration asks for up to 3 co-authors on the paper among
/// authors who never wrote with the target. Papers that cannot supply enough
/// distractors are skipped.
pub fn build_queries(
    art: &Artifacts<'_>,
    task: QaTask,
    test_papers: &BTreeSet<NodeId>,
    cfg: &BenchmarkConfig,
) -> Vec<Query> {
    let g = art.graph;
    let mut out = Vec::new();
    for case in test_papers {
        if cfg.max_queries.is_some_and(|m| out.len() >= m) {
            break;
        }
        let Some(pi) = g.index_of(case) else { continue };
        if g.node_at(pi).kind() != NodeKind::Paper {
            continue;
        }
        let mut rng = query_rng(cfg.seed, task, case);
        let query = match task {
            QaTask::JournalRecommendation => {
                let Some(v) = g.venue_of(pi) else { continue };
                let gold = alloc::vec![g.node_at(v).id.clone()];
                let mut venues: Vec<NodeId> = g.ids_of_kind(NodeKind::Venue).cloned().collect();
                if venues.len() > cfg.journal_candidates {
                    by_similarity(art.embeddings, case, &mut venues);
                    venues.truncate(cfg.journal_candidates.max(1));
                }
                let candidates = order_candidates(art, case, &gold, venues, cfg.candidate_order, &mut rng);
                Query {
                    task,
                    case: case.clone(),
                    query: case.clone(),
                    hidden_edges: [(case.clone(), gold[0].clone())].into_iter().collect(),
                    gold,
                    candidates,
                }
            }
            QaTask::AuthorshipIdentification => {
                let authors = g.undirected_indices(pi, crate::graph::EdgeKind::PaperAuthor);
                let Some(&target) = authors.first() else { continue };
                let own: BTreeSet<usize> = g
                    .undirected_indices(target, crate::graph::EdgeKind::PaperAuthor)
                    .iter()
                    .copied()
                    .collect();
                let pool: Vec<NodeId> = g
                    .indices_of_kind(NodeKind::Paper)
                    .filter(|p| !own.contains(p))
                    .map(|p| g.node_at(p).id.clone())
                    .collect();
                if pool.len() < 4 {
                    continue;
                }
                let mut ids: Vec<NodeId> = pool.choose_multiple(&mut rng, 4).cloned().collect();
                ids.push(case.clone());
                let target_id = g.node_at(target).id.clone();
                let gold = alloc::vec![case.clone()];
                let candidates = order_candidates(art, &target_id, &gold, ids, cfg.candidate_order, &mut rng);
                Query {
                    task,
                    case: case.clone(),
                    hidden_edges: [(case.clone(), target_id.clone())].into_iter().collect(),
                    query: target_id,
                    gold,
                    candidates,
                }
            }
            QaTask::CollaborationDiscovery => {
                let authors = g.undirected_indices(pi, crate::graph::EdgeKind::PaperAuthor);
                if authors.len() < 2 {
                    continue;
                }
                let target = authors[0];
                let mut coauthors: BTreeSet<usize> = BTreeSet::new();
                for &p in g.undirected_indices(target, crate::graph::EdgeKind::PaperAuthor) {
                    coauthors.extend(g.undirected_indices(p, crate::graph::EdgeKind::PaperAuthor));
                }
                let gold_idx: Vec<usize> = authors[1..].iter().copied().take(3).collect();
                let pool: Vec<NodeId> = g
                    .indices_of_kind(NodeKind::Author)
                    .filter(|a| !coauthors.contains(a))
                    .map(|a| g.node_at(a).id.clone())
                    .collect();
                let need = 5 - gold_idx.len();
                if pool.len() < need {
                    continue;
                }
                let gold: Vec<NodeId> = gold_idx.iter().map(|&a| g.node_at(a).id.clone()).collect();
                let mut ids: Vec<NodeId> = pool.choose_multiple(&mut rng, need).cloned().collect();
                ids.extend(gold.iter().cloned());
                let target_id = g.node_at(target).id.clone();
                let candidates = order_candidates(art, &target_id, &gold, ids, cfg.candidate_order, &mut rng);
                Query {
                    task,
                    case: case.clone(),
                    hidden_edges: [(case.clone(), target_id.clone())].into_iter().collect(),
                    query: target_id,
                    gold,
                    candidates,
                }
            }
        };
        out.push(query);
    }
    out
}

/// Seed pools per metapath template for one query.
pub fn seed_pools(
    art: &Artifacts<'_>,
    q: &Query,
    cfg: &MetapathConfig,
) -> Result<BTreeMap<MetapathTemplate, SeedPool>, PipelineError> {
    let g = art.graph;
    let qi = g.index_of(&q.query).ok_or_else(|| PipelineError::UnknownQuery(q.query.clone()))?;
    let mut pools = BTreeMap::new();
    match q.task {
        QaTask::JournalRecommendation => {
            let papers = select_seeds(g, art.embeddings, &q.query, NodeKind::Paper, cfg.seed_pool)?;
            let view = MaskedView::new(g, &q.hidden_edges);
            let authors: Vec<(NodeId, f64)> = view
                .authors_of(qi)
                .into_iter()
                .map(|a| {
                    let id = g.node_at(a).id.clone();
                    let s = similarity(art.embeddings, &q.query, &id);
                    (id, s)
                })
                .collect();
            let authors = SeedPool::fixed(q.query.clone(), authors);
            pools.insert(MetapathTemplate::Apvpa, papers.clone());
            pools.insert(MetapathTemplate::Vpapv, papers);
            pools.insert(MetapathTemplate::Apa, authors.clone());
            pools.insert(MetapathTemplate::Oapvpao, authors);
        }
        QaTask::AuthorshipIdentification | QaTask::CollaborationDiscovery => {
            let mut pool = SeedPool::fixed(q.query.clone(), alloc::vec![(q.query.clone(), 1.0)]);
            if cfg.similar_author_seeds {
                let similar = select_seeds(g, art.embeddings, &q.query, NodeKind::Author, cfg.seed_pool)?;
                pool.seeds.extend(similar.seeds);
                pool.zero_norm = similar.zero_norm;
            }
            for t in q.task.metapath_templates() {
                pools.insert(t, pool.clone());
            }
        }
    }
    Ok(pools)
}

/// Enumerated and scored instances plus the stratified selection.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mined {
    pub seeds: BTreeMap<MetapathTemplate, SeedPool>,
    pub enumerated: usize,
    pub selection: Selection,
}

pub fn mine(
    art: &Artifacts<'_>,
    q: &Query,
    weights: &RelationWeightVector,
    cfg: &MetapathConfig,
) -> Result<Mined, PipelineError> {
    let seeds = seed_pools(art, q, cfg)?;
    let opts = EnumerationOptions {
        max_per_seed: cfg.max_per_seed,
        max_total: cfg.max_total,
        hidden_edges: q.hidden_edges.clone(),
    };
    let mut scored: Vec<MetapathInstance> = Vec::new();
    for (t, pool) in &seeds {
        for m in enumerate_instances(art.graph, *t, pool, &opts)? {
            scored.push(score_instance(&m, weights, cfg.gamma)?);
        }
    }
    Ok(Mined {
        seeds,
        enumerated: scored.len(),
        selection: stratified_top_k(&scored, cfg.k)?,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Prepared {
    pub mined: Option<Mined>,
    pub contexts: BTreeMap<MetapathTemplate, String>,
    pub prompt: PromptBundle,
    pub warnings: Vec<String>,
}

/// Everything before the model call.
pub fn prepare(art: &Artifacts<'_>, q: &Query, variant: Variant, cfg: &MetapathConfig) -> Result<Prepared, PipelineError> {
    let mut contexts = BTreeMap::new();
    let mut warnings = Vec::new();
    let mined = if variant == Variant::ZeroShot {
        None
    } else {
        let uniform = RelationWeightVector::uniform();
        let weights = if variant == Variant::NoFastgtn { &uniform } else { art.weights };
        let mined = mine(art, q, weights, cfg)?;
        let scale = selection_scale(&mined.selection);
        for t in q.task.metapath_templates() {
            let (block, unnamed) = render_context_block(t, &mined.selection, art.graph, scale)?;
            warnings.extend(unnamed.into_iter().map(|id| format!("{id}: missing name")));
            contexts.insert(t, block);
        }
        for pool in mined.seeds.values() {
            for id in &pool.zero_norm {
                let w = format!("{id}: zero-norm embedding");
                if !warnings.contains(&w) {
                    warnings.push(w);
                }
            }
        }
        Some(mined)
    };
    let req = PromptRequest {
        query: q.query.clone(),
        contexts: contexts.clone(),
        candidates: q.candidates.clone(),
        hidden_edges: q.hidden_edges.clone(),
        mode: variant.prompt_mode(),
    };
    let prompt = build_prompt(art.graph, q.task, &req)?;
    warnings.extend(prompt.warnings.iter().cloned());
    Ok(Prepared {
        mined,
        contexts,
        prompt,
        warnings,
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Failure {
    pub stage: String,
    pub message: String,
}

/// Full record of one query, suitable for replay and independent rescoring.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Transcript {
    pub task: QaTask,
    pub variant: Variant,
    pub case: NodeId,
    pub query: NodeId,
    pub gold: Vec<NodeId>,
    pub candidates: Vec<NodeId>,
    pub selection: Option<Selection>,
    pub contexts: BTreeMap<MetapathTemplate, String>,
    pub system: String,
    pub user: String,
    pub completion: Option<String>,
    pub parsed: Option<RankedAnswer>,
    pub score: RecordScore,
    pub failure: Option<Failure>,
    pub warnings: Vec<String>,
}

/// Runs one query end to end. Failures are captured in the transcript and
/// scored as an empty prediction.
pub fn run_query<C: LlmClient + ?Sized>(
    art: &Artifacts<'_>,
    q: &Query,
    variant: Variant,
    cfg: &MetapathConfig,
    client: &C,
) -> Transcript {
    let mut t = Transcript {
        task: q.task,
        variant,
        case: q.case.clone(),
        query: q.query.clone(),
        gold: q.gold.clone(),
        candidates: q.candidates.clone(),
        selection: None,
        contexts: BTreeMap::new(),
        system: String::new(),
        user: String::new(),
        completion: None,
        parsed: None,
        score: RecordScore {
            query: q.case.clone(),
            hit: 0.0,
            h1: 0.0,
            f1: 0.0,
            ndcg: 0.0,
            empty: true,
        },
        failure: None,
        warnings: Vec::new(),
    };
    let fail = |stage: &str, message: String| Failure {
        stage: stage.to_string(),
        message,
    };
    let prepared = match prepare(art, q, variant, cfg) {
        Ok(p) => p,
        Err(e) => {
            t.failure = Some(fail("prepare", e.to_string()));
            return t;
        }
    };
    t.selection = prepared.mined.map(|m| m.selection);
    t.contexts = prepared.contexts;
    t.system = prepared.prompt.system_message.clone();
    t.user = prepared.prompt.user_message.clone();
    t.warnings = prepared.warnings;
    let completion = match client.complete(&prepared.prompt) {
        Ok(c) => c,
        Err(e) => {
            t.failure = Some(fail("llm", e.to_string()));
            return t;
        }
    };
    let parsed = parse_ranked(&completion, Some(&prepared.prompt.answer_header), &prepared.prompt.candidates);
    t.completion = Some(completion);
    let parsed = match parsed {
        Ok(p) => p,
        Err(e) => {
            t.failure = Some(fail("parse", e.to_string()));
            return t;
        }
    };
    let record = QaRecord {
        query: q.case.clone(),
        task: q.task,
        gold: q.gold.iter().cloned().collect(),
        predicted: parsed.clone(),
    };
    match score_record(&record) {
        Ok(s) => t.score = s,
        Err(e) => t.failure = Some(fail("score", e.to_string())),
    }
    t.parsed = Some(parsed);
    t
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkOutcome {
    pub task: QaTask,
    pub variant: Variant,
    pub report: EvalReport,
    pub failures: usize,
    pub valid: bool,
    pub transcripts: Vec<Transcript>,
}

/// Aggregates transcripts in case-id order.
pub fn summarize(
    task: QaTask,
    variant: Variant,
    mut transcripts: Vec<Transcript>,
    cfg: &BenchmarkConfig,
) -> Result<BenchmarkOutcome, PipelineError> {
    transcripts.sort_by(|a, b| a.case.cmp(&b.case));
    let failures = transcripts.iter().filter(|t| t.failure.is_some()).count();
    let rows = transcripts.iter().map(|t| t.score.clone()).collect();
    let report = aggregate_scores(rows)?;
    let valid = (failures as f64) <= cfg.max_failure_rate * transcripts.len() as f64;
    Ok(BenchmarkOutcome {
        task,
        variant,
        report,
        failures,
        valid,
        transcripts,
    })
}

pub fn run_benchmark<C: LlmClient + ?Sized>(
    art: &Artifacts<'_>,
    task: QaTask,
    queries: &[Query],
    variant: Variant,
    cfg: &BenchmarkConfig,
    client: &C,
) -> Result<BenchmarkOutcome, PipelineError> {
    let transcripts = queries
        .iter()
        .map(|q| run_query(art, q, variant, &cfg.metapath, client))
        .collect();
    summarize(task, variant, transcripts, cfg)
}

pub fn run_ablation<C: LlmClient + ?Sized>(
    art: &Artifacts<'_>,
    task: QaTask,
    queries: &[Query],
    variants: &[Variant],
    cfg: &BenchmarkConfig,
    client: &C,
) -> Result<Vec<BenchmarkOutcome>, PipelineError> {
    variants
        .iter()
        .map(|&v| run_benchmark(art, task, queries, v, cfg, client))
        .collect()
}

/// Full-variant prompts with gold answers and summed selected scores, ready
/// for [`crate::prompt::export_finetune_dataset`].
pub fn finetune_inputs(
    art: &Artifacts<'_>,
    queries: &[Query],
    cfg: &MetapathConfig,
) -> Result<Vec<FinetuneInput>, PipelineError> {
    queries
        .iter()
        .map(|q| {
            let p = prepare(art, q, Variant::Full, cfg)?;
            let raw_weight = p
                .mined
                .as_ref()
                .map_or(0.0, |m| m.selection.iter().map(|i| i.norm_score).sum());
            Ok(FinetuneInput {
                prompt: p.prompt,
                gold: q.gold.clone(),
                raw_weight,
            })
        })
        .collect()
}
