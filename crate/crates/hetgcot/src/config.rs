//! Run configuration: one TOML file, overridable per command from flags.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use hetgcot_core::fastgtn::FastGtnConfig;
use hetgcot_core::hgt::HgtConfig;
use hetgcot_core::llm::LlmSettings;
use hetgcot_core::pipeline::{BenchmarkConfig, CandidateOrder, MetapathConfig};
use hetgcot_core::prompt::QaTask;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    pub nodes: Option<PathBuf>,
    pub edges: Option<PathBuf>,
    pub graph: Option<PathBuf>,
    pub features: Option<PathBuf>,
    pub embeddings: Option<PathBuf>,
    pub weights: Option<PathBuf>,
    pub output_dir: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum EmbedderKind {
    /// Seeded token-hash projection; no model needed.
    #[default]
    Test,
    /// A child process speaking JSON lines.
    External,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EmbedderConfig {
    pub kind: EmbedderKind,
    pub dim: usize,
    /// Program and arguments for the external embedder.
    pub command: Vec<String>,
}

impl Default for EmbedderConfig {
    fn default() -> Self {
        Self {
            kind: EmbedderKind::Test,
            dim: 64,
            command: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Provider {
    /// Deterministic mock that answers with the first candidates in prompt order.
    #[default]
    Mock,
    /// OpenAI-compatible chat-completions endpoint.
    Http,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LlmConfig {
    pub provider: Provider,
    /// Answers returned by the mock.
    pub mock_k: usize,
    #[serde(flatten)]
    pub settings: LlmSettings,
}

impl Default for LlmConfig {
    fn default() -> Self {
        Self {
            provider: Provider::Mock,
            mock_k: 3,
            settings: LlmSettings::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BenchmarkSection {
    pub split_ratio: f64,
    pub journal_candidates: usize,
    pub candidate_order: CandidateOrder,
    pub max_queries: Option<usize>,
    pub max_failure_rate: f64,
}

impl Default for BenchmarkSection {
    fn default() -> Self {
        let b = BenchmarkConfig::default();
        Self {
            split_ratio: 0.9,
            journal_candidates: b.journal_candidates,
            candidate_order: b.candidate_order,
            max_queries: b.max_queries,
            max_failure_rate: b.max_failure_rate,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub task: QaTask,
    pub seed: u64,
    pub paths: Paths,
    pub embedder: EmbedderConfig,
    pub hgt: HgtConfig,
    pub fastgtn: FastGtnConfig,
    pub metapath: MetapathConfig,
    pub benchmark: BenchmarkSection,
    pub llm: LlmConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            task: QaTask::JournalRecommendation,
            seed: 0,
            paths: Paths::default(),
            embedder: EmbedderConfig::default(),
            hgt: HgtConfig::default(),
            fastgtn: FastGtnConfig::default(),
            metapath: MetapathConfig::default(),
            benchmark: BenchmarkSection::default(),
            llm: LlmConfig::default(),
        }
    }
}

pub const ENV_ENDPOINT: &str = "HETGCOT_LLM_ENDPOINT";
pub const ENV_API_KEY: &str = "HETGCOT_LLM_API_KEY";
pub const ENV_MODEL: &str = "HETGCOT_LLM_MODEL";

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("config not found: {}", path.display()))?;
        let cfg: RunConfig = toml::from_str(&text).with_context(|| format!("{}: invalid config", path.display()))?;
        Ok(cfg)
    }

    /// Endpoint and model from the environment take precedence over the file.
    pub fn apply_env(&mut self) {
        if let Ok(v) = std::env::var(ENV_ENDPOINT) {
            self.llm.settings.endpoint = v;
        }
        if let Ok(v) = std::env::var(ENV_MODEL) {
            self.llm.settings.model = v;
        }
    }

    pub fn validate(&self) -> Result<()> {
        let m = &self.metapath;
        if m.k == 0 {
            bail!("metapath.k must be at least 1");
        }
        if !(0.0..=1.0).contains(&m.gamma) {
            bail!("metapath.gamma must lie in [0, 1], got {}", m.gamma);
        }
        if m.seed_pool == 0 {
            bail!("metapath.seed_pool must be at least 1");
        }
        let b = &self.benchmark;
        if !(b.split_ratio > 0.0 && b.split_ratio < 1.0) {
            bail!("benchmark.split_ratio must lie strictly between 0 and 1");
        }
        if !(0.0..=1.0).contains(&b.max_failure_rate) {
            bail!("benchmark.max_failure_rate must lie in [0, 1]");
        }
        if self.embedder.dim == 0 {
            bail!("embedder.dim must be positive");
        }
        if self.embedder.kind == EmbedderKind::External && self.embedder.command.is_empty() {
            bail!("embedder.command is required for the external embedder");
        }
        if self.llm.settings.max_in_flight == 0 {
            bail!("llm.max_in_flight must be at least 1");
        }
        self.hgt.validate()?;
        self.fastgtn.validate()?;
        Ok(())
    }

    pub fn benchmark_config(&self) -> BenchmarkConfig {
        BenchmarkConfig {
            metapath: self.metapath.clone(),
            journal_candidates: self.benchmark.journal_candidates,
            candidate_order: self.benchmark.candidate_order,
            seed: self.seed,
            max_queries: self.benchmark.max_queries,
            max_failure_rate: self.benchmark.max_failure_rate,
        }
    }

    /// SHA-256 of the configuration's canonical JSON form.
    pub fn digest(&self) -> String {
        let json = serde_json::to_vec(self).expect("config serializes");
        hex::encode(Sha256::digest(&json))
    }
}
