//! TOML configuration. Relative paths resolve against the config file's
//! directory. Secrets are never stored here, only the names of the
//! environment variables that hold them.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::analysis::AnalysisConfig;
use crate::retrieval::RetrievalConfig;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {0}: {1}")]
    Read(PathBuf, std::io::Error),
    #[error("invalid config: {0}")]
    Parse(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    /// Conversations, audit logs, the saved catalog and the embedding cache.
    pub data_dir: PathBuf,
    pub catalog: CatalogSection,
    pub embedding: EmbeddingSection,
    pub llm: LlmSection,
    pub retrieval: RetrievalConfig,
    pub analysis: AnalysisConfig,
    pub server: ServerSection,
    pub bench: BenchSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CatalogSection {
    pub manifest: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EmbeddingProvider {
    Hash,
    Remote,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EmbeddingSection {
    pub provider: EmbeddingProvider,
    pub dim: usize,
    pub endpoint: String,
    pub model: String,
    pub api_key_env: String,
    pub cache: bool,
    pub in_flight: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LlmProvider {
    Scripted,
    Openai,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LlmSection {
    pub provider: LlmProvider,
    /// Script file for the scripted provider.
    pub script: Option<PathBuf>,
    pub endpoint: String,
    pub api_key_env: String,
    pub timeout_secs: u64,
    pub temperature: Option<f64>,
    /// Default model id; the per-stage ids below override it.
    pub model: String,
    pub retrieval_model: Option<String>,
    pub analysis_model: Option<String>,
    pub router_model: Option<String>,
    pub judge_model: Option<String>,
    pub in_flight: usize,
    pub max_retries: u32,
    /// Replaces the bundled pricing table.
    pub pricing: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ServerSection {
    pub host: String,
    pub port: u16,
    pub max_conversations: usize,
    pub max_attachment_bytes: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum JudgeMode {
    Llm,
    Deterministic,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BenchSection {
    pub workers: usize,
    pub judge: JudgeMode,
}

impl Default for Config {
    fn default() -> Self {
        Config {
            data_dir: PathBuf::from("data"),
            catalog: CatalogSection::default(),
            embedding: EmbeddingSection::default(),
            llm: LlmSection::default(),
            retrieval: RetrievalConfig::default(),
            analysis: AnalysisConfig::default(),
            server: ServerSection::default(),
            bench: BenchSection::default(),
        }
    }
}

impl Default for CatalogSection {
    fn default() -> Self {
        CatalogSection { manifest: PathBuf::from("catalog/manifest.json") }
    }
}

impl Default for EmbeddingSection {
    fn default() -> Self {
        EmbeddingSection {
            provider: EmbeddingProvider::Hash,
            dim: 256,
            endpoint: "https://api.openai.com/v1".into(),
            model: "text-embedding-3-small".into(),
            api_key_env: "OPENAI_API_KEY".into(),
            cache: true,
            in_flight: 4,
        }
    }
}

impl Default for LlmSection {
    fn default() -> Self {
        LlmSection {
            provider: LlmProvider::Scripted,
            script: None,
            endpoint: "https://api.openai.com/v1".into(),
            api_key_env: "OPENAI_API_KEY".into(),
            timeout_secs: 120,
            temperature: None,
            model: "gpt-4.1".into(),
            retrieval_model: None,
            analysis_model: None,
            router_model: None,
            judge_model: None,
            in_flight: 8,
            max_retries: 3,
            pricing: None,
        }
    }
}

impl Default for ServerSection {
    fn default() -> Self {
        ServerSection {
            host: "127.0.0.1".into(),
            port: 8080,
            max_conversations: 10_000,
            max_attachment_bytes: 10 * 1024 * 1024,
        }
    }
}

impl Default for BenchSection {
    fn default() -> Self {
        BenchSection { workers: 4, judge: JudgeMode::Deterministic }
    }
}

impl LlmSection {
    pub fn retrieval_model(&self) -> &str {
        self.retrieval_model.as_deref().unwrap_or(&self.model)
    }
    pub fn analysis_model(&self) -> &str {
        self.analysis_model.as_deref().unwrap_or(&self.model)
    }
    pub fn router_model(&self) -> &str {
        self.router_model.as_deref().unwrap_or(&self.model)
    }
    pub fn judge_model(&self) -> &str {
        self.judge_model.as_deref().unwrap_or(&self.model)
    }
}

fn rebase(base: &Path, p: &mut PathBuf) {
    if p.is_relative() {
        *p = base.join(&*p);
    }
}

impl Config {
    pub fn parse(text: &str) -> Result<Config, ConfigError> {
        let c: Config = toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?;
        c.validate()?;
        Ok(c)
    }

    pub fn load(path: &Path) -> Result<Config, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError::Read(path.to_path_buf(), e))?;
        let mut c = Self::parse(&text)?;
        let base = path.parent().unwrap_or(Path::new("."));
        c.rebase(base);
        Ok(c)
    }

    /// Resolves relative paths against `base`.
    pub fn rebase(&mut self, base: &Path) {
        rebase(base, &mut self.data_dir);
        rebase(base, &mut self.catalog.manifest);
        if let Some(p) = &mut self.llm.script {
            rebase(base, p);
        }
        if let Some(p) = &mut self.llm.pricing {
            rebase(base, p);
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |m: &str| Err(ConfigError::Parse(m.into()));
        if self.retrieval.max_subqueries == 0 || self.retrieval.max_tool_rounds == 0 || self.retrieval.top_k == 0 {
            return bad("retrieval limits must be positive");
        }
        if self.analysis.max_steps == 0 {
            return bad("analysis.max_steps must be positive");
        }
        self.analysis.limits.validate().map_err(ConfigError::Parse)?;
        if self.embedding.dim == 0 {
            return bad("embedding.dim must be positive");
        }
        if self.llm.provider == LlmProvider::Scripted && self.llm.script.is_none() {
            return bad("llm.script is required for the scripted provider");
        }
        if self.server.max_conversations == 0 || self.bench.workers == 0 {
            return bad("server.max_conversations and bench.workers must be positive");
        }
        Ok(())
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    /// Short digest of the effective configuration, recorded in reports.
    pub fn hash(&self) -> String {
        hex::encode(&Sha256::digest(self.to_toml().as_bytes())[..8])
    }
}
