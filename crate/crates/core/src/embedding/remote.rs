use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::json;

use super::{Embedder, EmbeddingError, EmbeddingVector};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RemoteEmbedderConfig {
    /// Base URL, e.g. `https://api.openai.com/v1`.
    pub endpoint: String,
    pub model: String,
    /// Name of the environment variable holding the API key.
    pub api_key_env: String,
    pub dim: usize,
    #[serde(default = "default_timeout")]
    pub timeout_secs: u64,
}

fn default_timeout() -> u64 {
    60
}

/// Client for the standard `POST {endpoint}/embeddings` JSON endpoint.
pub struct RemoteEmbedder {
    config: RemoteEmbedderConfig,
    client: reqwest::blocking::Client,
}

impl RemoteEmbedder {
    pub fn new(config: RemoteEmbedderConfig) -> Result<Self, EmbeddingError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(config.timeout_secs))
            .build()
            .map_err(|e| EmbeddingError::ProviderUnavailable(e.to_string()))?;
        Ok(RemoteEmbedder { config, client })
    }
}

#[derive(Deserialize)]
struct EmbeddingResponse {
    data: Vec<EmbeddingDatum>,
}

#[derive(Deserialize)]
struct EmbeddingDatum {
    embedding: Vec<f32>,
}

impl Embedder for RemoteEmbedder {
    fn id(&self) -> String {
        format!("remote:{}:{}", self.config.model, self.config.dim)
    }

    fn dim(&self) -> usize {
        self.config.dim
    }

    fn embed(&self, text: &str) -> Result<EmbeddingVector, EmbeddingError> {
        if text.trim().is_empty() {
            return Err(EmbeddingError::EmptyText);
        }
        let key = std::env::var(&self.config.api_key_env).unwrap_or_default();
        let url = format!("{}/embeddings", self.config.endpoint.trim_end_matches('/'));
        let resp = self
            .client
            .post(url)
            .bearer_auth(key)
            .json(&json!({"model": self.config.model, "input": [text], "dimensions": self.config.dim}))
            .send()
            .map_err(|e| EmbeddingError::ProviderUnavailable(e.to_string()))?;
        if !resp.status().is_success() {
            return Err(EmbeddingError::ProviderUnavailable(format!("HTTP {}", resp.status())));
        }
        let body: EmbeddingResponse =
            resp.json().map_err(|e| EmbeddingError::ProviderUnavailable(e.to_string()))?;
        let values = body
            .data
            .into_iter()
            .next()
            .ok_or_else(|| EmbeddingError::ProviderUnavailable("empty embedding response".into()))?
            .embedding;
        if values.len() != self.config.dim {
            return Err(EmbeddingError::DimMismatch(self.config.dim, values.len()));
        }
        EmbeddingVector::new(values)
    }
}
