//! Dense embeddings and exact cosine nearest-neighbor search over catalog
//! documents.

mod cache;
mod local;
mod remote;

use std::cmp::Ordering;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::catalog::{embedding_text, Catalog};

pub use cache::EmbeddingCache;
pub use local::HashEmbedder;
pub use remote::{RemoteEmbedder, RemoteEmbedderConfig};

#[derive(Debug, Error)]
pub enum EmbeddingError {
    #[error("embedding provider unavailable: {0}")]
    ProviderUnavailable(String),
    #[error("cannot embed empty text")]
    EmptyText,
    #[error("dimension mismatch: {0} vs {1}")]
    DimMismatch(usize, usize),
    #[error("zero vector has no direction")]
    ZeroVector,
    #[error("index is empty")]
    EmptyIndex,
    #[error("embedding cache: {0}")]
    Cache(#[from] std::io::Error),
}

/// A finite, fixed-dimension embedding.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingVector {
    values: Vec<f32>,
}

impl EmbeddingVector {
    pub fn new(values: Vec<f32>) -> Result<Self, EmbeddingError> {
        if values.is_empty() {
            return Err(EmbeddingError::DimMismatch(0, 0));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(EmbeddingError::ProviderUnavailable("provider returned a non-finite value".into()));
        }
        Ok(EmbeddingVector { values })
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    pub fn norm(&self) -> f64 {
        self.values.iter().map(|&v| f64::from(v) * f64::from(v)).sum::<f64>().sqrt()
    }
}

fn dot(a: &[f32], b: &[f32]) -> f64 {
    a.iter().zip(b).map(|(&x, &y)| f64::from(x) * f64::from(y)).sum()
}

/// Cosine similarity `dot(a,b) / (|a| |b|)`.
pub fn cosine(a: &EmbeddingVector, b: &EmbeddingVector) -> Result<f64, EmbeddingError> {
    if a.dim() != b.dim() {
        return Err(EmbeddingError::DimMismatch(a.dim(), b.dim()));
    }
    let (na, nb) = (a.norm(), b.norm());
    if na == 0.0 || nb == 0.0 {
        return Err(EmbeddingError::ZeroVector);
    }
    Ok(dot(&a.values, &b.values) / (na * nb))
}

/// Turns text into vectors. Implementations must be deterministic for a
/// given `id()` so that cached vectors stay valid.
pub trait Embedder: Send + Sync {
    /// Stable identifier (provider + model), part of the cache key.
    fn id(&self) -> String;
    fn dim(&self) -> usize;
    fn embed(&self, text: &str) -> Result<EmbeddingVector, EmbeddingError>;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchHit {
    pub dataset_id: String,
    pub score: f64,
}

/// Non-increasing score, ties by ascending id. `-0.0` ties with `0.0`.
pub fn hit_order(a: &SearchHit, b: &SearchHit) -> Ordering {
    (b.score + 0.0).total_cmp(&(a.score + 0.0)).then_with(|| a.dataset_id.cmp(&b.dataset_id))
}

/// Scores keep f32 precision, the precision of the stored vectors. Cosines
/// that are equal in exact arithmetic (parallel vectors) can differ in the
/// last f64 bits; rounding makes them tie so the id rule decides.
fn quantize(score: f64) -> f64 {
    f64::from(score as f32)
}

struct Entry {
    id: String,
    vector: EmbeddingVector,
    norm: f64,
}

/// Exact brute-force cosine index. Immutable once built.
pub struct Index {
    dim: usize,
    entries: Vec<Entry>,
}

impl Index {
    pub fn from_vectors(items: Vec<(String, EmbeddingVector)>) -> Result<Index, EmbeddingError> {
        let dim = items.first().map(|(_, v)| v.dim()).ok_or(EmbeddingError::EmptyIndex)?;
        let mut entries = Vec::with_capacity(items.len());
        for (id, vector) in items {
            if vector.dim() != dim {
                return Err(EmbeddingError::DimMismatch(dim, vector.dim()));
            }
            let norm = vector.norm();
            if norm == 0.0 {
                return Err(EmbeddingError::ZeroVector);
            }
            entries.push(Entry { id, vector, norm });
        }
        Ok(Index { dim, entries })
    }

    /// Embeds every catalog document, reusing cached vectors, with at most
    /// `in_flight` concurrent provider calls.
    pub fn build(
        catalog: &Catalog,
        embedder: Arc<dyn Embedder>,
        cache: Option<&EmbeddingCache>,
        in_flight: usize,
    ) -> Result<Index, EmbeddingError> {
        use rayon::prelude::*;
        if catalog.is_empty() {
            return Err(EmbeddingError::EmptyIndex);
        }
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(in_flight.max(1))
            .build()
            .map_err(|e| EmbeddingError::ProviderUnavailable(e.to_string()))?;
        let provider_id = embedder.id();
        let vectors: Vec<Result<(String, EmbeddingVector), EmbeddingError>> = pool.install(|| {
            catalog
                .docs()
                .par_iter()
                .map(|doc| {
                    let text = embedding_text(doc);
                    if let Some(c) = cache {
                        if let Some(v) = c.get(&provider_id, &text)? {
                            return Ok((doc.id.clone(), v));
                        }
                    }
                    let v = embedder.embed(&text)?;
                    if let Some(c) = cache {
                        c.put(&provider_id, &text, &v)?;
                    }
                    Ok((doc.id.clone(), v))
                })
                .collect()
        });
        Index::from_vectors(vectors.into_iter().collect::<Result<_, _>>()?)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn vector(&self, id: &str) -> Option<&EmbeddingVector> {
        self.entries.iter().find(|e| e.id == id).map(|e| &e.vector)
    }

    /// The `min(k, n)` most similar entries, exact.
    pub fn knn(&self, query: &EmbeddingVector, k: usize) -> Result<Vec<SearchHit>, EmbeddingError> {
        if self.entries.is_empty() {
            return Err(EmbeddingError::EmptyIndex);
        }
        if query.dim() != self.dim {
            return Err(EmbeddingError::DimMismatch(self.dim, query.dim()));
        }
        let qn = query.norm();
        if qn == 0.0 {
            return Err(EmbeddingError::ZeroVector);
        }
        let mut hits: Vec<SearchHit> = self
            .entries
            .iter()
            .map(|e| SearchHit {
                dataset_id: e.id.clone(),
                score: quantize(dot(&query.values, &e.vector.values) / (qn * e.norm)),
            })
            .collect();
        let k = k.max(1).min(hits.len());
        if k < hits.len() {
            hits.select_nth_unstable_by(k - 1, hit_order);
            hits.truncate(k);
        }
        hits.sort_by(hit_order);
        Ok(hits)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn v(x: &[f32]) -> EmbeddingVector {
        EmbeddingVector::new(x.to_vec()).unwrap()
    }

    #[test]
    fn cosine_examples() {
        assert_eq!(cosine(&v(&[1.0, 0.0]), &v(&[1.0, 0.0])).unwrap(), 1.0);
        assert_eq!(cosine(&v(&[1.0, 0.0]), &v(&[0.0, 1.0])).unwrap(), 0.0);
        let c = cosine(&v(&[1.0, 2.0, 3.0]), &v(&[4.0, 5.0, 6.0])).unwrap();
        // 32 / (sqrt(14) * sqrt(77))
        assert!((c - 0.974_631_846).abs() < 1e-9, "{c}");
    }

    #[test]
    fn cosine_errors() {
        assert!(matches!(cosine(&v(&[1.0]), &v(&[1.0, 0.0])), Err(EmbeddingError::DimMismatch(1, 2))));
        assert!(matches!(cosine(&v(&[0.0, 0.0]), &v(&[1.0, 0.0])), Err(EmbeddingError::ZeroVector)));
    }

    #[test]
    fn knn_clamps_and_orders() {
        let idx = Index::from_vectors(vec![
            ("b".into(), v(&[1.0, 0.0])),
            ("a".into(), v(&[1.0, 0.0])),
            ("c".into(), v(&[0.0, 1.0])),
        ])
        .unwrap();
        let hits = idx.knn(&v(&[1.0, 0.1]), 5).unwrap();
        let ids: Vec<_> = hits.iter().map(|h| h.dataset_id.as_str()).collect();
        assert_eq!(ids, ["a", "b", "c"]);
        let one = Index::from_vectors(vec![("only".into(), v(&[0.3, 0.4]))]).unwrap();
        assert_eq!(one.knn(&v(&[1.0, 1.0]), 1).unwrap()[0].dataset_id, "only");
    }

    #[test]
    fn empty_index_rejected() {
        assert!(matches!(Index::from_vectors(vec![]), Err(EmbeddingError::EmptyIndex)));
    }
}
