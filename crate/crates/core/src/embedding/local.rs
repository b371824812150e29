use super::{Embedder, EmbeddingError, EmbeddingVector};

/// Deterministic offline embedder: hashed unigram and bigram counts,
/// L2-normalized.
#[derive(Debug, Clone)]
pub struct HashEmbedder {
    dim: usize,
}

impl Default for HashEmbedder {
    fn default() -> Self {
        HashEmbedder { dim: 256 }
    }
}

impl HashEmbedder {
    pub fn new(dim: usize) -> Self {
        HashEmbedder { dim: dim.max(1) }
    }
}

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

pub(crate) fn tokens(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
        .collect()
}

impl Embedder for HashEmbedder {
    fn id(&self) -> String {
        format!("local-hash-{}", self.dim)
    }

    fn dim(&self) -> usize {
        self.dim
    }

    fn embed(&self, text: &str) -> Result<EmbeddingVector, EmbeddingError> {
        let toks = tokens(text);
        if toks.is_empty() {
            return Err(EmbeddingError::EmptyText);
        }
        let mut counts = vec![0f64; self.dim];
        let dim = self.dim as u64;
        for t in &toks {
            counts[(fnv1a(t.as_bytes()) % dim) as usize] += 1.0;
        }
        for w in toks.windows(2) {
            let bigram = format!("{} {}", w[0], w[1]);
            counts[(fnv1a(bigram.as_bytes()) % dim) as usize] += 1.0;
        }
        let norm = counts.iter().map(|c| c * c).sum::<f64>().sqrt();
        EmbeddingVector::new(counts.into_iter().map(|c| (c / norm) as f32).collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embedding::cosine;

    #[test]
    fn deterministic_and_self_similar() {
        let e = HashEmbedder::default();
        let a = e.embed("urban cycling").unwrap();
        assert_eq!(a, e.embed("urban cycling").unwrap());
        assert_eq!(a.dim(), 256);
        assert!((cosine(&a, &a).unwrap() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn empty_text() {
        let e = HashEmbedder::default();
        assert!(matches!(e.embed(""), Err(EmbeddingError::EmptyText)));
        assert!(matches!(e.embed("  !! "), Err(EmbeddingError::EmptyText)));
    }

    #[test]
    fn case_and_punctuation_insensitive() {
        let e = HashEmbedder::default();
        assert_eq!(e.embed("Parking, Zurich").unwrap(), e.embed("parking zurich").unwrap());
    }
}
