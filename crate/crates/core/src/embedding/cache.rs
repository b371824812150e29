use std::fs;
use std::io::ErrorKind;
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use super::{EmbeddingError, EmbeddingVector};

/// On-disk embedding cache: one file per `(provider id, text)` pair, named by
/// the SHA-256 of both, containing the dimension as a little-endian `u32`
/// followed by the little-endian `f32` values.
#[derive(Debug, Clone)]
pub struct EmbeddingCache {
    dir: PathBuf,
}

impl EmbeddingCache {
    pub fn open(dir: impl Into<PathBuf>) -> Result<Self, EmbeddingError> {
        let dir = dir.into();
        fs::create_dir_all(&dir)?;
        Ok(EmbeddingCache { dir })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn key(provider_id: &str, text: &str) -> String {
        let mut h = Sha256::new();
        h.update(provider_id.as_bytes());
        h.update([0u8]);
        h.update(text.as_bytes());
        hex::encode(h.finalize())
    }

    fn path(&self, provider_id: &str, text: &str) -> PathBuf {
        self.dir.join(Self::key(provider_id, text))
    }

    pub fn get(&self, provider_id: &str, text: &str) -> Result<Option<EmbeddingVector>, EmbeddingError> {
        let bytes = match fs::read(self.path(provider_id, text)) {
            Ok(b) => b,
            Err(e) if e.kind() == ErrorKind::NotFound => return Ok(None),
            Err(e) => return Err(e.into()),
        };
        Ok(decode(&bytes))
    }

    pub fn put(&self, provider_id: &str, text: &str, v: &EmbeddingVector) -> Result<(), EmbeddingError> {
        let path = self.path(provider_id, text);
        // write-then-rename so concurrent readers never see a partial file
        let tmp = path.with_extension(format!("tmp{}", std::process::id()));
        fs::write(&tmp, encode(v))?;
        fs::rename(tmp, path)?;
        Ok(())
    }
}

fn encode(v: &EmbeddingVector) -> Vec<u8> {
    let mut out = Vec::with_capacity(4 + 4 * v.dim());
    out.extend_from_slice(&(v.dim() as u32).to_le_bytes());
    for x in v.values() {
        out.extend_from_slice(&x.to_le_bytes());
    }
    out
}

/// Corrupt or truncated files read as a miss.
fn decode(bytes: &[u8]) -> Option<EmbeddingVector> {
    let dim = u32::from_le_bytes(bytes.get(..4)?.try_into().ok()?) as usize;
    let body = bytes.get(4..)?;
    if body.len() != dim * 4 {
        return None;
    }
    let values = body.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap())).collect();
    EmbeddingVector::new(values).ok()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn roundtrip_and_layout() {
        let dir = tempfile::tempdir().unwrap();
        let cache = EmbeddingCache::open(dir.path()).unwrap();
        let v = EmbeddingVector::new(vec![0.5, -0.25, 1.0]).unwrap();
        assert!(cache.get("p", "t").unwrap().is_none());
        cache.put("p", "t", &v).unwrap();
        assert_eq!(cache.get("p", "t").unwrap(), Some(v));
        assert!(cache.get("other", "t").unwrap().is_none());
        let raw = fs::read(dir.path().join(EmbeddingCache::key("p", "t"))).unwrap();
        assert_eq!(raw.len(), 4 + 12);
        assert_eq!(&raw[..4], &3u32.to_le_bytes());
        assert_eq!(&raw[4..8], &0.5f32.to_le_bytes());
    }

    #[test]
    fn truncated_file_is_a_miss() {
        let dir = tempfile::tempdir().unwrap();
        let cache = EmbeddingCache::open(dir.path()).unwrap();
        fs::write(dir.path().join(EmbeddingCache::key("p", "t")), [3, 0, 0, 0, 1]).unwrap();
        assert!(cache.get("p", "t").unwrap().is_none());
    }
}
