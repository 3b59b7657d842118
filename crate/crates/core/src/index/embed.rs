use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};
use ureq::Agent;

use super::{EmbeddingVector, IndexError};
use crate::scalar::Scalar;

/// Provider id recorded for the default sentence-embedding model.
pub const DEFAULT_PROVIDER_ID: &str = "all-MiniLM-L6-v2";

/// Turns texts into raw embedding vectors. Normalization and dimension
/// checks happen in [`embed`].
pub trait EmbeddingProvider<T: Scalar>: Send + Sync {
    fn provider_id(&self) -> &str;

    fn embed_batch(&self, texts: &[String]) -> Result<Vec<Vec<T>>, IndexError>;

    fn batch_size(&self) -> usize {
        64
    }
}

/// Embed `texts` in order, returning unit vectors of one shared dimension.
pub fn embed<T: Scalar>(
    provider: &dyn EmbeddingProvider<T>,
    texts: &[String],
) -> Result<Vec<EmbeddingVector<T>>, IndexError> {
    if texts.is_empty() {
        return Err(IndexError::Provider("nothing to embed".into()));
    }
    let mut out = Vec::with_capacity(texts.len());
    let mut dims: Option<usize> = None;
    for batch in texts.chunks(provider.batch_size().max(1)) {
        let raw = provider.embed_batch(batch)?;
        if raw.len() != batch.len() {
            return Err(IndexError::Provider(format!(
                "{} returned {} vectors for {} texts",
                provider.provider_id(),
                raw.len(),
                batch.len()
            )));
        }
        for values in raw {
            let expected = *dims.get_or_insert(values.len());
            if values.len() != expected {
                return Err(IndexError::DimensionMismatch { expected, found: values.len() });
            }
            out.push(EmbeddingVector::normalized(values)?);
        }
    }
    Ok(out)
}

/// Deterministic bag-of-words embedder.
///
/// Each lowercase alphanumeric token adds one count to a bucket chosen by a
/// SHA-256 of the token. Counts are non-negative, so any text with at least
/// one token embeds to a nonzero vector.
#[derive(Debug, Clone)]
pub struct HashEmbedder {
    dims: usize,
    id: String,
}

impl HashEmbedder {
    pub fn new(dims: usize) -> Self {
        assert!(dims > 0, "hash embedder needs at least one dimension");
        Self { dims, id: format!("hash-{dims}") }
    }

    pub fn dims(&self) -> usize {
        self.dims
    }

    /// Parse a `hash-<dims>` provider id.
    pub fn from_provider_id(id: &str) -> Option<Self> {
        id.strip_prefix("hash-")?.parse().ok().filter(|d| *d > 0).map(Self::new)
    }

    fn bucket(&self, token: &str) -> usize {
        let digest = Sha256::digest(token.as_bytes());
        let mut head = [0u8; 8];
        head.copy_from_slice(&digest[..8]);
        (u64::from_le_bytes(head) % self.dims as u64) as usize
    }
}

impl<T: Scalar> EmbeddingProvider<T> for HashEmbedder {
    fn provider_id(&self) -> &str {
        &self.id
    }

    fn embed_batch(&self, texts: &[String]) -> Result<Vec<Vec<T>>, IndexError> {
        texts
            .iter()
            .map(|text| {
                let mut v = vec![T::zero(); self.dims];
                let tokens = text
                    .split(|c: char| !c.is_alphanumeric())
                    .filter(|t| !t.is_empty())
                    .map(str::to_lowercase);
                for token in tokens {
                    let b = self.bucket(&token);
                    v[b] = v[b] + T::one();
                }
                if v.iter().all(|x| x.is_zero()) {
                    return Err(IndexError::Provider(format!("no tokens in text {text:?}")));
                }
                Ok(v)
            })
            .collect()
    }
}

/// Connection settings for a remote embedding endpoint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EmbeddingProfile {
    pub endpoint: String,
    #[serde(default = "default_model")]
    pub model: String,
    #[serde(default)]
    pub auth_env_var: Option<String>,
    #[serde(default = "default_batch")]
    pub batch_size: usize,
    #[serde(default = "default_timeout")]
    pub timeout_secs: u64,
}

fn default_model() -> String {
    DEFAULT_PROVIDER_ID.to_string()
}

fn default_batch() -> usize {
    64
}

fn default_timeout() -> u64 {
    60
}

/// Client for an OpenAI-compatible `/embeddings` endpoint.
#[derive(Debug)]
pub struct HttpEmbedder {
    profile: EmbeddingProfile,
    agent: Agent,
}

impl HttpEmbedder {
    pub fn new(profile: EmbeddingProfile) -> Self {
        let agent = Agent::new_with_config(
            Agent::config_builder()
                .http_status_as_error(false)
                .timeout_global(Some(Duration::from_secs(profile.timeout_secs)))
                .build(),
        );
        Self { profile, agent }
    }

    fn url(&self) -> String {
        let base = self.profile.endpoint.trim_end_matches('/');
        if base.ends_with("embeddings") {
            base.to_string()
        } else {
            format!("{base}/embeddings")
        }
    }
}

pub(crate) fn parse_embeddings<T: Scalar>(body: &Value, expected: usize) -> Result<Vec<Vec<T>>, IndexError> {
    let data = body
        .get("data")
        .and_then(Value::as_array)
        .ok_or_else(|| IndexError::Provider("response has no data array".into()))?;
    let mut rows: Vec<(u64, Vec<T>)> = Vec::with_capacity(data.len());
    for (pos, item) in data.iter().enumerate() {
        let index = item.get("index").and_then(Value::as_u64).unwrap_or(pos as u64);
        let values = item
            .get("embedding")
            .and_then(Value::as_array)
            .ok_or_else(|| IndexError::Provider(format!("data[{pos}] has no embedding")))?
            .iter()
            .map(|x| x.as_f64().and_then(T::from_f64))
            .collect::<Option<Vec<T>>>()
            .ok_or_else(|| IndexError::Provider(format!("data[{pos}] has a non-numeric value")))?;
        rows.push((index, values));
    }
    if rows.len() != expected {
        return Err(IndexError::Provider(format!("expected {expected} embeddings, got {}", rows.len())));
    }
    rows.sort_by_key(|(i, _)| *i);
    Ok(rows.into_iter().map(|(_, v)| v).collect())
}

impl<T: Scalar> EmbeddingProvider<T> for HttpEmbedder {
    fn provider_id(&self) -> &str {
        &self.profile.model
    }

    fn batch_size(&self) -> usize {
        self.profile.batch_size
    }

    fn embed_batch(&self, texts: &[String]) -> Result<Vec<Vec<T>>, IndexError> {
        let mut call = self.agent.post(&self.url()).header("Content-Type", "application/json");
        if let Some(var) = &self.profile.auth_env_var {
            let key = std::env::var(var)
                .map_err(|_| IndexError::Provider(format!("credential variable {var} is not set")))?;
            call = call.header("Authorization", &format!("Bearer {key}"));
        }
        let mut response = call
            .send_json(json!({ "model": self.profile.model, "input": texts }))
            .map_err(|e| IndexError::Provider(e.to_string()))?;
        let status = response.status().as_u16();
        let body = response
            .body_mut()
            .read_to_string()
            .map_err(|e| IndexError::Provider(e.to_string()))?;
        if !(200..300).contains(&status) {
            return Err(IndexError::Provider(format!("HTTP {status}: {}", body.chars().take(300).collect::<String>())));
        }
        let value: Value = serde_json::from_str(&body).map_err(|e| IndexError::Provider(e.to_string()))?;
        parse_embeddings(&value, texts.len())
    }
}

#[cfg(test)]
mod tests {
    use std::collections::HashMap;

    use super::*;

    struct Fixed(HashMap<String, Vec<f64>>);

    impl EmbeddingProvider<f64> for Fixed {
        fn provider_id(&self) -> &str {
            "fixed"
        }

        fn embed_batch(&self, texts: &[String]) -> Result<Vec<Vec<f64>>, IndexError> {
            Ok(texts.iter().map(|t| self.0[t].clone()).collect())
        }

        fn batch_size(&self) -> usize {
            1
        }
    }

    fn fixed(pairs: &[(&str, &[f64])]) -> Fixed {
        Fixed(pairs.iter().map(|(k, v)| (k.to_string(), v.to_vec())).collect())
    }

    #[test]
    fn unit_vector_passes_through() {
        let p = fixed(&[("a", &[1.0, 0.0, 0.0])]);
        let out = embed(&p, &["a".to_string()]).unwrap();
        assert_eq!(out[0].values(), &[1.0, 0.0, 0.0]);
    }

    #[test]
    fn three_four_normalizes() {
        let p = fixed(&[("a", &[3.0, 4.0])]);
        assert_eq!(embed(&p, &["a".to_string()]).unwrap()[0].values(), &[0.6, 0.8]);
    }

    #[test]
    fn inconsistent_dims_across_batches() {
        let a = vec![1.0; 384];
        let b = vec![1.0; 512];
        let p = fixed(&[("a", &a), ("b", &b)]);
        let err = embed(&p, &["a".to_string(), "b".to_string()]).unwrap_err();
        assert!(matches!(err, IndexError::DimensionMismatch { expected: 384, found: 512 }));
    }

    #[test]
    fn hash_embedder_is_deterministic_and_unit() {
        let h = HashEmbedder::new(64);
        let texts = vec!["Net present value".to_string(), "net PRESENT value!".to_string()];
        let out: Vec<EmbeddingVector<f32>> = embed(&h, &texts).unwrap();
        assert_eq!(out[0], out[1]);
        let n: f32 = out[0].values().iter().map(|x| x * x).sum::<f32>().sqrt();
        assert!((n - 1.0).abs() < 1e-6);
        assert_eq!(HashEmbedder::from_provider_id("hash-64").unwrap().dims(), 64);
        assert!(HashEmbedder::from_provider_id("all-MiniLM-L6-v2").is_none());
    }

    #[test]
    fn parses_openai_embedding_shape_by_index() {
        let body = json!({"data": [
            {"index": 1, "embedding": [0.0, 1.0]},
            {"index": 0, "embedding": [1.0, 0.0]}
        ]});
        let rows: Vec<Vec<f64>> = parse_embeddings(&body, 2).unwrap();
        assert_eq!(rows, vec![vec![1.0, 0.0], vec![0.0, 1.0]]);
        assert!(parse_embeddings::<f64>(&body, 3).is_err());
    }
}
