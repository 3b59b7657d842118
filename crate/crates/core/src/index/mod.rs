//! Textbook evidence store.
//!
//! Documents are split into overlapping word windows, embedded through an
//! [`EmbeddingProvider`], and searched by exact cosine similarity. The index
//! is generic over the vector scalar; see the crate-root aliases for the
//! `f32` and `f64` instantiations.

mod chunk;
mod embed;
mod persist;

use std::cmp::Ordering;
use std::collections::{BTreeSet, BinaryHeap};
use std::path::Path;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scalar::{dot, norm, Scalar};

pub use self::chunk::chunk_document;
pub use self::embed::{embed, EmbeddingProfile, EmbeddingProvider, HashEmbedder, HttpEmbedder, DEFAULT_PROVIDER_ID};
pub use self::persist::{read_index, write_index, INDEX_MAGIC, INDEX_VERSION};

#[derive(Debug, Error)]
pub enum IndexError {
    #[error("document {0} has no text")]
    EmptyDocument(String),
    #[error("corpus contains no documents")]
    EmptyCorpus,
    #[error("duplicate document id {0}")]
    DuplicateDocument(String),
    #[error("invalid retrieval config: {0}")]
    InvalidConfig(String),
    #[error("embedding provider: {0}")]
    Provider(String),
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("cannot normalize a zero vector")]
    ZeroVector,
    #[error("index is empty")]
    EmptyIndex,
    #[error("index file: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SourceDocument {
    pub doc_id: String,
    pub title: String,
    pub body: String,
}

impl SourceDocument {
    pub fn new(doc_id: impl Into<String>, body: impl Into<String>) -> Self {
        let doc_id = doc_id.into();
        Self { title: doc_id.clone(), doc_id, body: body.into() }
    }
}

/// A chunk of a source document.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Passage {
    pub passage_id: String,
    pub doc_id: String,
    pub ordinal: u32,
    pub text: String,
    pub word_count: u32,
}

impl Passage {
    /// Ids sort lexicographically in document then ordinal order.
    pub fn make_id(doc_id: &str, ordinal: u32) -> String {
        format!("{doc_id}#{ordinal:06}")
    }
}

/// A unit-normalized embedding.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingVector<T> {
    values: Vec<T>,
}

impl<T: Scalar> EmbeddingVector<T> {
    /// Scale `values` to unit length.
    pub fn normalized(mut values: Vec<T>) -> Result<Self, IndexError> {
        let n = norm(&values);
        if n.is_nan() || n <= T::zero() || !n.is_finite() {
            return Err(IndexError::ZeroVector);
        }
        for v in &mut values {
            *v = *v / n;
        }
        Ok(Self { values })
    }

    /// Wrap values that are already unit length, e.g. read back from disk.
    pub(crate) fn from_unit(values: Vec<T>) -> Self {
        Self { values }
    }

    pub fn dims(&self) -> usize {
        self.values.len()
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RetrievalConfig {
    pub k: usize,
    pub chunk_size_words: usize,
    pub overlap_words: usize,
}

impl Default for RetrievalConfig {
    fn default() -> Self {
        Self { k: 3, chunk_size_words: 400, overlap_words: 50 }
    }
}

impl RetrievalConfig {
    pub fn validate(&self) -> Result<(), IndexError> {
        if self.k == 0 {
            return Err(IndexError::InvalidConfig("k must be at least 1".into()));
        }
        if self.chunk_size_words == 0 {
            return Err(IndexError::InvalidConfig("chunk size must be positive".into()));
        }
        if self.overlap_words >= self.chunk_size_words {
            return Err(IndexError::InvalidConfig(format!(
                "overlap {} must be smaller than chunk size {}",
                self.overlap_words, self.chunk_size_words
            )));
        }
        Ok(())
    }
}

/// Immutable passage store with parallel unit vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct VectorIndex<T> {
    passages: Vec<Passage>,
    vectors: Vec<EmbeddingVector<T>>,
    dims: usize,
    provider_id: String,
    config: RetrievalConfig,
    built_at: DateTime<Utc>,
}

/// One search result.
#[derive(Debug, Clone, PartialEq)]
pub struct SearchHit<'a, T> {
    pub passage: &'a Passage,
    pub score: T,
}

/// Heap entry ordered so that the *worst* hit is the maximum.
struct Candidate<'a, T> {
    score: T,
    id: &'a str,
    index: usize,
}

impl<T: Scalar> Candidate<'_, T> {
    fn worse_than(&self, other: &Self) -> Ordering {
        other
            .score
            .partial_cmp(&self.score)
            .unwrap_or(Ordering::Equal)
            .then_with(|| self.id.cmp(other.id))
    }
}

impl<T: Scalar> PartialEq for Candidate<'_, T> {
    fn eq(&self, other: &Self) -> bool {
        self.worse_than(other) == Ordering::Equal
    }
}

impl<T: Scalar> Eq for Candidate<'_, T> {}

impl<T: Scalar> PartialOrd for Candidate<'_, T> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl<T: Scalar> Ord for Candidate<'_, T> {
    fn cmp(&self, other: &Self) -> Ordering {
        self.worse_than(other)
    }
}

impl<T: Scalar> VectorIndex<T> {
    /// Assemble an index from parallel passages and vectors.
    pub fn from_parts(
        passages: Vec<Passage>,
        vectors: Vec<EmbeddingVector<T>>,
        provider_id: impl Into<String>,
        config: RetrievalConfig,
        built_at: DateTime<Utc>,
    ) -> Result<Self, IndexError> {
        if passages.is_empty() {
            return Err(IndexError::EmptyIndex);
        }
        if passages.len() != vectors.len() {
            return Err(IndexError::Format(format!(
                "{} passages but {} vectors",
                passages.len(),
                vectors.len()
            )));
        }
        let dims = vectors[0].dims();
        if let Some(bad) = vectors.iter().find(|v| v.dims() != dims) {
            return Err(IndexError::DimensionMismatch { expected: dims, found: bad.dims() });
        }
        let mut seen = BTreeSet::new();
        if let Some(dup) = passages.iter().find(|p| !seen.insert(p.passage_id.as_str())) {
            return Err(IndexError::Format(format!("duplicate passage id {}", dup.passage_id)));
        }
        Ok(Self { passages, vectors, dims, provider_id: provider_id.into(), config, built_at })
    }

    pub fn passages(&self) -> &[Passage] {
        &self.passages
    }

    pub fn vectors(&self) -> &[EmbeddingVector<T>] {
        &self.vectors
    }

    pub fn len(&self) -> usize {
        self.passages.len()
    }

    pub fn is_empty(&self) -> bool {
        self.passages.is_empty()
    }

    pub fn dims(&self) -> usize {
        self.dims
    }

    pub fn provider_id(&self) -> &str {
        &self.provider_id
    }

    pub fn config(&self) -> &RetrievalConfig {
        &self.config
    }

    pub fn built_at(&self) -> DateTime<Utc> {
        self.built_at
    }

    /// Top `k` passages by cosine similarity, best first. Equal scores are
    /// ordered by passage id ascending.
    pub fn search(&self, query: &EmbeddingVector<T>, k: usize) -> Result<Vec<SearchHit<'_, T>>, IndexError> {
        if self.passages.is_empty() {
            return Err(IndexError::EmptyIndex);
        }
        if query.dims() != self.dims {
            return Err(IndexError::DimensionMismatch { expected: self.dims, found: query.dims() });
        }
        if k == 0 {
            return Ok(Vec::new());
        }
        let q = query.values();
        let q_norm = norm(q);
        if q_norm.is_nan() || q_norm <= T::zero() {
            return Err(IndexError::ZeroVector);
        }
        let mut heap: BinaryHeap<Candidate<'_, T>> = BinaryHeap::with_capacity(k + 1);
        for (index, (passage, vector)) in self.passages.iter().zip(&self.vectors).enumerate() {
            let score = (dot(q, vector.values()) / q_norm).max(-T::one()).min(T::one());
            let candidate = Candidate { score, id: &passage.passage_id, index };
            if heap.len() < k {
                heap.push(candidate);
            } else if heap.peek().is_some_and(|worst| candidate < *worst) {
                heap.pop();
                heap.push(candidate);
            }
        }
        Ok(heap
            .into_sorted_vec()
            .into_iter()
            .map(|c| SearchHit { passage: &self.passages[c.index], score: c.score })
            .collect())
    }

    pub fn save(&self, path: &Path) -> Result<(), IndexError> {
        let mut file = std::io::BufWriter::new(std::fs::File::create(path)?);
        write_index(self, &mut file)?;
        use std::io::Write;
        file.flush()?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, IndexError> {
        let mut file = std::io::BufReader::new(std::fs::File::open(path)?);
        read_index(&mut file)
    }
}

/// Chunk and embed every document.
pub fn build_index<T: Scalar>(
    docs: &[SourceDocument],
    provider: &dyn EmbeddingProvider<T>,
    config: &RetrievalConfig,
    built_at: DateTime<Utc>,
) -> Result<VectorIndex<T>, IndexError> {
    config.validate()?;
    if docs.is_empty() {
        return Err(IndexError::EmptyCorpus);
    }
    let mut seen = BTreeSet::new();
    let mut passages = Vec::new();
    for doc in docs {
        if !seen.insert(doc.doc_id.as_str()) {
            return Err(IndexError::DuplicateDocument(doc.doc_id.clone()));
        }
        passages.extend(chunk_document(doc, config)?);
    }
    let texts: Vec<String> = passages.iter().map(|p| p.text.clone()).collect();
    let vectors = embed(provider, &texts)?;
    VectorIndex::from_parts(passages, vectors, provider.provider_id(), config.clone(), built_at)
}

/// Read every regular file in `dir` as one document; the file stem is the id.
pub fn load_corpus_dir(dir: &Path) -> Result<Vec<SourceDocument>, IndexError> {
    let mut paths: Vec<_> = std::fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_file())
        .filter(|p| !p.file_name().and_then(|n| n.to_str()).is_some_and(|n| n.starts_with('.')))
        .collect();
    paths.sort();
    if paths.is_empty() {
        return Err(IndexError::EmptyCorpus);
    }
    paths
        .into_iter()
        .map(|path| {
            let body = std::fs::read_to_string(&path)?;
            let doc_id = path
                .file_stem()
                .and_then(|s| s.to_str())
                .ok_or_else(|| IndexError::Format(format!("bad file name {}", path.display())))?
                .to_string();
            Ok(SourceDocument::new(doc_id, body))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn index_of(vectors: &[&[f64]]) -> VectorIndex<f64> {
        let passages = (0..vectors.len())
            .map(|i| Passage {
                passage_id: Passage::make_id("d", i as u32),
                doc_id: "d".into(),
                ordinal: i as u32,
                text: format!("p{i}"),
                word_count: 1,
            })
            .collect();
        let vectors = vectors.iter().map(|v| EmbeddingVector::normalized(v.to_vec()).unwrap()).collect();
        VectorIndex::from_parts(passages, vectors, "test", RetrievalConfig::default(), DateTime::UNIX_EPOCH).unwrap()
    }

    #[test]
    fn normalizes_to_unit_length() {
        let v = EmbeddingVector::normalized(vec![3.0f64, 4.0]).unwrap();
        assert_eq!(v.values(), &[0.6, 0.8]);
        assert!(matches!(EmbeddingVector::normalized(vec![0.0f32, 0.0]), Err(IndexError::ZeroVector)));
    }

    #[test]
    fn self_similarity_ranks_first() {
        let idx = index_of(&[&[1.0, 0.0, 0.0], &[0.0, 1.0, 0.0], &[1.0, 1.0, 0.0]]);
        let q = EmbeddingVector::normalized(vec![0.0, 1.0, 0.0]).unwrap();
        let hits = idx.search(&q, 3).unwrap();
        assert_eq!(hits[0].passage.ordinal, 1);
        assert!((hits[0].score - 1.0).abs() < 1e-6);
    }

    #[test]
    fn orthogonal_query_scores_zero_and_ties_break_by_id() {
        let idx = index_of(&[&[1.0, 0.0, 0.0], &[0.0, 1.0, 0.0], &[1.0, 1.0, 0.0]]);
        let q = EmbeddingVector::normalized(vec![0.0, 0.0, 1.0]).unwrap();
        let hits = idx.search(&q, 2).unwrap();
        assert_eq!(hits.len(), 2);
        assert!(hits.iter().all(|h| h.score.abs() < 1e-6));
        assert_eq!(hits[0].passage.passage_id, "d#000000");
        assert_eq!(hits[1].passage.passage_id, "d#000001");
    }

    #[test]
    fn k_larger_than_corpus_returns_everything() {
        let idx = index_of(&[&[1.0, 0.0], &[0.0, 1.0]]);
        let q = EmbeddingVector::normalized(vec![1.0, 0.2]).unwrap();
        assert_eq!(idx.search(&q, 10).unwrap().len(), 2);
    }

    #[test]
    fn query_dims_must_match() {
        let idx = index_of(&[&[1.0, 0.0]]);
        let q = EmbeddingVector::normalized(vec![1.0, 0.0, 0.0]).unwrap();
        assert!(matches!(idx.search(&q, 1), Err(IndexError::DimensionMismatch { expected: 2, found: 3 })));
    }

    #[test]
    fn config_rejects_overlap_not_below_chunk() {
        let cfg = RetrievalConfig { k: 3, chunk_size_words: 10, overlap_words: 10 };
        assert!(cfg.validate().is_err());
        assert!(RetrievalConfig { k: 0, ..RetrievalConfig::default() }.validate().is_err());
    }

    #[test]
    fn duplicate_doc_ids_are_rejected() {
        let docs = vec![SourceDocument::new("a", "one two"), SourceDocument::new("a", "three")];
        let err = build_index::<f32>(&docs, &HashEmbedder::new(16), &RetrievalConfig::default(), Utc::now());
        assert!(matches!(err, Err(IndexError::DuplicateDocument(id)) if id == "a"));
    }
}
