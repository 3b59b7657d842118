//! Retrieval-augmented, role-aware multi-agent question answering for
//! finance multiple-choice questions.

pub mod agents;
pub mod config;
pub mod digest;
pub mod gateway;
pub mod harness;
pub mod index;
pub mod pipeline;
pub mod questions;
pub mod roles;
pub mod scalar;

pub use scalar::Scalar;

pub type VectorIndex = index::VectorIndex<f32>;
pub type VectorIndexF64 = index::VectorIndex<f64>;
pub type EmbeddingVector = index::EmbeddingVector<f32>;
pub type EmbeddingVectorF64 = index::EmbeddingVector<f64>;
pub type SearchHit<'a> = index::SearchHit<'a, f32>;
pub type Pipeline<'a> = pipeline::Pipeline<'a, f32>;
pub type PipelineF64<'a> = pipeline::Pipeline<'a, f64>;
