//! Multi-document question answering engine.
//!
//! The pipeline decomposes a question into subquestions, retrieves passages
//! for each one (BM25 candidates followed by a relevance reranker), and asks
//! a few-shot language model to aggregate the passages into an evidence
//! paragraph and a final answer. The [`eval`] module implements the answer,
//! retrieval and decomposition metrics used to score runs.
//!
//! Numeric kernels ([`index`], [`prompting::knn`], [`eval`]) are generic over
//! [`Scalar`]; the aliases below pin the `f64` instantiations that the
//! pipeline and the file formats use.

pub mod corpus;
pub mod decompose;
pub mod eval;
pub mod hashing;
pub mod index;
pub mod mock_server;
pub mod pipeline;
pub mod prompting;
pub mod providers;
pub mod rerank;
mod scalar;

pub use scalar::Scalar;

/// BM25 parameters in double precision.
pub type Bm25 = index::Bm25Params<f64>;
/// BM25 parameters in single precision.
pub type Bm25F32 = index::Bm25Params<f32>;
/// Inverted index scored in double precision.
pub type Index = index::InvertedIndex<f64>;
/// Inverted index scored in single precision.
pub type IndexF32 = index::InvertedIndex<f32>;
/// Search hit with a double-precision score.
pub type SearchHit = index::SearchHit<f64>;
