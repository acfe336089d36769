//! Aligning an aliased medical vocabulary with a multilingual entity
//! collection: ingestion, lexical candidate generation, pairwise reranking
//! and recall evaluation.

pub mod candgen;
pub mod corpus;
mod error;
pub mod eval;
pub mod pipeline;
pub mod rerank;

pub use error::{Error, Result};
