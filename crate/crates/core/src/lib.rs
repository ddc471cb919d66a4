//! Long-context question answering benchmark construction and evaluation.

pub mod analysis;
pub mod collection;
pub mod corpus;
pub mod error;
pub mod eval;
pub mod llm;
pub mod metadata;
pub mod nl;
pub mod pipeline;
pub mod prompts;
pub mod seed;
pub mod template;
