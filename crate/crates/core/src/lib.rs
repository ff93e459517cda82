//! Multilingual idiom-aware image ranking.
//!
//! Each instance pairs a sentence containing a potentially idiomatic nominal
//! compound with five candidate images. The pipeline types the sentence as
//! literal or idiomatic, rewrites idiomatic compounds to literal paraphrases,
//! scores candidates through several embedding streams and fuses the per-stream
//! rankings with weighted Borda counting.

// `!(x > 0.0)` rejects NaN along with out-of-range values
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod config;
pub mod embeddings;
pub mod error;
pub mod evaluation;
pub mod fusion;
pub mod model;
pub mod pipeline;
pub mod rewriter;
pub mod similarity;
pub mod typer;

pub use error::{Error, Result};
pub use model::{Dataset, Instance, SentenceType};
