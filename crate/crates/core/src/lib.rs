//! Entity-graph sentence selection and prompt-style QA data augmentation.
//!
//! The pipeline segments a corpus into sentences, links sentences that
//! mention the same entity, picks a small dominating set of that sentence
//! graph with a lazy greedy, and turns the chosen sentences into cloze or
//! wh-template question/answer pairs formatted as masked prompts.

pub mod config;
pub mod corpus;
pub mod domset;
pub mod entities;
pub mod error;
pub mod eval;
pub mod pipeline;
pub mod qgen;
pub mod retrieval;
pub mod sentgraph;
pub mod stats;

pub use error::{Error, Result};
