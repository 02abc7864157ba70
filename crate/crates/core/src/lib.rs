//! SLO-conditioned per-query control for a retrieval-augmented QA pipeline.
//!
//! The crate covers the whole offline loop: SQuAD 2.0 ingestion, BM25
//! retrieval, prompt assembly and generation (simulated or over an
//! OpenAI-compatible HTTP API), full five-action sweeps logged as JSON lines,
//! linear softmax routers trained on best-action labels, and replay
//! evaluation with table and plot-data output.

pub mod config;
pub mod control;
pub mod corpus;
pub mod evalreport;
pub mod features;
pub mod generation;
pub mod logstore;
pub mod pipeline;
pub mod policy;
pub mod retriever;
pub mod slo;
pub mod synth;

pub use control::{Action, OutcomeFlags, NUM_ACTIONS};
pub use corpus::{Corpus, Paragraph, QuestionExample};
pub use evalreport::MetricsReport;
pub use policy::{Objective, PolicyModel, TrainConfig};
pub use retriever::{InvertedIndex, RetrievalResult};
pub use slo::SloProfile;
