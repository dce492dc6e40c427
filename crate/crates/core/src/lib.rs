//! Grow a pool of instruction-tuning tasks from a small seed set by
//! prompting a completion-style language model, filter the generations for
//! novelty and validity, and export the result as finetune-ready training
//! data, with analysis tooling to measure what came out.
//!
//! Modules map onto the pipeline:
//!
//! - [`model`]: tasks, instances, the task pool, and its on-disk formats
//! - [`rouge`]: tokenization, LCS, and the ROUGE-L similarity scorer
//! - [`templates`]: prompt rendering and completion parsing
//! - [`gateway`]: completion backends (HTTP, scripted), retry, rate limits
//! - [`filters`]: the candidate admission chain and instance hygiene
//! - [`bootstrap`]: the iterative grow, classify, instantiate loop
//! - [`analysis`]: overlap, length, verb-noun, and agreement reports
//! - [`export`]: finetune files, subsamples, and human-eval sheets

pub mod analysis;
pub mod bootstrap;
pub mod digest;
pub mod error;
pub mod export;
pub mod filters;
pub mod gateway;
pub mod model;
pub mod rouge;
pub mod templates;

pub use error::{Error, ExitClass, Result};
