//! Corpus preprocessing and memorization evaluation for email datasets.
//!
//! * [`corpus`]: message parsing, seeded splits, JSONL persistence
//! * [`pii`]: `first.last@domain.tld` detection and the occurrence index
//! * [`masking`]: randomized masking of repeated addresses
//! * [`dedup`]: removal of headers that repeat an address
//! * [`memproxy`]: byte n-gram stand-in for a fine-tuned model
//! * [`metrics`]: extraction rates and mean delta perplexity
//! * [`pareto`]: MaxTER curves and their area
//! * [`synthetic`]: seeded fixture corpora and extraction prompts

pub mod corpus;
pub mod dedup;
pub mod error;
pub mod masking;
pub mod memproxy;
pub mod metrics;
pub mod pareto;
pub mod pii;
pub mod synthetic;

pub use error::{Error, Result};
