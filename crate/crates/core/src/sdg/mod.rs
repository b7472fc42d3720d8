//! Synthetic training data for guardrail classifiers.
//!
//! Generation itself happens in an external process; this module covers the
//! policy schema, bucket sizing, prompt rendering, the adapter protocol and
//! the post-processing steps.

mod adapter;
mod alloc;
mod augment;
mod dedup;
mod instruct;
mod policy;
mod prompt;

use thiserror::Error;

pub use adapter::{bucket_label, embed_via_adapter, generate_via_adapter, refine_via_adapter};
pub use alloc::{allocate_counts, CountAllocation};
pub use augment::{apply_augmentation_plan, augment, AugmentParams, Transform};
pub use dedup::{dedup, jaccard_tokens, Similarity};
pub use instruct::{format_instruction, parse_instruction, SEP};
pub use policy::{read_samples_jsonl, write_samples_jsonl, Kind, Label, Policy, PolicyExample, Sample};
pub use prompt::{render_generation_prompt, render_refinement_prompt};

#[derive(Debug, Error)]
pub enum SdgError {
    #[error("invalid policy: {0}")]
    InvalidPolicy(String),
    #[error("malformed samples at line {line}: {reason}")]
    MalformedSamples { line: usize, reason: String },
    #[error("ratio {0} is not a finite nonnegative number")]
    InvalidRatio(f64),
    #[error("rounded counts {diverse}+{in_domain}+{inapplicable} exceed total {total}")]
    RatioOverflow {
        diverse: u64,
        in_domain: u64,
        inapplicable: u64,
        total: u64,
    },
    #[error("{0} must not be empty")]
    EmptyField(&'static str),
    #[error("invalid augmentation plan: {0}")]
    InvalidPlan(String),
    #[error("similarity threshold {0} is outside [0, 1]")]
    InvalidThreshold(f64),
    #[error("adapter `{command}` failed: {reason}")]
    AdapterExit { command: String, reason: String },
    #[error("malformed adapter output at line {line}: {reason}")]
    MalformedAdapterOutput { line: usize, reason: String },
    #[error("adapter returned {got} of {expected} {kind} samples")]
    CountShortfall { kind: String, expected: usize, got: usize },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
