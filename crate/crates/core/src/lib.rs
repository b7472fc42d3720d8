//! Checkpoint merging, merge search and guardrail data utilities.
//!
//! The crate is organised bottom-up: [`tensor_store`] reads and writes
//! checkpoints, [`param_groups`] picks tensors by role, [`merge_algos`]
//! combines checkpoints, [`merge_search`] explores merge weights against an
//! [`Evaluator`], [`toy_eval`] provides small models to evaluate, and
//! [`sdg`] covers synthetic data preparation.

pub mod evaluator;
pub mod merge_algos;
pub mod merge_search;
pub mod param_groups;
pub mod rng;
pub mod sdg;
pub mod tensor_store;
pub mod toy_eval;

pub use evaluator::{EvalError, Evaluator, ExecEvaluator, FnEvaluator};
pub use merge_algos::{apply_merge, Algorithm, MergeError, MergeSpec};
pub use merge_search::{run_search, SearchConfig, SearchError, SearchResult};
pub use param_groups::{GroupLabel, GroupRules, MergeType};
pub use tensor_store::{load_checkpoint, save_checkpoint, StoreError, Tensor, TensorMap};
