//! Experiment configuration, trial orchestration and result files.

pub mod bounds;
pub mod config;
pub mod experiment;
pub mod records;

pub use bounds::{bound_rhs_from_terms, compute_bound_rhs, BoundKind, BoundTerm};
pub use config::{ExperimentConfig, SelectorKind, Sweep};
pub use experiment::{run_experiment, Experiment, ReplayOutcome};
pub use records::{summarize, write_outputs, BudgetSummary, TrialRecord};
