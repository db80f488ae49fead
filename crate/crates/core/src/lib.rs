//! Computationally budgeted model selection.
//!
//! Three selectors share one set of primitives:
//!
//! * [`nested::select_nested`] splits a compute budget over a coarse grid of
//!   a nested hierarchy and picks the class with the best penalized score.
//! * [`fast::select_fast`] uses the same grid idea for fast-rate penalties,
//!   cross-evaluating smaller classes on each candidate's sample set.
//! * [`bandit::bandit_select`] hands out compute quanta one at a time to an
//!   unstructured collection using an optimistic criterion.
//!
//! Learners are metered: a class with per-quantum rate `n_i` trains on
//! `floor(n_i * T)` samples when given `T` quanta.

pub mod bandit;
pub mod datagen;
pub mod error;
pub mod fast;
pub mod grid;
pub mod harness;
pub mod learners;
pub mod loss;
pub mod nested;
pub mod penalties;
pub mod risk;
pub mod types;

pub use error::{Error, Result};
pub use loss::LossKind;
pub use types::{
    samples_for_budget, BudgetSchedule, ConcentrationConstants, LinearModel, ModelClassSpec,
    Sample, Structure,
};
