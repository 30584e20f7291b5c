//! Tabular offline reinforcement learning laboratory.
//!
//! The crate implements offline approximate modified policy iteration on
//! finite MDPs: a policy evaluation step run against a model estimated from a
//! fixed dataset, alternated with one of four behavior-anchored improvement
//! operators. One-step, multi-step and iterative (actor-critic style) variants
//! are instances of the same driver in [`oampi`].
//!
//! Because every MDP here is tabular and known to the laboratory, each
//! estimate can be compared against exact ground truth: [`diag`] measures
//! evaluation error, distribution shift, overestimation, and checks the
//! performance-difference and conservative-improvement bounds numerically.
//!
//! The crate is `no_std` (with `alloc`); file formats, the CLI and threading
//! live in the `oampi-lab` companion crate.

#![cfg_attr(not(any(test, feature = "std")), no_std)]

extern crate alloc;

pub mod data;
pub mod diag;
mod error;
pub mod eval;
pub mod improve;
mod math;
pub mod mdp;
pub mod oampi;
pub mod rng;

pub use data::{collect, fit_empirical, mix_datasets, Dataset, EmpiricalModel, Step};
pub use diag::{DiagOptions, DiagReport, DiagWeights, PolicyDiagnostics};
pub use error::{Error, Result};
pub use eval::{ErrorTable, EvalConfig, TransitionSource, WarmStart};
pub use improve::{BcqAnchor, BcqMode, ImprovementSpec};
pub use mdp::{
    build_gridworld, Cell, GridAction, GridSpec, Policy, QTable, RewardNoise, SuboptimalPolicy,
    TabularMdp, TieBreak, Transitions, VTable,
};
pub use oampi::{BehaviorSource, OampiConfig, RunResult, Variant};
