//! Approximate marginal inference for discrete factor graphs.
//!
//! Samples are drawn by compiling the model into a weighted decision diagram
//! one factor at a time. When the diagram outgrows a size budget, a policy
//! picks a variable, a value is sampled from the diagram's own marginal and
//! the diagram is conditioned on it. Whatever remains uncompiled-away is
//! integrated exactly, so each sample carries a collapsed expectation and an
//! importance weight.

// NaN-rejecting comparisons such as `!(w >= 0.0)` are deliberate.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod circuit;
pub mod cli;
pub mod compiler;
pub mod determinism;
pub mod error;
pub mod generate;
pub mod model;
pub mod oracle;
pub mod policies;
pub mod sampler;

pub use circuit::{Circuit, Mask, Store, VarOrder};
pub use compiler::{compile_exact, CompileState, OrderMode};
pub use determinism::{Oracle, OracleMode};
pub use error::{Error, Result};
pub use model::{parse_evidence, parse_uai, Assignment, Factor, FactorGraph, QuerySpec, VarId};
pub use policies::{Policy, PolicyKind};
pub use sampler::{estimate, run, run_parallel, Estimator, ProposalKind, Sample, Sampler, SamplerConfig, Selection};
