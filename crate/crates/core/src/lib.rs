//! Training order in multi-domain gradient descent, through the Lie bracket
//! of per-domain gradient flows.
//!
//! Domains ([`domain`]) are mixed by a piecewise-constant weight schedule
//! ([`schedule`]) and trained by gradient flow or descent ([`flow`]). The
//! bracket `R = Hess L₂ ∇L₁ − Hess L₁ ∇L₂` and the resulting excess-loss
//! predictions live in [`commutator`]; [`experiments`] and [`cli`] run the
//! reproducible studies.

pub mod cli;
pub mod commutator;
pub mod domain;
pub mod error;
pub mod experiments;
pub mod flow;
pub mod linalg;
pub mod report;
pub mod schedule;

pub use error::{Error, Result};
