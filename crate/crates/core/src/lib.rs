//! Sublinear expectations over finite ambiguity sets, Choquet capacities,
//! CLT-under-ambiguity evaluators and monotone G-heat solvers.
//!
//! The crate is organized around one cross-check: the dynamic-programming
//! value of `Ê[phi(S_n / sqrt(n))]` under a zero-mean step family
//! ([`clt`]) converges, as `n` grows, to the solution of the fully
//! nonlinear heat equation `du/dt = G(D2u)` at `(1, 0)` ([`pde`]). The
//! [`measures`] module supplies the underlying upper expectations and
//! capacities; [`cli`] wires everything to a JSON-configured command-line
//! tool with deterministic CSV/TSV output.

// Validation predicates are written as `!(x > 0.0)` so NaN arguments are
// rejected along with out-of-range ones.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod clt;
pub mod config;
pub mod error;
pub mod expr;
pub mod grid;
pub mod measures;
pub mod output;
mod parallel;
pub mod pde;

pub use error::{Error, Result};

/// Thread cap from the `SUBLIM_THREADS` environment variable
/// (0 or unset selects the automatic pool size).
pub fn parallel_thread_cap() -> usize {
    parallel::thread_cap()
}
