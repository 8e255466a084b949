//! Decentralized Frank-Wolfe (DeFW) over simulated agent networks.
//!
//! The crate is organised by subsystem:
//!
//! * [`network`]: topologies, Metropolis-Hastings mixing weights, spectral
//!   data and average-consensus rounds.
//! * [`constraints`]: ℓ1 and trace-norm balls with their linear-optimization
//!   oracles, projections and the Frank-Wolfe gap.
//! * [`objectives`]: distributed LASSO and matrix-completion losses.
//! * [`defw`]: the consensus-based DeFW engine with gradient tracking and
//!   the rate certificates that go with it.
//! * [`sparsefw`]: the communication-sparsified LASSO variant.
//! * [`baselines`]: centralized Frank-Wolfe and decentralized projected
//!   gradient.
//! * [`harness`]: configuration, data generation, metrics I/O, rate fits
//!   and the CLI.
//!
//! Points are stored as dense [`nalgebra::DVector`]s. Matrix-valued points
//! (matrix completion) are vectorised column-major, so a `rows × cols`
//! matrix `X` lives at index `k + l * rows`.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod baselines;
pub mod constraints;
pub mod defw;
pub mod error;
pub mod harness;
pub mod linalg;
pub mod network;
pub mod objectives;
pub mod sparsefw;

pub use error::{Error, Result};
