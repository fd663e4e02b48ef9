//! One-dependent random walks in hypergeometric random environments.
//!
//! The walk moves along the directed edges of a strongly connected graph and
//! chooses its next edge with probabilities `omega(e, e')` that depend on the
//! edge it currently occupies. The kernel is built from independent simplex
//! variables at every vertex whose law has density proportional to
//! `prod u^{alpha - 1} prod (Z u)^{-beta}`.

pub mod chain;
pub mod config;
pub mod environment;
pub mod error;
pub mod experiments;
pub mod flows;
pub mod graph;
pub mod hypergeom;
pub mod lattice;
pub mod maxflow;
pub mod quadrature;
pub mod report;
pub mod rng;
pub mod solve;
pub mod special;

pub use error::{Error, Result};
