//! Exact analysis of lazy simple random walks on finite spherically
//! symmetric trees.
//!
//! Trees are given by per-level children counts ([`tree::TreeProfile`]).
//! All quantities are computed on symmetry-reduced chains: the level chain
//! ([`chain::CollapsedChain`]) and spine quotients ([`chain::QuotientChain`]).
//! Brute-force explicit-tree computations live alongside as cross-checks.

pub mod chain;
pub mod error;
pub mod exec;
pub mod hitting;
pub mod linalg;
pub mod mixing;
pub mod oracle;
pub mod simulate;
pub mod spectral;
pub mod tree;
pub mod verify;

pub use error::{Error, Result};
pub use exec::Execution;
pub use tree::{build_profile, TreeProfile, VertexPair};
