//! Simulator for the heterogeneous MPC model: one machine with near-linear
//! memory next to many machines with sublinear memory. Graph algorithms run
//! on top of it with every round, word and budget accounted for.

pub mod connectivity;
pub mod error;
pub mod graph;
pub mod matching;
pub mod mst;
pub mod primitives;
pub mod simcore;
pub mod spanner;

pub use error::{Error, Result};
