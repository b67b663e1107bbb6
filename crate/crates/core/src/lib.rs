//! Label-only membership inference against node-level graph neural networks.
//!
//! The crate covers the whole pipeline: graphs and query payloads ([`graph`]),
//! a small reverse-mode engine ([`nn`]), GCN/GAT/GraphSAGE/GIN models
//! ([`gnn`]), dataset bundles, synthetic graphs and splits ([`data`]), attack
//! feature extraction and the attack classifier ([`attack`]), metrics
//! ([`eval`]) and the experiment runner ([`experiment`]).

pub mod attack;
pub mod data;
pub mod diagnostics;
pub mod error;
pub mod eval;
pub mod experiment;
pub mod gnn;
pub mod graph;
pub mod io;
pub mod nn;
pub mod rng;

pub use error::{Error, Result};
