//! Sparse incremental aggregation for multi-hop federated learning.
//!
//! Clients sit on a chain and forward one partial aggregate towards the
//! parameter server. This crate provides the per-node sparsifying aggregation
//! steps ([`aggregation`]), bit-level cost accounting ([`cost`]), a logistic
//! regression training simulator ([`sim`]) and the experiment/verification
//! drivers behind the `sparse-ia` command-line tool ([`experiment`]).

pub mod aggregation;
pub mod cost;
pub mod error;
pub mod experiment;
pub mod sim;
pub mod sparse;

pub use aggregation::{
    chain_aggregate, cl_sia_step, cl_tc_sia_step, compute_global_mask, node_step, re_sia_step, sia_step, tc_sia_step,
    Algorithm, AlgorithmParams, MixedAggregate, NodeState, PartialAggregate,
};
pub use cost::{CommLedger, HopRecord, WireParams};
pub use error::{Error, IdxError, Result};
pub use sparse::{Mask, SparseVector};
