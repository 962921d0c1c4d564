//! Fork-join task-parallel runtime and deterministic scheduler simulator.
//!
//! The crate models a NUMA machine (sockets, cores, a memory cost model),
//! represents fork-join computations as frame trees over work strands, and
//! executes them under two schedulers: classic randomized work stealing and
//! a NUMA-aware variant with locality-biased steals, single-entry mailboxes,
//! and lazy work pushing. A discrete-event simulator provides deterministic,
//! instrumented runs; a thread engine runs the same programs on real OS
//! threads. The metrics module computes work-efficiency, work-inflation, and
//! scalability figures from the emitted traces.

pub mod analysis;
pub mod bench;
pub mod config;
pub mod dag;
pub mod dag_text;
pub mod deque;
pub mod error;
pub mod event;
pub mod layout;
pub mod mailbox;
pub mod metrics;
pub mod payload;
pub mod policy;
pub mod report;
pub mod sim;
pub mod threads;
pub mod topology;

pub use error::{Error, Result};
