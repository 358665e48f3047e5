//! A concurrent directed graph with a lock-free fast path and a wait-free
//! slow path, together with reference baselines, a linearizability checker
//! and a throughput benchmark.
//!
//! * [`lockfree::LockFreeGraph`]: sorted vertex list, per-vertex sorted edge
//!   lists, budgeted lock-free operations.
//! * [`waitfree::WaitFreeGraph`]: descriptor publication and phase-ordered
//!   helping on top of the same structure.
//! * [`fpsp::FpspGraph`]: fast path first, slow path when the budget runs out.
//! * [`baselines`]: the sequential oracle and a coarse-lock graph.
//! * [`lincheck`]: history recording and offline checking.
//! * [`bench`]: workload generation and throughput measurement.

pub mod baselines;
pub mod bench;
pub mod concurrent;
pub mod fpsp;
pub mod lincheck;
pub mod lockfree;
pub mod marked_ref;
pub mod ops;
pub mod waitfree;

pub use baselines::{oracle_apply, CoarseLockGraph, ListGraph, SequentialGraph};
pub use concurrent::{ConcurrentGraph, ImplKind, Session};
pub use fpsp::{FpspConfig, FpspGraph};
pub use lockfree::LockFreeGraph;
pub use ops::{Attempt, EdgeOpStatus, GraphOp, Key, OpKind, OpResult};
pub use waitfree::{LookupMode, SlotId, WaitFreeGraph};
