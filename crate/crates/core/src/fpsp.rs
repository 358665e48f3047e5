//! Fast-path-slow-path graph: each update first runs the lock-free operation
//! with a small failure budget and only announces itself to the wait-free
//! engine when that budget runs out.

use std::sync::atomic::{AtomicU64, Ordering};

use thiserror::Error;

use crate::lockfree::LockFreeGraph;
use crate::ops::{Attempt, EdgeOpStatus, GraphOp, Key, OpKind, OpResult};
use crate::waitfree::{EngineError, LookupMode, SlotId, WaitFreeGraph};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct FpspConfig {
    /// Failed decisive CASes tolerated before switching to the slow path.
    pub max_fail: usize,
    /// Help pending slow-path operations before starting the fast path.
    pub help_before_fast: bool,
    pub lookup_mode: LookupMode,
}

impl Default for FpspConfig {
    fn default() -> Self {
        FpspConfig {
            max_fail: 20,
            help_before_fast: true,
            lookup_mode: LookupMode::NoHelp,
        }
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum FpspError {
    #[error("max_fail must be at least 1")]
    ZeroMaxFail,
}

/// Slow-path entries per operation kind, indexed by [`OpKind::index`].
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct FpspStats {
    pub slowpath: [u64; 6],
}

impl FpspStats {
    pub fn total(&self) -> u64 {
        self.slowpath.iter().sum()
    }
}

pub struct FpspGraph {
    engine: WaitFreeGraph,
    config: FpspConfig,
    slowpath: [AtomicU64; 6],
}

impl FpspGraph {
    pub fn new(capacity: usize, config: FpspConfig) -> Result<Self, FpspError> {
        if config.max_fail == 0 {
            return Err(FpspError::ZeroMaxFail);
        }
        Ok(FpspGraph {
            engine: WaitFreeGraph::new(capacity, config.lookup_mode),
            config,
            slowpath: Default::default(),
        })
    }

    pub fn config(&self) -> FpspConfig {
        self.config
    }

    pub fn engine(&self) -> &WaitFreeGraph {
        &self.engine
    }

    pub fn graph(&self) -> &LockFreeGraph {
        self.engine.graph()
    }

    pub fn register_thread(&self) -> Result<SlotId, EngineError> {
        self.engine.register_thread()
    }

    pub fn stats(&self) -> FpspStats {
        FpspStats {
            slowpath: std::array::from_fn(|i| self.slowpath[i].load(Ordering::Relaxed)),
        }
    }

    pub fn slowpath_entries(&self) -> u64 {
        self.stats().total()
    }

    pub fn apply(&self, slot: SlotId, op: GraphOp) -> OpResult {
        if self.config.help_before_fast && self.engine.has_pending() {
            self.engine.help_graph_ds(self.engine.max_phase());
        }
        if matches!(op.kind(), OpKind::ContainsVertex | OpKind::ContainsEdge) {
            return self.engine.wf_apply(slot, op);
        }
        match self.graph().apply(op, self.config.max_fail) {
            Attempt::Done(r) => r,
            Attempt::Exhausted => {
                self.slowpath[op.kind().index()].fetch_add(1, Ordering::Relaxed);
                self.engine.wf_apply(slot, op)
            }
        }
    }

    pub fn add_vertex(&self, slot: SlotId, key: Key) -> bool {
        self.apply(slot, GraphOp::AddVertex(key)).as_bool().unwrap()
    }

    pub fn remove_vertex(&self, slot: SlotId, key: Key) -> bool {
        self.apply(slot, GraphOp::RemoveVertex(key)).as_bool().unwrap()
    }

    pub fn contains_vertex(&self, slot: SlotId, key: Key) -> bool {
        self.apply(slot, GraphOp::ContainsVertex(key)).as_bool().unwrap()
    }

    pub fn add_edge(&self, slot: SlotId, key1: Key, key2: Key) -> EdgeOpStatus {
        self.apply(slot, GraphOp::AddEdge(key1, key2)).as_edge().unwrap()
    }

    pub fn remove_edge(&self, slot: SlotId, key1: Key, key2: Key) -> EdgeOpStatus {
        self.apply(slot, GraphOp::RemoveEdge(key1, key2)).as_edge().unwrap()
    }

    pub fn contains_edge(&self, slot: SlotId, key1: Key, key2: Key) -> EdgeOpStatus {
        self.apply(slot, GraphOp::ContainsEdge(key1, key2)).as_edge().unwrap()
    }
}
