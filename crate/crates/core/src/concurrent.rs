//! One interface over every thread-safe implementation, used by the benchmark
//! and the stress tests.

use std::fmt;
use std::str::FromStr;

use crate::baselines::{CoarseLockGraph, SequentialGraph};
use crate::fpsp::{FpspConfig, FpspError, FpspGraph};
use crate::lockfree::LockFreeGraph;
use crate::ops::{GraphOp, OpResult, UNBOUNDED};
use crate::waitfree::{EngineError, LookupMode, SlotId, WaitFreeGraph};

/// Per-thread handle. Engines that keep per-thread state hand out a slot.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Session {
    slot: Option<SlotId>,
}

impl Session {
    pub fn slot(&self) -> Option<SlotId> {
        self.slot
    }

    fn require_slot(&self) -> SlotId {
        self.slot.expect("session was not issued by this graph")
    }
}

pub trait ConcurrentGraph: Send + Sync {
    /// Claims a per-thread session. Call once per worker thread.
    fn session(&self) -> Result<Session, EngineError>;

    fn apply(&self, session: &Session, op: GraphOp) -> OpResult;

    /// Applies `op` outside any session. Setup only; must not race with
    /// other calls.
    fn load(&self, op: GraphOp) -> OpResult;

    /// Abstract state. Only meaningful while no operation is running.
    fn snapshot(&self) -> SequentialGraph;

    fn slowpath_entries(&self) -> u64 {
        0
    }

    /// The underlying lock-free structure, for implementations built on one.
    fn structure(&self) -> Option<&LockFreeGraph> {
        None
    }
}

impl ConcurrentGraph for LockFreeGraph {
    fn session(&self) -> Result<Session, EngineError> {
        Ok(Session { slot: None })
    }

    fn apply(&self, _: &Session, op: GraphOp) -> OpResult {
        LockFreeGraph::apply(self, op, UNBOUNDED).done().unwrap()
    }

    fn load(&self, op: GraphOp) -> OpResult {
        LockFreeGraph::apply(self, op, UNBOUNDED).done().unwrap()
    }

    fn snapshot(&self) -> SequentialGraph {
        LockFreeGraph::snapshot(self)
    }

    fn structure(&self) -> Option<&LockFreeGraph> {
        Some(self)
    }
}

impl ConcurrentGraph for WaitFreeGraph {
    fn session(&self) -> Result<Session, EngineError> {
        Ok(Session {
            slot: Some(self.register_thread()?),
        })
    }

    fn apply(&self, session: &Session, op: GraphOp) -> OpResult {
        self.wf_apply(session.require_slot(), op)
    }

    fn load(&self, op: GraphOp) -> OpResult {
        self.graph().apply(op, UNBOUNDED).done().unwrap()
    }

    fn snapshot(&self) -> SequentialGraph {
        self.graph().snapshot()
    }

    fn structure(&self) -> Option<&LockFreeGraph> {
        Some(self.graph())
    }
}

impl ConcurrentGraph for FpspGraph {
    fn session(&self) -> Result<Session, EngineError> {
        Ok(Session {
            slot: Some(self.register_thread()?),
        })
    }

    fn apply(&self, session: &Session, op: GraphOp) -> OpResult {
        FpspGraph::apply(self, session.require_slot(), op)
    }

    fn load(&self, op: GraphOp) -> OpResult {
        self.graph().apply(op, UNBOUNDED).done().unwrap()
    }

    fn snapshot(&self) -> SequentialGraph {
        self.graph().snapshot()
    }

    fn structure(&self) -> Option<&LockFreeGraph> {
        Some(self.graph())
    }

    fn slowpath_entries(&self) -> u64 {
        FpspGraph::slowpath_entries(self)
    }
}

impl ConcurrentGraph for CoarseLockGraph {
    fn session(&self) -> Result<Session, EngineError> {
        Ok(Session { slot: None })
    }

    fn apply(&self, _: &Session, op: GraphOp) -> OpResult {
        CoarseLockGraph::apply(self, op)
    }

    fn load(&self, op: GraphOp) -> OpResult {
        CoarseLockGraph::apply(self, op)
    }

    fn snapshot(&self) -> SequentialGraph {
        CoarseLockGraph::snapshot(self)
    }
}

/// Implementation selector shared by the benchmark and the tests.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ImplKind {
    Seq,
    Coarse,
    LockFree,
    WfWh,
    WfWoh,
    FpspWh,
    FpspWoh,
}

impl ImplKind {
    pub const ALL: [ImplKind; 7] = [
        ImplKind::Seq,
        ImplKind::Coarse,
        ImplKind::LockFree,
        ImplKind::WfWh,
        ImplKind::WfWoh,
        ImplKind::FpspWh,
        ImplKind::FpspWoh,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ImplKind::Seq => "seq",
            ImplKind::Coarse => "coarse",
            ImplKind::LockFree => "lockfree",
            ImplKind::WfWh => "wf-wh",
            ImplKind::WfWoh => "wf-woh",
            ImplKind::FpspWh => "fpsp-wh",
            ImplKind::FpspWoh => "fpsp-woh",
        }
    }

    /// Builds a thread-safe instance with room for `threads` sessions.
    /// `Seq` has no thread-safe form and yields `None`.
    pub fn build(self, threads: usize) -> Option<Box<dyn ConcurrentGraph>> {
        self.build_with(threads, FpspConfig::default().max_fail)
            .expect("default budget is valid")
    }

    /// Like [`Self::build`] with an explicit fast-path budget.
    pub fn build_with(
        self,
        threads: usize,
        max_fail: usize,
    ) -> Result<Option<Box<dyn ConcurrentGraph>>, FpspError> {
        let fpsp = |lookup_mode| -> Result<Option<Box<dyn ConcurrentGraph>>, FpspError> {
            let cfg = FpspConfig {
                max_fail,
                lookup_mode,
                ..FpspConfig::default()
            };
            Ok(Some(Box::new(FpspGraph::new(threads, cfg)?)))
        };
        Ok(match self {
            ImplKind::Seq => None,
            ImplKind::Coarse => Some(Box::new(CoarseLockGraph::new())),
            ImplKind::LockFree => Some(Box::new(LockFreeGraph::new())),
            ImplKind::WfWh => Some(Box::new(WaitFreeGraph::new(threads, LookupMode::Helped))),
            ImplKind::WfWoh => Some(Box::new(WaitFreeGraph::new(threads, LookupMode::NoHelp))),
            ImplKind::FpspWh => return fpsp(LookupMode::Helped),
            ImplKind::FpspWoh => return fpsp(LookupMode::NoHelp),
        })
    }
}

impl fmt::Display for ImplKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ImplKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        ImplKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| {
                let names: Vec<_> = ImplKind::ALL.iter().map(|k| k.as_str()).collect();
                format!("unknown implementation {s:?}; expected one of {}", names.join("|"))
            })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn names_round_trip() {
        for k in ImplKind::ALL {
            assert_eq!(k.as_str().parse::<ImplKind>().unwrap(), k);
        }
        assert!("hoh".parse::<ImplKind>().is_err());
    }

    #[test]
    fn every_shared_impl_answers_the_same() {
        for k in ImplKind::ALL {
            let Some(g) = k.build(1) else { continue };
            let s = g.session().unwrap();
            assert_eq!(g.apply(&s, GraphOp::AddVertex(1)), OpResult::Vertex(true), "{k}");
            g.load(GraphOp::AddVertex(2));
            assert_eq!(
                g.apply(&s, GraphOp::AddEdge(1, 2)),
                OpResult::Edge(crate::ops::EdgeOpStatus::EdgeAdded),
                "{k}"
            );
            assert_eq!(g.snapshot().edges().len(), 1, "{k}");
        }
    }
}
