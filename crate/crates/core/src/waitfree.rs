//! Wait-free slow path: a global phase counter, one descriptor slot per
//! registered thread, and helping procedures that let any thread finish any
//! announced operation.
//!
//! An operation takes a fresh phase, publishes a descriptor in its own slot
//! and then helps every pending descriptor whose phase is not larger than its
//! own, in slot order. Completion replaces the pending descriptor with a new
//! `Success`/`Failure` descriptor of the same phase through one CAS, so only a
//! single helper ever completes a given descriptor.
//!
//! Inserted nodes are created `Pending` by the announcing thread. Helpers link
//! the node and then activate it; a helper that instead finds the key taken
//! kills the node. The descriptor's outcome is read off the node status, so
//! every helper agrees on it. Removals first record their victim in the
//! descriptor, then claim it through the node's owner word; the outcome is
//! read off the owner.

use std::sync::atomic::{AtomicU64, AtomicUsize, Ordering};

use crossbeam_epoch::{self as epoch, Atomic, Guard, Owned, Shared};
use crossbeam_utils::CachePadded;
use thiserror::Error;

use crate::lockfree::{
    ENode, ListNode, LockFreeGraph, NodeStatus, VNode, CLAIM_CLEANUP, UNCLAIMED,
};
use crate::marked_ref::MarkedRef;
use crate::ops::{is_edge_pair, is_user_key, EdgeOpStatus, GraphOp, Key, OpResult};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum OpType {
    AddVertex,
    RemVertex,
    FindVertex,
    AddEdge,
    RemEdge,
    FindEdge,
    Success,
    Failure,
}

impl OpType {
    /// True for the six request types, false for completed descriptors.
    pub fn is_pending(self) -> bool {
        !matches!(self, OpType::Success | OpType::Failure)
    }
}

/// Operation descriptor. Never modified once published; every change is a new
/// descriptor installed by CAS.
#[derive(Clone, Debug)]
pub struct OpDesc {
    pub phase: u64,
    pub ty: OpType,
    pub key: Key,
    pub key2: Key,
    /// Node to insert (add vertex) or recorded victim (remove vertex).
    pub vnode: *const VNode,
    /// Node to insert (add edge) or recorded victim (remove edge).
    pub enode: *const ENode,
    pub vsrc: *const VNode,
    pub vdest: *const VNode,
    pub result: Option<OpResult>,
}

unsafe impl Send for OpDesc {}
unsafe impl Sync for OpDesc {}

impl OpDesc {
    fn idle() -> OpDesc {
        OpDesc::request(OpType::Success, 0, 0)
    }

    fn request(ty: OpType, key: Key, key2: Key) -> OpDesc {
        OpDesc {
            phase: 0,
            ty,
            key,
            key2,
            vnode: std::ptr::null(),
            enode: std::ptr::null(),
            vsrc: std::ptr::null(),
            vdest: std::ptr::null(),
            result: None,
        }
    }

    fn completed(&self, success: bool, result: OpResult) -> OpDesc {
        OpDesc {
            ty: if success { OpType::Success } else { OpType::Failure },
            result: Some(result),
            ..self.clone()
        }
    }

    fn vsrc(&self) -> &VNode {
        unsafe { &*self.vsrc }
    }

    fn vdest(&self) -> &VNode {
        unsafe { &*self.vdest }
    }
}

/// Copy of a slot's current descriptor header.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SlotView {
    pub phase: u64,
    pub ty: OpType,
    pub result: Option<OpResult>,
}

/// Index of a registered thread's state slot.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct SlotId(usize);

impl SlotId {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LookupMode {
    /// Lookups are announced and helped like updates.
    Helped,
    /// Lookups read the structure directly and never touch the state array.
    NoHelp,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum EngineError {
    #[error("all {capacity} state slots are taken")]
    CapacityExceeded { capacity: usize },
    #[error("slot {slot} still holds a pending operation")]
    PendingOperation { slot: usize },
}

/// Result of announcing an operation without helping it.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Announce {
    /// Descriptor published with this phase.
    Published(u64),
    /// Answered without publishing (argument or endpoint validation).
    Immediate(OpResult),
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct EngineStats {
    pub published: u64,
    pub completed: u64,
    /// Largest number of loop iterations any single helping call needed.
    pub max_help_iterations: u64,
}

/// Monotone phase source.
#[derive(Debug, Default)]
pub struct PhaseCounter {
    maxph: AtomicU64,
}

impl PhaseCounter {
    /// Returns the incremented value: 1, 2, 3, ...
    pub fn next_phase(&self) -> u64 {
        self.maxph.fetch_add(1, Ordering::SeqCst) + 1
    }

    pub fn current(&self) -> u64 {
        self.maxph.load(Ordering::SeqCst)
    }
}

pub struct WaitFreeGraph {
    graph: LockFreeGraph,
    state: Box<[CachePadded<Atomic<OpDesc>>]>,
    registered: AtomicUsize,
    phases: PhaseCounter,
    lookup: LookupMode,
    pending: AtomicUsize,
    published: AtomicU64,
    completed: AtomicU64,
    max_help_iterations: AtomicU64,
}

impl WaitFreeGraph {
    pub fn new(capacity: usize, lookup: LookupMode) -> Self {
        let state = (0..capacity)
            .map(|_| CachePadded::new(Atomic::new(OpDesc::idle())))
            .collect();
        WaitFreeGraph {
            graph: LockFreeGraph::new(),
            state,
            registered: AtomicUsize::new(0),
            phases: PhaseCounter::default(),
            lookup,
            pending: AtomicUsize::new(0),
            published: AtomicU64::new(0),
            completed: AtomicU64::new(0),
            max_help_iterations: AtomicU64::new(0),
        }
    }

    pub fn graph(&self) -> &LockFreeGraph {
        &self.graph
    }

    pub fn capacity(&self) -> usize {
        self.state.len()
    }

    pub fn lookup_mode(&self) -> LookupMode {
        self.lookup
    }

    pub fn stats(&self) -> EngineStats {
        EngineStats {
            published: self.published.load(Ordering::Relaxed),
            completed: self.completed.load(Ordering::Relaxed),
            max_help_iterations: self.max_help_iterations.load(Ordering::Relaxed),
        }
    }

    pub fn register_thread(&self) -> Result<SlotId, EngineError> {
        let capacity = self.capacity();
        self.registered
            .fetch_update(Ordering::SeqCst, Ordering::SeqCst, |n| {
                (n < capacity).then_some(n + 1)
            })
            .map(SlotId)
            .map_err(|_| EngineError::CapacityExceeded { capacity })
    }

    pub fn next_phase(&self) -> u64 {
        self.phases.next_phase()
    }

    pub fn max_phase(&self) -> u64 {
        self.phases.current()
    }

    /// True if some descriptor may still be waiting for help.
    pub fn has_pending(&self) -> bool {
        self.pending.load(Ordering::SeqCst) > 0
    }

    pub fn slot(&self, slot: SlotId) -> SlotView {
        let guard = epoch::pin();
        let d = unsafe { self.state[slot.0].load(Ordering::SeqCst, &guard).deref() };
        SlotView {
            phase: d.phase,
            ty: d.ty,
            result: d.result,
        }
    }

    /// Number of slots holding a pending descriptor with phase `<= phase`.
    pub fn pending_at_or_below(&self, phase: u64) -> usize {
        let guard = epoch::pin();
        self.state
            .iter()
            .filter(|s| {
                let d = unsafe { s.load(Ordering::SeqCst, &guard).deref() };
                d.ty.is_pending() && d.phase <= phase
            })
            .count()
    }

    /// Installs `desc` in the caller's slot.
    pub fn publish(&self, slot: SlotId, desc: OpDesc) -> Result<(), EngineError> {
        let guard = epoch::pin();
        let cell = &self.state[slot.0];
        let cur = cell.load(Ordering::SeqCst, &guard);
        if unsafe { cur.deref() }.ty.is_pending() {
            return Err(EngineError::PendingOperation { slot: slot.0 });
        }
        self.pending.fetch_add(1, Ordering::SeqCst);
        self.published.fetch_add(1, Ordering::Relaxed);
        let old = cell.swap(Owned::new(desc), Ordering::SeqCst, &guard);
        unsafe { guard.defer_destroy(old) };
        Ok(())
    }

    /// Completes every pending descriptor whose phase is at most `phase`.
    pub fn help_graph_ds(&self, phase: u64) {
        for i in 0..self.capacity() {
            let (ty, ph) = {
                let guard = epoch::pin();
                let d = unsafe { self.state[i].load(Ordering::SeqCst, &guard).deref() };
                (d.ty, d.phase)
            };
            if !ty.is_pending() || ph > phase {
                continue;
            }
            let tid = SlotId(i);
            match ty {
                OpType::AddVertex => self.help_add_v(tid, ph),
                OpType::RemVertex => self.help_rem_v(tid, ph),
                OpType::FindVertex => self.help_con_v(tid, ph),
                OpType::AddEdge => self.help_add_e(tid, ph),
                OpType::RemEdge => self.help_rem_e(tid, ph),
                OpType::FindEdge => self.help_con_e(tid, ph),
                OpType::Success | OpType::Failure => unreachable!(),
            }
        }
    }

    // ---- descriptor plumbing ------------------------------------------------

    fn pending_desc<'g>(
        &self,
        tid: SlotId,
        phase: u64,
        ty: OpType,
        guard: &'g Guard,
    ) -> Option<Shared<'g, OpDesc>> {
        let cur = self.state[tid.0].load(Ordering::SeqCst, guard);
        let d = unsafe { cur.deref() };
        (d.ty == ty && d.phase == phase).then_some(cur)
    }

    fn complete(
        &self,
        tid: SlotId,
        cur: Shared<'_, OpDesc>,
        success: bool,
        result: OpResult,
        guard: &Guard,
    ) {
        let done = unsafe { cur.deref() }.completed(success, result);
        if self.state[tid.0]
            .compare_exchange(cur, Owned::new(done), Ordering::SeqCst, Ordering::SeqCst, guard)
            .is_ok()
        {
            self.pending.fetch_sub(1, Ordering::SeqCst);
            self.completed.fetch_add(1, Ordering::Relaxed);
            unsafe { guard.defer_destroy(cur) };
        }
    }

    /// Replaces the pending descriptor with a copy carrying `edit`.
    fn amend(&self, tid: SlotId, cur: Shared<'_, OpDesc>, edit: impl FnOnce(&mut OpDesc), guard: &Guard) {
        let mut next = unsafe { cur.deref() }.clone();
        edit(&mut next);
        if self.state[tid.0]
            .compare_exchange(cur, Owned::new(next), Ordering::SeqCst, Ordering::SeqCst, guard)
            .is_ok()
        {
            unsafe { guard.defer_destroy(cur) };
        }
    }

    fn note_iterations(&self, n: u64) {
        self.max_help_iterations.fetch_max(n, Ordering::Relaxed);
    }

    // ---- helping procedures -----------------------------------------------

    pub fn help_add_v(&self, tid: SlotId, phase: u64) {
        let g = &self.graph;
        let mut iterations = 0;
        loop {
            iterations += 1;
            let guard = epoch::pin();
            let Some(cur) = self.pending_desc(tid, phase, OpType::AddVertex, &guard) else {
                break;
            };
            let d = unsafe { cur.deref() };
            let node = unsafe { &*d.vnode };
            match node.status() {
                NodeStatus::Active => {
                    self.complete(tid, cur, true, OpResult::Vertex(true), &guard);
                    continue;
                }
                NodeStatus::Pending => {}
                _ => {
                    self.complete(tid, cur, false, OpResult::Vertex(false), &guard);
                    continue;
                }
            }
            let node_next = node.vnext.load();
            let w = g.locate_v(d.key);
            if std::ptr::eq(w.curr, node) {
                node.activate();
                continue;
            }
            if w.curr.key() == d.key {
                match w.curr.status() {
                    NodeStatus::Active => {
                        node.kill(NodeStatus::DeadDuplicate);
                    }
                    NodeStatus::Pending => {
                        w.curr.activate();
                    }
                    _ => {}
                }
                continue;
            }
            if node_next.is_marked() {
                continue;
            }
            g.jitter();
            if !g.cas(&node.vnext, node_next, MarkedRef::new(w.curr, false)) {
                continue;
            }
            let nn = node.vnext.load();
            if nn.is_marked() || !std::ptr::eq(nn.target(), w.curr) {
                continue;
            }
            if g.cas(&w.pred.vnext, nn, MarkedRef::new(node, false)) {
                node.activate();
            }
        }
        self.note_iterations(iterations);
    }

    pub fn help_rem_v(&self, tid: SlotId, phase: u64) {
        let g = &self.graph;
        let mut iterations = 0;
        loop {
            iterations += 1;
            let guard = epoch::pin();
            let Some(cur) = self.pending_desc(tid, phase, OpType::RemVertex, &guard) else {
                break;
            };
            let d = unsafe { cur.deref() };
            if d.vnode.is_null() {
                let w = g.locate_v(d.key);
                if w.curr.key() != d.key || w.curr.status() != NodeStatus::Active {
                    self.complete(tid, cur, false, OpResult::Vertex(false), &guard);
                } else {
                    let victim: *const VNode = w.curr;
                    self.amend(tid, cur, |n| n.vnode = victim, &guard);
                }
                continue;
            }
            let victim = unsafe { &*d.vnode };
            if victim.owner() == UNCLAIMED {
                victim.claim(phase);
            }
            g.mark(victim);
            let won = victim.owner() == phase;
            g.locate_v(d.key);
            self.complete(tid, cur, won, OpResult::Vertex(won), &guard);
        }
        self.note_iterations(iterations);
    }

    pub fn help_con_v(&self, tid: SlotId, phase: u64) {
        let guard = epoch::pin();
        let Some(cur) = self.pending_desc(tid, phase, OpType::FindVertex, &guard) else {
            return;
        };
        let d = unsafe { cur.deref() };
        let found = self.graph.contains_vertex(d.key);
        self.complete(tid, cur, true, OpResult::Vertex(found), &guard);
        self.note_iterations(1);
    }

    pub fn help_add_e(&self, tid: SlotId, phase: u64) {
        let g = &self.graph;
        let mut iterations = 0;
        loop {
            iterations += 1;
            let guard = epoch::pin();
            let Some(cur) = self.pending_desc(tid, phase, OpType::AddEdge, &guard) else {
                break;
            };
            let d = unsafe { cur.deref() };
            let node = unsafe { &*d.enode };
            let (src, dst) = (d.vsrc(), d.vdest());
            match node.status() {
                NodeStatus::Active => {
                    self.complete(tid, cur, true, OpResult::Edge(EdgeOpStatus::EdgeAdded), &guard);
                    continue;
                }
                NodeStatus::DeadDuplicate => {
                    let r = OpResult::Edge(EdgeOpStatus::EdgeAlreadyPresent);
                    self.complete(tid, cur, false, r, &guard);
                    continue;
                }
                NodeStatus::DeadNoVertex => {
                    let r = OpResult::Edge(EdgeOpStatus::VertexNotPresent);
                    self.complete(tid, cur, false, r, &guard);
                    continue;
                }
                NodeStatus::Pending => {}
            }
            if src.is_marked() || dst.is_marked() {
                node.kill(NodeStatus::DeadNoVertex);
                continue;
            }
            let node_next = node.enext.load();
            let w = g.locate_e(src, d.key2);
            if std::ptr::eq(w.curr, node) {
                g.settle_edge(src, node);
                continue;
            }
            if w.curr.key() == d.key2 {
                match w.curr.status() {
                    NodeStatus::Pending => {
                        g.settle_edge(src, w.curr);
                    }
                    NodeStatus::Active if w.curr.is_live() && !src.is_marked() => {
                        node.kill(NodeStatus::DeadDuplicate);
                    }
                    _ => {}
                }
                continue;
            }
            if node_next.is_marked() {
                continue;
            }
            g.jitter();
            if !g.cas(&node.enext, node_next, MarkedRef::new(w.curr, false)) {
                continue;
            }
            let nn = node.enext.load();
            if nn.is_marked() || !std::ptr::eq(nn.target(), w.curr) {
                continue;
            }
            if g.cas(&w.pred.enext, nn, MarkedRef::new(node, false)) {
                g.settle_edge(src, node);
            }
        }
        self.note_iterations(iterations);
    }

    pub fn help_rem_e(&self, tid: SlotId, phase: u64) {
        let g = &self.graph;
        let mut iterations = 0;
        loop {
            iterations += 1;
            let guard = epoch::pin();
            let Some(cur) = self.pending_desc(tid, phase, OpType::RemEdge, &guard) else {
                break;
            };
            let d = unsafe { cur.deref() };
            let (src, dst) = (d.vsrc(), d.vdest());
            if d.enode.is_null() {
                if src.is_marked() || dst.is_marked() {
                    let r = OpResult::Edge(EdgeOpStatus::VertexNotPresent);
                    self.complete(tid, cur, false, r, &guard);
                    continue;
                }
                let w = g.locate_e(src, d.key2);
                let found = w.curr.key() == d.key2;
                if found && w.curr.status() == NodeStatus::Active && !w.curr.is_live() {
                    continue;
                }
                if !found || !w.curr.is_live() || src.is_marked() {
                    let r = if src.is_marked() || dst.is_marked() {
                        EdgeOpStatus::VertexNotPresent
                    } else {
                        EdgeOpStatus::EdgeNotPresent
                    };
                    self.complete(tid, cur, false, OpResult::Edge(r), &guard);
                } else {
                    let victim: *const ENode = w.curr;
                    self.amend(tid, cur, |n| n.enode = victim, &guard);
                }
                continue;
            }
            let victim = unsafe { &*d.enode };
            if victim.owner() == UNCLAIMED {
                victim.claim(phase);
            }
            g.mark(victim);
            let owner = victim.owner();
            let r = if owner == phase {
                EdgeOpStatus::EdgeRemoved
            } else if owner == CLAIM_CLEANUP || src.is_marked() || dst.is_marked() {
                EdgeOpStatus::VertexNotPresent
            } else {
                EdgeOpStatus::EdgeNotPresent
            };
            g.locate_e(src, d.key2);
            self.complete(tid, cur, owner == phase, OpResult::Edge(r), &guard);
        }
        self.note_iterations(iterations);
    }

    pub fn help_con_e(&self, tid: SlotId, phase: u64) {
        let guard = epoch::pin();
        let Some(cur) = self.pending_desc(tid, phase, OpType::FindEdge, &guard) else {
            return;
        };
        let d = unsafe { cur.deref() };
        let r = self.graph.probe_edge(d.vsrc(), d.vdest());
        self.complete(tid, cur, r == EdgeOpStatus::EdgePresent, OpResult::Edge(r), &guard);
        self.note_iterations(1);
    }

    // ---- public operations --------------------------------------------------

    /// Publishes `op` in `slot` without helping it. The caller is expected to
    /// follow up with [`Self::finish`] (or rely on another thread's help).
    pub fn announce(&self, slot: SlotId, op: GraphOp) -> Result<Announce, EngineError> {
        let g = &self.graph;
        let mut desc = match op {
            GraphOp::AddVertex(k) => {
                if !is_user_key(k) {
                    return Ok(Announce::Immediate(OpResult::Vertex(false)));
                }
                let node = g.new_vnode(k, NodeStatus::Pending);
                g.retain_vnode(node);
                OpDesc {
                    vnode: node,
                    ..OpDesc::request(OpType::AddVertex, k, 0)
                }
            }
            GraphOp::RemoveVertex(k) | GraphOp::ContainsVertex(k) => {
                if !is_user_key(k) {
                    return Ok(Announce::Immediate(OpResult::Vertex(false)));
                }
                let ty = if matches!(op, GraphOp::RemoveVertex(_)) {
                    OpType::RemVertex
                } else {
                    OpType::FindVertex
                };
                OpDesc::request(ty, k, 0)
            }
            GraphOp::AddEdge(a, b) | GraphOp::RemoveEdge(a, b) | GraphOp::ContainsEdge(a, b) => {
                let absent = Ok(Announce::Immediate(OpResult::Edge(
                    EdgeOpStatus::VertexNotPresent,
                )));
                if !is_edge_pair(a, b) {
                    return absent;
                }
                let Some((src, dst)) = g.locate_uv(a, b) else {
                    return absent;
                };
                let ty = match op {
                    GraphOp::AddEdge(..) => OpType::AddEdge,
                    GraphOp::RemoveEdge(..) => OpType::RemEdge,
                    _ => OpType::FindEdge,
                };
                let mut desc = OpDesc {
                    vsrc: src,
                    vdest: dst,
                    ..OpDesc::request(ty, a, b)
                };
                if ty == OpType::AddEdge {
                    let node = g.new_enode(b, dst, NodeStatus::Pending);
                    g.retain_enode(node);
                    desc.enode = node;
                }
                desc
            }
        };
        desc.phase = self.next_phase();
        let phase = desc.phase;
        self.publish(slot, desc)?;
        Ok(Announce::Published(phase))
    }

    /// Helps up to `phase` and returns the result left in `slot`.
    pub fn finish(&self, slot: SlotId, phase: u64) -> OpResult {
        self.help_graph_ds(phase);
        let view = self.slot(slot);
        assert!(
            view.phase == phase && !view.ty.is_pending(),
            "slot {} not completed for phase {phase}",
            slot.0
        );
        view.result.expect("completed descriptor carries a result")
    }

    /// Runs `op` through the announce-and-help protocol.
    ///
    /// Panics if `slot` already holds a pending operation.
    pub fn wf_apply(&self, slot: SlotId, op: GraphOp) -> OpResult {
        if self.lookup == LookupMode::NoHelp {
            match op {
                GraphOp::ContainsVertex(k) => return OpResult::Vertex(self.con_vertex_nohelp(k)),
                GraphOp::ContainsEdge(a, b) => return OpResult::Edge(self.con_edge_nohelp(a, b)),
                _ => {}
            }
        }
        match self.announce(slot, op).expect("slot misuse") {
            Announce::Immediate(r) => r,
            Announce::Published(phase) => self.finish(slot, phase),
        }
    }

    pub fn wf_add_vertex(&self, slot: SlotId, key: Key) -> bool {
        self.wf_apply(slot, GraphOp::AddVertex(key)).as_bool().unwrap()
    }

    pub fn wf_remove_vertex(&self, slot: SlotId, key: Key) -> bool {
        self.wf_apply(slot, GraphOp::RemoveVertex(key)).as_bool().unwrap()
    }

    pub fn wf_contains_vertex(&self, slot: SlotId, key: Key) -> bool {
        self.wf_apply(slot, GraphOp::ContainsVertex(key)).as_bool().unwrap()
    }

    pub fn wf_add_edge(&self, slot: SlotId, key1: Key, key2: Key) -> EdgeOpStatus {
        self.wf_apply(slot, GraphOp::AddEdge(key1, key2)).as_edge().unwrap()
    }

    pub fn wf_remove_edge(&self, slot: SlotId, key1: Key, key2: Key) -> EdgeOpStatus {
        self.wf_apply(slot, GraphOp::RemoveEdge(key1, key2)).as_edge().unwrap()
    }

    pub fn wf_contains_edge(&self, slot: SlotId, key1: Key, key2: Key) -> EdgeOpStatus {
        self.wf_apply(slot, GraphOp::ContainsEdge(key1, key2)).as_edge().unwrap()
    }

    pub fn con_vertex_nohelp(&self, key: Key) -> bool {
        self.graph.contains_vertex(key)
    }

    pub fn con_edge_nohelp(&self, key1: Key, key2: Key) -> EdgeOpStatus {
        self.graph.contains_edge(key1, key2)
    }
}

impl Drop for WaitFreeGraph {
    fn drop(&mut self) {
        for slot in self.state.iter() {
            unsafe {
                let d = slot.load(Ordering::Relaxed, epoch::unprotected());
                drop(d.into_owned());
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashSet;
    use std::sync::{Arc, Barrier};
    use std::thread;

    fn engine(cap: usize) -> (WaitFreeGraph, SlotId) {
        let e = WaitFreeGraph::new(cap, LookupMode::Helped);
        let s = e.register_thread().unwrap();
        (e, s)
    }

    #[test]
    fn registration() {
        let e = WaitFreeGraph::new(4, LookupMode::Helped);
        assert_eq!(e.register_thread().unwrap().index(), 0);
        for _ in 0..3 {
            e.register_thread().unwrap();
        }
        assert_eq!(
            e.register_thread(),
            Err(EngineError::CapacityExceeded { capacity: 4 })
        );
    }

    #[test]
    fn concurrent_registration_is_distinct() {
        let e = Arc::new(WaitFreeGraph::new(16, LookupMode::Helped));
        let hs: Vec<_> = (0..16)
            .map(|_| {
                let e = Arc::clone(&e);
                thread::spawn(move || e.register_thread().unwrap().index())
            })
            .collect();
        let ids: HashSet<_> = hs.into_iter().map(|h| h.join().unwrap()).collect();
        assert_eq!(ids.len(), 16);
        assert!(e.register_thread().is_err());
    }

    #[test]
    fn phases_start_at_one() {
        let (e, _) = engine(1);
        assert_eq!(
            (e.next_phase(), e.next_phase(), e.next_phase()),
            (1, 2, 3)
        );
    }

    #[test]
    fn phases_unique_across_threads() {
        let e = Arc::new(WaitFreeGraph::new(1, LookupMode::Helped));
        let hs: Vec<_> = (0..8)
            .map(|_| {
                let e = Arc::clone(&e);
                thread::spawn(move || (0..10_000).map(|_| e.next_phase()).collect::<Vec<_>>())
            })
            .collect();
        let mut all = HashSet::new();
        for h in hs {
            let v = h.join().unwrap();
            assert!(v.windows(2).all(|w| w[0] < w[1]));
            all.extend(v);
        }
        assert_eq!(all.len(), 80_000);
    }

    #[test]
    fn publish_rejects_pending_slot() {
        let (e, s) = engine(2);
        let Announce::Published(p) = e.announce(s, GraphOp::AddVertex(5)).unwrap() else {
            panic!()
        };
        assert_eq!(e.slot(s).ty, OpType::AddVertex);
        assert_eq!(e.slot(s).phase, p);
        assert_eq!(
            e.announce(s, GraphOp::AddVertex(6)),
            Err(EngineError::PendingOperation { slot: 0 })
        );
        assert_eq!(e.finish(s, p), OpResult::Vertex(true));
        assert_eq!(e.slot(s).ty, OpType::Success);
    }

    #[test]
    fn phase_filter_leaves_later_ops_alone() {
        let (e, s) = engine(2);
        let Announce::Published(p) = e.announce(s, GraphOp::AddVertex(5)).unwrap() else {
            panic!()
        };
        e.help_graph_ds(p - 1);
        assert_eq!(e.slot(s).ty, OpType::AddVertex);
        e.help_graph_ds(p);
        assert_eq!(e.slot(s).ty, OpType::Success);
        assert_eq!(e.pending_at_or_below(p), 0);
    }

    #[test]
    fn sequential_wf_ops() {
        let (e, s) = engine(1);
        assert!(e.wf_add_vertex(s, 5));
        assert!(!e.wf_add_vertex(s, 5));
        assert!(e.wf_contains_vertex(s, 5));
        assert!(!e.wf_remove_vertex(s, 9));
        assert!(e.wf_remove_vertex(s, 5));
        assert!(!e.wf_contains_vertex(s, 5));

        assert_eq!(e.wf_add_edge(s, 1, 2), EdgeOpStatus::VertexNotPresent);
        e.wf_add_vertex(s, 1);
        e.wf_add_vertex(s, 2);
        assert_eq!(e.wf_remove_edge(s, 1, 2), EdgeOpStatus::EdgeNotPresent);
        assert_eq!(e.wf_add_edge(s, 1, 2), EdgeOpStatus::EdgeAdded);
        assert_eq!(e.wf_add_edge(s, 1, 2), EdgeOpStatus::EdgeAlreadyPresent);
        assert_eq!(e.wf_contains_edge(s, 1, 2), EdgeOpStatus::EdgePresent);
        assert_eq!(e.wf_remove_edge(s, 1, 2), EdgeOpStatus::EdgeRemoved);
        assert_eq!(
            e.wf_contains_edge(s, 1, 2),
            EdgeOpStatus::VertexOrEdgeNotPresent
        );
        assert!(e.wf_remove_vertex(s, 2));
        assert_eq!(e.wf_contains_edge(s, 1, 2), EdgeOpStatus::VertexNotPresent);
        assert_eq!(e.stats().published, e.stats().completed);
        assert!(!e.has_pending());
    }

    #[test]
    fn duplicate_insert_fails_and_leaves_one_node() {
        let (e, s) = engine(1);
        e.graph().add_vertex(5, 1);
        assert!(!e.wf_add_vertex(s, 5));
        assert_eq!(e.slot(s).ty, OpType::Failure);
        e.graph().purge();
        assert_eq!(e.graph().vertex_keys(), vec![5]);
        e.graph().check_invariants().unwrap();
    }

    #[test]
    fn two_helpers_one_effect() {
        for _ in 0..200 {
            let e = Arc::new(WaitFreeGraph::new(3, LookupMode::Helped));
            let owner = e.register_thread().unwrap();
            let Announce::Published(p) = e.announce(owner, GraphOp::AddVertex(5)).unwrap() else {
                panic!()
            };
            let barrier = Arc::new(Barrier::new(2));
            let hs: Vec<_> = (0..2)
                .map(|_| {
                    let e = Arc::clone(&e);
                    let barrier = Arc::clone(&barrier);
                    thread::spawn(move || {
                        barrier.wait();
                        e.help_graph_ds(p);
                    })
                })
                .collect();
            for h in hs {
                h.join().unwrap();
            }
            assert_eq!(e.slot(owner).result, Some(OpResult::Vertex(true)));
            assert_eq!(e.stats().completed, 1);
            assert_eq!(e.graph().vertex_keys(), vec![5]);
        }
    }

    #[test]
    fn remove_vertex_kills_incident_edges() {
        let (e, s) = engine(1);
        for k in 1..=3 {
            e.wf_add_vertex(s, k);
        }
        e.wf_add_edge(s, 1, 2);
        e.wf_add_edge(s, 2, 3);
        e.wf_add_edge(s, 3, 2);
        assert!(e.wf_remove_vertex(s, 2));
        assert_eq!(e.wf_contains_edge(s, 1, 2), EdgeOpStatus::VertexNotPresent);
        assert_eq!(e.wf_contains_edge(s, 2, 3), EdgeOpStatus::VertexNotPresent);
        e.wf_add_vertex(s, 2);
        assert_eq!(
            e.wf_contains_edge(s, 3, 2),
            EdgeOpStatus::VertexOrEdgeNotPresent
        );
        assert!(e.graph().edge_pairs().is_empty());
    }

    #[test]
    fn nohelp_lookups_skip_state_array() {
        let e = WaitFreeGraph::new(1, LookupMode::NoHelp);
        let s = e.register_thread().unwrap();
        e.wf_add_vertex(s, 1);
        let before = e.stats().published;
        assert!(e.wf_contains_vertex(s, 1));
        assert_eq!(e.wf_contains_edge(s, 1, 2), EdgeOpStatus::VertexNotPresent);
        assert_eq!(e.stats().published, before);
    }
}
