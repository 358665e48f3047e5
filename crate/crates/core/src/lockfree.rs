//! Lock-free adjacency-list graph: a sorted vertex list whose nodes each own a
//! sorted edge list. Removal is two-step (mark the node's next cell, then
//! unlink it from its predecessor) and traversals finish unlinking anything
//! they find marked.
//!
//! Every mutating operation takes a failure budget that bounds how many times
//! its decisive CAS may fail before it gives up with [`Attempt::Exhausted`].
//! The fast-path/slow-path facade uses this to fall back to the wait-free
//! engine.
//!
//! Beyond the mark bit, nodes carry two small words used to coordinate with
//! helpers of the wait-free engine:
//!
//! * `status`: edge nodes, and vertex nodes inserted by helpers, are linked
//!   while `Pending` and only become part of the abstract graph when a single
//!   CAS moves them to `Active`. A pending edge is activated only by a thread
//!   that saw it linked and then saw both endpoints unmarked; otherwise it is
//!   killed (`Dead*`) and stays garbage even if some late helper links it.
//! * `owner`: the removal claim. Exactly one remover (fast path, a slow-path
//!   descriptor, or traversal cleanup) owns each marked node, and every
//!   contender derives its result from this word.
//!
//! Nodes are never freed while the graph is alive. They are threaded on an
//! allocation list and released when the graph is dropped.

use std::cell::Cell;
use std::ptr;
use std::sync::atomic::{AtomicPtr, AtomicU32, AtomicU64, AtomicU8, AtomicUsize, Ordering};

use crate::marked_ref::{AtomicMarkedCell, MarkedRef};
use crate::baselines::SequentialGraph;
use crate::ops::{
    is_edge_pair, is_user_key, Attempt, EdgeOpStatus, GraphOp, Key, OpResult, MAX_KEY, MIN_KEY,
};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[repr(u8)]
pub enum NodeStatus {
    Pending = 0,
    Active = 1,
    /// Killed because another node already held the key.
    DeadDuplicate = 2,
    /// Killed because an endpoint vertex disappeared (edge nodes only).
    DeadNoVertex = 3,
}

impl NodeStatus {
    fn from_u8(v: u8) -> NodeStatus {
        match v {
            0 => NodeStatus::Pending,
            1 => NodeStatus::Active,
            2 => NodeStatus::DeadDuplicate,
            _ => NodeStatus::DeadNoVertex,
        }
    }

    pub fn is_dead(self) -> bool {
        matches!(self, NodeStatus::DeadDuplicate | NodeStatus::DeadNoVertex)
    }
}

pub(crate) const UNCLAIMED: u64 = 0;
pub(crate) const CLAIM_FAST: u64 = u64::MAX;
pub(crate) const CLAIM_CLEANUP: u64 = u64::MAX - 1;

/// Shared behaviour of vertex and edge list nodes.
pub(crate) trait ListNode: Sized {
    fn next(&self) -> &AtomicMarkedCell<Self>;
    fn status_cell(&self) -> &AtomicU8;
    fn owner_cell(&self) -> &AtomicU64;

    fn status(&self) -> NodeStatus {
        NodeStatus::from_u8(self.status_cell().load(Ordering::SeqCst))
    }

    fn owner(&self) -> u64 {
        self.owner_cell().load(Ordering::SeqCst)
    }

    /// Pending -> Active. True if the node is Active afterwards.
    fn activate(&self) -> bool {
        match self.status_cell().compare_exchange(
            NodeStatus::Pending as u8,
            NodeStatus::Active as u8,
            Ordering::SeqCst,
            Ordering::SeqCst,
        ) {
            Ok(_) => true,
            Err(cur) => cur == NodeStatus::Active as u8,
        }
    }

    /// Pending -> `dead`. The resulting status is returned either way.
    fn kill(&self, dead: NodeStatus) -> NodeStatus {
        debug_assert!(dead.is_dead());
        match self.status_cell().compare_exchange(
            NodeStatus::Pending as u8,
            dead as u8,
            Ordering::SeqCst,
            Ordering::SeqCst,
        ) {
            Ok(_) => dead,
            Err(cur) => NodeStatus::from_u8(cur),
        }
    }

    fn claim(&self, tag: u64) -> bool {
        self.owner_cell()
            .compare_exchange(UNCLAIMED, tag, Ordering::SeqCst, Ordering::SeqCst)
            .is_ok()
    }
}

/// A vertex. Its edge list sentinels are stored inline so they share the
/// vertex's lifetime.
pub struct VNode {
    key: Key,
    pub(crate) vnext: AtomicMarkedCell<VNode>,
    status: AtomicU8,
    owner: AtomicU64,
    ehead: ENode,
    etail: ENode,
    alloc_next: AtomicPtr<VNode>,
}

/// An outgoing edge. `key` equals the destination vertex key and `pointv`
/// refers to the destination node that was live when the edge was created.
pub struct ENode {
    key: Key,
    pointv: *const VNode,
    pub(crate) enext: AtomicMarkedCell<ENode>,
    status: AtomicU8,
    owner: AtomicU64,
    alloc_next: AtomicPtr<ENode>,
}

unsafe impl Send for VNode {}
unsafe impl Sync for VNode {}
unsafe impl Send for ENode {}
unsafe impl Sync for ENode {}

impl ListNode for VNode {
    fn next(&self) -> &AtomicMarkedCell<VNode> {
        &self.vnext
    }
    fn status_cell(&self) -> &AtomicU8 {
        &self.status
    }
    fn owner_cell(&self) -> &AtomicU64 {
        &self.owner
    }
}

impl ListNode for ENode {
    fn next(&self) -> &AtomicMarkedCell<ENode> {
        &self.enext
    }
    fn status_cell(&self) -> &AtomicU8 {
        &self.status
    }
    fn owner_cell(&self) -> &AtomicU64 {
        &self.owner
    }
}

impl VNode {
    fn boxed(key: Key, status: NodeStatus) -> Box<VNode> {
        let b = Box::new(VNode {
            key,
            vnext: AtomicMarkedCell::new(MarkedRef::null()),
            status: AtomicU8::new(status as u8),
            owner: AtomicU64::new(UNCLAIMED),
            ehead: ENode::sentinel(MIN_KEY),
            etail: ENode::sentinel(MAX_KEY),
            alloc_next: AtomicPtr::new(ptr::null_mut()),
        });
        b.ehead
            .enext
            .store_unshared(MarkedRef::new(&b.etail as *const ENode, false));
        b
    }

    pub fn key(&self) -> Key {
        self.key
    }

    pub fn status(&self) -> NodeStatus {
        ListNode::status(self)
    }

    /// Logically deleted (mark bit set on `vnext`).
    pub fn is_marked(&self) -> bool {
        self.vnext.load().is_marked()
    }

    /// Member of the abstract vertex set right now.
    pub fn is_live(&self) -> bool {
        self.status() == NodeStatus::Active && !self.is_marked()
    }

    pub fn edge_head(&self) -> &ENode {
        &self.ehead
    }
}

impl ENode {
    fn sentinel(key: Key) -> ENode {
        ENode {
            key,
            pointv: ptr::null(),
            enext: AtomicMarkedCell::new(MarkedRef::null()),
            status: AtomicU8::new(NodeStatus::Active as u8),
            owner: AtomicU64::new(UNCLAIMED),
            alloc_next: AtomicPtr::new(ptr::null_mut()),
        }
    }

    fn boxed(key: Key, dest: *const VNode, status: NodeStatus) -> Box<ENode> {
        Box::new(ENode {
            key,
            pointv: dest,
            enext: AtomicMarkedCell::new(MarkedRef::null()),
            status: AtomicU8::new(status as u8),
            owner: AtomicU64::new(UNCLAIMED),
            alloc_next: AtomicPtr::new(ptr::null_mut()),
        })
    }

    pub fn key(&self) -> Key {
        self.key
    }

    pub fn status(&self) -> NodeStatus {
        ListNode::status(self)
    }

    pub fn is_marked(&self) -> bool {
        self.enext.load().is_marked()
    }

    /// Destination vertex, `None` for sentinels.
    pub fn dest(&self) -> Option<&VNode> {
        unsafe { self.pointv.as_ref() }
    }

    fn dest_marked(&self) -> bool {
        self.dest().is_some_and(|v| v.is_marked())
    }

    /// Edge is live on its own: active, unmarked and its destination unmarked.
    /// Status is read first and the destination last; every predicate is
    /// monotone so all three held at the time of the first read.
    pub fn is_live(&self) -> bool {
        self.status() == NodeStatus::Active && !self.is_marked() && !self.dest_marked()
    }
}

/// A `(pred, curr)` pair bracketing a search key: `pred.key < key <= curr.key`.
#[derive(Debug)]
pub struct LocWindow<'g, N> {
    pub pred: &'g N,
    pub curr: &'g N,
}

impl<N> Clone for LocWindow<'_, N> {
    fn clone(&self) -> Self {
        *self
    }
}

impl<N> Copy for LocWindow<'_, N> {}

#[derive(Debug, Default)]
struct Counters {
    unlinked: AtomicU64,
    mark_violations: AtomicU64,
}

/// Snapshot of the graph's instrumentation counters.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct GraphStats {
    /// Nodes physically unlinked so far (never freed before drop).
    pub unlinked: u64,
    /// Successful CASes that would have cleared a mark bit. Always zero.
    pub mark_violations: u64,
}

/// Result of a quiescent structural walk.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct InvariantReport {
    pub live_vertices: usize,
    pub live_edges: usize,
    /// Unmarked edge nodes still reachable whose destination vertex has been
    /// marked and unlinked. Lazily purged by later traversals.
    pub stale_incoming: usize,
}

thread_local! {
    static JITTER_RNG: Cell<u64> = const { Cell::new(0) };
}

pub struct LockFreeGraph {
    vhead: Box<VNode>,
    vtail: Box<VNode>,
    vallocs: AtomicPtr<VNode>,
    eallocs: AtomicPtr<ENode>,
    counters: Counters,
    forced_failures: AtomicUsize,
    jitter_permille: AtomicU32,
}

impl Default for LockFreeGraph {
    fn default() -> Self {
        Self::new()
    }
}

impl LockFreeGraph {
    pub fn new() -> Self {
        let vhead = VNode::boxed(MIN_KEY, NodeStatus::Active);
        let vtail = VNode::boxed(MAX_KEY, NodeStatus::Active);
        vhead
            .vnext
            .store_unshared(MarkedRef::new(&*vtail as *const VNode, false));
        LockFreeGraph {
            vhead,
            vtail,
            vallocs: AtomicPtr::new(ptr::null_mut()),
            eallocs: AtomicPtr::new(ptr::null_mut()),
            counters: Counters::default(),
            forced_failures: AtomicUsize::new(0),
            jitter_permille: AtomicU32::new(0),
        }
    }

    pub fn head(&self) -> &VNode {
        &self.vhead
    }

    pub fn stats(&self) -> GraphStats {
        GraphStats {
            unlinked: self.counters.unlinked.load(Ordering::Relaxed),
            mark_violations: self.counters.mark_violations.load(Ordering::Relaxed),
        }
    }

    /// The next `n` decisive CASes of budgeted operations are reported as
    /// failed without being attempted.
    pub fn inject_cas_failures(&self, n: usize) {
        self.forced_failures.store(n, Ordering::SeqCst);
    }

    /// Yield the CPU with probability `permille / 1000` at contention points.
    /// Used by stress tests to widen interleavings on machines with few cores.
    pub fn set_jitter(&self, permille: u32) {
        self.jitter_permille.store(permille.min(1000), Ordering::Relaxed);
    }

    #[inline]
    pub(crate) fn jitter(&self) {
        let p = self.jitter_permille.load(Ordering::Relaxed);
        if p == 0 {
            return;
        }
        let roll = JITTER_RNG.with(|c| {
            let mut x = c.get();
            if x == 0 {
                x = (c as *const _ as u64) | 1;
            }
            x ^= x << 13;
            x ^= x >> 7;
            x ^= x << 17;
            c.set(x);
            x % 1000
        });
        if roll < p as u64 {
            std::thread::yield_now();
        }
    }

    fn forced_failure(&self) -> bool {
        let mut cur = self.forced_failures.load(Ordering::Relaxed);
        while cur > 0 {
            match self.forced_failures.compare_exchange(
                cur,
                cur - 1,
                Ordering::SeqCst,
                Ordering::Relaxed,
            ) {
                Ok(_) => return true,
                Err(v) => cur = v,
            }
        }
        false
    }

    #[inline]
    pub(crate) fn cas<N>(&self, cell: &AtomicMarkedCell<N>, expected: MarkedRef<N>, new: MarkedRef<N>) -> bool {
        let ok = cell.cas(expected, new);
        if ok && expected.is_marked() && !new.is_marked() {
            self.counters.mark_violations.fetch_add(1, Ordering::Relaxed);
        }
        ok
    }

    /// Sets the mark bit of `node`. True iff this call's CAS set it.
    pub(crate) fn mark<N: ListNode>(&self, node: &N) -> bool {
        loop {
            let succ = node.next().load();
            if succ.is_marked() {
                return false;
            }
            if self.cas(node.next(), succ, succ.mark()) {
                return true;
            }
        }
    }

    // ---- allocation -----------------------------------------------------

    pub(crate) fn new_vnode(&self, key: Key, status: NodeStatus) -> *mut VNode {
        Box::into_raw(VNode::boxed(key, status))
    }

    pub(crate) fn new_enode(&self, key: Key, dest: &VNode, status: NodeStatus) -> *mut ENode {
        Box::into_raw(ENode::boxed(key, dest, status))
    }

    /// Hands a node to the graph; it is released when the graph drops.
    pub(crate) fn retain_vnode(&self, node: *mut VNode) {
        let mut head = self.vallocs.load(Ordering::Relaxed);
        loop {
            unsafe { (*node).alloc_next.store(head, Ordering::Relaxed) };
            match self
                .vallocs
                .compare_exchange_weak(head, node, Ordering::Release, Ordering::Relaxed)
            {
                Ok(_) => return,
                Err(h) => head = h,
            }
        }
    }

    pub(crate) fn retain_enode(&self, node: *mut ENode) {
        let mut head = self.eallocs.load(Ordering::Relaxed);
        loop {
            unsafe { (*node).alloc_next.store(head, Ordering::Relaxed) };
            match self
                .eallocs
                .compare_exchange_weak(head, node, Ordering::Release, Ordering::Relaxed)
            {
                Ok(_) => return,
                Err(h) => head = h,
            }
        }
    }

    // ---- traversal ------------------------------------------------------

    /// Finds the window for `key` in the vertex list, unlinking every marked
    /// vertex on the way and retiring a dead (killed) vertex sitting at `key`.
    pub fn locate_v(&self, key: Key) -> LocWindow<'_, VNode> {
        'retry: loop {
            let mut pred: &VNode = &self.vhead;
            let mut curr: &VNode = unsafe { pred.vnext.load().deref() };
            loop {
                let succ = curr.vnext.load();
                if succ.is_marked() {
                    self.jitter();
                    if !self.cas(&pred.vnext, MarkedRef::new(curr, false), succ.unmark()) {
                        continue 'retry;
                    }
                    self.counters.unlinked.fetch_add(1, Ordering::Relaxed);
                    curr = unsafe { succ.deref() };
                    continue;
                }
                if curr.key >= key {
                    if curr.key == key && curr.status().is_dead() {
                        self.mark(curr);
                        continue;
                    }
                    return LocWindow { pred, curr };
                }
                pred = curr;
                curr = unsafe { succ.deref() };
            }
        }
    }

    /// Finds the window for `key` in `v`'s edge list. Edges that are marked,
    /// killed, or whose destination vertex is marked are unlinked on the way.
    pub fn locate_e<'g>(&'g self, v: &'g VNode, key: Key) -> LocWindow<'g, ENode> {
        'retry: loop {
            let mut pred: &ENode = &v.ehead;
            let mut curr: &ENode = unsafe { pred.enext.load().deref() };
            loop {
                let succ = curr.enext.load();
                if succ.is_marked() {
                    self.jitter();
                    if !self.cas(&pred.enext, MarkedRef::new(curr, false), succ.unmark()) {
                        continue 'retry;
                    }
                    self.counters.unlinked.fetch_add(1, Ordering::Relaxed);
                    curr = unsafe { succ.deref() };
                    continue;
                }
                if curr.key != MAX_KEY {
                    match curr.status() {
                        NodeStatus::Pending => {}
                        s if s.is_dead() => {
                            self.mark(curr);
                            continue;
                        }
                        _ => {
                            if curr.dest_marked() {
                                if self.mark(curr) {
                                    curr.claim(CLAIM_CLEANUP);
                                }
                                continue;
                            }
                        }
                    }
                }
                if curr.key >= key {
                    return LocWindow { pred, curr };
                }
                pred = curr;
                curr = unsafe { succ.deref() };
            }
        }
    }

    /// One read-only pass over the vertex list looking for both keys.
    /// Returns the two nodes iff both were seen live.
    pub fn locate_uv(&self, key1: Key, key2: Key) -> Option<(&VNode, &VNode)> {
        let last = key1.max(key2);
        let mut v1 = None;
        let mut v2 = None;
        let mut curr: &VNode = unsafe { self.vhead.vnext.load().deref() };
        while curr.key <= last {
            if curr.key == key1 && curr.is_live() {
                v1 = Some(curr);
            } else if curr.key == key2 && curr.is_live() {
                v2 = Some(curr);
            }
            curr = unsafe { curr.vnext.load().deref() };
        }
        Some((v1?, v2?))
    }

    // ---- vertex operations ------------------------------------------------

    pub fn add_vertex(&self, key: Key, budget: usize) -> Attempt<bool> {
        if !is_user_key(key) {
            return Attempt::Done(false);
        }
        let mut fresh: *mut VNode = ptr::null_mut();
        let mut failures = 0;
        let outcome = loop {
            let w = self.locate_v(key);
            if w.curr.key == key {
                match w.curr.status() {
                    NodeStatus::Active => break Attempt::Done(false),
                    NodeStatus::Pending => {
                        // A helper linked it but nobody published the insert yet.
                        if w.curr.activate() {
                            break Attempt::Done(false);
                        }
                        continue;
                    }
                    _ => continue,
                }
            }
            if fresh.is_null() {
                fresh = self.new_vnode(key, NodeStatus::Active);
            }
            let node = unsafe { &*fresh };
            node.vnext.store_unshared(MarkedRef::new(w.curr, false));
            self.jitter();
            if !self.forced_failure()
                && self.cas(
                    &w.pred.vnext,
                    MarkedRef::new(w.curr, false),
                    MarkedRef::new(node, false),
                )
            {
                self.retain_vnode(fresh);
                return Attempt::Done(true);
            }
            failures += 1;
            if failures >= budget {
                break Attempt::Exhausted;
            }
        };
        if !fresh.is_null() {
            // Never published.
            drop(unsafe { Box::from_raw(fresh) });
        }
        outcome
    }

    pub fn remove_vertex(&self, key: Key, budget: usize) -> Attempt<bool> {
        if !is_user_key(key) {
            return Attempt::Done(false);
        }
        let mut failures = 0;
        loop {
            let w = self.locate_v(key);
            let victim = w.curr;
            if victim.key != key || victim.status() != NodeStatus::Active {
                return Attempt::Done(false);
            }
            if victim.owner() != UNCLAIMED {
                // Some slow-path removal already owns it.
                self.mark(victim);
                return Attempt::Done(false);
            }
            let succ = victim.vnext.load();
            if succ.is_marked() {
                continue;
            }
            self.jitter();
            if self.forced_failure() || !self.cas(&victim.vnext, succ, succ.mark()) {
                failures += 1;
                if failures >= budget {
                    return Attempt::Exhausted;
                }
                continue;
            }
            if !victim.claim(CLAIM_FAST) {
                return Attempt::Done(false);
            }
            if self.cas(&w.pred.vnext, MarkedRef::new(victim, false), succ) {
                self.counters.unlinked.fetch_add(1, Ordering::Relaxed);
            }
            return Attempt::Done(true);
        }
    }

    /// Read-only lookup; never retries and never writes.
    pub fn contains_vertex(&self, key: Key) -> bool {
        if !is_user_key(key) {
            return false;
        }
        let mut v: &VNode = &self.vhead;
        while v.key < key {
            v = unsafe { v.vnext.load().deref() };
        }
        v.key == key && v.is_live()
    }

    // ---- edge operations --------------------------------------------------

    pub fn add_edge(&self, key1: Key, key2: Key, budget: usize) -> Attempt<EdgeOpStatus> {
        if !is_edge_pair(key1, key2) {
            return Attempt::Done(EdgeOpStatus::VertexNotPresent);
        }
        let Some((src, dst)) = self.locate_uv(key1, key2) else {
            return Attempt::Done(EdgeOpStatus::VertexNotPresent);
        };
        let mut fresh: *mut ENode = ptr::null_mut();
        let mut failures = 0;
        let outcome = loop {
            if src.is_marked() || dst.is_marked() {
                break Attempt::Done(EdgeOpStatus::VertexNotPresent);
            }
            let w = self.locate_e(src, key2);
            if w.curr.key == key2 {
                match w.curr.status() {
                    NodeStatus::Active => {
                        if w.curr.is_marked() || w.curr.dest_marked() {
                            continue;
                        }
                        if src.is_marked() || dst.is_marked() {
                            break Attempt::Done(EdgeOpStatus::VertexNotPresent);
                        }
                        break Attempt::Done(EdgeOpStatus::EdgeAlreadyPresent);
                    }
                    NodeStatus::Pending => {
                        self.settle_edge(src, w.curr);
                        continue;
                    }
                    _ => continue,
                }
            }
            if fresh.is_null() {
                // The destination is fixed before the node becomes reachable.
                fresh = self.new_enode(key2, dst, NodeStatus::Pending);
            }
            let node = unsafe { &*fresh };
            node.enext.store_unshared(MarkedRef::new(w.curr, false));
            self.jitter();
            if !self.forced_failure()
                && self.cas(
                    &w.pred.enext,
                    MarkedRef::new(w.curr, false),
                    MarkedRef::new(node, false),
                )
            {
                self.retain_enode(fresh);
                return Attempt::Done(if self.settle_edge(src, node) == NodeStatus::Active {
                    EdgeOpStatus::EdgeAdded
                } else {
                    EdgeOpStatus::VertexNotPresent
                });
            }
            failures += 1;
            if failures >= budget {
                break Attempt::Exhausted;
            }
        };
        if !fresh.is_null() {
            drop(unsafe { Box::from_raw(fresh) });
        }
        outcome
    }

    pub fn remove_edge(&self, key1: Key, key2: Key, budget: usize) -> Attempt<EdgeOpStatus> {
        if !is_edge_pair(key1, key2) {
            return Attempt::Done(EdgeOpStatus::VertexNotPresent);
        }
        let Some((src, dst)) = self.locate_uv(key1, key2) else {
            return Attempt::Done(EdgeOpStatus::VertexNotPresent);
        };
        let endpoints_gone = || src.is_marked() || dst.is_marked();
        let mut failures = 0;
        loop {
            if endpoints_gone() {
                return Attempt::Done(EdgeOpStatus::VertexNotPresent);
            }
            let w = self.locate_e(src, key2);
            let victim = w.curr;
            if victim.key != key2 || victim.status() != NodeStatus::Active {
                return Attempt::Done(if endpoints_gone() {
                    EdgeOpStatus::VertexNotPresent
                } else {
                    EdgeOpStatus::EdgeNotPresent
                });
            }
            if victim.is_marked() || victim.dest_marked() {
                continue;
            }
            if src.is_marked() {
                return Attempt::Done(EdgeOpStatus::VertexNotPresent);
            }
            if victim.owner() != UNCLAIMED {
                self.mark(victim);
                return Attempt::Done(self.lost_edge_claim(victim, src, dst));
            }
            let succ = victim.enext.load();
            if succ.is_marked() {
                continue;
            }
            self.jitter();
            if self.forced_failure() || !self.cas(&victim.enext, succ, succ.mark()) {
                failures += 1;
                if failures >= budget {
                    return Attempt::Exhausted;
                }
                continue;
            }
            if !victim.claim(CLAIM_FAST) {
                return Attempt::Done(self.lost_edge_claim(victim, src, dst));
            }
            if self.cas(&w.pred.enext, MarkedRef::new(victim, false), succ) {
                self.counters.unlinked.fetch_add(1, Ordering::Relaxed);
            }
            return Attempt::Done(EdgeOpStatus::EdgeRemoved);
        }
    }

    /// Decides a pending edge node that is known to be linked into `src`'s
    /// list: it becomes active if both endpoints are still unmarked, dead
    /// otherwise. Returns the settled status.
    pub(crate) fn settle_edge(&self, src: &VNode, e: &ENode) -> NodeStatus {
        if src.is_marked() || e.dest_marked() {
            e.kill(NodeStatus::DeadNoVertex)
        } else if e.activate() {
            NodeStatus::Active
        } else {
            e.status()
        }
    }

    /// Result for a remover that saw the edge live but lost the claim.
    fn lost_edge_claim(&self, victim: &ENode, src: &VNode, dst: &VNode) -> EdgeOpStatus {
        if victim.owner() == CLAIM_CLEANUP || src.is_marked() || dst.is_marked() {
            EdgeOpStatus::VertexNotPresent
        } else {
            EdgeOpStatus::EdgeNotPresent
        }
    }

    /// Read-only edge lookup over the endpoints found by [`Self::locate_uv`].
    pub fn contains_edge(&self, key1: Key, key2: Key) -> EdgeOpStatus {
        if !is_edge_pair(key1, key2) {
            return EdgeOpStatus::VertexNotPresent;
        }
        let Some((src, dst)) = self.locate_uv(key1, key2) else {
            return EdgeOpStatus::VertexNotPresent;
        };
        self.probe_edge(src, dst)
    }

    /// Wait-free scan of `src`'s edge list for `dst`, skipping marked nodes.
    pub(crate) fn probe_edge(&self, src: &VNode, dst: &VNode) -> EdgeOpStatus {
        let mut e: &ENode = &src.ehead;
        while e.key < dst.key {
            e = unsafe { e.enext.load().deref() };
        }
        let present = e.key == dst.key && e.is_live();
        if src.is_marked() || dst.is_marked() {
            EdgeOpStatus::VertexNotPresent
        } else if present {
            EdgeOpStatus::EdgePresent
        } else {
            EdgeOpStatus::VertexOrEdgeNotPresent
        }
    }

    /// Dispatches `op` to the matching budgeted operation.
    pub fn apply(&self, op: GraphOp, budget: usize) -> Attempt<OpResult> {
        let v = |a: Attempt<bool>| match a {
            Attempt::Done(b) => Attempt::Done(OpResult::Vertex(b)),
            Attempt::Exhausted => Attempt::Exhausted,
        };
        let e = |a: Attempt<EdgeOpStatus>| match a {
            Attempt::Done(s) => Attempt::Done(OpResult::Edge(s)),
            Attempt::Exhausted => Attempt::Exhausted,
        };
        match op {
            GraphOp::AddVertex(k) => v(self.add_vertex(k, budget)),
            GraphOp::RemoveVertex(k) => v(self.remove_vertex(k, budget)),
            GraphOp::ContainsVertex(k) => Attempt::Done(OpResult::Vertex(self.contains_vertex(k))),
            GraphOp::AddEdge(a, b) => e(self.add_edge(a, b, budget)),
            GraphOp::RemoveEdge(a, b) => e(self.remove_edge(a, b, budget)),
            GraphOp::ContainsEdge(a, b) => Attempt::Done(OpResult::Edge(self.contains_edge(a, b))),
        }
    }

    // ---- quiescent inspection ---------------------------------------------

    /// Keys of the live vertices in list order. Not linearizable; intended for
    /// quiescent checks.
    pub fn vertex_keys(&self) -> Vec<Key> {
        self.live_vertices().map(|v| v.key).collect()
    }

    /// Abstract graph built from [`Self::vertex_keys`] and [`Self::edge_pairs`].
    pub fn snapshot(&self) -> SequentialGraph {
        SequentialGraph::from_parts(self.vertex_keys(), self.edge_pairs())
    }

    /// Live edges as `(src, dst)` pairs in list order. Quiescent use only.
    pub fn edge_pairs(&self) -> Vec<(Key, Key)> {
        let mut out = Vec::new();
        for v in self.live_vertices() {
            let mut e = unsafe { v.ehead.enext.load().deref() };
            while e.key != MAX_KEY {
                if e.is_live() {
                    out.push((v.key, e.key));
                }
                e = unsafe { e.enext.load().deref() };
            }
        }
        out
    }

    fn live_vertices(&self) -> impl Iterator<Item = &VNode> + '_ {
        let mut curr: &VNode = unsafe { self.vhead.vnext.load().deref() };
        std::iter::from_fn(move || loop {
            if curr.key == MAX_KEY {
                return None;
            }
            let v = curr;
            curr = unsafe { curr.vnext.load().deref() };
            if v.is_live() {
                return Some(v);
            }
        })
    }

    fn physical_vertices(&self) -> Vec<&VNode> {
        let mut out = Vec::new();
        let mut curr: &VNode = &self.vhead;
        loop {
            out.push(curr);
            if curr.key == MAX_KEY {
                return out;
            }
            curr = unsafe { curr.vnext.load().deref() };
        }
    }

    /// Runs every list's cleanup traversal once, unlinking all logically
    /// deleted vertices and edges, including edges into removed vertices.
    pub fn purge(&self) {
        self.locate_v(MAX_KEY);
        let mut curr: &VNode = unsafe { self.vhead.vnext.load().deref() };
        while curr.key != MAX_KEY {
            if !curr.is_marked() {
                self.locate_e(curr, MAX_KEY);
            }
            curr = unsafe { curr.vnext.load().deref() };
        }
    }

    /// Walks the physical structure and checks the list invariants. Must only
    /// be called while no operation is running.
    pub fn check_invariants(&self) -> Result<InvariantReport, String> {
        let mut report = InvariantReport::default();
        let vertices = self.physical_vertices();
        if !ptr::eq(*vertices.last().unwrap(), &*self.vtail) {
            return Err("vertex list does not end at the tail sentinel".into());
        }
        let reachable: std::collections::HashSet<*const VNode> =
            vertices.iter().map(|v| *v as *const VNode).collect();
        for pair in vertices.windows(2) {
            if pair[0].key >= pair[1].key {
                return Err(format!(
                    "vertex keys not strictly increasing: {} then {}",
                    pair[0].key, pair[1].key
                ));
            }
        }
        for v in &vertices[1..vertices.len() - 1] {
            if v.status() == NodeStatus::Pending && v.is_marked() {
                return Err(format!("pending vertex {} carries a mark", v.key));
            }
            if !v.is_live() {
                continue;
            }
            report.live_vertices += 1;
            let mut prev_key = MIN_KEY;
            let mut e: &ENode = unsafe { v.ehead.enext.load().deref() };
            loop {
                if e.key <= prev_key {
                    return Err(format!(
                        "edge keys of vertex {} not strictly increasing: {} then {}",
                        v.key, prev_key, e.key
                    ));
                }
                if e.key == MAX_KEY {
                    if !ptr::eq(e, &v.etail) {
                        return Err(format!("edge list of {} ends at a foreign tail", v.key));
                    }
                    break;
                }
                let Some(dest) = e.dest() else {
                    return Err(format!("edge {}->{} has no destination", v.key, e.key));
                };
                if e.status() == NodeStatus::Pending && e.is_marked() {
                    return Err(format!("pending edge {}->{} carries a mark", v.key, e.key));
                }
                if dest.key != e.key {
                    return Err(format!(
                        "edge {}->{} points at vertex {}",
                        v.key, e.key, dest.key
                    ));
                }
                if e.is_live() {
                    if !reachable.contains(&(dest as *const VNode)) {
                        return Err(format!(
                            "live edge {}->{} targets an unreachable vertex",
                            v.key, e.key
                        ));
                    }
                    report.live_edges += 1;
                } else if !e.is_marked()
                    && dest.is_marked()
                    && !reachable.contains(&(dest as *const VNode))
                {
                    report.stale_incoming += 1;
                }
                prev_key = e.key;
                e = unsafe { e.enext.load().deref() };
            }
        }
        if self.stats().mark_violations != 0 {
            return Err(format!(
                "{} CASes cleared a mark bit",
                self.stats().mark_violations
            ));
        }
        Ok(report)
    }
}

impl Drop for LockFreeGraph {
    fn drop(&mut self) {
        let mut v = *self.vallocs.get_mut();
        while !v.is_null() {
            let node = unsafe { Box::from_raw(v) };
            v = node.alloc_next.load(Ordering::Relaxed);
        }
        let mut e = *self.eallocs.get_mut();
        while !e.is_null() {
            let node = unsafe { Box::from_raw(e) };
            e = node.alloc_next.load(Ordering::Relaxed);
        }
    }
}
