//! Reference graphs.
//!
//! [`SequentialGraph`] is the abstract specification: two ordered sets, with
//! vertex removal eagerly dropping every incident edge. It is the oracle for
//! differential tests and for the linearizability checker.
//!
//! [`ListGraph`] is a single-threaded adjacency list built from sorted linked
//! lists, the same shape as the concurrent graph minus the atomics.
//! [`CoarseLockGraph`] puts one behind a mutex.

use std::collections::BTreeSet;
use std::sync::Mutex;

use crate::ops::{is_edge_pair, is_user_key, EdgeOpStatus, GraphOp, Key, OpResult, MAX_KEY, MIN_KEY};

#[derive(Clone, Debug, Default, PartialEq, Eq, Hash)]
pub struct SequentialGraph {
    vertices: BTreeSet<Key>,
    edges: BTreeSet<(Key, Key)>,
}

impl SequentialGraph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_parts(
        vertices: impl IntoIterator<Item = Key>,
        edges: impl IntoIterator<Item = (Key, Key)>,
    ) -> Self {
        SequentialGraph {
            vertices: vertices.into_iter().collect(),
            edges: edges.into_iter().collect(),
        }
    }

    pub fn vertices(&self) -> &BTreeSet<Key> {
        &self.vertices
    }

    pub fn edges(&self) -> &BTreeSet<(Key, Key)> {
        &self.edges
    }

    pub fn add_vertex(&mut self, key: Key) -> bool {
        is_user_key(key) && self.vertices.insert(key)
    }

    pub fn remove_vertex(&mut self, key: Key) -> bool {
        if !self.vertices.remove(&key) {
            return false;
        }
        self.edges.retain(|&(a, b)| a != key && b != key);
        true
    }

    pub fn contains_vertex(&self, key: Key) -> bool {
        self.vertices.contains(&key)
    }

    fn has_endpoints(&self, a: Key, b: Key) -> bool {
        is_edge_pair(a, b) && self.vertices.contains(&a) && self.vertices.contains(&b)
    }

    pub fn add_edge(&mut self, a: Key, b: Key) -> EdgeOpStatus {
        if !self.has_endpoints(a, b) {
            EdgeOpStatus::VertexNotPresent
        } else if self.edges.insert((a, b)) {
            EdgeOpStatus::EdgeAdded
        } else {
            EdgeOpStatus::EdgeAlreadyPresent
        }
    }

    pub fn remove_edge(&mut self, a: Key, b: Key) -> EdgeOpStatus {
        if !self.has_endpoints(a, b) {
            EdgeOpStatus::VertexNotPresent
        } else if self.edges.remove(&(a, b)) {
            EdgeOpStatus::EdgeRemoved
        } else {
            EdgeOpStatus::EdgeNotPresent
        }
    }

    pub fn contains_edge(&self, a: Key, b: Key) -> EdgeOpStatus {
        if !self.has_endpoints(a, b) {
            EdgeOpStatus::VertexNotPresent
        } else if self.edges.contains(&(a, b)) {
            EdgeOpStatus::EdgePresent
        } else {
            EdgeOpStatus::VertexOrEdgeNotPresent
        }
    }

    pub fn apply(&mut self, op: GraphOp) -> OpResult {
        oracle_apply(self, op)
    }
}

pub fn oracle_apply(g: &mut SequentialGraph, op: GraphOp) -> OpResult {
    match op {
        GraphOp::AddVertex(k) => OpResult::Vertex(g.add_vertex(k)),
        GraphOp::RemoveVertex(k) => OpResult::Vertex(g.remove_vertex(k)),
        GraphOp::ContainsVertex(k) => OpResult::Vertex(g.contains_vertex(k)),
        GraphOp::AddEdge(a, b) => OpResult::Edge(g.add_edge(a, b)),
        GraphOp::RemoveEdge(a, b) => OpResult::Edge(g.remove_edge(a, b)),
        GraphOp::ContainsEdge(a, b) => OpResult::Edge(g.contains_edge(a, b)),
    }
}

const NIL: usize = usize::MAX;
const VHEAD: usize = 0;
const VTAIL: usize = 1;

#[derive(Clone, Debug)]
struct VSlot {
    key: Key,
    next: usize,
    /// Edge-list head sentinel in the edge arena.
    ehead: usize,
    /// Bumped on removal so edges into a dead incarnation are recognisable.
    gen: u64,
}

#[derive(Clone, Debug)]
struct ESlot {
    key: Key,
    next: usize,
    dest: usize,
    dest_gen: u64,
}

/// Sequential adjacency list over index-linked sorted lists.
///
/// Removing a vertex frees its outgoing edges at once; incoming edges are
/// recognised as dead by a generation mismatch and dropped by later walks.
#[derive(Clone, Debug)]
pub struct ListGraph {
    vs: Vec<VSlot>,
    es: Vec<ESlot>,
    vfree: Vec<usize>,
    efree: Vec<usize>,
}

impl Default for ListGraph {
    fn default() -> Self {
        Self::new()
    }
}

impl ListGraph {
    pub fn new() -> Self {
        let mut g = ListGraph {
            vs: Vec::new(),
            es: Vec::new(),
            vfree: Vec::new(),
            efree: Vec::new(),
        };
        g.vs.push(VSlot { key: MIN_KEY, next: VTAIL, ehead: NIL, gen: 0 });
        g.vs.push(VSlot { key: MAX_KEY, next: NIL, ehead: NIL, gen: 0 });
        g
    }

    fn alloc_e(&mut self, e: ESlot) -> usize {
        match self.efree.pop() {
            Some(i) => {
                self.es[i] = e;
                i
            }
            None => {
                self.es.push(e);
                self.es.len() - 1
            }
        }
    }

    fn new_edge_list(&mut self) -> usize {
        let tail = self.alloc_e(ESlot { key: MAX_KEY, next: NIL, dest: NIL, dest_gen: 0 });
        self.alloc_e(ESlot { key: MIN_KEY, next: tail, dest: NIL, dest_gen: 0 })
    }

    fn locate_v(&self, key: Key) -> (usize, usize) {
        let mut pred = VHEAD;
        let mut curr = self.vs[pred].next;
        while self.vs[curr].key < key {
            pred = curr;
            curr = self.vs[curr].next;
        }
        (pred, curr)
    }

    /// Both vertices in one pass, if present.
    fn locate_uv(&self, a: Key, b: Key) -> Option<(usize, usize)> {
        let last = a.max(b);
        let (mut va, mut vb) = (None, None);
        let mut curr = self.vs[VHEAD].next;
        while self.vs[curr].key <= last {
            let k = self.vs[curr].key;
            if k == a {
                va = Some(curr);
            } else if k == b {
                vb = Some(curr);
            }
            curr = self.vs[curr].next;
        }
        Some((va?, vb?))
    }

    fn edge_dead(&self, e: usize) -> bool {
        let ed = &self.es[e];
        self.vs[ed.dest].gen != ed.dest_gen
    }

    /// Edge window in `v`'s list, dropping dead edges on the way.
    fn locate_e(&mut self, v: usize, key: Key) -> (usize, usize) {
        let mut pred = self.vs[v].ehead;
        let mut curr = self.es[pred].next;
        loop {
            if self.es[curr].key != MAX_KEY && self.edge_dead(curr) {
                let next = self.es[curr].next;
                self.es[pred].next = next;
                self.efree.push(curr);
                curr = next;
                continue;
            }
            if self.es[curr].key >= key {
                return (pred, curr);
            }
            pred = curr;
            curr = self.es[curr].next;
        }
    }

    pub fn add_vertex(&mut self, key: Key) -> bool {
        if !is_user_key(key) {
            return false;
        }
        let (pred, curr) = self.locate_v(key);
        if self.vs[curr].key == key {
            return false;
        }
        let ehead = self.new_edge_list();
        let slot = VSlot { key, next: curr, ehead, gen: 0 };
        let idx = match self.vfree.pop() {
            Some(i) => {
                let gen = self.vs[i].gen;
                self.vs[i] = VSlot { gen, ..slot };
                i
            }
            None => {
                self.vs.push(slot);
                self.vs.len() - 1
            }
        };
        self.vs[pred].next = idx;
        true
    }

    pub fn remove_vertex(&mut self, key: Key) -> bool {
        if !is_user_key(key) {
            return false;
        }
        let (pred, curr) = self.locate_v(key);
        if self.vs[curr].key != key {
            return false;
        }
        self.vs[pred].next = self.vs[curr].next;
        let mut e = self.vs[curr].ehead;
        while e != NIL {
            self.efree.push(e);
            e = self.es[e].next;
        }
        self.vs[curr].gen += 1;
        self.vs[curr].ehead = NIL;
        self.vfree.push(curr);
        true
    }

    pub fn contains_vertex(&self, key: Key) -> bool {
        is_user_key(key) && {
            let (_, curr) = self.locate_v(key);
            self.vs[curr].key == key
        }
    }

    pub fn add_edge(&mut self, a: Key, b: Key) -> EdgeOpStatus {
        if !is_edge_pair(a, b) {
            return EdgeOpStatus::VertexNotPresent;
        }
        let Some((va, vb)) = self.locate_uv(a, b) else {
            return EdgeOpStatus::VertexNotPresent;
        };
        let (pred, curr) = self.locate_e(va, b);
        if self.es[curr].key == b {
            return EdgeOpStatus::EdgeAlreadyPresent;
        }
        let dest_gen = self.vs[vb].gen;
        let e = self.alloc_e(ESlot { key: b, next: curr, dest: vb, dest_gen });
        self.es[pred].next = e;
        EdgeOpStatus::EdgeAdded
    }

    pub fn remove_edge(&mut self, a: Key, b: Key) -> EdgeOpStatus {
        if !is_edge_pair(a, b) {
            return EdgeOpStatus::VertexNotPresent;
        }
        let Some((va, _)) = self.locate_uv(a, b) else {
            return EdgeOpStatus::VertexNotPresent;
        };
        let (pred, curr) = self.locate_e(va, b);
        if self.es[curr].key != b {
            return EdgeOpStatus::EdgeNotPresent;
        }
        self.es[pred].next = self.es[curr].next;
        self.efree.push(curr);
        EdgeOpStatus::EdgeRemoved
    }

    pub fn contains_edge(&self, a: Key, b: Key) -> EdgeOpStatus {
        if !is_edge_pair(a, b) {
            return EdgeOpStatus::VertexNotPresent;
        }
        let Some((va, _)) = self.locate_uv(a, b) else {
            return EdgeOpStatus::VertexNotPresent;
        };
        let mut e = self.es[self.vs[va].ehead].next;
        while self.es[e].key < b {
            e = self.es[e].next;
        }
        if self.es[e].key == b && !self.edge_dead(e) {
            EdgeOpStatus::EdgePresent
        } else {
            EdgeOpStatus::VertexOrEdgeNotPresent
        }
    }

    pub fn apply(&mut self, op: GraphOp) -> OpResult {
        match op {
            GraphOp::AddVertex(k) => OpResult::Vertex(self.add_vertex(k)),
            GraphOp::RemoveVertex(k) => OpResult::Vertex(self.remove_vertex(k)),
            GraphOp::ContainsVertex(k) => OpResult::Vertex(self.contains_vertex(k)),
            GraphOp::AddEdge(a, b) => OpResult::Edge(self.add_edge(a, b)),
            GraphOp::RemoveEdge(a, b) => OpResult::Edge(self.remove_edge(a, b)),
            GraphOp::ContainsEdge(a, b) => OpResult::Edge(self.contains_edge(a, b)),
        }
    }

    /// Abstract state of the graph.
    pub fn snapshot(&self) -> SequentialGraph {
        let mut vertices = Vec::new();
        let mut edges = Vec::new();
        let mut v = self.vs[VHEAD].next;
        while v != VTAIL {
            let key = self.vs[v].key;
            vertices.push(key);
            let mut e = self.es[self.vs[v].ehead].next;
            while self.es[e].key != MAX_KEY {
                if !self.edge_dead(e) {
                    edges.push((key, self.es[e].key));
                }
                e = self.es[e].next;
            }
            v = self.vs[v].next;
        }
        SequentialGraph::from_parts(vertices, edges)
    }
}

/// A [`ListGraph`] behind one global lock.
#[derive(Debug, Default)]
pub struct CoarseLockGraph {
    inner: Mutex<ListGraph>,
}

impl CoarseLockGraph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn apply(&self, op: GraphOp) -> OpResult {
        self.inner.lock().unwrap().apply(op)
    }

    pub fn snapshot(&self) -> SequentialGraph {
        self.inner.lock().unwrap().snapshot()
    }
}
