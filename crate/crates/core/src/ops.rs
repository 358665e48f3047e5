//! Keys, operation tags and result codes shared by every graph implementation,
//! the oracle, the checker and the benchmark.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub type Key = i64;

/// Key of the head sentinels. Never a valid user key.
pub const MIN_KEY: Key = i64::MIN;
/// Key of the tail sentinels. Never a valid user key.
pub const MAX_KEY: Key = i64::MAX;

#[inline]
pub fn is_user_key(key: Key) -> bool {
    key > MIN_KEY && key < MAX_KEY
}

/// Edge keys must both be user keys and distinct (no self-loops).
#[inline]
pub fn is_edge_pair(src: Key, dst: Key) -> bool {
    is_user_key(src) && is_user_key(dst) && src != dst
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum EdgeOpStatus {
    EdgeAdded,
    EdgeAlreadyPresent,
    EdgeRemoved,
    EdgeNotPresent,
    EdgePresent,
    VertexNotPresent,
    VertexOrEdgeNotPresent,
}

impl EdgeOpStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            EdgeOpStatus::EdgeAdded => "EDGE_ADDED",
            EdgeOpStatus::EdgeAlreadyPresent => "EDGE_ALREADY_PRESENT",
            EdgeOpStatus::EdgeRemoved => "EDGE_REMOVED",
            EdgeOpStatus::EdgeNotPresent => "EDGE_NOT_PRESENT",
            EdgeOpStatus::EdgePresent => "EDGE_PRESENT",
            EdgeOpStatus::VertexNotPresent => "VERTEX_NOT_PRESENT",
            EdgeOpStatus::VertexOrEdgeNotPresent => "VERTEX_OR_EDGE_NOT_PRESENT",
        }
    }
}

impl fmt::Display for EdgeOpStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for EdgeOpStatus {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        use EdgeOpStatus::*;
        [
            EdgeAdded,
            EdgeAlreadyPresent,
            EdgeRemoved,
            EdgeNotPresent,
            EdgePresent,
            VertexNotPresent,
            VertexOrEdgeNotPresent,
        ]
        .into_iter()
        .find(|st| st.as_str() == s)
        .ok_or_else(|| format!("unknown edge status {s:?}"))
    }
}

/// The six graph operations.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum GraphOp {
    AddVertex(Key),
    RemoveVertex(Key),
    ContainsVertex(Key),
    AddEdge(Key, Key),
    RemoveEdge(Key, Key),
    ContainsEdge(Key, Key),
}

/// Operation tag without arguments.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum OpKind {
    AddVertex,
    RemoveVertex,
    ContainsVertex,
    AddEdge,
    RemoveEdge,
    ContainsEdge,
}

impl OpKind {
    pub const ALL: [OpKind; 6] = [
        OpKind::AddVertex,
        OpKind::RemoveVertex,
        OpKind::ContainsVertex,
        OpKind::AddEdge,
        OpKind::RemoveEdge,
        OpKind::ContainsEdge,
    ];

    /// Short name used in trace files.
    pub fn tag(self) -> &'static str {
        match self {
            OpKind::AddVertex => "addV",
            OpKind::RemoveVertex => "remV",
            OpKind::ContainsVertex => "conV",
            OpKind::AddEdge => "addE",
            OpKind::RemoveEdge => "remE",
            OpKind::ContainsEdge => "conE",
        }
    }

    pub fn from_tag(tag: &str) -> Option<OpKind> {
        OpKind::ALL.into_iter().find(|k| k.tag() == tag)
    }

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn is_vertex_op(self) -> bool {
        matches!(
            self,
            OpKind::AddVertex | OpKind::RemoveVertex | OpKind::ContainsVertex
        )
    }
}

impl GraphOp {
    pub fn kind(&self) -> OpKind {
        match self {
            GraphOp::AddVertex(_) => OpKind::AddVertex,
            GraphOp::RemoveVertex(_) => OpKind::RemoveVertex,
            GraphOp::ContainsVertex(_) => OpKind::ContainsVertex,
            GraphOp::AddEdge(..) => OpKind::AddEdge,
            GraphOp::RemoveEdge(..) => OpKind::RemoveEdge,
            GraphOp::ContainsEdge(..) => OpKind::ContainsEdge,
        }
    }

    pub fn args(&self) -> Vec<Key> {
        match *self {
            GraphOp::AddVertex(k) | GraphOp::RemoveVertex(k) | GraphOp::ContainsVertex(k) => {
                vec![k]
            }
            GraphOp::AddEdge(a, b) | GraphOp::RemoveEdge(a, b) | GraphOp::ContainsEdge(a, b) => {
                vec![a, b]
            }
        }
    }

    pub fn from_parts(kind: OpKind, args: &[Key]) -> Option<GraphOp> {
        Some(match (kind, args) {
            (OpKind::AddVertex, &[k]) => GraphOp::AddVertex(k),
            (OpKind::RemoveVertex, &[k]) => GraphOp::RemoveVertex(k),
            (OpKind::ContainsVertex, &[k]) => GraphOp::ContainsVertex(k),
            (OpKind::AddEdge, &[a, b]) => GraphOp::AddEdge(a, b),
            (OpKind::RemoveEdge, &[a, b]) => GraphOp::RemoveEdge(a, b),
            (OpKind::ContainsEdge, &[a, b]) => GraphOp::ContainsEdge(a, b),
            _ => return None,
        })
    }
}

impl fmt::Display for GraphOp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let args: Vec<String> = self.args().iter().map(|k| k.to_string()).collect();
        write!(f, "{}({})", self.kind().tag(), args.join(","))
    }
}

/// Vertex operations answer with a boolean, edge operations with a status.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum OpResult {
    Vertex(bool),
    Edge(EdgeOpStatus),
}

impl OpResult {
    pub fn as_bool(self) -> Option<bool> {
        match self {
            OpResult::Vertex(b) => Some(b),
            OpResult::Edge(_) => None,
        }
    }

    pub fn as_edge(self) -> Option<EdgeOpStatus> {
        match self {
            OpResult::Edge(s) => Some(s),
            OpResult::Vertex(_) => None,
        }
    }
}

impl fmt::Display for OpResult {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            OpResult::Vertex(b) => write!(f, "{b}"),
            OpResult::Edge(s) => write!(f, "{s}"),
        }
    }
}

/// Outcome of a budgeted lock-free attempt.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Attempt<T> {
    Done(T),
    /// The decisive CAS failed `budget` times.
    Exhausted,
}

impl<T> Attempt<T> {
    pub fn done(self) -> Option<T> {
        match self {
            Attempt::Done(v) => Some(v),
            Attempt::Exhausted => None,
        }
    }
}

/// Failure budget that never runs out.
pub const UNBOUNDED: usize = usize::MAX;

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn status_names_round_trip() {
        for s in [
            EdgeOpStatus::EdgeAdded,
            EdgeOpStatus::VertexOrEdgeNotPresent,
            EdgeOpStatus::EdgeNotPresent,
        ] {
            assert_eq!(s.as_str().parse::<EdgeOpStatus>().unwrap(), s);
        }
        assert!("NOPE".parse::<EdgeOpStatus>().is_err());
    }

    #[test]
    fn op_parts_round_trip() {
        let ops = [
            GraphOp::AddVertex(3),
            GraphOp::RemoveEdge(1, 2),
            GraphOp::ContainsEdge(-4, 9),
        ];
        for op in ops {
            assert_eq!(GraphOp::from_parts(op.kind(), &op.args()), Some(op));
            assert_eq!(OpKind::from_tag(op.kind().tag()), Some(op.kind()));
        }
        assert_eq!(GraphOp::from_parts(OpKind::AddEdge, &[1]), None);
    }

    #[test]
    fn key_domain() {
        assert!(!is_user_key(MIN_KEY));
        assert!(!is_user_key(MAX_KEY));
        assert!(is_user_key(0));
        assert!(!is_edge_pair(3, 3));
        assert!(is_edge_pair(3, 4));
    }
}
