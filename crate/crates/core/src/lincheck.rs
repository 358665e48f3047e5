//! Offline linearizability checking of recorded graph histories.
//!
//! Worker threads record an invoke event right before each call and a
//! response event right after it, stamped from one global counter. [`check`]
//! then searches for a sequential order that respects real time and replays
//! through [`SequentialGraph`] with identical results. Operations still
//! pending at the end of a history may either take effect or be dropped.

use std::collections::{HashMap, HashSet};
use std::io::{BufRead, Write};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::baselines::SequentialGraph;
use crate::ops::{EdgeOpStatus, GraphOp, Key, OpKind, OpResult};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum EventKind {
    #[serde(rename = "inv")]
    Invoke,
    #[serde(rename = "res")]
    Response,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Event {
    pub thread: usize,
    /// Per-thread operation index; an invoke and its response share it.
    pub seq: u64,
    pub kind: EventKind,
    pub op: GraphOp,
    pub result: Option<OpResult>,
    pub stamp: u64,
}

#[derive(Debug, Error, PartialEq, Eq)]
#[error("malformed history: {0}")]
pub struct MalformedHistory(pub String);

#[derive(Debug, Error)]
pub enum TraceError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error(transparent)]
    Malformed(#[from] MalformedHistory),
}

/// One operation reconstructed from an invoke/response pair.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Operation {
    pub thread: usize,
    pub op: GraphOp,
    /// `None` while the operation is pending.
    pub result: Option<OpResult>,
    pub invoked: u64,
    pub returned: Option<u64>,
}

/// A well-formed, stamp-ordered history.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct History {
    events: Vec<Event>,
    ops: Vec<Operation>,
}

impl History {
    /// Sorts `events` by stamp and validates them.
    pub fn from_events(mut events: Vec<Event>) -> Result<History, MalformedHistory> {
        events.sort_by_key(|e| e.stamp);
        if let Some(w) = events.windows(2).find(|w| w[0].stamp == w[1].stamp) {
            return Err(MalformedHistory(format!("duplicate stamp {}", w[0].stamp)));
        }
        let mut ops = Vec::new();
        // Per thread: index into `ops` of the open invoke, and the next seq.
        let mut open: HashMap<usize, (Option<usize>, u64)> = HashMap::new();
        for e in &events {
            let (pending, next_seq) = open.entry(e.thread).or_insert((None, 0));
            match e.kind {
                EventKind::Invoke => {
                    if pending.is_some() {
                        return Err(MalformedHistory(format!(
                            "thread {} invokes at stamp {} with an operation pending",
                            e.thread, e.stamp
                        )));
                    }
                    if e.seq != *next_seq {
                        return Err(MalformedHistory(format!(
                            "thread {} expected seq {} at stamp {}, found {}",
                            e.thread, next_seq, e.stamp, e.seq
                        )));
                    }
                    if e.result.is_some() {
                        return Err(MalformedHistory(format!(
                            "invoke at stamp {} carries a result",
                            e.stamp
                        )));
                    }
                    *pending = Some(ops.len());
                    *next_seq += 1;
                    ops.push(Operation {
                        thread: e.thread,
                        op: e.op,
                        result: None,
                        invoked: e.stamp,
                        returned: None,
                    });
                }
                EventKind::Response => {
                    let Some(i) = pending.take() else {
                        return Err(MalformedHistory(format!(
                            "thread {} responds at stamp {} without an invoke",
                            e.thread, e.stamp
                        )));
                    };
                    let o = &mut ops[i];
                    if o.op != e.op || e.seq + 1 != *next_seq {
                        return Err(MalformedHistory(format!(
                            "response at stamp {} does not match invoke {}",
                            e.stamp, o.op
                        )));
                    }
                    let Some(r) = e.result else {
                        return Err(MalformedHistory(format!(
                            "response at stamp {} has no result",
                            e.stamp
                        )));
                    };
                    if o.op.kind().is_vertex_op() != r.as_bool().is_some() {
                        return Err(MalformedHistory(format!(
                            "response at stamp {} has the wrong result type for {}",
                            e.stamp, o.op
                        )));
                    }
                    o.result = Some(r);
                    o.returned = Some(e.stamp);
                }
            }
        }
        Ok(History { events, ops })
    }

    pub fn events(&self) -> &[Event] {
        &self.events
    }

    pub fn operations(&self) -> &[Operation] {
        &self.ops
    }

    pub fn len(&self) -> usize {
        self.ops.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ops.is_empty()
    }

    /// Writes one JSON object per event.
    pub fn write_jsonl(&self, mut out: impl Write) -> std::io::Result<()> {
        for e in &self.events {
            let line = TraceLine {
                t: e.thread,
                seq: e.seq,
                kind: e.kind,
                op: e.op.kind().tag().to_string(),
                args: e.op.args(),
                res: e.result.map(result_to_json).unwrap_or(serde_json::Value::Null),
                stamp: e.stamp,
            };
            serde_json::to_writer(&mut out, &line)?;
            out.write_all(b"\n")?;
        }
        Ok(())
    }

    pub fn read_jsonl(input: impl BufRead) -> Result<History, TraceError> {
        let mut events = Vec::new();
        for (i, line) in input.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let parse_err = |msg: String| TraceError::Parse { line: i + 1, msg };
            let t: TraceLine = serde_json::from_str(&line).map_err(|e| parse_err(e.to_string()))?;
            let kind = OpKind::from_tag(&t.op)
                .ok_or_else(|| parse_err(format!("unknown op {:?}", t.op)))?;
            let op = GraphOp::from_parts(kind, &t.args)
                .ok_or_else(|| parse_err(format!("wrong arity for {}", t.op)))?;
            let result = result_from_json(&t.res).map_err(parse_err)?;
            events.push(Event {
                thread: t.t,
                seq: t.seq,
                kind: t.kind,
                op,
                result,
                stamp: t.stamp,
            });
        }
        Ok(History::from_events(events)?)
    }
}

#[derive(Serialize, Deserialize)]
struct TraceLine {
    t: usize,
    seq: u64,
    kind: EventKind,
    op: String,
    args: Vec<Key>,
    res: serde_json::Value,
    stamp: u64,
}

fn result_to_json(r: OpResult) -> serde_json::Value {
    match r {
        OpResult::Vertex(b) => serde_json::Value::Bool(b),
        OpResult::Edge(s) => serde_json::Value::String(s.as_str().to_string()),
    }
}

fn result_from_json(v: &serde_json::Value) -> Result<Option<OpResult>, String> {
    match v {
        serde_json::Value::Null => Ok(None),
        serde_json::Value::Bool(b) => Ok(Some(OpResult::Vertex(*b))),
        serde_json::Value::String(s) => Ok(Some(OpResult::Edge(s.parse::<EdgeOpStatus>()?))),
        other => Err(format!("unexpected result {other}")),
    }
}

/// Shared stamp source. Clone it into every worker.
#[derive(Clone, Debug, Default)]
pub struct Recorder {
    clock: Arc<AtomicU64>,
}

impl Recorder {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn thread_log(&self, thread: usize) -> ThreadLog {
        ThreadLog {
            clock: Arc::clone(&self.clock),
            thread,
            seq: 0,
            events: Vec::new(),
        }
    }

    /// Merges per-thread logs into one history.
    pub fn merge(logs: impl IntoIterator<Item = ThreadLog>) -> Result<History, MalformedHistory> {
        History::from_events(logs.into_iter().flat_map(|l| l.events).collect())
    }
}

/// Append-only event log owned by one worker thread.
#[derive(Debug)]
pub struct ThreadLog {
    clock: Arc<AtomicU64>,
    thread: usize,
    seq: u64,
    events: Vec<Event>,
}

impl ThreadLog {
    fn stamp(&self) -> u64 {
        self.clock.fetch_add(1, Ordering::SeqCst)
    }

    pub fn invoke(&mut self, op: GraphOp) {
        let stamp = self.stamp();
        self.events.push(Event {
            thread: self.thread,
            seq: self.seq,
            kind: EventKind::Invoke,
            op,
            result: None,
            stamp,
        });
    }

    pub fn respond(&mut self, op: GraphOp, result: OpResult) {
        let stamp = self.stamp();
        self.events.push(Event {
            thread: self.thread,
            seq: self.seq,
            kind: EventKind::Response,
            op,
            result: Some(result),
            stamp,
        });
        self.seq += 1;
    }

    /// Records `f` as the execution of `op`.
    pub fn call(&mut self, op: GraphOp, f: impl FnOnce() -> OpResult) -> OpResult {
        self.invoke(op);
        let r = f();
        self.respond(op, r);
        r
    }

    pub fn events(&self) -> &[Event] {
        &self.events
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Verdict {
    /// Indices into [`History::operations`] in linearization order. Pending
    /// operations that were dropped do not appear.
    Linearizable(Vec<usize>),
    NotLinearizable,
    /// The search visited `limit` states without a decision.
    Exhausted,
}

impl Verdict {
    pub fn is_linearizable(&self) -> bool {
        matches!(self, Verdict::Linearizable(_))
    }
}

pub const DEFAULT_LIMIT: u64 = 1_000_000;

struct Frame {
    graph: SequentialGraph,
    /// Thread position (index into that thread's op list) per thread.
    cursor: Vec<usize>,
    /// Next candidate thread to try from this frame.
    next_thread: usize,
    /// Op applied to reach this frame.
    via: Option<usize>,
}

/// Searches for a linearization of `h`, visiting at most `limit` states.
/// Candidates are tried in thread order, so the verdict is deterministic.
pub fn check(h: &History, limit: u64) -> Verdict {
    let ops = h.operations();
    let threads: Vec<usize> = {
        let mut t: Vec<usize> = ops.iter().map(|o| o.thread).collect();
        t.sort_unstable();
        t.dedup();
        t
    };
    let tix: HashMap<usize, usize> = threads.iter().enumerate().map(|(i, &t)| (t, i)).collect();
    let mut per_thread: Vec<Vec<usize>> = vec![Vec::new(); threads.len()];
    for (i, o) in ops.iter().enumerate() {
        per_thread[tix[&o.thread]].push(i);
    }
    let completed_target: Vec<usize> = per_thread
        .iter()
        .map(|v| v.iter().filter(|&&i| ops[i].returned.is_some()).count())
        .collect();

    let mut seen: HashSet<(SequentialGraph, Vec<usize>)> = HashSet::new();
    let mut visited: u64 = 0;
    let mut stack = vec![Frame {
        graph: SequentialGraph::new(),
        cursor: vec![0; threads.len()],
        next_thread: 0,
        via: None,
    }];

    while let Some(top) = stack.last_mut() {
        if top.cursor.iter().zip(&completed_target).all(|(c, t)| c >= t) {
            let order = stack.iter().filter_map(|f| f.via).collect();
            return Verdict::Linearizable(order);
        }
        // Earliest response among operations not yet linearized.
        let horizon = top
            .cursor
            .iter()
            .enumerate()
            .filter_map(|(t, &c)| per_thread[t].get(c))
            .filter_map(|&i| ops[i].returned)
            .min()
            .unwrap_or(u64::MAX);

        let mut child = None;
        while top.next_thread < threads.len() {
            let t = top.next_thread;
            top.next_thread += 1;
            let Some(&i) = per_thread[t].get(top.cursor[t]) else {
                continue;
            };
            let o = &ops[i];
            if o.invoked > horizon {
                continue;
            }
            let mut g = top.graph.clone();
            let r = g.apply(o.op);
            if o.result.is_some_and(|want| want != r) {
                continue;
            }
            let mut cursor = top.cursor.clone();
            cursor[t] += 1;
            if !seen.insert((g.clone(), cursor.clone())) {
                continue;
            }
            visited += 1;
            if visited > limit {
                return Verdict::Exhausted;
            }
            child = Some(Frame {
                graph: g,
                cursor,
                next_thread: 0,
                via: Some(i),
            });
            break;
        }
        match child {
            Some(f) => stack.push(f),
            None => {
                stack.pop();
            }
        }
    }
    Verdict::NotLinearizable
}

/// True iff `order` is a valid linearization of `h`: it contains every
/// completed operation once, respects real-time order, and replays through
/// the oracle with the recorded results.
pub fn validate_witness(h: &History, order: &[usize]) -> bool {
    let ops = h.operations();
    let mut used = vec![false; ops.len()];
    let mut g = SequentialGraph::new();
    for (pos, &i) in order.iter().enumerate() {
        if i >= ops.len() || used[i] {
            return false;
        }
        used[i] = true;
        let r = g.apply(ops[i].op);
        if ops[i].result.is_some_and(|want| want != r) {
            return false;
        }
        // Nothing placed later may have returned before this was invoked.
        if order[pos + 1..]
            .iter()
            .any(|&j| ops[j].returned.is_some_and(|ret| ret < ops[i].invoked))
        {
            return false;
        }
    }
    ops.iter()
        .enumerate()
        .all(|(i, o)| used[i] || o.returned.is_none())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ev(thread: usize, seq: u64, kind: EventKind, op: GraphOp, result: Option<OpResult>, stamp: u64) -> Event {
        Event { thread, seq, kind, op, result, stamp }
    }

    use EventKind::{Invoke as I, Response as R};

    #[test]
    fn single_thread_recording() {
        let rec = Recorder::new();
        let mut log = rec.thread_log(0);
        let mut g = SequentialGraph::new();
        for op in [GraphOp::AddVertex(1), GraphOp::ContainsVertex(1), GraphOp::RemoveVertex(1)] {
            log.call(op, || g.apply(op));
        }
        let h = Recorder::merge([log]).unwrap();
        assert_eq!(h.events().len(), 6);
        assert!(h
            .events()
            .iter()
            .zip([I, R, I, R, I, R])
            .all(|(e, k)| e.kind == k));
        assert!(check(&h, DEFAULT_LIMIT).is_linearizable());
    }

    #[test]
    fn phantom_read_is_rejected() {
        let h = History::from_events(vec![
            ev(0, 0, I, GraphOp::ContainsVertex(5), None, 0),
            ev(0, 0, R, GraphOp::ContainsVertex(5), Some(OpResult::Vertex(true)), 1),
        ])
        .unwrap();
        assert_eq!(check(&h, DEFAULT_LIMIT), Verdict::NotLinearizable);
    }

    #[test]
    fn overlap_allows_reordering() {
        // t1's read overlaps t0's add, so it may see the vertex.
        let a = GraphOp::AddVertex(5);
        let c = GraphOp::ContainsVertex(5);
        let h = History::from_events(vec![
            ev(0, 0, I, a, None, 0),
            ev(1, 0, I, c, None, 1),
            ev(1, 0, R, c, Some(OpResult::Vertex(true)), 2),
            ev(0, 0, R, a, Some(OpResult::Vertex(true)), 3),
        ])
        .unwrap();
        let Verdict::Linearizable(w) = check(&h, DEFAULT_LIMIT) else { panic!() };
        assert!(validate_witness(&h, &w));

        // Without overlap the read must come after the add.
        let h = History::from_events(vec![
            ev(1, 0, I, c, None, 0),
            ev(1, 0, R, c, Some(OpResult::Vertex(true)), 1),
            ev(0, 0, I, a, None, 2),
            ev(0, 0, R, a, Some(OpResult::Vertex(true)), 3),
        ])
        .unwrap();
        assert_eq!(check(&h, DEFAULT_LIMIT), Verdict::NotLinearizable);
    }

    #[test]
    fn pending_ops_may_or_may_not_happen() {
        let a = GraphOp::AddVertex(5);
        let c = GraphOp::ContainsVertex(5);
        for seen in [true, false] {
            let h = History::from_events(vec![
                ev(0, 0, I, a, None, 0),
                ev(1, 0, I, c, None, 1),
                ev(1, 0, R, c, Some(OpResult::Vertex(seen)), 2),
            ])
            .unwrap();
            let Verdict::Linearizable(w) = check(&h, DEFAULT_LIMIT) else { panic!() };
            assert!(validate_witness(&h, &w));
        }
    }

    #[test]
    fn malformed_histories() {
        let a = GraphOp::AddVertex(1);
        let bad = [
            vec![ev(0, 0, R, a, Some(OpResult::Vertex(true)), 0)],
            vec![ev(0, 0, I, a, None, 0), ev(0, 1, I, a, None, 1)],
            vec![ev(0, 0, I, a, None, 0), ev(1, 0, I, a, None, 0)],
            vec![
                ev(0, 0, I, a, None, 0),
                ev(0, 0, R, a, Some(OpResult::Edge(EdgeOpStatus::EdgeAdded)), 1),
            ],
            vec![ev(0, 3, I, a, None, 0)],
        ];
        for events in bad {
            assert!(History::from_events(events).is_err());
        }
    }

    #[test]
    fn jsonl_round_trip() {
        let h = History::from_events(vec![
            ev(0, 0, I, GraphOp::AddEdge(1, 2), None, 0),
            ev(1, 0, I, GraphOp::AddVertex(3), None, 1),
            ev(0, 0, R, GraphOp::AddEdge(1, 2), Some(OpResult::Edge(EdgeOpStatus::VertexNotPresent)), 2),
        ])
        .unwrap();
        let mut buf = Vec::new();
        h.write_jsonl(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with(r#"{"t":0,"seq":0,"kind":"inv","op":"addE","args":[1,2],"res":null,"stamp":0}"#));
        assert!(text.contains(r#""res":"VERTEX_NOT_PRESENT""#));
        assert_eq!(History::read_jsonl(&buf[..]).unwrap(), h);
    }

    #[test]
    fn exhausted_on_tiny_limit() {
        let rec = Recorder::new();
        let mut log = rec.thread_log(0);
        let mut g = SequentialGraph::new();
        for k in 0..10 {
            let op = GraphOp::AddVertex(k + 1);
            log.call(op, || g.apply(op));
        }
        let h = Recorder::merge([log]).unwrap();
        assert_eq!(check(&h, 3), Verdict::Exhausted);
    }
}
