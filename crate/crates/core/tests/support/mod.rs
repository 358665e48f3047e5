#![allow(dead_code)]

use std::sync::Barrier;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use wfgraph::bench::{OpStream, WorkloadMix};
use wfgraph::lincheck::{History, Recorder};
use wfgraph::lockfree::InvariantReport;
use wfgraph::waitfree::{Announce, OpType, SlotView};
use wfgraph::{
    ConcurrentGraph, EdgeOpStatus, GraphOp, ImplKind, Key, LookupMode, OpKind, OpResult, SequentialGraph,
    WaitFreeGraph,
};

/// An implementation configuration exercised by the stress suites.
#[derive(Clone, Copy, Debug)]
pub struct Subject {
    pub name: &'static str,
    pub kind: ImplKind,
    pub max_fail: usize,
    /// Per-mille chance, before each operation, of forcing the next few
    /// fast-path CASes to fail.
    pub injection: u32,
}

pub const SUBJECTS: [Subject; 5] = [
    Subject { name: "lockfree", kind: ImplKind::LockFree, max_fail: 20, injection: 0 },
    Subject { name: "wf-wh", kind: ImplKind::WfWh, max_fail: 20, injection: 0 },
    Subject { name: "wf-woh", kind: ImplKind::WfWoh, max_fail: 20, injection: 0 },
    Subject { name: "fpsp max_fail=1", kind: ImplKind::FpspWh, max_fail: 1, injection: 150 },
    Subject { name: "fpsp max_fail=20", kind: ImplKind::FpspWoh, max_fail: 20, injection: 50 },
];

impl Subject {
    pub fn build(&self, threads: usize) -> Box<dyn ConcurrentGraph> {
        self.kind
            .build_with(threads, self.max_fail)
            .unwrap()
            .expect("thread-safe implementation")
    }
}

/// Update-leaning mix so small key ranges see plenty of conflicts.
pub fn stress_mix() -> WorkloadMix {
    WorkloadMix::new([25.0, 12.5, 12.5, 25.0, 12.5, 12.5]).unwrap()
}

#[derive(Clone, Copy, Debug)]
pub struct RunShape {
    pub threads: usize,
    pub ops_per_thread: usize,
    pub keys: Key,
    /// Per-mille yield probability at contention points inside the graph.
    pub jitter: u32,
}

/// Runs a seeded random workload on `g`, recording every call.
pub fn record_run(g: &dyn ConcurrentGraph, subject: &Subject, shape: RunShape, seed: u64) -> History {
    if let Some(s) = g.structure() {
        s.set_jitter(shape.jitter);
    }
    let recorder = Recorder::new();
    let barrier = Barrier::new(shape.threads);
    let mix = stress_mix();
    let logs = std::thread::scope(|scope| {
        let handles: Vec<_> = (0..shape.threads)
            .map(|t| {
                let recorder = &recorder;
                let barrier = &barrier;
                let mix = &mix;
                scope.spawn(move || {
                    let session = g.session().unwrap();
                    let mut ops = OpStream::new(mix, shape.keys, seed, t as u64 + 1);
                    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9_7f4a_7c15);
                    rng.set_stream(t as u64 + 1);
                    let mut log = recorder.thread_log(t);
                    barrier.wait();
                    for _ in 0..shape.ops_per_thread {
                        let op = ops.next_op();
                        if rng.gen_range(0..1000) < subject.injection {
                            if let Some(s) = g.structure() {
                                s.inject_cas_failures(subject.max_fail + 1);
                            }
                        }
                        if rng.gen_bool(0.3) {
                            std::thread::yield_now();
                        }
                        log.call(op, || g.apply(&session, op));
                    }
                    log
                })
            })
            .collect();
        handles.into_iter().map(|h| h.join().unwrap()).collect::<Vec<_>>()
    });
    if let Some(s) = g.structure() {
        s.inject_cas_failures(0);
        s.set_jitter(0);
    }
    Recorder::merge(logs).unwrap()
}

/// Random single-threaded operations over keys `1..=keys`.
pub fn random_ops(n: usize, keys: Key, seed: u64) -> Vec<GraphOp> {
    let mix = WorkloadMix::MIXED;
    let mut s = OpStream::new(&mix, keys, seed, 0);
    (0..n).map(|_| s.next_op()).collect()
}

/// Replays `ops` through the oracle and returns its result stream.
pub fn oracle_results(ops: &[GraphOp]) -> Vec<wfgraph::OpResult> {
    let mut g = SequentialGraph::new();
    ops.iter().map(|&op| g.apply(op)).collect()
}

/// What a helper observed after completing another thread's announced op.
#[derive(Debug)]
pub struct StallOutcome {
    pub slot: SlotView,
    pub phase: u64,
    /// Abstract state right after the helper returned, before the announcing
    /// thread resumed.
    pub after: SequentialGraph,
    /// What the announcing thread read once released.
    pub finished: OpResult,
}

/// Publishes `op` from one thread that then blocks on a barrier, while a
/// second thread runs `help_graph_ds` on its behalf.
pub fn stall_trial(setup: &[GraphOp], op: GraphOp) -> StallOutcome {
    let g = WaitFreeGraph::new(2, LookupMode::Helped);
    let stalled = g.register_thread().unwrap();
    let helper = g.register_thread().unwrap();
    for &s in setup {
        g.wf_apply(helper, s);
    }
    let published = Barrier::new(2);
    let helped = Barrier::new(2);
    std::thread::scope(|scope| {
        let owner = scope.spawn(|| {
            let Ok(Announce::Published(phase)) = g.announce(stalled, op) else {
                panic!("{op} was not published");
            };
            published.wait();
            helped.wait();
            (phase, g.finish(stalled, phase))
        });
        published.wait();
        assert!(g.slot(stalled).ty.is_pending(), "{op} completed before help");
        g.help_graph_ds(g.max_phase());
        let slot = g.slot(stalled);
        let after = g.graph().snapshot();
        helped.wait();
        let (phase, finished) = owner.join().unwrap();
        StallOutcome { slot, phase, after, finished }
    })
}

/// Setup and operation for trial `i` of the stall suite for `kind`. Even
/// trials succeed, odd trials fail.
pub fn stall_case(kind: OpKind, i: usize) -> (Vec<GraphOp>, GraphOp) {
    let a = 1 + (i as Key % 7);
    let b = a + 1 + (i as Key % 3);
    let ok = i.is_multiple_of(2);
    let mut setup = vec![GraphOp::AddVertex(a), GraphOp::AddVertex(b)];
    let op = match kind {
        OpKind::AddVertex => {
            if ok {
                setup.pop();
            }
            GraphOp::AddVertex(b)
        }
        OpKind::RemoveVertex => {
            if !ok {
                setup.pop();
            }
            setup.push(GraphOp::AddEdge(a, b));
            GraphOp::RemoveVertex(b)
        }
        OpKind::ContainsVertex => {
            if !ok {
                setup.pop();
            }
            GraphOp::ContainsVertex(b)
        }
        OpKind::AddEdge => {
            if !ok {
                setup.push(GraphOp::AddEdge(a, b));
            }
            GraphOp::AddEdge(a, b)
        }
        OpKind::RemoveEdge => {
            if ok {
                setup.push(GraphOp::AddEdge(a, b));
            }
            GraphOp::RemoveEdge(a, b)
        }
        OpKind::ContainsEdge => {
            if ok {
                setup.push(GraphOp::AddEdge(a, b));
            }
            GraphOp::ContainsEdge(a, b)
        }
    };
    (setup, op)
}

/// Runs one stall trial and compares it against the oracle. `Err` describes
/// the first discrepancy.
pub fn check_stall(kind: OpKind, i: usize) -> Result<(), String> {
    let (setup, op) = stall_case(kind, i);
    let mut oracle = SequentialGraph::new();
    for &s in &setup {
        oracle.apply(s);
    }
    let want = oracle.apply(op);
    let out = stall_trial(&setup, op);
    if out.slot.phase != out.phase || out.slot.ty.is_pending() {
        return Err(format!("{op}: slot not completed by helper: {:?}", out.slot));
    }
    if !matches!(out.slot.ty, OpType::Success | OpType::Failure) {
        return Err(format!("{op}: unexpected slot type {:?}", out.slot.ty));
    }
    if out.slot.result != Some(want) {
        return Err(format!("{op}: slot holds {:?}, expected {want}", out.slot.result));
    }
    if out.after != oracle {
        return Err(format!("{op}: structure {:?} differs from {:?}", out.after, oracle));
    }
    if out.finished != want {
        return Err(format!("{op}: owner read {}, expected {want}", out.finished));
    }
    Ok(())
}

/// Full structural walk after a run: invariants hold, a purging traversal
/// leaves no stale incoming edge, and no CAS ever cleared a mark.
pub fn invariant_sweep(g: &dyn ConcurrentGraph) -> Result<(InvariantReport, InvariantReport), String> {
    let s = g.structure().ok_or("no lock-free structure")?;
    let before = s.check_invariants()?;
    s.purge();
    let after = s.check_invariants()?;
    if after.stale_incoming != 0 {
        return Err(format!("{} stale incoming edges survive a purge", after.stale_incoming));
    }
    if s.stats().mark_violations != 0 {
        return Err(format!("{} mark violations", s.stats().mark_violations));
    }
    if s.snapshot() != g.snapshot() || after.live_edges != before.live_edges {
        return Err("purge changed the abstract graph".into());
    }
    Ok((before, after))
}

/// Removes vertex `k` through the wait-free engine while other threads keep
/// adding edges at `k`, then probes every pair involving `k`. Returns the
/// number of probes made.
pub fn incident_edge_trial(seed: u64, lookup: LookupMode) -> Result<usize, String> {
    const KEYS: Key = 8;
    const ADDERS: usize = 3;
    let g = WaitFreeGraph::new(ADDERS + 1, lookup);
    let main = g.register_thread().unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let k = rng.gen_range(1..=KEYS);
    for v in 1..=KEYS {
        g.wf_add_vertex(main, v);
    }
    for v in 1..=KEYS {
        if v != k {
            g.wf_add_edge(main, k, v);
            g.wf_add_edge(main, v, k);
        }
    }
    g.graph().set_jitter(300);
    let start = Barrier::new(ADDERS + 1);
    let removed = std::thread::scope(|scope| {
        for t in 0..ADDERS {
            let (g, start) = (&g, &start);
            scope.spawn(move || {
                let slot = g.register_thread().unwrap();
                let mut rng = ChaCha8Rng::seed_from_u64(seed ^ (t as u64 + 1) << 32);
                start.wait();
                for _ in 0..20 {
                    let v = rng.gen_range(1..=KEYS);
                    if rng.gen_bool(0.5) {
                        g.wf_add_edge(slot, k, v);
                    } else {
                        g.wf_add_edge(slot, v, k);
                    }
                }
            });
        }
        start.wait();
        g.wf_remove_vertex(main, k)
    });
    g.graph().set_jitter(0);
    if !removed {
        return Err(format!("remove_vertex({k}) returned false"));
    }
    let mut probes = 0;
    for v in 1..=KEYS {
        for (a, b) in [(k, v), (v, k)] {
            let rs = [g.wf_contains_edge(main, a, b), g.graph().contains_edge(a, b)];
            for r in rs {
                probes += 1;
                if !matches!(r, EdgeOpStatus::VertexNotPresent | EdgeOpStatus::VertexOrEdgeNotPresent) {
                    return Err(format!("contains_edge({a},{b}) = {r} after removing {k}"));
                }
            }
        }
    }
    Ok(probes)
}
