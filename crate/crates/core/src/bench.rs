//! Throughput benchmark: seed a graph, run a fixed-duration random workload
//! on N threads, and report one CSV row per iteration.

use std::collections::HashSet;
use std::io::Write;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Barrier;
use std::time::{Duration, Instant};

use rand::distributions::{Distribution, Uniform, WeightedIndex};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::baselines::ListGraph;
use crate::concurrent::{ConcurrentGraph, ImplKind};
use crate::lincheck::{History, MalformedHistory, Recorder, ThreadLog};
use crate::ops::{GraphOp, Key, OpKind, OpResult};

/// Percentages over (addV, remV, conV, addE, remE, conE).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct WorkloadMix {
    weights: [f64; 6],
}

impl WorkloadMix {
    pub const LOOKUP: WorkloadMix = WorkloadMix {
        weights: [2.5, 2.5, 45.0, 2.5, 2.5, 45.0],
    };
    pub const MIXED: WorkloadMix = WorkloadMix {
        weights: [12.5, 12.5, 25.0, 12.5, 12.5, 25.0],
    };
    pub const UPDATE: WorkloadMix = WorkloadMix {
        weights: [22.5, 22.5, 5.0, 22.5, 22.5, 5.0],
    };

    pub fn new(weights: [f64; 6]) -> Result<Self, ConfigError> {
        if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(ConfigError::Weights("weights must be non-negative".into()));
        }
        let sum: f64 = weights.iter().sum();
        if (sum - 100.0).abs() > 1e-9 {
            return Err(ConfigError::Weights(format!("weights sum to {sum}, not 100")));
        }
        Ok(WorkloadMix { weights })
    }

    pub fn named(name: &str) -> Option<WorkloadMix> {
        match name {
            "lookup" => Some(Self::LOOKUP),
            "mixed" => Some(Self::MIXED),
            "update" => Some(Self::UPDATE),
            _ => None,
        }
    }

    pub fn weights(&self) -> [f64; 6] {
        self.weights
    }
}

/// Draws operations from a mix with keys uniform over `1..=max_key`.
#[derive(Clone, Debug)]
pub struct OpStream {
    rng: ChaCha8Rng,
    kinds: WeightedIndex<f64>,
    keys: Uniform<Key>,
}

impl OpStream {
    pub fn new(mix: &WorkloadMix, max_key: Key, seed: u64, stream: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream);
        OpStream {
            rng,
            kinds: WeightedIndex::new(mix.weights).expect("validated weights"),
            keys: Uniform::new_inclusive(1, max_key.max(1)),
        }
    }

    pub fn next_op(&mut self) -> GraphOp {
        let kind = OpKind::ALL[self.kinds.sample(&mut self.rng)];
        let a = self.keys.sample(&mut self.rng);
        if kind.is_vertex_op() {
            GraphOp::from_parts(kind, &[a]).unwrap()
        } else {
            let b = self.keys.sample(&mut self.rng);
            GraphOp::from_parts(kind, &[a, b]).unwrap()
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BenchConfig {
    pub impl_kind: ImplKind,
    pub threads: usize,
    pub duration: Duration,
    pub workload: String,
    pub mix: WorkloadMix,
    pub initial_vertices: usize,
    pub edge_fill: f64,
    pub seed: u64,
    pub iterations: usize,
    /// Fast-path failure budget for the fpsp implementations.
    pub max_fail: usize,
}

impl BenchConfig {
    /// Configuration with a named workload and otherwise default settings.
    pub fn new(impl_kind: ImplKind, threads: usize, workload: &str) -> Result<Self, ConfigError> {
        let mix = WorkloadMix::named(workload)
            .ok_or_else(|| ConfigError::UnknownWorkload(workload.to_string()))?;
        Ok(BenchConfig {
            impl_kind,
            threads,
            duration: Duration::from_secs(20),
            workload: workload.to_string(),
            mix,
            initial_vertices: 1000,
            edge_fill: 0.25,
            seed: 1,
            iterations: 5,
            max_fail: 20,
        })
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.threads == 0 {
            return Err(ConfigError::Threads("at least one thread is required".into()));
        }
        if self.impl_kind == ImplKind::Seq && self.threads != 1 {
            return Err(ConfigError::Threads("seq runs on exactly one thread".into()));
        }
        if self.duration.is_zero() {
            return Err(ConfigError::Duration);
        }
        if self.initial_vertices == 0 {
            return Err(ConfigError::Vertices);
        }
        if !(0.0..=1.0).contains(&self.edge_fill) {
            return Err(ConfigError::EdgeFill(self.edge_fill));
        }
        if self.iterations == 0 {
            return Err(ConfigError::Iterations);
        }
        if self.max_fail == 0 {
            return Err(ConfigError::MaxFail);
        }
        Ok(())
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum ConfigError {
    #[error("unknown workload {0:?} (expected lookup|mixed|update)")]
    UnknownWorkload(String),
    #[error("invalid workload weights: {0}")]
    Weights(String),
    #[error("invalid thread count: {0}")]
    Threads(String),
    #[error("duration must be positive")]
    Duration,
    #[error("initial vertex count must be positive")]
    Vertices,
    #[error("edge fill {0} outside [0, 1]")]
    EdgeFill(f64),
    #[error("iteration count must be positive")]
    Iterations,
    #[error("max_fail must be at least 1")]
    MaxFail,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CsvRow {
    #[serde(rename = "impl")]
    pub impl_name: String,
    pub threads: usize,
    pub workload: String,
    pub seed: u64,
    pub iteration: usize,
    pub duration_s: f64,
    pub total_ops: u64,
    pub throughput_ops_per_s: f64,
    pub slowpath_entries: u64,
}

pub const CSV_HEADER: &str =
    "impl,threads,workload,seed,iteration,duration_s,total_ops,throughput_ops_per_s,slowpath_entries";

pub fn write_csv(rows: &[CsvRow], out: impl Write) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r)?;
    }
    if rows.is_empty() {
        w.write_record(CSV_HEADER.split(','))?;
    }
    w.flush()?;
    Ok(())
}

/// Number of directed edges seeded for `n` vertices at `fill`.
pub fn target_edges(n: usize, fill: f64) -> usize {
    let pairs = n.saturating_mul(n.saturating_sub(1)) / 2;
    (fill * pairs as f64).round() as usize
}

/// The initial graph: vertices `1..=n` and a seeded set of distinct directed
/// edges, in insertion order.
pub fn seed_ops(n: usize, fill: f64, seed: u64) -> Vec<GraphOp> {
    let mut ops: Vec<GraphOp> = (1..=n as Key).map(GraphOp::AddVertex).collect();
    let target = target_edges(n, fill);
    if target == 0 {
        return ops;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let keys = Uniform::new_inclusive(1, n as Key);
    let mut edges = HashSet::with_capacity(target);
    while edges.len() < target {
        let a = keys.sample(&mut rng);
        let b = keys.sample(&mut rng);
        if a != b && edges.insert((a, b)) {
            ops.push(GraphOp::AddEdge(a, b));
        }
    }
    ops
}

/// A benchmark subject, seeded and ready.
pub enum BenchGraph {
    Seq(ListGraph),
    Shared(Box<dyn ConcurrentGraph>),
}

impl BenchGraph {
    pub fn snapshot(&self) -> crate::baselines::SequentialGraph {
        match self {
            BenchGraph::Seq(g) => g.snapshot(),
            BenchGraph::Shared(g) => g.snapshot(),
        }
    }
}

pub fn seed_graph(cfg: &BenchConfig) -> BenchGraph {
    seed_graph_logged(cfg, None)
}

/// Seeds the graph, recording each setup operation in `log` when given.
fn seed_graph_logged(cfg: &BenchConfig, mut log: Option<&mut ThreadLog>) -> BenchGraph {
    let ops = seed_ops(cfg.initial_vertices, cfg.edge_fill, cfg.seed);
    let mut feed = |op: GraphOp, apply: &mut dyn FnMut(GraphOp) -> OpResult| match log.as_deref_mut() {
        Some(l) => {
            l.call(op, || apply(op));
        }
        None => {
            apply(op);
        }
    };
    match cfg
        .impl_kind
        .build_with(cfg.threads, cfg.max_fail)
        .expect("validated budget")
    {
        None => {
            let mut g = ListGraph::new();
            for op in ops {
                feed(op, &mut |op| g.apply(op));
            }
            BenchGraph::Seq(g)
        }
        Some(g) => {
            for op in ops {
                feed(op, &mut |op| g.load(op));
            }
            BenchGraph::Shared(g)
        }
    }
}

fn worker_stream(cfg: &BenchConfig, iteration: usize, thread: usize) -> OpStream {
    let stream = ((iteration as u64) << 32) | (thread as u64 + 1);
    OpStream::new(&cfg.mix, cfg.initial_vertices as Key, cfg.seed, stream)
}

struct IterationOutcome {
    row: CsvRow,
    logs: Vec<ThreadLog>,
}

fn run_iteration(cfg: &BenchConfig, iteration: usize, record: bool) -> IterationOutcome {
    let recorder = Recorder::new();
    // Setup is recorded as one extra thread so the history starts empty.
    let mut setup_log = record.then(|| recorder.thread_log(cfg.threads));
    let graph = seed_graph_logged(cfg, setup_log.as_mut());
    let stop = AtomicBool::new(false);
    let (total_ops, elapsed, slowpath, logs) = match &graph {
        BenchGraph::Seq(g) => {
            let mut g = g.clone();
            let mut ops = worker_stream(cfg, iteration, 0);
            let mut log = record.then(|| recorder.thread_log(0));
            let start = Instant::now();
            let mut n = 0u64;
            while start.elapsed() < cfg.duration {
                for _ in 0..64 {
                    let op = ops.next_op();
                    match log.as_mut() {
                        Some(l) => {
                            l.call(op, || g.apply(op));
                        }
                        None => {
                            std::hint::black_box(g.apply(op));
                        }
                    }
                }
                n += 64;
            }
            (n, start.elapsed(), 0, setup_log.into_iter().chain(log).collect())
        }
        BenchGraph::Shared(g) => {
            let g: &dyn ConcurrentGraph = g.as_ref();
            let before = g.slowpath_entries();
            let barrier = Barrier::new(cfg.threads + 1);
            let (counts, logs, elapsed) = std::thread::scope(|s| {
                let handles: Vec<_> = (0..cfg.threads)
                    .map(|t| {
                        let barrier = &barrier;
                        let stop = &stop;
                        let recorder = &recorder;
                        s.spawn(move || {
                            let session = g.session().expect("capacity sized to thread count");
                            let mut ops = worker_stream(cfg, iteration, t);
                            let mut log = record.then(|| recorder.thread_log(t));
                            barrier.wait();
                            let mut n = 0u64;
                            while !stop.load(Ordering::Relaxed) {
                                let op = ops.next_op();
                                match log.as_mut() {
                                    Some(l) => {
                                        l.call(op, || g.apply(&session, op));
                                    }
                                    None => {
                                        std::hint::black_box(g.apply(&session, op));
                                    }
                                }
                                n += 1;
                            }
                            (n, log)
                        })
                    })
                    .collect();
                barrier.wait();
                let start = Instant::now();
                std::thread::sleep(cfg.duration);
                stop.store(true, Ordering::Relaxed);
                let mut counts = 0;
                let mut logs: Vec<ThreadLog> = setup_log.into_iter().collect();
                for h in handles {
                    let (n, log) = h.join().expect("worker panicked");
                    counts += n;
                    logs.extend(log);
                }
                (counts, logs, start.elapsed())
            });
            (counts, elapsed, g.slowpath_entries() - before, logs)
        }
    };
    let duration_s = elapsed.as_secs_f64();
    IterationOutcome {
        row: CsvRow {
            impl_name: cfg.impl_kind.as_str().to_string(),
            threads: cfg.threads,
            workload: cfg.workload.clone(),
            seed: cfg.seed,
            iteration,
            duration_s,
            total_ops,
            throughput_ops_per_s: total_ops as f64 / duration_s,
            slowpath_entries: slowpath,
        },
        logs,
    }
}

pub fn run(cfg: &BenchConfig) -> Result<Vec<CsvRow>, ConfigError> {
    cfg.validate()?;
    Ok((0..cfg.iterations)
        .map(|i| run_iteration(cfg, i, false).row)
        .collect())
}

/// Runs like [`run`], recording the history of the first iteration.
pub fn run_recorded(cfg: &BenchConfig) -> Result<(Vec<CsvRow>, History), RunError> {
    cfg.validate()?;
    let first = run_iteration(cfg, 0, true);
    let history = Recorder::merge(first.logs)?;
    let mut rows = vec![first.row];
    rows.extend((1..cfg.iterations).map(|i| run_iteration(cfg, i, false).row));
    Ok((rows, history))
}

#[derive(Debug, Error)]
pub enum RunError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    History(#[from] MalformedHistory),
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn named_mixes() {
        assert_eq!(
            WorkloadMix::named("lookup").unwrap().weights(),
            [2.5, 2.5, 45.0, 2.5, 2.5, 45.0]
        );
        assert_eq!(
            WorkloadMix::named("mixed").unwrap().weights(),
            [12.5, 12.5, 25.0, 12.5, 12.5, 25.0]
        );
        assert_eq!(
            WorkloadMix::named("update").unwrap().weights(),
            [22.5, 22.5, 5.0, 22.5, 22.5, 5.0]
        );
        assert!(WorkloadMix::named("read").is_none());
        assert!(WorkloadMix::new([50.0, 50.0, 0.0, 0.0, 0.0, 1.0]).is_err());
        assert!(WorkloadMix::new([-1.0, 51.0, 50.0, 0.0, 0.0, 0.0]).is_err());
    }

    #[test]
    fn config_validation() {
        let mut c = BenchConfig::new(ImplKind::Seq, 2, "mixed").unwrap();
        assert!(matches!(c.validate(), Err(ConfigError::Threads(_))));
        c.threads = 1;
        c.edge_fill = 1.5;
        assert_eq!(c.validate(), Err(ConfigError::EdgeFill(1.5)));
        c.edge_fill = 0.25;
        c.duration = Duration::ZERO;
        assert_eq!(c.validate(), Err(ConfigError::Duration));
        assert!(matches!(
            BenchConfig::new(ImplKind::Seq, 1, "heavy"),
            Err(ConfigError::UnknownWorkload(_))
        ));
    }

    #[test]
    fn seeding_small() {
        assert!(seed_ops(0, 0.25, 1).is_empty());
        let ops = seed_ops(10, 0.5, 3);
        assert_eq!(ops.len(), 10 + target_edges(10, 0.5));
        assert_eq!(target_edges(10, 0.5), 23);
        assert_eq!(target_edges(1000, 0.25), 124_875);
    }

    #[test]
    fn stream_is_deterministic() {
        let mix = WorkloadMix::MIXED;
        let a: Vec<_> = {
            let mut s = OpStream::new(&mix, 50, 9, 1);
            (0..100).map(|_| s.next_op()).collect()
        };
        let mut s = OpStream::new(&mix, 50, 9, 1);
        let b: Vec<_> = (0..100).map(|_| s.next_op()).collect();
        assert_eq!(a, b);
        let mut s = OpStream::new(&mix, 50, 9, 2);
        let c: Vec<_> = (0..100).map(|_| s.next_op()).collect();
        assert_ne!(a, c);
    }

    #[test]
    fn empty_csv_has_header() {
        let mut buf = Vec::new();
        write_csv(&[], &mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap().trim_end(), CSV_HEADER);
    }
}
