use std::fs::File;
use std::io::BufWriter;
use std::path::PathBuf;
use std::time::Duration;

use anyhow::{Context, Result};
use clap::Parser;
use wfgraph::bench::{self, BenchConfig, WorkloadMix};
use wfgraph::ImplKind;

/// Fixed-duration throughput benchmark over the graph implementations.
#[derive(Debug, Parser)]
#[command(version)]
struct Args {
    /// seq | coarse | lockfree | wf-wh | wf-woh | fpsp-wh | fpsp-woh
    #[arg(long = "impl")]
    impl_kind: ImplKind,
    #[arg(long, default_value_t = 1)]
    threads: usize,
    #[arg(long, default_value_t = 20.0)]
    duration_secs: f64,
    /// lookup | mixed | update
    #[arg(long, default_value = "mixed")]
    workload: String,
    #[arg(long, default_value_t = 1000)]
    initial_vertices: usize,
    #[arg(long, default_value_t = 0.25)]
    edge_fill: f64,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long, default_value_t = 5)]
    iterations: usize,
    /// Fast-path failure budget for the fpsp implementations.
    #[arg(long, default_value_t = 20)]
    max_fail: usize,
    /// Output CSV; stdout when omitted.
    #[arg(long)]
    csv: Option<PathBuf>,
    /// Record the first iteration's history as JSON lines.
    #[arg(long)]
    record_trace: Option<PathBuf>,
}

fn main() -> Result<()> {
    let args = Args::parse();
    let mix = WorkloadMix::named(&args.workload)
        .with_context(|| format!("unknown workload {:?} (lookup|mixed|update)", args.workload))?;
    anyhow::ensure!(
        args.duration_secs.is_finite() && args.duration_secs > 0.0,
        "duration must be positive"
    );
    let cfg = BenchConfig {
        impl_kind: args.impl_kind,
        threads: args.threads,
        duration: Duration::from_secs_f64(args.duration_secs),
        workload: args.workload.clone(),
        mix,
        initial_vertices: args.initial_vertices,
        edge_fill: args.edge_fill,
        seed: args.seed,
        iterations: args.iterations,
        max_fail: args.max_fail,
    };
    let rows = match &args.record_trace {
        None => bench::run(&cfg)?,
        Some(path) => {
            let (rows, history) = bench::run_recorded(&cfg)?;
            let out = File::create(path).with_context(|| format!("creating {}", path.display()))?;
            history.write_jsonl(BufWriter::new(out))?;
            rows
        }
    };
    match &args.csv {
        Some(path) => {
            let out = File::create(path).with_context(|| format!("creating {}", path.display()))?;
            bench::write_csv(&rows, out)?;
        }
        None => bench::write_csv(&rows, std::io::stdout().lock())?,
    }
    for r in &rows {
        eprintln!(
            "{} threads={} {} iter={} {:.0} ops/s (slowpath {})",
            r.impl_name, r.threads, r.workload, r.iteration, r.throughput_ops_per_s, r.slowpath_entries
        );
    }
    Ok(())
}
