use std::fs::File;
use std::io::BufReader;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use wfgraph::lincheck::{self, History, Verdict};

/// Checks a recorded history for linearizability.
///
/// Exit status: 0 linearizable, 1 not linearizable, 2 search limit reached,
/// 3 unreadable or malformed trace.
#[derive(Debug, Parser)]
#[command(version)]
struct Args {
    /// JSON-lines trace file.
    #[arg(long)]
    trace: PathBuf,
    /// Maximum number of search states.
    #[arg(long, default_value_t = lincheck::DEFAULT_LIMIT)]
    limit: u64,
}

fn main() -> ExitCode {
    let args = Args::parse();
    let history = match File::open(&args.trace)
        .map_err(lincheck::TraceError::from)
        .and_then(|f| History::read_jsonl(BufReader::new(f)))
    {
        Ok(h) => h,
        Err(e) => {
            eprintln!("{}: {e}", args.trace.display());
            return ExitCode::from(3);
        }
    };
    match lincheck::check(&history, args.limit) {
        Verdict::Linearizable(order) => {
            println!("linearizable ({} operations, witness of {})", history.len(), order.len());
            ExitCode::from(0)
        }
        Verdict::NotLinearizable => {
            println!("NOT linearizable ({} operations)", history.len());
            ExitCode::from(1)
        }
        Verdict::Exhausted => {
            println!("undecided: search limit {} reached", args.limit);
            ExitCode::from(2)
        }
    }
}
