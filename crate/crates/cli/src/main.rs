use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use mfgraph_cli::output::Artifacts;
use mfgraph_cli::run::report;
use mfgraph_cli::{parse_config, run, Failure, SchemaError};

/// Solve mean field games on reversible Markov chains from a JSON config.
#[derive(Parser, Debug)]
#[command(name = "mfgraph", version)]
struct Args {
    /// Run configuration (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Output directory; overrides `output.dir` in the config.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads for grid solves.
    #[arg(long)]
    threads: Option<usize>,
    /// Suppress the summary on stdout.
    #[arg(long)]
    quiet: bool,
}

fn main() -> ExitCode {
    let args = Args::parse();
    let fallback_stem = args.config.file_stem().map_or("mfgraph".into(), |s| s.to_string_lossy().into_owned());
    let fallback_dir = args.out.clone().unwrap_or_else(|| PathBuf::from("."));

    if let Some(k) = args.threads {
        if k == 0 || rayon::ThreadPoolBuilder::new().num_threads(k).build_global().is_err() {
            let failure = Failure::Config(vec![SchemaError::new("", format!("--threads {k} is not usable"))]);
            return exit(report(&failure, &Artifacts::new(&fallback_dir, &fallback_stem), args.quiet));
        }
    }
    let text = match std::fs::read_to_string(&args.config) {
        Ok(t) => t,
        Err(e) => {
            let failure = Failure::Config(vec![SchemaError::new("", format!("cannot read {}: {e}", args.config.display()))]);
            return exit(report(&failure, &Artifacts::new(&fallback_dir, &fallback_stem), args.quiet));
        }
    };
    let mut config = match parse_config(&text) {
        Ok(c) => c,
        Err(errors) => {
            return exit(report(&Failure::Config(errors), &Artifacts::new(&fallback_dir, &fallback_stem), args.quiet));
        }
    };
    if let Some(dir) = args.out {
        config.output.dir = dir;
    }
    config.quiet = args.quiet;
    exit(run(&config))
}

fn exit(code: i32) -> ExitCode {
    ExitCode::from(code as u8)
}
