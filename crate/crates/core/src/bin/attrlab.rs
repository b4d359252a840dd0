use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use attrlab::experiment::{self, Command, Overrides};

#[derive(Parser)]
#[command(name = "attrlab", version, about = "Gradient-integration attribution experiments")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Train a model and write model.ckpt
    Train(RunArgs),
    /// Explain one test image: heatmap PNG/PGM plus CSV
    Explain(RunArgs),
    /// Certainty benchmark table over sampling methods
    Bench(RunArgs),
    /// Dropping-probability sweep: CSV and line plot
    Sweep(RunArgs),
    /// Cosine-kernel PCA alignment projection: CSV and scatter plot
    Project(RunArgs),
    /// Benchmark before and after augmented fine-tuning
    Fragility(RunArgs),
    /// Check an output directory against its manifest
    Verify { dir: PathBuf },
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    p: Option<f64>,
    #[arg(long)]
    sigma: Option<f64>,
    #[arg(long)]
    samples: Option<usize>,
    #[arg(long)]
    bins: Option<usize>,
    #[arg(long)]
    multiply_by_input: bool,
    /// Size of the worker pool (defaults to one per core)
    #[arg(long)]
    workers: Option<usize>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (cmd, args) = match cli.command {
        Cmd::Train(a) => (Command::Train, a),
        Cmd::Explain(a) => (Command::Explain, a),
        Cmd::Bench(a) => (Command::Bench, a),
        Cmd::Sweep(a) => (Command::Sweep, a),
        Cmd::Project(a) => (Command::Project, a),
        Cmd::Fragility(a) => (Command::Fragility, a),
        Cmd::Verify { dir } => {
            return match experiment::verify_manifest(&dir) {
                Ok(bad) if bad.is_empty() => {
                    println!("ok");
                    ExitCode::SUCCESS
                }
                Ok(bad) => {
                    for b in bad {
                        println!("mismatch {b}");
                    }
                    ExitCode::from(1)
                }
                Err(e) => {
                    eprintln!("{}", experiment::error_line(&e));
                    ExitCode::from(2)
                }
            };
        }
    };
    let overrides = Overrides {
        seed: args.seed,
        out: args.out,
        p: args.p,
        sigma: args.sigma,
        samples: args.samples,
        bins: args.bins,
        multiply_by_input: args.multiply_by_input,
    };
    match experiment::run_file(cmd, &args.config, &overrides, args.workers) {
        Ok(m) => {
            for a in &m.artifacts {
                println!("{}  {}", a.sha256, a.path);
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("{}", experiment::error_line(&e));
            ExitCode::from(1)
        }
    }
}
