use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use speedlab::harness::{self, ExitStatus, ExperimentConfig, OutputFormat, Verb};

#[derive(Parser)]
#[command(name = "speedlab", version, about = "Experiments on wave equations with singular propagation speeds")]
struct Cli {
    #[command(subcommand)]
    verb: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Speed-class membership or density check.
    CheckSpeed(Common),
    /// Loss-exponent sweep over a lambda grid.
    SweepFdl(Common),
    /// Construct activator windows and tabulate the modified speeds.
    BuildActivator(Common),
    /// Windows plus growth certificates.
    VerifyActivator(Common),
    /// Stage-wise construction of a universal infinite-loss speed.
    IterateUniversal(Common),
    /// Continuous dependence of solutions on the speed.
    ProbeDependence(Common),
    /// Whatever experiment the config describes.
    Run(Common),
}

#[derive(Args)]
struct Common {
    #[arg(long)]
    config: PathBuf,
    /// Overrides `output.dir`.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    workers: Option<usize>,
    /// Overrides `tolerances.integrator`.
    #[arg(long)]
    tol: Option<f64>,
    /// Reserved; every computation is deterministic.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, value_enum)]
    format: Option<Format>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Csv,
    Jsonl,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (verb, args) = match cli.verb {
        Command::CheckSpeed(a) => (Verb::CheckSpeed, a),
        Command::SweepFdl(a) => (Verb::SweepFdl, a),
        Command::BuildActivator(a) => (Verb::BuildActivator, a),
        Command::VerifyActivator(a) => (Verb::VerifyActivator, a),
        Command::IterateUniversal(a) => (Verb::IterateUniversal, a),
        Command::ProbeDependence(a) => (Verb::ProbeDependence, a),
        Command::Run(a) => (Verb::Run, a),
    };
    let status = match load(&args) {
        Ok(cfg) => {
            let base = args.config.parent().unwrap_or(Path::new("."));
            let (status, result) = harness::run(&cfg, verb, base);
            match result {
                Ok((outcome, paths)) => {
                    for n in &outcome.notes {
                        eprintln!("note: {n}");
                    }
                    for p in &paths {
                        println!("{}", p.display());
                    }
                    if status == ExitStatus::AssertionFailed {
                        eprintln!("assertion failed");
                    }
                }
                Err(e) => eprintln!("error: {e}"),
            }
            status
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitStatus::of_error(&e)
        }
    };
    ExitCode::from(status.code() as u8)
}

fn load(args: &Common) -> speedlab::Result<ExperimentConfig> {
    let mut cfg = ExperimentConfig::load(&args.config)?;
    if let Some(out) = &args.out {
        cfg.output.dir = out.clone();
    }
    if let Some(w) = args.workers {
        cfg.workers = w;
    }
    if let Some(t) = args.tol {
        cfg.tolerances.integrator = t;
    }
    if let Some(s) = args.seed {
        cfg.seed = s;
    }
    match args.format {
        Some(Format::Csv) => cfg.output.format = OutputFormat::Csv,
        Some(Format::Jsonl) => cfg.output.format = OutputFormat::JsonLines,
        None => {}
    }
    cfg.validate()?;
    Ok(cfg)
}
