use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use landscape_cli::{compare_baseline, describe, run_experiment, write_outputs, CliError, Experiment};

#[derive(Parser)]
#[command(name = "landscape-lab", version, about = "Certify that augmented classifiers reach global minima")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the configured augmentation over every λ and seed.
    Run(Opts),
    /// Run the baseline and augmented arms side by side.
    Compare(Opts),
    /// Print the sweep plan without running it.
    Describe(Opts),
}

#[derive(Args)]
struct Opts {
    config: PathBuf,
    /// Output directory, overriding `out_dir` in the config.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads (default: all cores).
    #[arg(long)]
    threads: Option<usize>,
    /// First seed, overriding `seeds.offset` in the config.
    #[arg(long)]
    seed_offset: Option<u64>,
}

fn load(opts: &Opts) -> Result<Experiment, CliError> {
    let mut exp = Experiment::load(&opts.config)?;
    if let Some(k) = opts.seed_offset {
        exp.seed_offset = k;
        exp.optimizer.seed = k;
    }
    if opts.threads == Some(0) {
        return Err(CliError::Config {
            path: "--threads".to_string(),
            message: "must be at least 1".to_string(),
        });
    }
    Ok(exp)
}

fn execute(opts: &Opts, compare: bool) -> ExitCode {
    let exp = match load(opts) {
        Ok(e) => e,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(1);
        }
    };
    if compare && exp.baseline.is_none() {
        eprintln!("error: compare needs a [compare] section in the config");
        return ExitCode::from(1);
    }
    let out_dir = opts
        .out
        .clone()
        .or_else(|| exp.out_dir.clone())
        .unwrap_or_else(|| PathBuf::from("results").join(&exp.name));
    let pool = match rayon::ThreadPoolBuilder::new()
        .num_threads(opts.threads.unwrap_or(0))
        .build()
    {
        Ok(p) => p,
        Err(e) => {
            eprintln!("error: thread pool: {e}");
            return ExitCode::from(2);
        }
    };
    let report = pool.install(|| {
        if compare {
            compare_baseline(&exp)
        } else {
            Ok(run_experiment(&exp))
        }
    });
    let report = match report {
        Ok(r) => r,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(1);
        }
    };
    if let Err(e) = write_outputs(&exp, &report, &out_dir) {
        eprintln!("error: {e}");
        return ExitCode::from(2);
    }
    for (id, msg) in &report.failures {
        eprintln!("run {id} failed: {msg}");
    }
    print!(
        "{}",
        std::fs::read_to_string(out_dir.join("summary.txt")).unwrap_or_default()
    );
    println!("wrote {}", out_dir.display());
    if report.has_failures() {
        ExitCode::from(2)
    } else {
        ExitCode::SUCCESS
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match &cli.command {
        Command::Run(o) => execute(o, false),
        Command::Compare(o) => execute(o, true),
        Command::Describe(o) => match load(o) {
            Ok(exp) => {
                print!("{}", describe(&exp));
                ExitCode::SUCCESS
            }
            Err(e) => {
                eprintln!("error: {e}");
                ExitCode::from(1)
            }
        },
    }
}
