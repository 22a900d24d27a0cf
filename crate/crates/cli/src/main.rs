use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use mvi_core::experiment::{
    cmd_compare, cmd_generate, cmd_panel, cmd_recover, cmd_theory_check, cmd_train, output_dir, summary_csv,
    ExperimentConfig, ExperimentKind, RunResult,
};
use mvi_core::Error;

const EXIT_USAGE: u8 = 1;
const EXIT_NUMERIC: u8 = 2;
const EXIT_THEORY: u8 = 3;

/// Train graph neural networks by monotone variational inequalities and run
/// the comparison studies.
#[derive(Parser, Debug)]
#[command(name = "mvi", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Write the datasets (and teachers) of every setting and seed.
    Generate(Common),
    /// Train the configured method on every setting and seed.
    Train(Common),
    /// Train SVI and SGD on identical data, initialisation and batches.
    Compare(Common),
    /// Graph-model recovery with known and perturbed graphs.
    Recover(Common),
    /// Lagged-feature panel classification.
    Panel(Common),
    /// Run the battery of empirical theory checks.
    TheoryCheck(Common),
}

#[derive(Args, Debug)]
struct Common {
    /// TOML experiment config; missing keys take the experiment's preset.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Comma-separated seeds overriding the config, e.g. `0,1,2`.
    #[arg(long, value_delimiter = ',')]
    seed_list: Option<Vec<u64>>,
    /// Output directory overriding the config's `output_dir`.
    #[arg(long)]
    out: Option<PathBuf>,
}

enum Failure {
    Core(Error),
    Theory,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Core(e)
    }
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::NonFinite(_) | Error::ModulusTooSmall(_) | Error::DerivativeBoundUnavailable(_) => EXIT_NUMERIC,
        _ => EXIT_USAGE,
    }
}

/// Loads the config (or the preset when none is given) and applies the
/// command-line overrides. Returns the config and the directory its data
/// paths resolve against; outputs resolve against the working directory.
fn resolve(common: &Common, default: Option<ExperimentKind>) -> Result<(ExperimentConfig, PathBuf), Error> {
    let (mut cfg, base) = match (&common.config, default) {
        (Some(path), _) => {
            let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
            (ExperimentConfig::load(path)?, base)
        }
        (None, Some(kind)) => (ExperimentConfig::preset(kind), PathBuf::from(".")),
        (None, None) => return Err(Error::config("config", "this command needs --config <path>")),
    };
    if let Some(seeds) = &common.seed_list {
        cfg.seeds = seeds.clone();
    }
    cfg.validate()?;
    Ok((cfg, base))
}

fn print_runs(results: &[RunResult], out: &Path) {
    print!("{}", summary_csv(results));
    eprintln!("wrote {} runs to {}", results.len(), out.display());
}

fn run(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Generate(c) => {
            let (cfg, base) = resolve(&c, None)?;
            let out = output_dir(&cfg, c.out.as_deref(), Path::new("."));
            let manifest = cmd_generate(&cfg, &out, &base)?;
            println!("{}", serde_json::to_string_pretty(&manifest).expect("manifest serializes"));
        }
        Command::Train(c) => {
            let (cfg, base) = resolve(&c, None)?;
            let out = output_dir(&cfg, c.out.as_deref(), Path::new("."));
            print_runs(&cmd_train(&cfg, &out, &base)?, &out);
        }
        Command::Compare(c) => {
            let (cfg, base) = resolve(&c, None)?;
            let out = output_dir(&cfg, c.out.as_deref(), Path::new("."));
            print_runs(&cmd_compare(&cfg, &out, &base)?, &out);
        }
        Command::Recover(c) => {
            let (cfg, base) = resolve(&c, Some(ExperimentKind::GcnRecover))?;
            let out = output_dir(&cfg, c.out.as_deref(), Path::new("."));
            print_runs(&cmd_recover(&cfg, &out, &base)?, &out);
        }
        Command::Panel(c) => {
            let (cfg, base) = resolve(&c, Some(ExperimentKind::Panel))?;
            let out = output_dir(&cfg, c.out.as_deref(), Path::new("."));
            print_runs(&cmd_panel(&cfg, &out, &base)?, &out);
        }
        Command::TheoryCheck(c) => {
            let (cfg, _) = resolve(&c, Some(ExperimentKind::TheoryCheck))?;
            let out = output_dir(&cfg, c.out.as_deref(), Path::new("."));
            let report = cmd_theory_check(&cfg, &out)?;
            print!("{}", report.summary());
            eprintln!("report written to {}", out.join("theory_report.json").display());
            if !report.passed() {
                return Err(Failure::Theory);
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(EXIT_USAGE)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Core(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
        Err(Failure::Theory) => {
            eprintln!("error: theory checks failed");
            ExitCode::from(EXIT_THEORY)
        }
    }
}
