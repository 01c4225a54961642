//! The `sislab` binary: a thin argument-parsing shell around the library
//! entry point. Errors leave as one machine-readable JSON record on stderr
//! and a stable exit code.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use sislab_cli::{CliError, Command, ExportFormat, Overrides, RunConfig};

#[derive(Parser)]
#[command(
    name = "sislab",
    version,
    about = "Analyze, decompose, dualize and verify shift-invariant generator systems"
)]
struct Cli {
    /// JSON configuration file; flags override its fields.
    #[arg(long, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Where reports are written; beats SISLAB_OUTPUT_DIR and the config.
    #[arg(long, value_name = "DIR")]
    output_dir: Option<PathBuf>,
    /// Seed of every randomized check.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads; 0 uses one per core.
    #[arg(long)]
    threads: Option<usize>,
    /// Relative rank tolerance for eigenvalue counting, in (0, 1).
    #[arg(long)]
    eps_rank: Option<f64>,
    /// Smoothness indices, comma separated.
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
    s: Option<Vec<f64>>,
    /// Generator descriptors, comma separated, e.g. shannon,bspline(1).
    #[arg(long, value_delimiter = ',')]
    generators: Option<Vec<String>>,
    /// Grid resolution per axis.
    #[arg(long)]
    m: Option<usize>,
    /// Frequency-window cutoff per axis.
    #[arg(long)]
    k: Option<usize>,
    #[command(subcommand)]
    command: Option<Verb>,
}

#[derive(Subcommand)]
enum Verb {
    /// Classify every configured system and write analysis reports.
    Analyze,
    /// Orthonormalize the systems; write dimension fields and principal
    /// generators.
    Decompose,
    /// Build canonical dual generators and reconstruction reports.
    Dualize,
    /// Run the named invariant suite and write verify.json.
    Verify,
    /// Re-emit existing reports in canonical, byte-stable form.
    Export {
        #[arg(value_enum, default_value_t = Format::Json)]
        format: Format,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Json,
    Csv,
}

fn commands_for(cli_verb: Option<Verb>, cfg: &RunConfig) -> Result<Vec<Command>, CliError> {
    match cli_verb {
        Some(Verb::Analyze) => Ok(vec![Command::Analyze]),
        Some(Verb::Decompose) => Ok(vec![Command::Decompose]),
        Some(Verb::Dualize) => Ok(vec![Command::Dualize]),
        Some(Verb::Verify) => Ok(vec![Command::Verify]),
        Some(Verb::Export { format }) => Ok(vec![Command::Export(match format {
            Format::Json => ExportFormat::Json,
            Format::Csv => ExportFormat::Csv,
        })]),
        None => cfg.commands.iter().map(|c| sislab_cli::parse_command(c)).collect(),
    }
}

fn drive(cli: Cli) -> Result<String, CliError> {
    let mut cfg = RunConfig::load(cli.config.as_deref())?;
    cfg.apply(&Overrides {
        generators: cli.generators,
        s_list: cli.s,
        m: cli.m,
        k: cli.k,
        eps_rank: cli.eps_rank,
        seed: cli.seed,
        threads: cli.threads,
        output_dir: cli.output_dir,
        env_output_dir: std::env::var_os("SISLAB_OUTPUT_DIR").map(PathBuf::from),
    });
    let commands = commands_for(cli.command, &cfg)?;
    let mut log = String::new();
    let outcome = sislab_cli::run(&cfg, &commands, &mut log);
    print!("{log}");
    outcome.map(|()| String::new())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                print!("{e}");
                return ExitCode::SUCCESS;
            }
            let err = CliError::Usage(e.to_string());
            eprintln!("{}", err.to_json());
            return ExitCode::from(err.exit_code() as u8);
        }
    };
    match drive(cli) {
        Ok(_) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", e.to_json());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
