use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use ecppdm::config::{ConfigError, PipelineConfig, Settings};
use ecppdm::pipeline::{self, PipelineError};

const EXIT_CONFIG: u8 = 2;
const EXIT_TRANSPORT: u8 = 3;
const EXIT_STAGE: u8 = 4;

/// Encrypted collection, perturbation and rule mining of distributed records.
#[derive(Debug, Parser)]
#[command(name = "ecppdm", version)]
struct Cli {
    /// Pipeline configuration (TOML). Built-in defaults when omitted.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Overrides the configured seed.
    #[arg(long, global = true, value_name = "N")]
    seed: Option<u64>,
    /// Overrides the configured output directory.
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate the warehouse key pair.
    Keygen,
    /// Encrypt and transmit source data.
    Send {
        /// Source to send; every configured source when omitted.
        #[arg(long, value_name = "ID")]
        source: Option<String>,
    },
    /// Collect and decrypt arrived batches into the staging area.
    Receive,
    /// Merge and clean the staged data.
    Etl,
    /// Perturb the cleaned data.
    Perturb,
    /// Mine original and perturbed data and write the report.
    Mine,
    /// Run every stage in order.
    Pipeline,
    /// Print the last report.
    Report,
}

enum Failure {
    Config(ConfigError),
    Stage(PipelineError),
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        Failure::Config(e)
    }
}

impl From<PipelineError> for Failure {
    fn from(e: PipelineError) -> Self {
        Failure::Stage(e)
    }
}

fn settings(cli: &Cli) -> Result<Settings, ConfigError> {
    let mut config = match &cli.config {
        Some(path) => PipelineConfig::load(path)?,
        None => PipelineConfig::default(),
    };
    if let Some(seed) = cli.seed {
        config.seed = seed;
    }
    if let Some(out) = &cli.out {
        config.output.dir = out.clone();
    }
    config.validate()
}

fn run(cli: &Cli) -> Result<(), Failure> {
    let s = settings(cli)?;
    match &cli.command {
        Command::Keygen => {
            let keys = pipeline::keygen(&s)?;
            println!("public key: {}", keys.public_point());
        }
        Command::Send { source } => {
            let ids: Vec<&str> = match source {
                Some(id) => vec![id.as_str()],
                None => s.sources.iter().map(|(id, _)| id.as_str()).collect(),
            };
            for id in ids {
                pipeline::send(&s, id)?;
                println!("sent {id}");
            }
        }
        Command::Receive => {
            let summary = pipeline::receive(&s)?;
            if summary.staged.is_empty() {
                eprintln!("warning: no batches arrived; staging is empty");
            }
            for (id, rows) in &summary.staged {
                println!("staged {id}: {rows} rows");
            }
        }
        Command::Etl => {
            let (data, report) = pipeline::etl(&s)?;
            println!("{report}");
            println!("warehouse: {} rows", data.len());
        }
        Command::Perturb => {
            let data = pipeline::perturb(&s)?;
            println!("perturbed {} rows ({})", data.len(), s.noise_description());
        }
        Command::Mine => print!("{}", pipeline::mine(&s)?.report),
        Command::Report => print!("{}", pipeline::report(&s)?),
        Command::Pipeline => {
            let outcome = pipeline::run_pipeline(&s)?;
            for (id, rows) in &outcome.received.staged {
                println!("staged {id}: {rows} rows");
            }
            println!("{}", outcome.cleaning);
            print!("{}", outcome.report);
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(e)) => {
            eprintln!("error: config: {e}");
            ExitCode::from(EXIT_CONFIG)
        }
        Err(Failure::Stage(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_transport() { EXIT_TRANSPORT } else { EXIT_STAGE })
        }
    }
}
