//! Configuration-driven front end for the multibeam uplink simulator:
//! `simulate` runs seeded BER sweeps to CSV, `validate` runs the fast
//! self-check suite, `info` prints the fully resolved configuration.

mod config;
mod validate;

use clap::{Parser, Subcommand};
use sicsim_core::montecarlo::{sweep, BerRecord};

use config::RunConfig;

/// Failure modes with distinct exit codes: config errors exit 2, I/O
/// errors exit 3, failed validation checks exit 1.
#[derive(Debug)]
pub enum CliError {
    Config(String),
    Io(String),
    ChecksFailed,
}

impl CliError {
    fn exit_code(&self) -> i32 {
        match self {
            CliError::ChecksFailed => 1,
            CliError::Config(_) => 2,
            CliError::Io(_) => 3,
        }
    }
}

#[derive(Parser)]
#[command(name = "sicsim", version, about = "Multibeam satellite uplink link-level simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the configured Eb/N0 sweep and write a BER CSV.
    Simulate {
        /// TOML configuration file; defaults reproduce the 5-user
        /// reference scenario.
        #[arg(short, long)]
        config: Option<String>,
        /// Dotted-key overrides, e.g. `detector.decoder=bcjr`.
        #[arg(value_name = "KEY=VALUE")]
        overrides: Vec<String>,
        /// Worker threads; results are identical at any count.
        #[arg(long)]
        workers: Option<usize>,
    },
    /// Run the fast self-check suite.
    Validate {
        #[arg(long)]
        workers: Option<usize>,
    },
    /// Print the resolved configuration.
    Info {
        #[arg(short, long)]
        config: Option<String>,
        #[arg(value_name = "KEY=VALUE")]
        overrides: Vec<String>,
    },
}

fn main() {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Simulate {
            config,
            overrides,
            workers,
        } => cmd_simulate(config.as_deref(), &overrides, resolve_workers(workers)),
        Command::Validate { workers } => cmd_validate(resolve_workers(workers)),
        Command::Info { config, overrides } => cmd_info(config.as_deref(), &overrides),
    };
    if let Err(e) = result {
        match &e {
            CliError::Config(msg) | CliError::Io(msg) => eprintln!("error: {msg}"),
            CliError::ChecksFailed => {}
        }
        std::process::exit(e.exit_code());
    }
}

fn resolve_workers(flag: Option<usize>) -> usize {
    flag.unwrap_or_else(|| {
        std::thread::available_parallelism()
            .map(|n| n.get())
            .unwrap_or(1)
    })
}

fn cmd_simulate(
    config_path: Option<&str>,
    overrides: &[String],
    workers: usize,
) -> Result<(), CliError> {
    let config = RunConfig::load(config_path, overrides)?;
    let scenario = config.to_scenario()?;
    let records = sweep(&scenario, &config.sweep.ebno_db, &config.stop_rule(), workers)
        .map_err(|e| CliError::Config(e.to_string()))?;
    let csv = render_csv(&records);
    std::fs::write(&config.output.csv_path, csv).map_err(|e| {
        CliError::Io(format!("cannot write {}: {e}", config.output.csv_path))
    })?;
    for r in &records {
        println!(
            "Eb/N0 {} dB stage {} [{}, combining {}]: ber {} ({} errors / {} bits, {} frames){}",
            r.ebno_db,
            r.stage,
            r.decoder,
            if r.combining { "on" } else { "off" },
            format_ber(r.ber),
            r.bit_errors,
            r.bits,
            r.frames,
            if r.low_confidence { " [low confidence]" } else { "" },
        );
    }
    println!("wrote {}", config.output.csv_path);
    Ok(())
}

/// BER with 6 significant digits in scientific notation.
fn format_ber(ber: f64) -> String {
    format!("{ber:.5e}")
}

fn render_csv(records: &[BerRecord]) -> String {
    let mut out = String::from("ebno_db,stage,decoder,combining,frames,bits,bit_errors,ber,low_confidence\n");
    for r in records {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{}\n",
            r.ebno_db,
            r.stage,
            r.decoder,
            r.combining,
            r.frames,
            r.bits,
            r.bit_errors,
            format_ber(r.ber),
            r.low_confidence,
        ));
    }
    out
}

fn cmd_validate(workers: usize) -> Result<(), CliError> {
    if validate::run_all(workers) {
        Ok(())
    } else {
        Err(CliError::ChecksFailed)
    }
}

fn cmd_info(config_path: Option<&str>, overrides: &[String]) -> Result<(), CliError> {
    let config = RunConfig::load(config_path, overrides)?;
    // Surface enum/value errors now rather than at simulate time.
    config.to_scenario()?;
    let text = toml::to_string_pretty(&config)
        .map_err(|e| CliError::Config(format!("cannot render config: {e}")))?;
    print!("{text}");
    Ok(())
}
