use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use herald_cli::{cmd_fit, cmd_hbt, cmd_homodyne, cmd_simulate, CliError, FitArgs, HbtArgs};
use herald_core::EnvelopeKind;

#[derive(Parser)]
#[command(name = "herald", version, about = "Heralded single-photon simulation and analysis")]
struct Cli {
    /// Worker threads (default: all cores). Results do not depend on it.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate source and detectors, write a tag file.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Heralded g2 of a three-channel tag file.
    Hbt {
        #[arg(long)]
        tags: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// Bin width in ns.
        #[arg(long)]
        bins: Option<f64>,
        /// Coincidence window Tc in ns.
        #[arg(long)]
        window_ns: Option<f64>,
        /// Half-width of the delay axis in ns.
        #[arg(long)]
        range_ns: Option<f64>,
        #[arg(long, allow_hyphen_values = true)]
        herald_shift_ns: Option<f64>,
    },
    /// Homodyne variance envelope and its exponential fit.
    Homodyne {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        /// Also write the synthesized traces.
        #[arg(long)]
        store_traces: bool,
    },
    /// Fit an exported envelope CSV.
    Fit {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        model: Option<EnvelopeKind>,
        /// `free` or a fixed edge time in ns.
        #[arg(long, allow_hyphen_values = true)]
        t0: Option<String>,
        /// `free` or a fixed baseline.
        #[arg(long, allow_hyphen_values = true)]
        baseline: Option<String>,
        #[arg(long)]
        edge_skip_ns: Option<f64>,
    },
}

fn free_or_value(flag: &str, v: Option<String>) -> Result<Option<Option<f64>>, CliError> {
    match v.as_deref() {
        None => Ok(None),
        Some("free") => Ok(Some(None)),
        Some(s) => s
            .parse::<f64>()
            .map(|x| Some(Some(x)))
            .map_err(|_| CliError::Config(format!("--{flag} expects `free` or a number, got `{s}`"))),
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Simulate { config, seed, out } => cmd_simulate(&config, seed, &out),
        Command::Hbt {
            tags,
            config,
            out,
            bins,
            window_ns,
            range_ns,
            herald_shift_ns,
        } => {
            let r = cmd_hbt(&HbtArgs {
                tags,
                config,
                out,
                bins,
                window_ns,
                range_ns,
                herald_shift_ns,
            })?;
            print!("{}", r.summary());
            Ok(())
        }
        Command::Homodyne {
            config,
            seed,
            out,
            store_traces,
        } => {
            let r = cmd_homodyne(&config, seed, &out, store_traces)?;
            print!("{}", herald_core::tagio::fit_report(&r.fit));
            Ok(())
        }
        Command::Fit {
            input,
            config,
            out,
            model,
            t0,
            baseline,
            edge_skip_ns,
        } => {
            let r = cmd_fit(&FitArgs {
                input,
                config,
                out,
                model,
                t0: free_or_value("t0", t0)?,
                baseline: free_or_value("baseline", baseline)?,
                edge_skip_ns,
            })?;
            print!("{}", herald_core::tagio::fit_report(&r));
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("herald: cannot start {n} threads: {e}");
            return ExitCode::from(2);
        }
    }
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("herald: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
