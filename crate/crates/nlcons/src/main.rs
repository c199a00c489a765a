use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use log::{error, LevelFilter};
use nlcons::graphgen::{generate_random_graph, write_graph_file, GraphFile, RandomGraphParams, Requirement};
use nlcons::run::EXIT_USAGE;
use nlcons::{run_scenario, Overrides, RunOptions};

#[derive(Debug, Parser)]
#[command(name = "nlcons", version, about = "Simulate and check discontinuous consensus dynamics")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run a scenario file (.json or .toml).
    Run {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long)]
        dt: Option<f64>,
        #[arg(long = "t-end")]
        t_end: Option<f64>,
        /// Seed for random initial states and random graphs.
        #[arg(long)]
        seed: Option<u64>,
        /// Base directory of output files (default: the scenario's directory).
        #[arg(long = "out-dir")]
        out_dir: Option<PathBuf>,
        #[arg(long)]
        quiet: bool,
    },
    /// Write a seeded random digraph to a graph file.
    GenGraph {
        #[arg(long)]
        n: usize,
        #[arg(long)]
        p: f64,
        #[arg(long = "weight-low", default_value_t = 1.0)]
        weight_low: f64,
        #[arg(long = "weight-high", default_value_t = 1.0)]
        weight_high: f64,
        #[arg(long)]
        seed: u64,
        #[arg(long, value_enum, default_value_t = Requirement::None)]
        require: Requirement,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        quiet: bool,
    },
}

fn init_logging(quiet: bool) {
    let level = if quiet { LevelFilter::Error } else { LevelFilter::Info };
    env_logger::Builder::new()
        .filter_level(level)
        .format_timestamp(None)
        .format_target(false)
        .init();
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { EXIT_USAGE as u8 } else { 0 });
        }
    };
    let code = match cli.command {
        Command::Run {
            scenario,
            dt,
            t_end,
            seed,
            out_dir,
            quiet,
        } => {
            init_logging(quiet);
            let opts = RunOptions {
                overrides: Overrides { dt, t_end, seed },
                out_dir,
            };
            match run_scenario(&scenario, &opts) {
                Ok(outcome) => outcome.exit_code,
                Err(e) => {
                    error!("{e}");
                    e.exit_code()
                }
            }
        }
        Command::GenGraph {
            n,
            p,
            weight_low,
            weight_high,
            seed,
            require,
            out,
            quiet,
        } => {
            init_logging(quiet);
            let params = RandomGraphParams {
                n,
                p,
                weight_low,
                weight_high,
                seed,
                require,
            };
            let result = generate_random_graph(&params)
                .map_err(|e| e.to_string())
                .and_then(|g| write_graph_file(&out, &GraphFile::from(&g)).map_err(|e| e.to_string()));
            match result {
                Ok(()) => 0,
                Err(e) => {
                    error!("{e}");
                    EXIT_USAGE
                }
            }
        }
    };
    ExitCode::from(code as u8)
}
