use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use hcnsim::harness::{
    self, brute_force_oracle, emit_plotdata, run_experiment, ExperimentKind, ExperimentSpec,
    RunMode,
};
use hcnsim::model::generate_scenario;

/// Two-tier OFDMA network resource-allocation simulator.
#[derive(Parser)]
#[command(name = "hcnsim", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment sweep and write its CSV.
    Run {
        /// Experiment kind: ee_vs_rate, convergence, alpha_trace,
        /// cnr_sweep, subcarrier_sweep, cell_sweep, oracle_compare.
        #[arg(long)]
        experiment: String,
        /// Flat key=value config file.
        #[arg(long)]
        config: PathBuf,
        /// Output CSV path.
        #[arg(long)]
        out: PathBuf,
        /// Comma-separated seed list; overrides the config.
        #[arg(long, value_delimiter = ',')]
        seeds: Option<Vec<u64>>,
        /// Strategy selection: underlay, overlay, or both.
        #[arg(long)]
        mode: Option<String>,
    },
    /// Exhaustive verification oracle on a tiny instance.
    Oracle {
        #[arg(long)]
        config: PathBuf,
        /// Power quantization steps per subcarrier.
        #[arg(long, default_value_t = 32)]
        grid_steps: usize,
        /// Scenario seed.
        #[arg(long, default_value_t = 1)]
        seed: u64,
    },
    /// Split an experiment CSV into gnuplot series files.
    Plotdata {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        outdir: PathBuf,
    },
    /// Generate a scenario and dump its portable text form.
    Scenario {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

fn run(cli: Cli) -> hcnsim::Result<()> {
    match cli.command {
        Command::Run {
            experiment,
            config,
            out,
            seeds,
            mode,
        } => {
            let kind = ExperimentKind::parse(&experiment)?;
            let cfg = harness::parse_config(&std::fs::read_to_string(config)?)?;
            let mode = match mode {
                Some(m) => RunMode::parse(&m)?,
                None => cfg.mode.unwrap_or(RunMode::Both),
            };
            let spec = ExperimentSpec {
                kind,
                params: cfg.params,
                seeds: seeds.or(cfg.seeds).unwrap_or_else(|| (1..=5).collect()),
                grid: cfg.grid,
                mode,
                solver: cfg.solver,
                oracle_grid_steps: cfg.oracle_grid_steps,
            };
            let csv = run_experiment(&spec)?;
            std::fs::write(&out, csv)?;
            println!("wrote {}", out.display());
            Ok(())
        }
        Command::Oracle {
            config,
            grid_steps,
            seed,
        } => {
            let cfg = harness::parse_config(&std::fs::read_to_string(config)?)?;
            let scenario = generate_scenario(seed, &cfg.params)?;
            let result = brute_force_oracle(&scenario, grid_steps)?;
            println!("search_space: {}", result.search_space);
            println!("feasible_points: {}", result.feasible_points);
            println!("best_ee_bits_per_joule: {:.9e}", result.ee_bits_per_joule);
            println!("best_total_tx_w: {:.9e}", result.power.total());
            Ok(())
        }
        Command::Plotdata { input, outdir } => {
            let csv = std::fs::read_to_string(input)?;
            let files = emit_plotdata(&csv, &outdir)?;
            for f in files {
                println!("wrote {}", f.display());
            }
            Ok(())
        }
        Command::Scenario { config, seed, out } => {
            let cfg = harness::parse_config(&std::fs::read_to_string(config)?)?;
            let scenario = generate_scenario(seed, &cfg.params)?;
            std::fs::write(&out, scenario.to_text())?;
            println!("wrote {}", out.display());
            Ok(())
        }
    }
}
