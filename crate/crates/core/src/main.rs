use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use dynshield::harness::{self, Algorithm, ExperimentConfig, HarnessError, RunOptions};

#[derive(Parser)]
#[command(name = "dynshield", version, about = "Shielded multi-agent Q-learning experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train with the configured shielding and write metrics.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Overrides `algorithm` from the config.
        #[arg(long)]
        algorithm: Option<Algorithm>,
        /// Runs this single seed instead of the configured ones.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value = "out")]
        out: PathBuf,
        /// Write the games of shields synthesized in the first episode.
        #[arg(long)]
        dump_game: bool,
        /// Write the specification monitor as Graphviz.
        #[arg(long)]
        dump_automata: bool,
    },
    /// Greedy evaluation of stored Q-tables.
    Eval {
        /// Directory holding `qtable_agent<i>.csv`.
        #[arg(long)]
        qtables: PathBuf,
        #[arg(long)]
        config: PathBuf,
    },
}

fn load(path: &Path) -> Result<ExperimentConfig, HarnessError> {
    Ok(ExperimentConfig::load(path)?)
}

fn run(cli: Cli) -> Result<ExitCode, HarnessError> {
    match cli.command {
        Command::Run { config, algorithm, seed, out, dump_game, dump_automata } => {
            let mut cfg = load(&config)?;
            if let Some(a) = algorithm {
                cfg.algorithm = a;
            }
            if let Some(s) = seed {
                cfg.seeds = vec![s];
            }
            let opts = RunOptions { out: Some(out), dump_game, dump_automata };
            let result = harness::run_experiment(&cfg, &opts)?;
            let s = &result.summary;
            println!(
                "{} on {}: collisions {} safety_rate {:.4} max_reward {:.2} min_steps {:.1} unsafe_starts {} label_mismatches {}",
                s.algorithm,
                s.map,
                s.collisions(),
                s.safety_rate.mean,
                s.max_reward.mean,
                s.min_steps.mean,
                s.unsafe_starts,
                s.label_mismatches,
            );
            Ok(if s.aborts() > 0 { ExitCode::from(3) } else { ExitCode::SUCCESS })
        }
        Command::Eval { qtables, config } => {
            let cfg = load(&config)?;
            let report = harness::evaluate(&cfg, &qtables)?;
            harness::print_json(std::io::stdout().lock(), &report)
                .map_err(|e| HarnessError::Io { path: "stdout".into(), message: e.to_string() })?;
            Ok(if report.aborts > 0 { ExitCode::from(3) } else { ExitCode::SUCCESS })
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
