use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use midl_cli::config::RunConfig;
use midl_cli::diagnostics::emit_diagnostics;
use midl_cli::pipeline::{self, output_root, run_dir, RunPaths};
use midl_cli::verify::run_verify;

#[derive(Parser)]
#[command(
    name = "midl",
    about = "Model-based offline RL engine with adaptive conservative value estimation",
    version
)]
struct Cli {
    /// Path to a TOML run configuration (defaults to the built-in standard config).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the seed from the config file.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output root (defaults to $MIDL_RL_RUN_DIR, then ./runs).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the offline dataset.
    GenData,
    /// Train the ensemble dynamics model on the run's dataset.
    TrainModel,
    /// Train the agent against the run's dataset and model.
    TrainAgent,
    /// Evaluate the trained policy with deterministic actions.
    Evaluate,
    /// Emit the diagnostic CSV/SVG panels.
    Plot,
    /// Run every stage end to end.
    FullRun,
    /// Machine-check one of the tabular bounds on random instances.
    Verify {
        #[arg(long)]
        theorem: u8,
        #[arg(long, default_value_t = 50)]
        instances: usize,
    },
    /// Print the default configuration.
    PrintConfig,
}

fn load_config(cli: &Cli) -> Result<RunConfig, String> {
    let mut config = match &cli.config {
        Some(path) => RunConfig::load(path).map_err(|e| format!("config: {e}"))?,
        None => RunConfig::standard(),
    };
    if let Some(seed) = cli.seed {
        config.seed = seed;
    }
    Ok(config)
}

fn run(cli: Cli) -> Result<(), String> {
    let config = load_config(&cli)?;
    let paths = RunPaths::new(run_dir(&output_root(cli.out.as_deref()), &config));
    let stage = |e: pipeline::StageError| format!("{}: {}", e.stage, e.message);
    match cli.command {
        Command::GenData => {
            paths.prepare(&config).map_err(stage)?;
            let ds = pipeline::gen_data(&config, &paths).map_err(stage)?;
            println!(
                "wrote {} transitions to {}",
                ds.len(),
                paths.dataset.display()
            );
        }
        Command::TrainModel => {
            paths.prepare(&config).map_err(stage)?;
            let ensemble = pipeline::train_model(&config, &paths).map_err(stage)?;
            println!(
                "trained {} members (elites {:?}) -> {}",
                ensemble.num_members(),
                ensemble.elites(),
                paths.model.display()
            );
        }
        Command::TrainAgent => {
            paths.prepare(&config).map_err(stage)?;
            pipeline::train_agent(&config, &paths).map_err(stage)?;
            println!(
                "trained agent for {} iterations -> {}",
                config.iterations,
                paths.agent.display()
            );
        }
        Command::Evaluate => {
            let report = pipeline::evaluate(&config, &paths).map_err(stage)?;
            println!(
                "mean return {:.4} +/- {:.4} over {} episodes",
                report.mean_return, report.std_return, report.episodes
            );
        }
        Command::Plot => {
            emit_diagnostics(&config, &paths).map_err(stage)?;
            println!("diagnostics in {}", paths.diagnostics.display());
        }
        Command::FullRun => {
            let report = pipeline::full_run(&config, &paths).map_err(stage)?;
            println!(
                "run complete: mean return {:.4} +/- {:.4}; artifacts in {}",
                report.mean_return,
                report.std_return,
                paths.dir.display()
            );
        }
        Command::Verify { theorem, instances } => {
            let mut stdout = std::io::stdout().lock();
            let passed =
                run_verify(theorem, instances, config.seed, &mut stdout).map_err(stage)?;
            eprintln!("theorem {theorem}: {passed}/{instances} instances held");
            if passed != instances {
                return Err(format!(
                    "verify: theorem {theorem} held on {passed}/{instances} instances"
                ));
            }
        }
        Command::PrintConfig => {
            print!("{}", config.to_toml());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(message) => {
            // single-line machine-parsable prefix: error[<stage>]: ...
            let (tag, rest) = message.split_once(": ").unwrap_or(("cli", message.as_str()));
            eprintln!("error[{tag}]: {rest}");
            ExitCode::FAILURE
        }
    }
}
