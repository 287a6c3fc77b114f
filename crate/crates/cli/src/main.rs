use std::path::{Path, PathBuf};
use std::process::ExitCode;

use bgo_cli::experiment::output_root;
use bgo_cli::{run_experiment, ExperimentConfig};
use bgo_core::benchmarks::{oracle_optimum, Benchmark};
use clap::{Parser, Subcommand};

const EXIT_CONFIG: u8 = 1;
const EXIT_RUNTIME: u8 = 2;

#[derive(Parser)]
#[command(
    name = "bgo",
    version,
    about = "Bayesian global optimization of noisy objectives"
)]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run every seed of an experiment config.
    Run { config: PathBuf },
    /// Parse and validate a config without running it.
    Validate { config: PathBuf },
    /// Print the optimum of a built-in benchmark (`synth1d` or `synth2d`).
    Oracle { benchmark: String },
}

fn load(path: &Path) -> Result<ExperimentConfig, ExitCode> {
    ExperimentConfig::from_file(path).map_err(|e| {
        eprintln!("error: {e}");
        ExitCode::from(EXIT_CONFIG)
    })
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match cli.command {
        Cmd::Validate { config } => match load(&config) {
            Ok(_) => {
                println!("{}: ok", config.display());
                ExitCode::SUCCESS
            }
            Err(code) => code,
        },
        Cmd::Oracle { benchmark } => {
            let b: Benchmark = match benchmark.parse() {
                Ok(b) => b,
                Err(e) => {
                    eprintln!("error: {e}");
                    return ExitCode::from(EXIT_CONFIG);
                }
            };
            let opt = oracle_optimum(b);
            println!(
                "{}",
                serde_json::to_string_pretty(&opt).expect("serializable")
            );
            ExitCode::SUCCESS
        }
        Cmd::Run { config } => {
            let cfg = match load(&config) {
                Ok(c) => c,
                Err(code) => return code,
            };
            let root = output_root(&cfg);
            match run_experiment(&cfg, &root) {
                Ok(outcomes) => {
                    let mut ok = true;
                    for o in &outcomes {
                        let s = &o.summary;
                        println!(
                            "seed {}: {:?}, {} new evaluations, pboo {:?}, x_best {:?} -> {}",
                            o.seed,
                            s.status,
                            s.new_evaluations,
                            s.final_pboo,
                            s.recommendation
                                .as_ref()
                                .map(|r| r.x_best.coords().to_vec()),
                            o.dir.display()
                        );
                        ok &= s.status.is_success();
                    }
                    if ok {
                        ExitCode::SUCCESS
                    } else {
                        ExitCode::from(EXIT_RUNTIME)
                    }
                }
                Err(e) => {
                    eprintln!("error: {e}");
                    ExitCode::from(EXIT_RUNTIME)
                }
            }
        }
    }
}
