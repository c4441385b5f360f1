use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use pacopt::experiments::{self, run_experiment, run_learn, run_verify, ExperimentId, OutputFile, Provenance, RunConfig, RunSetup};
use pacopt::problems::Dataset;
use pacopt::Error;

const DEFAULT_OUT_DIR: &str = "pacopt-out";

#[derive(Parser)]
#[command(name = "pacopt", version, about = "PAC-Bayes learning of optimizer hyperparameters")]
struct Cli {
    /// Directory for result files.
    #[arg(long, global = true, env = "PACOPT_OUT_DIR")]
    out_dir: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct RunArgs {
    /// TOML run configuration.
    #[arg(long)]
    config: PathBuf,
    /// Dataset file written by `gen`; generated from the config when absent.
    #[arg(long)]
    dataset: Option<PathBuf>,
    /// Overrides the master seed of the config.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the dataset described by a config.
    Gen {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Learn a posterior and report the bound.
    Learn(RunArgs),
    /// Run one of the experiments.
    Exp {
        #[arg(value_parser = ["posterior-convergence", "conditioning", "conv-prob", "pac-bound"])]
        experiment: String,
        #[command(flatten)]
        args: RunArgs,
    },
    /// Run the Monte Carlo and variational oracles.
    Verify {
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

enum Failure {
    Lib(Error),
    Verify(usize),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Lib(e)
    }
}

fn load_config(args: &RunArgs) -> Result<RunConfig, Error> {
    let mut cfg = RunConfig::read(&args.config)?;
    if let Some(s) = args.seed {
        cfg.seed = s;
    }
    Ok(cfg)
}

fn out_dir(cli: &Option<PathBuf>, cfg: Option<&RunConfig>) -> PathBuf {
    cli.clone()
        .or_else(|| cfg.and_then(|c| c.output_dir.clone()).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT_DIR))
}

fn setup(args: &RunArgs) -> Result<RunSetup, Error> {
    let cfg = load_config(args)?;
    let dataset = args.dataset.as_deref().map(Dataset::read).transpose()?;
    RunSetup::new(&cfg, dataset)
}

fn emit(dir: &Path, files: &[OutputFile]) -> Result<(), Error> {
    for p in experiments::write_all(dir, files)? {
        println!("wrote {}", p.display());
    }
    Ok(())
}

fn run(cli: Cli) -> Result<(), Failure> {
    match &cli.command {
        Command::Gen { config, out, seed } => {
            let mut cfg = RunConfig::read(config)?;
            if let Some(s) = seed {
                cfg.seed = *s;
            }
            let ds = experiments::generate(&cfg)?;
            if let Some(parent) = out.parent().filter(|p| !p.as_os_str().is_empty()) {
                std::fs::create_dir_all(parent).map_err(Error::from)?;
            }
            ds.write(out)?;
            println!("wrote {}", out.display());
        }
        Command::Learn(args) => {
            let s = setup(args)?;
            let (outcome, files) = run_learn(&s)?;
            println!(
                "lambda_star={} bound={} argmax={}",
                outcome.result.lambda_star, outcome.result.bound, outcome.result.argmax_particle
            );
            emit(&out_dir(&cli.out_dir, Some(&s.config)), &files)?;
        }
        Command::Exp { experiment, args } => {
            let id = ExperimentId::parse(experiment)?;
            let s = setup(args)?;
            let files = run_experiment(id, &s)?;
            emit(&out_dir(&cli.out_dir, Some(&s.config)), &files)?;
        }
        Command::Verify { seed } => {
            let prov = Provenance {
                config_hash: "none".into(),
                seed: *seed,
            };
            let report = run_verify(*seed, &prov)?;
            for c in &report.checks {
                println!(
                    "{} {} value={:e} threshold={:e}",
                    if c.pass { "PASS" } else { "FAIL" },
                    c.name,
                    c.value,
                    c.threshold
                );
            }
            emit(&out_dir(&cli.out_dir, None), &report.files)?;
            let failed = report.checks.iter().filter(|c| !c.pass).count();
            if failed > 0 {
                return Err(Failure::Verify(failed));
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if !e.use_stderr() => {
            print!("{e}");
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let msg = e.to_string();
            let first = msg.lines().next().unwrap_or("").trim_start_matches("error: ");
            eprintln!("error kind=usage message={first:?}");
            return ExitCode::from(2);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Lib(e)) => {
            eprintln!("error kind={} message={:?}", e.kind(), e.to_string());
            ExitCode::from(1)
        }
        Err(Failure::Verify(n)) => {
            eprintln!("error kind=verification-failed message={:?}", format!("{n} checks failed"));
            ExitCode::from(1)
        }
    }
}
