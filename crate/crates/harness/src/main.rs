use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use egi_core::EgiConfig;
use egi_harness::gradinf::{gradinf_report, parse_points, Target};
use egi_harness::output::json_text;
use egi_harness::{parse_config, run_experiment, Algorithm, ExperimentConfig, HarnessError, Mode, Overrides, Result};

#[derive(Parser)]
#[command(name = "egi", version, about = "Ensemble gradient inference experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Infer gradient and Hessian from a file of `x_1 ... x_d value` rows
    Gradinf {
        file: PathBuf,
        /// Row index of the reference member (default 0)
        #[arg(long, conflicts_with = "at")]
        reference: Option<usize>,
        /// External reference point, comma separated; requires --value
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true, requires = "value")]
        at: Option<Vec<f64>>,
        /// Potential value at --at
        #[arg(long, allow_hyphen_values = true, requires = "at")]
        value: Option<f64>,
        #[arg(long, default_value_t = 0.0)]
        xi: f64,
        #[arg(long, default_value_t = 1.0)]
        gamma: f64,
    },
    /// Run an optimizer config once
    Optimize(RunArgs),
    /// Run a sampler config once
    Sample(RunArgs),
    /// Run a config as a Monte Carlo batch
    Mc(RunArgs),
}

#[derive(Args)]
struct RunArgs {
    config: PathBuf,
    /// Base seed, replacing `base_seed`
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory, replacing `output_dir`
    #[arg(long)]
    out: Option<PathBuf>,
    /// Keep every n-th trace row, replacing `trace_every`
    #[arg(long)]
    trace_every: Option<usize>,
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| HarnessError::Io {
        path: path.to_path_buf(),
        source: e,
    })
}

fn load(args: &RunArgs) -> Result<ExperimentConfig> {
    let mut cfg = parse_config(&read(&args.config)?)?;
    cfg.apply(&Overrides {
        seed: args.seed,
        output_dir: args.out.clone(),
        trace_every: args.trace_every,
    })?;
    Ok(cfg)
}

fn require_kind(cfg: &ExperimentConfig, sampler: bool) -> Result<()> {
    let is_sampler = matches!(cfg.algorithm, Algorithm::Sample { .. });
    if is_sampler == sampler {
        return Ok(());
    }
    let wanted = if sampler { "a sampler" } else { "an optimizer" };
    Err(HarnessError::Validation {
        key: "algorithm".into(),
        message: format!("`{}` is not {wanted}", cfg.algorithm.name()),
    })
}

fn report(cfg: &ExperimentConfig, outcome: &egi_harness::ExperimentOutcome) {
    for (r, tv) in outcome.records.iter().zip(&outcome.marginal_tv) {
        if let Some(a) = &r.abort {
            eprintln!("run seed {} aborted at iteration {}: {}", r.seed, a.iteration, a.error);
        }
        if outcome.records.len() == 1 {
            println!("{}: {} iterations, V(mean) = {:e}", cfg.experiment_name, r.iterations, r.final_value);
            if let Some(rate) = r.accept_rate() {
                println!("acceptance rate {rate:.3}");
            }
            if let Some(tv) = tv {
                println!("x_0 marginal TV distance {tv:.4}");
            }
        }
    }
    if outcome.records.len() > 1 {
        let finals: Vec<f64> = outcome.records.iter().map(|r| r.final_value).collect();
        println!(
            "{}: {} runs, {} aborted, median V(mean) = {:e}",
            cfg.experiment_name,
            outcome.records.len(),
            outcome.aborted(),
            egi_harness::experiment::median(&finals)
        );
    }
    println!("wrote {}", cfg.output_dir.display());
}

fn run(cli: Cli) -> Result<bool> {
    match cli.command {
        Command::Gradinf {
            file,
            reference,
            at,
            value,
            xi,
            gamma,
        } => {
            let ensemble = parse_points(&read(&file)?)?;
            let target = match (at, value) {
                (Some(point), Some(value)) => Target::External { point, value },
                _ => Target::Member(reference.unwrap_or(0)),
            };
            let config = EgiConfig {
                xi,
                gamma,
                ..EgiConfig::default()
            };
            print!("{}", json_text(&gradinf_report(&ensemble, &target, &config)?));
            Ok(true)
        }
        Command::Optimize(args) => run_config(&args, Mode::Single, Some(false)),
        Command::Sample(args) => run_config(&args, Mode::Single, Some(true)),
        Command::Mc(args) => run_config(&args, Mode::MonteCarlo, None),
    }
}

/// Runs a config file; `sampler` restricts the algorithm kind when set.
fn run_config(args: &RunArgs, mode: Mode, sampler: Option<bool>) -> Result<bool> {
    let cfg = load(args)?;
    if let Some(sampler) = sampler {
        require_kind(&cfg, sampler)?;
    }
    let outcome = run_experiment(&cfg, mode)?;
    report(&cfg, &outcome);
    Ok(outcome.aborted() == 0)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            // usage errors are bad input; --help and --version are not errors
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
