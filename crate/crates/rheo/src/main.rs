use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use rheo::commands::{cmd_eval, cmd_generate, cmd_train};
use rheo::config::{self, Overrides, RunConfig};
use rheo::{dataset_csv, CliError};

/// Infer neural effective viscosities from synthetic flow data.
#[derive(Parser)]
#[command(name = "rheo", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// TOML run configuration; flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Solve a parameter sweep with the truth rheology and sample a dataset.
    Generate {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_parser = ["landice", "seaice"])]
        family: Option<String>,
        #[arg(long)]
        sigma_s: Option<f64>,
        #[arg(long)]
        sigma_v: Option<f64>,
    },
    /// Fit a network to a dataset.
    Train {
        #[command(flatten)]
        common: Common,
        /// Dataset CSV.
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long, value_parser = ["stress", "velocity"])]
        loss: Option<String>,
        #[arg(long)]
        beta1: Option<f64>,
        #[arg(long)]
        beta2: Option<f64>,
        #[arg(long)]
        max_evals: Option<usize>,
        #[arg(long, value_parser = ["lbfgs", "adam"])]
        optimizer: Option<String>,
    },
    /// Compare a trained model with the truth and export curves.
    Eval {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        model: Option<PathBuf>,
        /// Dataset whose states are re-solved.
        #[arg(long)]
        data: Option<PathBuf>,
    },
}

fn load(common: &Common) -> Result<RunConfig, CliError> {
    common
        .config
        .as_deref()
        .map_or(Ok(RunConfig::default()), RunConfig::load)
}

fn set_threads() -> Result<(), CliError> {
    let Ok(v) = std::env::var("RHEO_THREADS") else {
        return Ok(());
    };
    let n: usize = v.parse().ok().filter(|n| *n > 0).ok_or_else(|| {
        CliError::Usage(format!(
            "RHEO_THREADS must be a positive integer, got `{v}`"
        ))
    })?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| CliError::Usage(format!("cannot size thread pool: {e}")))
}

fn run(cli: Cli) -> Result<(), CliError> {
    set_threads()?;
    match cli.command {
        Command::Generate {
            common,
            family,
            sigma_s,
            sigma_v,
        } => {
            let cfg = load(&common)?;
            let o = Overrides {
                out: common.out,
                seed: common.seed,
                family,
                sigma_s,
                sigma_v,
                ..Default::default()
            };
            let s = config::resolve_generate(&cfg, &o)?;
            let path = cmd_generate(&s)?;
            println!("wrote {}", path.display());
        }
        Command::Train {
            common,
            data,
            loss,
            beta1,
            beta2,
            max_evals,
            optimizer,
        } => {
            let cfg = load(&common)?;
            let o = Overrides {
                out: common.out,
                seed: common.seed,
                dataset: data,
                loss,
                beta1,
                beta2,
                max_evals,
                optimizer,
                ..Default::default()
            };
            let family = dataset_csv::read(&config::train_dataset(&cfg, &o)?)?.family;
            let s = config::resolve_train(&cfg, &o, family)?;
            let r = cmd_train(&s)?;
            if !r.rejected_rows.is_empty() {
                eprintln!(
                    "left {} zero-stress rows out of the stress loss",
                    r.rejected_rows.len()
                );
            }
            let g = r.result.grad.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            println!(
                "status {:?} after {} evaluations: loss {:e} (data {:e}), grad_inf {g:e}",
                r.result.status, r.result.evals, r.result.value, r.data_loss
            );
            println!(
                "wrote {} and {}",
                r.model_path.display(),
                r.trace_path.display()
            );
        }
        Command::Eval {
            common,
            model,
            data,
        } => {
            let cfg = load(&common)?;
            let o = Overrides {
                out: common.out,
                seed: common.seed,
                model,
                dataset: data,
                ..Default::default()
            };
            let s = config::resolve_eval(&cfg, &o)?;
            let r = cmd_eval(&s)?;
            match &r.report {
                Some(e) => println!("eps_s {:e} eps_v {:e}", e.eps_s, e.eps_v),
                None => println!("no truth rheology for external data; wrote curves only"),
            }
            for f in &r.files {
                println!("wrote {}", f.display());
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            let mut source = std::error::Error::source(&e);
            while let Some(s) = source {
                eprintln!("  caused by: {s}");
                source = s.source();
            }
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
