//! Command-line driver for the velokern predictor library.
//!
//! Subcommands cover the full benchmark workflow: simulate a system
//! (`generate`), fit a predictor (`fit`), roll out multi-step predictions
//! (`predict`), score a model on held-out data (`eval`), sweep
//! hyper-parameters (`gridsearch`), and run the built-in numerical property
//! checks (`verify`).
//!
//! Exit codes: 0 success, 2 invalid configuration or usage, 3 malformed or
//! missing data, 4 numerical failure, 5 property-check failure.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use velokern::error::EXIT_PROPERTY_FAILURE;
use velokern::harness::{
    run_eval, run_fit, run_generate, run_gridsearch, run_predict, run_verify, trajectories_path,
    Fault,
};

#[derive(Parser)]
#[command(
    name = "velokern",
    version,
    about = "Structured kernel predictors for the velocity form of nonlinear systems"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a benchmark system and write the trajectory as CSV.
    Generate {
        /// Benchmark configuration (TOML).
        #[arg(long)]
        config: PathBuf,
        /// Output trajectory CSV.
        #[arg(long)]
        out: PathBuf,
        /// Override the seed from the configuration.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Fit a predictor on a trajectory and save the model as JSON.
    Fit {
        /// Benchmark configuration (TOML).
        #[arg(long)]
        config: PathBuf,
        /// Training trajectory CSV (as produced by `generate`).
        #[arg(long)]
        data: PathBuf,
        /// Output model file (JSON).
        #[arg(long)]
        model: PathBuf,
    },
    /// Roll out multi-step predictions over every feasible window.
    Predict {
        /// Saved model (JSON).
        #[arg(long)]
        model: PathBuf,
        /// Trajectory CSV to predict on.
        #[arg(long)]
        data: PathBuf,
        /// Output CSV of per-step predictions.
        #[arg(long)]
        out: PathBuf,
    },
    /// Evaluate a saved model on held-out data and write metrics as TOML.
    Eval {
        /// Benchmark configuration (TOML).
        #[arg(long)]
        config: PathBuf,
        /// Saved model (JSON).
        #[arg(long)]
        model: PathBuf,
        /// Held-out trajectory CSV.
        #[arg(long)]
        data: PathBuf,
        /// Metrics output path; predicted-vs-true window trajectories are
        /// written next to it as `<stem>_trajectories.csv`.
        #[arg(long)]
        out: PathBuf,
    },
    /// Sweep the hyper-parameter grid and write per-point scores as CSV.
    Gridsearch {
        /// Benchmark configuration (TOML).
        #[arg(long)]
        config: PathBuf,
        /// Training trajectory CSV.
        #[arg(long)]
        data: PathBuf,
        /// Output scores CSV.
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the built-in numerical property checks.
    Verify {
        /// Optional JSON report path.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Inject a deliberate defect; the matching check must then fail.
        #[arg(long, value_name = "FAULT")]
        inject_fault: Option<String>,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(err.exit_code() as u8)
        }
    }
}

fn run(cli: Cli) -> velokern::Result<ExitCode> {
    match cli.command {
        Command::Generate { config, out, seed } => {
            let summary = run_generate(&config, &out, seed)?;
            println!(
                "generated {} samples (seed {}) -> {}",
                summary.n_samples,
                summary.seed,
                out.display()
            );
            Ok(ExitCode::SUCCESS)
        }
        Command::Fit {
            config,
            data,
            model,
        } => {
            let summary = run_fit(&config, &data, &model)?;
            println!(
                "fitted {} predictor on {} training columns in {:.3} s -> {}",
                summary.mode.as_str(),
                summary.n_c,
                summary.fit_seconds,
                model.display()
            );
            Ok(ExitCode::SUCCESS)
        }
        Command::Predict { model, data, out } => {
            let summary = run_predict(&model, &data, &out)?;
            println!(
                "predicted {} windows of horizon {} -> {}",
                summary.n_windows,
                summary.horizon,
                out.display()
            );
            Ok(ExitCode::SUCCESS)
        }
        Command::Eval {
            config,
            model,
            data,
            out,
        } => {
            let report = run_eval(&config, &model, &data, &out)?;
            println!(
                "evaluated {} windows: rmse_delta={:.6e} rmse_primal_a={:.6e} rmse_primal_b={:.6e}",
                report.eval_windows, report.rmse_delta, report.rmse_primal_a, report.rmse_primal_b
            );
            println!(
                "metrics -> {}; window trajectories -> {}",
                out.display(),
                trajectories_path(&out).display()
            );
            Ok(ExitCode::SUCCESS)
        }
        Command::Gridsearch { config, data, out } => {
            let outcome = run_gridsearch(&config, &data, &out)?;
            let ok = outcome.rows.iter().filter(|r| r.status == "ok").count();
            println!(
                "swept {} grid points ({} ok) -> {}",
                outcome.rows.len(),
                ok,
                out.display()
            );
            match &outcome.best {
                Some(best) => println!(
                    "best: sigma={} gamma={} val_rmse={:.6e} train_rmse={:.6e}",
                    best.sigma, best.gamma, best.val_rmse, best.train_rmse
                ),
                None => println!("best: none (no grid point fitted successfully)"),
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Verify { out, inject_fault } => {
            let fault = inject_fault.as_deref().map(Fault::parse).transpose()?;
            let report = run_verify(fault)?;
            for result in &report.results {
                let flag = if result.pass { "PASS" } else { "FAIL" };
                println!(
                    "{flag} {} tol={:.1e} measured={:.3e}",
                    result.name, result.tol, result.measured
                );
            }
            if let Some(path) = &out {
                report.write(path)?;
                println!("report -> {}", path.display());
            }
            if report.all_pass {
                println!("verify: all checks passed");
                Ok(ExitCode::SUCCESS)
            } else {
                println!("verify: at least one check failed");
                Ok(ExitCode::from(EXIT_PROPERTY_FAILURE as u8))
            }
        }
    }
}
