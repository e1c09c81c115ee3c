use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use fst_lab::harness::{compare, export_curves, run, ConfigMap};
use fst_lab::{BatchMode, TaskKind, Variant};

#[derive(Parser)]
#[command(name = "fst-lab", version, about = "Self-training with future-looking teachers")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train every seed of a plan and write CSVs plus a manifest.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        variant: Option<Variant>,
        #[arg(long)]
        k: Option<usize>,
        #[arg(long)]
        n: Option<usize>,
        #[arg(long)]
        mu: Option<f64>,
        #[arg(long)]
        mu_prime: Option<f64>,
        #[arg(long)]
        tau: Option<f64>,
        #[arg(long)]
        lr: Option<f64>,
        #[arg(long)]
        iters: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        task: Option<TaskKind>,
        #[arg(long)]
        batch_mode: Option<BatchMode>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Mean and spread of the final student score per variant.
    Compare {
        #[arg(required = true)]
        manifests: Vec<PathBuf>,
    },
    /// Long-format plot data for one or more runs.
    ExportCurves {
        #[arg(required = true)]
        manifests: Vec<PathBuf>,
        /// Defaults to `curves.csv` next to the first manifest.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    match dispatch(Cli::parse().command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

fn dispatch(command: Command) -> fst_lab::Result<()> {
    match command {
        Command::Run {
            config,
            variant,
            k,
            n,
            mu,
            mu_prime,
            tau,
            lr,
            iters,
            seed,
            task,
            batch_mode,
            out,
        } => {
            let mut map = ConfigMap::parse(&fs::read_to_string(&config)?)?;
            let overrides = [
                ("variant", variant.map(|v| v.to_string())),
                ("k", k.map(|v| v.to_string())),
                ("n", n.map(|v| v.to_string())),
                ("mu", mu.map(|v| v.to_string())),
                ("mu_prime", mu_prime.map(|v| v.to_string())),
                ("tau", tau.map(|v| v.to_string())),
                ("lr", lr.map(|v| v.to_string())),
                ("iters", iters.map(|v| v.to_string())),
                ("seeds", seed.map(|v| v.to_string())),
                ("task", task.map(|v| v.as_str().to_string())),
                ("batch_mode", batch_mode.map(|v| v.as_str().to_string())),
                ("out", out.map(|v| v.display().to_string())),
            ];
            for (key, value) in overrides {
                if let Some(value) = value {
                    map.set(key, value)?;
                }
            }
            let plan = map.to_plan()?;
            let manifest = run(&plan)?;
            for rep in &manifest.replicates {
                println!(
                    "{} seed {}: student {:.4}, teacher {:.4}, pseudo-error {:.4}",
                    manifest.variant,
                    rep.seed,
                    rep.final_student_eval,
                    rep.final_teacher_eval,
                    rep.final_pseudo_error
                );
            }
            println!("{}", plan.manifest_path().display());
        }
        Command::Compare { manifests } => print!("{}", compare(&manifests)?),
        Command::ExportCurves { manifests, out } => {
            let dest = out.unwrap_or_else(|| {
                manifests[0]
                    .parent()
                    .map(|d| d.join("curves.csv"))
                    .unwrap_or_else(|| PathBuf::from("curves.csv"))
            });
            let rows = export_curves(&manifests, &dest)?;
            println!("{rows} rows -> {}", dest.display());
        }
    }
    Ok(())
}
