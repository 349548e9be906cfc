use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use timesql::data::{dataset_stats, write_csv, DatasetSource};
use timesql::experiment::{
    all_diverged, evaluate_checkpoint, load_config, loss_curves, run_ablation, run_plot_rows,
    run_simulation_suite, run_training, save_training_run, write_json, write_manifest,
    write_plot_rows, write_rows, ArmSpec, ExperimentConfig,
};
use timesql::theory::{
    search_outside_constraint, verify_gradient_bound, verify_loss_bound, SampleRanges,
};
use timesql::Error;

#[derive(Parser)]
#[command(
    name = "timesql",
    version,
    about = "Multi-scale patch forecasting experiments"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// JSON experiment config; defaults to the built-in noisy-sinusoid setup.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Replaces the config's seed list with this single seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Overrides as `--path.to.field=value` or `path.to.field=value`.
    #[arg(trailing_var_arg = true, allow_hyphen_values = true, global = true)]
    overrides: Vec<String>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Suite {
    /// Arms as listed in the config.
    Config,
    /// Full loss against each single-term deletion and plain MSE.
    Loss,
    /// Configured scales against the first scale alone.
    Scale,
}

#[derive(Subcommand)]
enum Command {
    /// Noise std × seed × arm grid on generated data.
    Simulate {
        #[command(flatten)]
        common: Common,
    },
    /// Arm × horizon × seed table on the configured dataset.
    Ablate {
        #[arg(long, value_enum, default_value = "config")]
        suite: Suite,
        #[command(flatten)]
        common: Common,
    },
    /// Train one arm and save checkpoint, history and a forecast sample.
    Train {
        /// Arm name; defaults to the first arm.
        #[arg(long)]
        arm: Option<String>,
        #[command(flatten)]
        common: Common,
    },
    /// Test metrics of a saved checkpoint.
    Evaluate {
        #[arg(long)]
        checkpoint: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Monte-Carlo checks of the noise-effect bounds.
    VerifyTheorems {
        #[arg(long, default_value_t = 1_000_000)]
        samples: usize,
        #[command(flatten)]
        common: Common,
    },
    /// Write the configured generated dataset as CSV.
    GenData {
        /// Output file; defaults to `<output_dir>/data.csv`.
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
    /// Per-variable summary statistics of the configured dataset.
    Stats {
        #[command(flatten)]
        common: Common,
    },
    /// Long-format plot table: loss curves plus, if given, a training run.
    PlotData {
        /// Directory written by `train`.
        #[arg(long)]
        run: Option<PathBuf>,
        /// Output file; defaults to `<output_dir>/plot_data.csv`.
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
}

/// Splits `--a.b=1`, `a.b=1` and `--a.b 1` forms into key/value pairs.
fn parse_overrides(raw: &[String]) -> Result<Vec<(String, String)>, Error> {
    let mut pairs = Vec::new();
    let mut it = raw.iter();
    while let Some(tok) = it.next() {
        let tok = tok.trim_start_matches("--");
        match tok.split_once('=') {
            Some((k, v)) => pairs.push((k.to_owned(), v.to_owned())),
            None => {
                let v = it
                    .next()
                    .ok_or_else(|| Error::Config(format!("override {tok:?} has no value")))?;
                pairs.push((tok.to_owned(), v.clone()));
            }
        }
    }
    Ok(pairs)
}

fn resolve(common: &Common) -> Result<ExperimentConfig, Error> {
    let mut config = load_config(
        common.config.as_deref(),
        &parse_overrides(&common.overrides)?,
    )?;
    if let Some(seed) = common.seed {
        config.seeds = vec![seed];
    }
    Ok(config)
}

fn first_seed(config: &ExperimentConfig) -> u64 {
    config.seeds.first().copied().unwrap_or(0)
}

fn out_dir(config: &ExperimentConfig) -> Result<&Path, Error> {
    fs::create_dir_all(&config.output_dir)?;
    Ok(&config.output_dir)
}

fn print_json(value: &serde_json::Value) -> Result<(), Error> {
    println!("{}", serde_json::to_string_pretty(value)?);
    Ok(())
}

fn run(cli: Cli) -> Result<ExitCode, Error> {
    match cli.command {
        Command::Simulate { common } => {
            let config = resolve(&common)?;
            let rows = run_simulation_suite(&config)?;
            let dir = out_dir(&config)?;
            write_rows(&dir.join("simulation.csv"), &rows)?;
            write_manifest(dir, "simulate", &config, &["simulation.csv"])?;
            for r in &rows {
                println!(
                    "std={} arm={} seed={} test_mse={} test_mae={} {:?}",
                    r.std, r.arm, r.seed, r.test_mse, r.test_mae, r.status
                );
            }
            if all_diverged(rows.iter().map(|r| &r.status)) {
                return Ok(ExitCode::from(3));
            }
        }
        Command::Ablate { suite, common } => {
            let mut config = resolve(&common)?;
            match suite {
                Suite::Config => {}
                Suite::Loss => config.arms = ArmSpec::loss_ablation_set(),
                Suite::Scale => config.arms = ArmSpec::scale_ablation_set(&config.scales),
            }
            let rows = run_ablation(&config)?;
            let dir = out_dir(&config)?;
            write_rows(&dir.join("ablation.csv"), &rows)?;
            write_manifest(dir, "ablate", &config, &["ablation.csv"])?;
            for r in &rows {
                println!(
                    "arm={} horizon={} seed={} test_mse={} test_mae={} {:?}",
                    r.arm, r.horizon, r.seed, r.test_mse, r.test_mae, r.status
                );
            }
            if all_diverged(rows.iter().map(|r| &r.status)) {
                return Ok(ExitCode::from(3));
            }
        }
        Command::Train { arm, common } => {
            let config = resolve(&common)?;
            let run = run_training(&config, arm.as_deref(), first_seed(&config))?;
            save_training_run(out_dir(&config)?, &config, &run)?;
            print_json(
                &json!({ "arm": run.arm, "best_epoch": run.run.history.best_epoch, "test": run.run.test }),
            )?;
        }
        Command::Evaluate { checkpoint, common } => {
            let config = resolve(&common)?;
            let metrics = evaluate_checkpoint(&config, &checkpoint, first_seed(&config))?;
            let dir = out_dir(&config)?;
            write_json(&dir.join("evaluation.json"), &metrics)?;
            write_manifest(dir, "evaluate", &config, &["evaluation.json"])?;
            print_json(&serde_json::to_value(&metrics)?)?;
        }
        Command::VerifyTheorems { samples, common } => {
            let config = resolve(&common)?;
            let seed = first_seed(&config);
            let t1 = verify_loss_bound(samples, seed, SampleRanges::default())?;
            let t2 = verify_gradient_bound(samples, seed)?;
            let outside = search_outside_constraint(samples.min(100_000), seed)?;
            let report = json!({
                "loss_value_bound": {
                    "samples": t1.samples, "violations": t1.violations,
                    "worst_ratio": t1.worst_ratio, "max_identity_error": t1.max_identity_error, "seed": t1.seed,
                },
                "gradient_bound": {
                    "samples": t2.samples, "violations": t2.violations,
                    "worst_margin": t2.worst_margin, "strata": t2.strata, "seed": t2.seed,
                },
                "outside_constraint": { "samples": outside.samples, "exceedances": outside.exceedances, "seed": outside.seed },
            });
            let dir = out_dir(&config)?;
            write_json(&dir.join("theorems.json"), &report)?;
            write_manifest(dir, "verify-theorems", &config, &["theorems.json"])?;
            print_json(&report)?;
            if t1.violations > 0 || t2.violations > 0 {
                return Ok(ExitCode::FAILURE);
            }
        }
        Command::GenData { out, common } => {
            let config = resolve(&common)?;
            if !matches!(config.dataset, DatasetSource::Trig(_)) {
                return Err(Error::Config("gen-data needs a generated dataset".into()));
            }
            let series = config.load_dataset(first_seed(&config), None)?;
            let path = match out {
                Some(p) => p,
                None => out_dir(&config)?.join("data.csv"),
            };
            write_csv(&series, &path)?;
            println!(
                "wrote {} steps × {} variables to {}",
                series.len(),
                series.n_vars(),
                path.display()
            );
        }
        Command::Stats { common } => {
            let config = resolve(&common)?;
            print_json(&serde_json::to_value(dataset_stats(
                &config.load_dataset(first_seed(&config), None)?,
            ))?)?;
        }
        Command::PlotData { run, out, common } => {
            let config = resolve(&common)?;
            let mut rows = loss_curves(config.train.hp.c, -3.0, 3.0, 601)?;
            if let Some(dir) = &run {
                rows.extend(run_plot_rows(dir)?);
            }
            let path = match out {
                Some(p) => p,
                None => out_dir(&config)?.join("plot_data.csv"),
            };
            write_plot_rows(&path, &rows)?;
            println!("wrote {} rows to {}", rows.len(), path.display());
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn exit_code(err: &Error) -> u8 {
    match err {
        Error::Config(_)
        | Error::InvalidParameter { .. }
        | Error::Scale { .. }
        | Error::PatchLongerThanWindow { .. } => 2,
        Error::Divergence { .. } => 3,
        _ => 1,
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(exit_code(&err))
        }
    }
}
