// SPDX-License-Identifier: MIT OR Apache-2.0

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use tsnorm::data::{SplitName, WindowSpec};
use tsnorm::experiment::{
    load_dataset, prepare_setting, read_json, run_experiment, write_json, write_user_stats, CellConfig,
    DatasetSource, ExperimentConfig, ExperimentError,
};
use tsnorm::forecaster::LinearForecaster;
use tsnorm::report::emit_report;
use tsnorm::shift::{shift_report, ShiftConfig};
use tsnorm::synthetic::{generate_dataset, SyntheticSpec};
use tsnorm::training::{evaluate, train, write_history_csv, FittedNorm};

#[derive(Parser)]
#[command(name = "tsnorm", version, about = "Reversible normalization experiments for time-series forecasting")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct Common {
    /// Experiment config (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Output directory; defaults to the config's `output_dir`.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Write a synthetic dataset (data.csv, labels.csv, user_stats.csv).
    Generate {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 20)]
        users_per_cluster: usize,
        #[arg(long, default_value_t = 2000)]
        length: usize,
        #[arg(long, default_value_t = 0.1)]
        slope: f64,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Clean and split the dataset for every setting.
    Split {
        #[command(flatten)]
        common: Common,
    },
    /// Train one (setting, cell, seed) run.
    Train {
        #[command(flatten)]
        common: Common,
        /// Setting as `L-H`; defaults to the first.
        #[arg(long)]
        setting: Option<String>,
        /// Cell label; defaults to the first.
        #[arg(long)]
        cell: Option<String>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Evaluate a trained run directory on every evaluation split.
    Eval {
        #[command(flatten)]
        common: Common,
        /// Directory holding model.json and norm.json.
        #[arg(long)]
        model: PathBuf,
    },
    /// Energy distances between Train and Test1/Valid2 for each setting.
    ShiftReport {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value_t = 2000)]
        max_samples: usize,
    },
    /// Run the whole grid and write results.json.
    Run {
        #[command(flatten)]
        common: Common,
        /// Worker threads (0 = all cores).
        #[arg(long, default_value_t = 0)]
        jobs: usize,
        /// Replace the config's seed list with this single seed.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Render tables and plots from a results directory.
    Report {
        #[arg(long)]
        out: PathBuf,
    },
}

fn output_dir(common: &Common, cfg: &ExperimentConfig) -> Result<PathBuf, ExperimentError> {
    common
        .out
        .clone()
        .or_else(|| cfg.output_dir.clone())
        .ok_or_else(|| ExperimentError::Config("no output directory: pass --out or set output_dir".into()))
}

fn find_setting(cfg: &ExperimentConfig, wanted: Option<&str>) -> Result<WindowSpec, ExperimentError> {
    let specs: Vec<WindowSpec> = cfg
        .settings
        .iter()
        .map(|&[l, h]| WindowSpec::new(l, h))
        .collect::<Result<_, _>>()?;
    match wanted {
        None => Ok(specs[0]),
        Some(w) => specs
            .into_iter()
            .find(|s| s.to_string() == w)
            .ok_or_else(|| ExperimentError::Config(format!("setting `{w}` is not in the config"))),
    }
}

fn find_cell<'a>(cfg: &'a ExperimentConfig, wanted: Option<&str>) -> Result<&'a CellConfig, ExperimentError> {
    match wanted {
        None => Ok(&cfg.cells[0]),
        Some(w) => cfg
            .cells
            .iter()
            .find(|c| c.label() == w || c.id() == w)
            .ok_or_else(|| ExperimentError::Config(format!("cell `{w}` is not in the config"))),
    }
}

fn create_dir(dir: &Path) -> Result<(), ExperimentError> {
    fs::create_dir_all(dir).map_err(tsnorm::experiment::io_err(dir))
}

fn create_file(path: &Path) -> Result<fs::File, ExperimentError> {
    fs::File::create(path).map_err(tsnorm::experiment::io_err(path))
}

fn execute(cli: Cli) -> Result<(), ExperimentError> {
    match cli.command {
        Command::Generate {
            config,
            out,
            users_per_cluster,
            length,
            slope,
            seed,
        } => {
            let spec = match config {
                Some(p) => {
                    let cfg = ExperimentConfig::load(&p)?;
                    match cfg.dataset {
                        DatasetSource::Synthetic {
                            users_per_cluster,
                            length,
                            slope,
                            seed: s,
                            scale_range,
                        } => {
                            let mut spec = SyntheticSpec::two_cluster(users_per_cluster, length, slope, seed.unwrap_or(s));
                            spec.clusters.iter_mut().for_each(|c| c.scale_range = scale_range);
                            spec
                        }
                        DatasetSource::Csv { .. } => {
                            return Err(ExperimentError::Config("config dataset is not synthetic".into()))
                        }
                    }
                }
                None => SyntheticSpec::two_cluster(users_per_cluster, length, slope, seed.unwrap_or(0)),
            };
            let data = generate_dataset(&spec)?;
            create_dir(&out)?;
            data.dataset.write_csv(create_file(&out.join("data.csv"))?)?;
            data.labels.write_csv(create_file(&out.join("labels.csv"))?)?;
            write_user_stats(&data.dataset, Some(&data.labels), &out.join("user_stats.csv"))?;
            write_json(&out.join("synthetic.json"), &spec)?;
            println!("wrote {} users x {} steps to {}", data.dataset.n_users(), length, out.display());
        }
        Command::Split { common } => {
            let cfg = ExperimentConfig::load(&common.config)?;
            let out = output_dir(&common, &cfg)?;
            let loaded = load_dataset(&cfg)?;
            for &[l, h] in &cfg.settings {
                let spec = WindowSpec::new(l, h)?;
                let s = prepare_setting(&cfg, &loaded, spec)?;
                s.write(&out.join("settings").join(spec.to_string()))?;
                println!(
                    "{spec}: {} in / {} out users, periods {:?} {:?} {:?}, {} removals",
                    s.assignment.users_in.len(),
                    s.assignment.users_out.len(),
                    s.assignment.t_train,
                    s.assignment.t_valid,
                    s.assignment.t_test,
                    s.removals.entries.len()
                );
            }
        }
        Command::Train {
            common,
            setting,
            cell,
            seed,
        } => {
            let cfg = ExperimentConfig::load(&common.config)?;
            let out = output_dir(&common, &cfg)?;
            let spec = find_setting(&cfg, setting.as_deref())?;
            let cell = find_cell(&cfg, cell.as_deref())?;
            let loaded = load_dataset(&cfg)?;
            let s = prepare_setting(&cfg, &loaded, spec)?;
            let tc = cfg.train_config(cell, spec, seed.unwrap_or(cfg.seeds[0]));
            let outcome = train(&tc, &s.dataset, &s.assignment, loaded.labels.as_ref())?;
            create_dir(&out)?;
            write_json(&out.join("model.json"), &outcome.model)?;
            write_json(&out.join("norm.json"), &outcome.norm)?;
            write_json(&out.join("metrics.json"), &outcome.metrics)?;
            write_json(&out.join("train_config.json"), &tc)?;
            write_history_csv(&outcome.history, create_file(&out.join("history.csv"))?)?;
            print_metrics(&outcome.metrics);
        }
        Command::Eval { common, model } => {
            let cfg = ExperimentConfig::load(&common.config)?;
            let out = output_dir(&common, &cfg)?;
            let m: LinearForecaster = read_json(&model.join("model.json"))?;
            let norm: FittedNorm = read_json(&model.join("norm.json"))?;
            let spec = WindowSpec::new(m.lookback(), m.horizon())?;
            let loaded = load_dataset(&cfg)?;
            let s = prepare_setting(&cfg, &loaded, spec)?;
            let metrics = evaluate(&m, &norm, &s.dataset, &s.assignment, spec, &SplitName::EVAL)?;
            create_dir(&out)?;
            write_json(&out.join("metrics.json"), &metrics)?;
            print_metrics(&metrics);
        }
        Command::ShiftReport {
            common,
            seed,
            max_samples,
        } => {
            let cfg = ExperimentConfig::load(&common.config)?;
            let out = output_dir(&common, &cfg)?;
            let loaded = load_dataset(&cfg)?;
            let name = cfg.dataset_name();
            for &[l, h] in &cfg.settings {
                let spec = WindowSpec::new(l, h)?;
                let s = prepare_setting(&cfg, &loaded, spec)?;
                let mut sc = ShiftConfig::new(spec, seed.unwrap_or(cfg.split.seed));
                sc.max_samples = max_samples;
                let report = shift_report(&name, &s.dataset, &s.assignment, &sc)?;
                let dir = out.join("settings").join(spec.to_string());
                create_dir(&dir)?;
                write_json(&dir.join("shift.json"), &report)?;
                report.write_csv(create_file(&dir.join("shift.csv"))?)?;
                println!("{spec}: {} distances -> {}", report.entries.len(), dir.join("shift.csv").display());
            }
        }
        Command::Run { common, jobs, seed } => {
            let mut cfg = ExperimentConfig::load(&common.config)?;
            let out = output_dir(&common, &cfg)?;
            if let Some(s) = seed {
                cfg.seeds = vec![s];
            }
            let results = run_experiment(&cfg, &out, jobs)?;
            println!("{} entries -> {}", results.entries.len(), out.join("results.json").display());
        }
        Command::Report { out } => {
            for p in emit_report(&out)? {
                println!("{}", p.display());
            }
        }
    }
    Ok(())
}

fn print_metrics(metrics: &tsnorm::training::MetricTable) {
    for (split, m) in &metrics.0 {
        println!("{split}: mse {:.6e} nmse {:.6e} ({} windows)", m.mse, m.nmse, m.windows);
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_config() {
                ExitCode::from(2)
            } else {
                ExitCode::from(3)
            }
        }
    }
}
