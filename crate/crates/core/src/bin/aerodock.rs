use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use serde::Serialize;

use aerodock::check;
use aerodock::error::{Error, Result};
use aerodock::learning::{default_stages, docking_stages, read_dataset, train, write_dataset, MlpModel, TrainHyper};
use aerodock::sim::experiments::{
    exp_hover_docking, exp_moving_leader, exp_static_offsets, hover_table, moving_table, overlay_config, static_table,
    HOVER_COLUMNS, MOVING_COLUMNS, STATIC_COLUMNS, STATIC_OFFSETS,
};
use aerodock::sim::output::{write_json, write_log_csv, write_outputs, Table};
use aerodock::sim::sweep::train_in_sim;
use aerodock::sim::{run_scenario, Compensation, Experiment, ScenarioConfig};

#[derive(Parser)]
#[command(name = "aerodock", version, about = "Two-multirotor docking simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum StageSet {
    /// Five bands from 1.4 m down to 0.6 m.
    Default,
    /// The default bands shortened, plus one reaching the bar.
    Docking,
}

#[derive(Clone, Copy, ValueEnum)]
enum ExpKind {
    Static,
    Hover,
    Moving,
}

#[derive(Subcommand)]
enum Command {
    /// Collect curriculum data in simulation and train a model on it.
    Collect {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_enum, default_value = "docking")]
        stages: StageSet,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Train a model from a collected `dataset.csv`.
    Train {
        /// Directory holding `dataset.csv`, or the file itself.
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        epochs: Option<usize>,
    },
    /// Fly one scenario and write `log.csv` and `summary.json`.
    Run {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Run one of the experiment sweeps.
    Exp {
        #[arg(value_enum)]
        kind: ExpKind,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        model: Option<PathBuf>,
        /// Number of attempts in the hover study.
        #[arg(long, default_value_t = 10)]
        runs: usize,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Run the equivariance, Riccati and gradient property suites.
    Check,
}

#[derive(Serialize)]
struct ErrorReport {
    kind: &'static str,
    message: String,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli.command) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            let report = ErrorReport {
                kind: e.kind(),
                message: e.to_string(),
            };
            eprintln!("{}", serde_json::to_string(&report).expect("error report serializes"));
            ExitCode::from(2)
        }
    }
}

/// `base` with the config file laid over it and the seed flag applied.
/// Relative model paths in the file are taken from the file's directory.
fn load_config(base: ScenarioConfig, path: Option<&Path>, seed: Option<u64>) -> Result<ScenarioConfig> {
    let mut cfg = match path {
        Some(p) => {
            let text = fs::read_to_string(p).map_err(|e| Error::Io {
                path: p.to_path_buf(),
                source: e,
            })?;
            let mut cfg = overlay_config(&base, &text).map_err(|e| match e {
                Error::Json { source, .. } => Error::Json {
                    path: p.to_path_buf(),
                    source,
                },
                other => other,
            })?;
            if let (Some(m), Some(dir)) = (cfg.model.as_mut(), p.parent()) {
                if m.is_relative() {
                    *m = dir.join(&*m);
                }
            }
            cfg
        }
        None => base,
    };
    if let Some(s) = seed {
        cfg.seed = s;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn load_model(flag: Option<&Path>, cfg: &ScenarioConfig) -> Result<Option<MlpModel>> {
    flag.or(cfg.model.as_deref()).map(MlpModel::load).transpose()
}

#[derive(Serialize)]
struct CollectSummary {
    stages: usize,
    samples: usize,
    collected_duration: f64,
    train_loss: f64,
    val_loss: Option<f64>,
}

#[derive(Serialize)]
struct TrainSummary {
    samples: usize,
    epochs: usize,
    seed: u64,
    train_loss: f64,
    val_loss: Option<f64>,
}

fn dispatch(cmd: Command) -> Result<bool> {
    match cmd {
        Command::Collect {
            config,
            out,
            stages,
            seed,
        } => {
            let cfg = load_config(ScenarioConfig::default(), config.as_deref(), seed)?;
            let stages = match stages {
                StageSet::Default => default_stages(),
                StageSet::Docking => docking_stages(),
            };
            let hyper = TrainHyper {
                seed: cfg.seed,
                ..TrainHyper::default()
            };
            let outcome = train_in_sim(&cfg, &stages, &hyper)?;
            fs::create_dir_all(&out).map_err(|e| Error::Io {
                path: out.clone(),
                source: e,
            })?;
            write_dataset(out.join("dataset.csv"), &outcome.samples)?;
            outcome.model.save(out.join("model.txt"))?;
            let summary = CollectSummary {
                stages: stages.len(),
                samples: outcome.samples.len(),
                collected_duration: outcome.collected_duration,
                train_loss: outcome.model.meta.train_loss,
                val_loss: outcome.model.meta.val_loss,
            };
            write_json(&out.join("summary.json"), &summary)?;
            Ok(true)
        }
        Command::Train {
            data,
            out,
            seed,
            epochs,
        } => {
            let file = if data.is_dir() { data.join("dataset.csv") } else { data };
            let samples = read_dataset(&file)?;
            let mut hyper = TrainHyper::default();
            if let Some(s) = seed {
                hyper.seed = s;
            }
            if let Some(e) = epochs {
                hyper.epochs = e;
            }
            let trained = train(&samples, &hyper)?;
            if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
                fs::create_dir_all(dir).map_err(|e| Error::Io {
                    path: dir.to_path_buf(),
                    source: e,
                })?;
            }
            trained.model.save(&out)?;
            let m = &trained.model.meta;
            let summary = TrainSummary {
                samples: m.samples,
                epochs: m.epochs,
                seed: m.seed,
                train_loss: m.train_loss,
                val_loss: m.val_loss,
            };
            println!("{}", serde_json::to_string(&summary).expect("summary serializes"));
            Ok(true)
        }
        Command::Run {
            config,
            model,
            out,
            seed,
        } => {
            let cfg = load_config(ScenarioConfig::default(), config.as_deref(), seed)?;
            let model = if cfg.compensation == Compensation::Model {
                load_model(model.as_deref(), &cfg)?
            } else {
                None
            };
            let (log, summary) = run_scenario(&cfg, model.as_ref())?;
            write_outputs(&out, Some(&log), &summary, None)?;
            Ok(true)
        }
        Command::Exp {
            kind,
            config,
            model,
            runs,
            out,
            seed,
        } => {
            let exp = match kind {
                ExpKind::Static => Experiment::Static,
                ExpKind::Hover => Experiment::Hover,
                ExpKind::Moving => Experiment::Moving,
            };
            let cfg = load_config(exp.preset(), config.as_deref(), seed)?;
            let model = load_model(model.as_deref(), &cfg)?;
            match exp {
                Experiment::Static => {
                    let rows = exp_static_offsets(&cfg, &STATIC_OFFSETS, model.as_ref())?;
                    let table = Table {
                        header: &STATIC_COLUMNS,
                        rows: static_table(&rows),
                    };
                    write_outputs(&out, None, &rows, Some(&table))?;
                }
                Experiment::Hover => {
                    let (report, logs) = exp_hover_docking(&cfg, runs, model.as_ref())?;
                    let table = Table {
                        header: &HOVER_COLUMNS,
                        rows: hover_table(&report),
                    };
                    write_outputs(&out, None, &report, Some(&table))?;
                    for (i, log) in logs.iter().enumerate() {
                        let dir = out.join(format!("run_{i:03}"));
                        fs::create_dir_all(&dir).map_err(|e| Error::Io {
                            path: dir.clone(),
                            source: e,
                        })?;
                        write_log_csv(&dir.join("log.csv"), log)?;
                    }
                }
                Experiment::Moving => {
                    let results = exp_moving_leader(&cfg, model.as_ref())?;
                    let stats: Vec<_> = results.iter().map(|(s, _)| s.clone()).collect();
                    let table = Table {
                        header: &MOVING_COLUMNS,
                        rows: moving_table(&stats),
                    };
                    write_outputs(&out, None, &stats, Some(&table))?;
                    for (s, log) in &results {
                        let name = serde_json::to_value(s.compensation)
                            .ok()
                            .and_then(|v| v.as_str().map(str::to_string))
                            .unwrap_or_default();
                        let dir = out.join(name);
                        fs::create_dir_all(&dir).map_err(|e| Error::Io {
                            path: dir.clone(),
                            source: e,
                        })?;
                        write_log_csv(&dir.join("log.csv"), log)?;
                    }
                }
            }
            Ok(true)
        }
        Command::Check => {
            let results = check::run_all()?;
            for r in &results {
                println!("{}", serde_json::to_string(r).expect("check result serializes"));
            }
            Ok(results.iter().all(|r| r.passed))
        }
    }
}
