//! Multi-run orchestration: training, CSV logging, checkpoints, summary.

use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;

use super::checkpoint;
use super::config::ExperimentConfig;
use super::summary::{CsvSink, MetricRow, RunSummary, read_csv};
use crate::error::{Error, Result};
use crate::es::Trainer;

/// Environment variable capping evaluation threads.
pub const THREADS_ENV: &str = "SGLAB_THREADS";

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    /// Train all runs concurrently, each into its own file, merged at the end.
    pub parallel_runs: bool,
    /// Evaluation threads per run; `None` uses the global pool.
    pub threads: Option<usize>,
}

impl RunOptions {
    /// Reads the thread cap from `SGLAB_THREADS`, if set.
    pub fn from_env() -> Result<Self> {
        let threads = match std::env::var(THREADS_ENV) {
            Ok(v) => Some(
                v.trim()
                    .parse::<usize>()
                    .ok()
                    .filter(|&n| n > 0)
                    .ok_or_else(|| Error::Config(format!("{THREADS_ENV} must be a positive integer, got `{v}`")))?,
            ),
            Err(_) => None,
        };
        Ok(RunOptions {
            parallel_runs: false,
            threads,
        })
    }
}

#[derive(Debug, Clone)]
pub struct ExperimentOutput {
    pub csv: PathBuf,
    pub summary_csv: PathBuf,
    pub summary: RunSummary,
    /// Final checkpoint of each run, in run order.
    pub checkpoints: Vec<PathBuf>,
}

pub fn metrics_csv_path(dir: &Path) -> PathBuf {
    dir.join("metrics.csv")
}

pub fn checkpoint_path(dir: &Path, run: usize, iteration: Option<u64>) -> PathBuf {
    let name = match iteration {
        Some(it) => format!("run{run}_iter{it}.ckpt"),
        None => format!("run{run}_final.ckpt"),
    };
    dir.join("checkpoints").join(name)
}

/// Trains `cfg.runs` runs with seeds `master_seed + r` and writes
/// `metrics.csv`, `summary.csv`, `config.txt` and `checkpoints/` under
/// `cfg.output_dir`.
pub fn run_experiment(cfg: &ExperimentConfig, opts: &RunOptions) -> Result<ExperimentOutput> {
    cfg.validate()?;
    let dir = &cfg.output_dir;
    fs::create_dir_all(dir.join("checkpoints")).map_err(|e| Error::io(dir, e))?;
    let cfg_path = dir.join("config.txt");
    fs::write(&cfg_path, cfg.to_text()).map_err(|e| Error::io(&cfg_path, e))?;

    let csv = metrics_csv_path(dir);
    if opts.parallel_runs && cfg.runs > 1 {
        let parts: Vec<PathBuf> = (0..cfg.runs)
            .map(|r| dir.join(format!("metrics.run{r}.part")))
            .collect();
        (0..cfg.runs)
            .into_par_iter()
            .map(|r| {
                let mut sink = CsvSink::create(&parts[r], false)?;
                train_run(cfg, r, opts.threads, &mut sink)
            })
            .collect::<Result<Vec<()>>>()?;
        let mut sink = CsvSink::create(&csv, true)?;
        for part in &parts {
            let bytes = fs::read(part).map_err(|e| Error::io(part, e))?;
            sink.append_raw(&bytes)?;
            fs::remove_file(part).map_err(|e| Error::io(part, e))?;
        }
    } else {
        let mut sink = CsvSink::create(&csv, true)?;
        for r in 0..cfg.runs {
            train_run(cfg, r, opts.threads, &mut sink)?;
        }
    }

    let summary = RunSummary::from_rows(&cfg.label(), &read_csv(&csv)?)?;
    let summary_csv = dir.join("summary.csv");
    summary.write(&summary_csv)?;
    Ok(ExperimentOutput {
        csv,
        summary_csv,
        summary,
        checkpoints: (0..cfg.runs).map(|r| checkpoint_path(dir, r, None)).collect(),
    })
}

fn train_run(cfg: &ExperimentConfig, run: usize, threads: Option<usize>, sink: &mut CsvSink) -> Result<()> {
    let seed = cfg.master_seed.wrapping_add(run as u64);
    let mut trainer = Trainer::new(cfg.run_setup()?, seed)?;
    if let Some(t) = threads {
        trainer = trainer.with_threads(t)?;
    }
    let log = |trainer: &Trainer, sink: &mut CsvSink| -> Result<()> {
        let (_, record) = trainer.evaluate()?;
        sink.append(&MetricRow {
            run,
            iteration: trainer.iteration(),
            record,
        })
    };
    log(&trainer, sink)?;
    for it in 1..=cfg.iterations {
        trainer.step()?;
        if it % cfg.metric_every == 0 || it == cfg.iterations {
            log(&trainer, sink)?;
        }
        if cfg.checkpoint_every > 0 && it % cfg.checkpoint_every == 0 && it != cfg.iterations {
            checkpoint::save_trainer(&checkpoint_path(&cfg.output_dir, run, Some(it)), &trainer, cfg)?;
        }
    }
    checkpoint::save_trainer(&checkpoint_path(&cfg.output_dir, run, None), &trainer, cfg)
}
