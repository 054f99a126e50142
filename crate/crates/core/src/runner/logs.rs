//! Run directory layout and the append-only logs inside it.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::MetricLine;

pub const METRICS_FILE: &str = "metrics.jsonl";
pub const EPISODES_FILE: &str = "episodes.csv";
pub const CONFIG_FILE: &str = "config.toml";
pub const SUMMARY_FILE: &str = "summary.json";
pub const CHECKPOINT_DIR: &str = "checkpoints";

/// How often one plan entry fired against how often its trigger says it
/// should have.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FiringRecord {
    pub index: usize,
    pub method: String,
    pub trigger: String,
    pub count: u64,
    pub expected: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DivergenceRecord {
    pub step: u64,
    pub reason: String,
    /// Step of the last metric report written before the abort.
    pub last_metric_step: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub name: String,
    pub algo: String,
    pub seed: u64,
    pub steps: u64,
    pub episodes: u64,
    pub gradient_steps: u64,
    /// Mean return over the last (up to) 20 finished episodes.
    pub final_mean_return: Option<f64>,
    pub firings: Vec<FiringRecord>,
    pub diverged: Option<DivergenceRecord>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunArtifacts {
    pub dir: PathBuf,
    pub metrics: PathBuf,
    pub episodes: PathBuf,
    pub config: PathBuf,
    pub checkpoints: Vec<PathBuf>,
    pub summary: RunSummary,
}

pub(crate) struct RunLogs {
    pub dir: PathBuf,
    metrics: BufWriter<File>,
    episodes: BufWriter<File>,
    pub last_metric_step: Option<u64>,
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path).map(BufWriter::new).map_err(|e| Error::io(path, e))
}

impl RunLogs {
    /// Creates the run directory and writes the config snapshot first, so
    /// even a run that aborts immediately leaves it behind.
    pub fn open(dir: &Path, config_text: &str) -> Result<RunLogs> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let cfg = dir.join(CONFIG_FILE);
        fs::write(&cfg, config_text).map_err(|e| Error::io(&cfg, e))?;
        let mut episodes = create(&dir.join(EPISODES_FILE))?;
        writeln!(episodes, "step,episode,return,length").map_err(|e| Error::io(dir.join(EPISODES_FILE), e))?;
        Ok(RunLogs {
            dir: dir.to_path_buf(),
            metrics: create(&dir.join(METRICS_FILE))?,
            episodes,
            last_metric_step: None,
        })
    }

    pub fn metric_lines(&mut self, lines: &[MetricLine]) -> Result<()> {
        for line in lines {
            let json = serde_json::to_string(line).map_err(|e| Error::invalid(format!("metric encode: {e}")))?;
            writeln!(self.metrics, "{json}").map_err(|e| Error::io(self.dir.join(METRICS_FILE), e))?;
        }
        Ok(())
    }

    pub fn episode(&mut self, step: u64, episode: u64, ret: f64, length: u64) -> Result<()> {
        writeln!(self.episodes, "{step},{episode},{ret},{length}").map_err(|e| Error::io(self.dir.join(EPISODES_FILE), e))
    }

    pub fn flush(&mut self) -> Result<()> {
        self.metrics.flush().map_err(|e| Error::io(self.dir.join(METRICS_FILE), e))?;
        self.episodes.flush().map_err(|e| Error::io(self.dir.join(EPISODES_FILE), e))
    }

    pub fn write_summary(&mut self, summary: &RunSummary) -> Result<()> {
        self.flush()?;
        let path = self.dir.join(SUMMARY_FILE);
        let json = serde_json::to_string_pretty(summary).map_err(|e| Error::invalid(format!("summary encode: {e}")))?;
        fs::write(&path, json + "\n").map_err(|e| Error::io(&path, e))
    }
}

/// Reads a metrics log back.
pub fn read_metrics(path: &Path) -> Result<Vec<MetricLine>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| serde_json::from_str(l).map_err(|e| Error::invalid(format!("bad metric line `{l}`: {e}"))))
        .collect()
}

pub fn read_summary(dir: &Path) -> Result<RunSummary> {
    let path = dir.join(SUMMARY_FILE);
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::invalid(format!("bad summary: {e}")))
}
