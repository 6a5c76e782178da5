//! Per-round records, the run summary and their on-disk form.
//!
//! `rounds.csv` is appended and flushed after every round, so an
//! interrupted run keeps the rounds it finished. `clients.csv` and
//! `summary.json` are written once the run completes.

use std::fs::{self, File};
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::error::{Error, Result};
use crate::fedsim::{ClientResult, ExperimentConfig};

pub const ROUNDS_HEADER: [&str; 6] = [
    "round",
    "mean_loss",
    "eval_acc",
    "flops",
    "params_up",
    "params_down",
];
pub const CLIENTS_HEADER: [&str; 4] = ["client_id", "n_train", "n_test", "accuracy"];

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RoundMetrics {
    pub round: u64,
    pub participants: Vec<usize>,
    /// Sampled clients that had no training data.
    pub skipped: Vec<usize>,
    pub mean_loss: f64,
    /// Accuracy of the global model on the pooled client test splits, on
    /// evaluation rounds only.
    pub eval_acc: Option<f64>,
    pub flops: u64,
    pub params_up: u64,
    pub params_down: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunSummary {
    pub config: ExperimentConfig,
    pub mode: String,
    pub n_clients: usize,
    /// Fine-tuned per-client accuracies, ascending.
    pub accuracies_ascending: Vec<f64>,
    /// Clients without test data, whose accuracy is undefined.
    pub undefined_accuracy_clients: Vec<usize>,
    pub mean_accuracy: Option<f64>,
    pub std_accuracy: Option<f64>,
    /// Global model (trained base plus its head) on the pooled test splits
    /// after the last federated round, before fine-tuning.
    pub pre_finetune_accuracy: Option<f64>,
    pub total_flops: u64,
    pub total_params_up: u64,
    pub total_params_down: u64,
    pub empty_clients: Vec<usize>,
    pub warnings: Vec<String>,
}

impl RunSummary {
    pub fn new(
        config: ExperimentConfig,
        rounds: &[RoundMetrics],
        clients: &[ClientResult],
        pre_finetune_accuracy: Option<f64>,
        empty_clients: Vec<usize>,
        warnings: Vec<String>,
    ) -> Self {
        let mut acc: Vec<f64> = clients.iter().filter_map(|c| c.accuracy).collect();
        acc.sort_by(f64::total_cmp);
        let undefined = clients
            .iter()
            .filter(|c| c.accuracy.is_none())
            .map(|c| c.client_id)
            .collect();
        let (mean, std) = if acc.is_empty() {
            (None, None)
        } else {
            let n = acc.len() as f64;
            let mean = acc.iter().sum::<f64>() / n;
            let var = acc.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / n;
            (Some(mean), Some(var.sqrt()))
        };
        Self {
            mode: config.plan.mode.name().to_string(),
            n_clients: config.n_clients,
            config,
            accuracies_ascending: acc,
            undefined_accuracy_clients: undefined,
            mean_accuracy: mean,
            std_accuracy: std,
            pre_finetune_accuracy,
            total_flops: rounds.iter().map(|r| r.flops).sum(),
            total_params_up: rounds.iter().map(|r| r.params_up).sum(),
            total_params_down: rounds.iter().map(|r| r.params_down).sum(),
            empty_clients,
            warnings,
        }
    }
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// Incremental writer for one run directory.
pub struct MetricsWriter {
    dir: PathBuf,
    rounds: csv::Writer<File>,
}

impl MetricsWriter {
    pub fn create(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref().to_path_buf();
        fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        let path = dir.join("rounds.csv");
        let file = File::create(&path).map_err(|e| Error::io(&path, e))?;
        let mut rounds = csv::Writer::from_writer(file);
        rounds.write_record(ROUNDS_HEADER)?;
        rounds.flush().map_err(|e| Error::io(&path, e))?;
        Ok(Self { dir, rounds })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn append_round(&mut self, m: &RoundMetrics) -> Result<()> {
        self.rounds.write_record([
            m.round.to_string(),
            m.mean_loss.to_string(),
            opt(m.eval_acc),
            m.flops.to_string(),
            m.params_up.to_string(),
            m.params_down.to_string(),
        ])?;
        self.rounds
            .flush()
            .map_err(|e| Error::io(self.dir.join("rounds.csv"), e))
    }

    pub fn finish(mut self, clients: &[ClientResult], summary: &RunSummary) -> Result<()> {
        self.rounds
            .flush()
            .map_err(|e| Error::io(self.dir.join("rounds.csv"), e))?;
        let path = self.dir.join("clients.csv");
        let mut w = csv::Writer::from_path(&path)?;
        w.write_record(CLIENTS_HEADER)?;
        let mut sorted: Vec<&ClientResult> = clients.iter().collect();
        sorted.sort_by_key(|c| c.client_id);
        for c in sorted {
            w.write_record([
                c.client_id.to_string(),
                c.n_train.to_string(),
                c.n_test.to_string(),
                opt(c.accuracy),
            ])?;
        }
        w.flush().map_err(|e| Error::io(&path, e))?;
        let path = self.dir.join("summary.json");
        let mut f = File::create(&path).map_err(|e| Error::io(&path, e))?;
        serde_json::to_writer_pretty(&mut f, summary)?;
        f.write_all(b"\n").map_err(|e| Error::io(&path, e))?;
        Ok(())
    }
}

/// Writes a complete run in one go.
pub fn write_metrics(
    rounds: &[RoundMetrics],
    clients: &[ClientResult],
    summary: &RunSummary,
    out_dir: impl AsRef<Path>,
) -> Result<()> {
    let mut w = MetricsWriter::create(out_dir)?;
    for r in rounds {
        w.append_round(r)?;
    }
    w.finish(clients, summary)
}
