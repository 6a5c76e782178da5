//! Experiment configuration files (TOML).
//!
//! Every key is optional; omitted keys take the defaults of
//! [`ExperimentConfig::default`]. Unknown keys are rejected.
//!
//! ```toml
//! n_clients = 100
//! join_ratio = 0.1
//! total_rounds = 300
//! fine_tune_rounds = 5
//! local_epochs = 1
//! batch_size = 10
//! learning_rate = 0.005
//! mode = "Vanilla"            # Vanilla | Anti | FedBABU | FedAvg
//! unfreeze_rounds = [0, 100, 200]
//! dirichlet_alpha = 0.1
//! test_fraction = 0.25
//! dataset = "mnist"           # mnist | synthetic
//! mnist_images = "data/mnist/images-idx3-ubyte"
//! mnist_labels = "data/mnist/labels-idx1-ubyte"
//! synthetic_classes = 10
//! synthetic_per_class = 100
//! max_examples = 8000         # optional cap on the dataset
//! model = "reference"         # reference | compact
//! seed = 1
//! eval_every = 10
//! transmit_frozen = false
//! parallel = false
//! ```
//!
//! Relative dataset paths are resolved against the working directory.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fedsim::{DatasetSource, ExperimentConfig, ModelChoice};
use crate::schedule::{Mode, SchedulePlan};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
enum DatasetKind {
    Mnist,
    Synthetic,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct ConfigFile {
    n_clients: usize,
    join_ratio: f64,
    total_rounds: u64,
    fine_tune_rounds: usize,
    local_epochs: usize,
    batch_size: usize,
    learning_rate: f64,
    mode: String,
    unfreeze_rounds: Vec<u64>,
    dirichlet_alpha: f64,
    test_fraction: f64,
    dataset: DatasetKind,
    mnist_images: PathBuf,
    mnist_labels: PathBuf,
    synthetic_classes: usize,
    synthetic_per_class: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    max_examples: Option<usize>,
    model: ModelChoice,
    seed: u64,
    eval_every: u64,
    transmit_frozen: bool,
    parallel: bool,
}

const DEFAULT_SYNTHETIC_CLASSES: usize = 10;
const DEFAULT_SYNTHETIC_PER_CLASS: usize = 100;

impl Default for ConfigFile {
    fn default() -> Self {
        Self::from(&ExperimentConfig::default())
    }
}

impl From<&ExperimentConfig> for ConfigFile {
    fn from(c: &ExperimentConfig) -> Self {
        let defaults = ExperimentConfig::default();
        let (default_images, default_labels) = match defaults.dataset {
            DatasetSource::Mnist { images, labels } => (images, labels),
            DatasetSource::Synthetic { .. } => unreachable!("default dataset is MNIST"),
        };
        let (dataset, mnist_images, mnist_labels, synthetic_classes, synthetic_per_class) =
            match &c.dataset {
                DatasetSource::Mnist { images, labels } => (
                    DatasetKind::Mnist,
                    images.clone(),
                    labels.clone(),
                    DEFAULT_SYNTHETIC_CLASSES,
                    DEFAULT_SYNTHETIC_PER_CLASS,
                ),
                DatasetSource::Synthetic {
                    num_classes,
                    per_class,
                    ..
                } => (
                    DatasetKind::Synthetic,
                    default_images,
                    default_labels,
                    *num_classes,
                    *per_class,
                ),
            };
        Self {
            n_clients: c.n_clients,
            join_ratio: c.join_ratio,
            total_rounds: c.total_rounds,
            fine_tune_rounds: c.fine_tune_rounds,
            local_epochs: c.local_epochs,
            batch_size: c.batch_size,
            learning_rate: c.learning_rate,
            mode: c.plan.mode.name().to_string(),
            unfreeze_rounds: c.plan.unfreeze_rounds.clone(),
            dirichlet_alpha: c.dirichlet_alpha,
            test_fraction: c.test_fraction,
            dataset,
            mnist_images,
            mnist_labels,
            synthetic_classes,
            synthetic_per_class,
            max_examples: c.max_examples,
            model: c.model,
            seed: c.seed,
            eval_every: c.eval_every,
            transmit_frozen: c.transmit_frozen,
            parallel: c.parallel,
        }
    }
}

/// 1-based line of the first `key = ...` assignment in `text`.
fn key_line(text: &str, key: &str) -> Option<usize> {
    text.lines()
        .position(|line| {
            let line = line.trim_start();
            line.strip_prefix(key)
                .map(|rest| rest.trim_start().starts_with('='))
                .unwrap_or(false)
        })
        .map(|i| i + 1)
}

fn with_line(text: &str, err: Error) -> Error {
    match err {
        Error::Config(msg) => {
            let key = msg.split(':').next().unwrap_or("").trim().to_string();
            match key_line(text, &key) {
                Some(line) => Error::Config(format!("{msg} (line {line})")),
                None => Error::Config(msg),
            }
        }
        other => other,
    }
}

/// Parses and validates configuration text.
pub fn parse_config_str(text: &str) -> Result<ExperimentConfig> {
    let file: ConfigFile = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
    let mode: Mode = file
        .mode
        .parse()
        .map_err(|e: Error| with_line(text, Error::Config(format!("mode: {e}"))))?;
    let dataset = match file.dataset {
        DatasetKind::Mnist => DatasetSource::Mnist {
            images: file.mnist_images,
            labels: file.mnist_labels,
        },
        DatasetKind::Synthetic => DatasetSource::Synthetic {
            num_classes: file.synthetic_classes,
            per_class: file.synthetic_per_class,
            image_size: 28,
        },
    };
    let config = ExperimentConfig {
        n_clients: file.n_clients,
        join_ratio: file.join_ratio,
        total_rounds: file.total_rounds,
        fine_tune_rounds: file.fine_tune_rounds,
        local_epochs: file.local_epochs,
        batch_size: file.batch_size,
        learning_rate: file.learning_rate,
        plan: SchedulePlan::new(mode, file.unfreeze_rounds),
        dirichlet_alpha: file.dirichlet_alpha,
        test_fraction: file.test_fraction,
        dataset,
        max_examples: file.max_examples,
        model: file.model,
        seed: file.seed,
        eval_every: file.eval_every,
        transmit_frozen: file.transmit_frozen,
        parallel: file.parallel,
    };
    config.validate().map_err(|e| with_line(text, e))?;
    Ok(config)
}

pub fn parse_config(path: impl AsRef<Path>) -> Result<ExperimentConfig> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_config_str(&text).map_err(|e| match e {
        Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
        other => other,
    })
}

/// Serializes a configuration in the file format read by [`parse_config`].
pub fn write_config_str(config: &ExperimentConfig) -> Result<String> {
    toml::to_string(&ConfigFile::from(config)).map_err(|e| Error::Config(e.to_string()))
}
