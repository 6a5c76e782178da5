use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::data::{load_idx, make_synthetic, Dataset, PartitionSpec};
use crate::error::{Error, Result};
use crate::nn::ModelArch;
use crate::schedule::{validate_plan, Mode, SchedulePlan};

/// Which network to train.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelChoice {
    /// Two conv + two dense layers, 582,026 parameters at 10 classes.
    Reference,
    /// Same topology with few channels, for quick runs.
    Compact,
}

impl ModelChoice {
    pub fn arch(self, num_classes: usize) -> ModelArch {
        match self {
            ModelChoice::Reference => ModelArch::reference(num_classes),
            ModelChoice::Compact => ModelArch::compact(num_classes),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum DatasetSource {
    Mnist {
        images: PathBuf,
        labels: PathBuf,
    },
    Synthetic {
        num_classes: usize,
        per_class: usize,
        image_size: usize,
    },
}

impl DatasetSource {
    /// Loads (or generates) the dataset and keeps at most `max_examples`.
    pub fn load(&self, seed: u64, max_examples: Option<usize>) -> Result<Dataset> {
        let ds = match self {
            DatasetSource::Mnist { images, labels } => load_idx(images, labels)?,
            DatasetSource::Synthetic {
                num_classes,
                per_class,
                image_size,
            } => make_synthetic(*num_classes, *per_class, *image_size, seed),
        };
        Ok(match max_examples {
            Some(n) => ds.truncated(n),
            None => ds,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub n_clients: usize,
    pub join_ratio: f64,
    pub total_rounds: u64,
    /// Local fine-tuning epochs per client after the federated rounds.
    pub fine_tune_rounds: usize,
    pub local_epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub plan: SchedulePlan,
    pub dirichlet_alpha: f64,
    pub test_fraction: f64,
    pub dataset: DatasetSource,
    pub max_examples: Option<usize>,
    pub model: ModelChoice,
    pub seed: u64,
    pub eval_every: u64,
    /// Count every base layer as communicated, trained or not.
    pub transmit_frozen: bool,
    /// Run the clients of a round on the rayon pool. Not part of the
    /// experiment's identity, so it is left out of the config echo.
    #[serde(skip)]
    pub parallel: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            n_clients: 100,
            join_ratio: 0.1,
            total_rounds: 300,
            fine_tune_rounds: 5,
            local_epochs: 1,
            batch_size: 10,
            learning_rate: 0.005,
            plan: SchedulePlan::default_for(Mode::Vanilla),
            dirichlet_alpha: 0.1,
            test_fraction: 0.25,
            dataset: DatasetSource::Mnist {
                images: PathBuf::from("data/mnist/images-idx3-ubyte"),
                labels: PathBuf::from("data/mnist/labels-idx1-ubyte"),
            },
            max_examples: None,
            model: ModelChoice::Reference,
            seed: 1,
            eval_every: 10,
            transmit_frozen: false,
            parallel: false,
        }
    }
}

impl ExperimentConfig {
    /// Participants per round, `floor(join_ratio * n_clients)`.
    pub fn clients_per_round(&self) -> usize {
        (self.join_ratio * self.n_clients as f64 + 1e-9).floor() as usize
    }

    pub fn partition_spec(&self) -> PartitionSpec {
        PartitionSpec {
            n_clients: self.n_clients,
            dirichlet_alpha: self.dirichlet_alpha,
            test_fraction: self.test_fraction,
            seed: self.seed,
        }
    }

    /// Checks every invariant; returns schedule warnings on success. The
    /// error names the offending key.
    pub fn validate(&self) -> Result<Vec<String>> {
        let fail = |key: &str, msg: String| Err(Error::Config(format!("{key}: {msg}")));
        if self.n_clients == 0 {
            return fail("n_clients", "must be at least 1".into());
        }
        if !(self.join_ratio > 0.0 && self.join_ratio <= 1.0) {
            return fail(
                "join_ratio",
                format!("must satisfy 0 < join_ratio <= 1, got {}", self.join_ratio),
            );
        }
        if self.clients_per_round() == 0 {
            return fail(
                "join_ratio",
                format!(
                    "floor({} * {}) = 0 clients per round",
                    self.join_ratio, self.n_clients
                ),
            );
        }
        if self.total_rounds == 0 {
            return fail("total_rounds", "must be at least 1".into());
        }
        if self.local_epochs == 0 {
            return fail("local_epochs", "must be at least 1".into());
        }
        if self.batch_size == 0 {
            return fail("batch_size", "must be at least 1".into());
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return fail(
                "learning_rate",
                format!("must be positive, got {}", self.learning_rate),
            );
        }
        if self.eval_every == 0 {
            return fail("eval_every", "must be at least 1".into());
        }
        if !(self.dirichlet_alpha > 0.0 && self.dirichlet_alpha.is_finite()) {
            return fail(
                "dirichlet_alpha",
                format!("must be positive, got {}", self.dirichlet_alpha),
            );
        }
        if !(self.test_fraction > 0.0 && self.test_fraction < 1.0) {
            return fail(
                "test_fraction",
                format!("must lie in (0, 1), got {}", self.test_fraction),
            );
        }
        if self.max_examples == Some(0) {
            return fail("max_examples", "must be at least 1 when given".into());
        }
        if let DatasetSource::Synthetic {
            num_classes,
            per_class,
            image_size,
        } = self.dataset
        {
            if num_classes < 2 || per_class == 0 || image_size != 28 {
                return fail(
                    "dataset",
                    "synthetic data needs >= 2 classes, >= 1 example per class and 28x28 images"
                        .into(),
                );
            }
        }
        let k = self.model.arch(2).base_layer_count();
        if self.plan.mode.is_scheduled() && self.plan.base_layer_count() != k {
            return fail(
                "unfreeze_rounds",
                format!(
                    "{} entries given but the model has {k} base layers",
                    self.plan.base_layer_count()
                ),
            );
        }
        validate_plan(&self.plan, self.total_rounds)
            .map_err(|e| Error::Config(format!("unfreeze_rounds: {e}")))
    }
}
