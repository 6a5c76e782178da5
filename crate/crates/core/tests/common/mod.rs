#![allow(dead_code)]

use fedsched::data::{make_synthetic, Dataset};
use fedsched::fedsim::{DatasetSource, ExperimentConfig, ModelChoice};
use fedsched::nn::{Layer, ModelArch, Shape};
use fedsched::schedule::{Mode, SchedulePlan};

/// Flatten, then `k` hidden dense layers of width 6, then the head.
pub fn dense_arch(k: usize, num_classes: usize) -> ModelArch {
    let mut layers = vec![Layer::Flatten];
    let mut width = 784;
    for _ in 0..k {
        layers.push(Layer::Dense {
            inputs: width,
            outputs: 6,
        });
        layers.push(Layer::Relu);
        width = 6;
    }
    layers.push(Layer::Dense {
        inputs: width,
        outputs: num_classes,
    });
    ModelArch::new(Shape::Image { c: 1, h: 28, w: 28 }, layers).unwrap()
}

pub fn synthetic(per_class: usize) -> Dataset {
    make_synthetic(10, per_class, 28, 0)
}

/// Compact CNN on synthetic digits, 6 clients, 3 per round.
pub fn small_config(mode: Mode, unfreeze_rounds: Vec<u64>, total_rounds: u64) -> ExperimentConfig {
    ExperimentConfig {
        n_clients: 6,
        join_ratio: 0.5,
        total_rounds,
        fine_tune_rounds: 1,
        plan: SchedulePlan::new(mode, unfreeze_rounds),
        dirichlet_alpha: 0.5,
        dataset: DatasetSource::Synthetic {
            num_classes: 10,
            per_class: 12,
            image_size: 28,
        },
        model: ModelChoice::Compact,
        learning_rate: 0.05,
        eval_every: 2,
        seed: 7,
        ..Default::default()
    }
}
