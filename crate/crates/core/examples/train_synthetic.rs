//! A short federation on generated digits with the compact CNN; needs no
//! dataset on disk. Prints the round log and the per-client accuracies.

use fedsched::fedsim::{run_experiment, DatasetSource, ExperimentConfig, ModelChoice};
use fedsched::schedule::{Mode, SchedulePlan};

fn main() -> fedsched::Result<()> {
    let cfg = ExperimentConfig {
        n_clients: 10,
        join_ratio: 0.3,
        total_rounds: 30,
        fine_tune_rounds: 3,
        learning_rate: 0.05,
        plan: SchedulePlan::new(Mode::Anti, vec![0, 10, 20]),
        dirichlet_alpha: 0.5,
        dataset: DatasetSource::Synthetic {
            num_classes: 10,
            per_class: 60,
            image_size: 28,
        },
        model: ModelChoice::Compact,
        eval_every: 5,
        ..Default::default()
    };
    let report = run_experiment(&cfg)?;
    println!("round  participants      loss   acc     flops");
    for r in &report.rounds {
        let acc = r.eval_acc.map(|a| format!("{a:.3}")).unwrap_or_default();
        println!(
            "{:>5}  {:<16} {:.4}  {:>5}  {}",
            r.round,
            format!("{:?}", r.participants),
            r.mean_loss,
            acc,
            r.flops
        );
    }
    let s = &report.summary;
    println!(
        "\nper-client accuracy, ascending: {:.2?}",
        s.accuracies_ascending
    );
    println!(
        "mean {:.3}  std {:.3}  global before fine-tuning {:.3}",
        s.mean_accuracy.unwrap_or(f64::NAN),
        s.std_accuracy.unwrap_or(f64::NAN),
        s.pre_finetune_accuracy.unwrap_or(f64::NAN)
    );
    Ok(())
}
