//! Early versus late unfreezing: the analytic cost at 300 rounds, then two
//! short synthetic runs that differ only in their unfreeze rounds.

use fedsched::cli::cost_reports;
use fedsched::fedsim::{run_experiment, DatasetSource, ExperimentConfig, ModelChoice};
use fedsched::schedule::{Mode, SchedulePlan};

fn main() -> fedsched::Result<()> {
    for rounds in [vec![0, 50, 100], vec![0, 100, 200]] {
        let cfg = ExperimentConfig {
            plan: SchedulePlan::new(Mode::Vanilla, rounds.clone()),
            ..Default::default()
        };
        let reports = cost_reports(&cfg, 500);
        println!(
            "t = {rounds:?}: Vanilla {}  Anti {}",
            reports[2].total_flops, reports[3].total_flops
        );
    }
    println!();
    for rounds in [vec![0, 5, 10], vec![0, 10, 20]] {
        let cfg = ExperimentConfig {
            n_clients: 10,
            join_ratio: 0.3,
            total_rounds: 30,
            fine_tune_rounds: 3,
            learning_rate: 0.05,
            plan: SchedulePlan::new(Mode::Vanilla, rounds.clone()),
            dirichlet_alpha: 0.5,
            dataset: DatasetSource::Synthetic {
                num_classes: 10,
                per_class: 60,
                image_size: 28,
            },
            model: ModelChoice::Compact,
            ..Default::default()
        };
        let s = run_experiment(&cfg)?.summary;
        println!(
            "t = {rounds:?}: flops {}  client accuracy {:.3}  global {:.3}",
            s.total_flops,
            s.mean_accuracy.unwrap_or(f64::NAN),
            s.pre_finetune_accuracy.unwrap_or(f64::NAN)
        );
    }
    Ok(())
}
