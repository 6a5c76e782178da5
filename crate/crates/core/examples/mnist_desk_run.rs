//! Desk-scale MNIST federation: 20 clients, 60 rounds, unfreezing at
//! rounds 0, 20 and 40, five fine-tuning epochs. Runs Vanilla and Anti (or
//! the modes given on the command line) and writes each run's metrics.
//!
//! ```bash
//! cargo run --release -p fedsched --example mnist_desk_run -- Vanilla FedAvg
//! ```

use std::path::PathBuf;

use fedsched::cli;
use fedsched::fedsim::ExperimentConfig;
use fedsched::schedule::{Mode, SchedulePlan};

fn desk_config(mode: Mode) -> ExperimentConfig {
    ExperimentConfig {
        n_clients: 20,
        total_rounds: 60,
        plan: SchedulePlan::new(mode, vec![0, 20, 40]),
        // about 300 training examples per client after the 25% test split
        max_examples: Some(8000),
        parallel: true,
        ..Default::default()
    }
}

fn main() -> fedsched::Result<()> {
    let modes: Vec<Mode> = std::env::args()
        .skip(1)
        .map(|a| a.parse())
        .collect::<fedsched::Result<_>>()?;
    let modes = if modes.is_empty() {
        vec![Mode::Vanilla, Mode::Anti]
    } else {
        modes
    };
    for mode in modes {
        let cfg = desk_config(mode);
        let out = PathBuf::from("runs/desk").join(mode.name().to_lowercase());
        let start = std::time::Instant::now();
        let report = cli::run(&cfg, &out, |_| {})?;
        let s = &report.summary;
        println!(
            "{:<8} global {:.4}  fine-tuned {:.4} +- {:.4}  flops {}  {:.0}s",
            mode.name(),
            s.pre_finetune_accuracy.unwrap_or(f64::NAN),
            s.mean_accuracy.unwrap_or(f64::NAN),
            s.std_accuracy.unwrap_or(f64::NAN),
            s.total_flops,
            start.elapsed().as_secs_f64()
        );
    }
    Ok(())
}
