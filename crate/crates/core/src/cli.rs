//! The `fedsched` command line: `run`, `cost`, `partition` and `gradcheck`.
//!
//! Each subcommand is also callable as a plain function so examples and
//! tests can drive it without spawning a process.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, Subcommand};

use crate::config::parse_config;
use crate::cost::{compare_modes, render_csv, render_table, CostModel, CostReport};
use crate::data::dirichlet_partition;
use crate::error::{Error, Result};
use crate::fedsim::{DatasetSource, ExperimentConfig, Federation, RunReport};
use crate::metrics::{MetricsWriter, RoundMetrics};
use crate::nn::DEFAULT_SAMPLES;
use crate::nn::{
    count_params, finite_diff_check, init_params, random_batch, FreezeMask, GradCheckReport,
    ModelArch,
};

/// Overrides the output directory of `run` when `--out` is absent.
pub const OUT_DIR_ENV: &str = "FEDSCHED_OUT_DIR";

/// Pass threshold of `gradcheck`.
pub const GRADCHECK_TOL: f64 = 1e-3;

#[derive(Debug, Parser)]
#[command(
    name = "fedsched",
    version,
    about = "Federated learning with layer-wise unfreeze schedules"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train a federation and write rounds.csv, clients.csv and summary.json.
    Run {
        config: PathBuf,
        /// Output directory (default: $FEDSCHED_OUT_DIR, then runs/<mode>-seed<seed>).
        #[arg(short, long)]
        out: Option<PathBuf>,
    },
    /// Analytic FLOPs and communication of all four modes.
    Cost {
        /// Config file; omitted means the defaults.
        config: Option<PathBuf>,
        #[arg(long, default_value_t = 500)]
        samples_per_client: u64,
        /// Also write the CSV table to this file.
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Per-client class histogram of the Dirichlet partition, as CSV.
    Partition {
        config: Option<PathBuf>,
        #[arg(short, long)]
        out: Option<PathBuf>,
    },
    /// Finite-difference gradient check on the reference CNN.
    Gradcheck {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = DEFAULT_SAMPLES)]
        samples: usize,
        #[arg(long, default_value_t = 4)]
        batch: usize,
    },
}

fn load_or_default(path: Option<&Path>) -> Result<ExperimentConfig> {
    match path {
        Some(p) => parse_config(p),
        None => Ok(ExperimentConfig::default()),
    }
}

/// `--out`, else `$FEDSCHED_OUT_DIR`, else `runs/<mode>-seed<seed>`.
pub fn resolve_out_dir(flag: Option<PathBuf>, config: &ExperimentConfig) -> PathBuf {
    flag.or_else(|| std::env::var_os(OUT_DIR_ENV).map(PathBuf::from))
        .unwrap_or_else(|| {
            PathBuf::from("runs").join(format!(
                "{}-seed{}",
                config.plan.mode.name().to_lowercase(),
                config.seed
            ))
        })
}

/// Runs an experiment and streams its metrics into `out_dir`. The dataset
/// is loaded and partitioned before the directory is created, so a bad
/// config leaves nothing behind.
pub fn run(
    config: &ExperimentConfig,
    out_dir: &Path,
    mut on_round: impl FnMut(&RoundMetrics),
) -> Result<RunReport> {
    let data = config.dataset.load(config.seed, config.max_examples)?;
    let fed = Federation::new(config.clone(), &data)?;
    let mut writer = MetricsWriter::create(out_dir)?;
    let report = fed.run(|m| {
        on_round(m);
        writer.append_round(m)
    })?;
    writer.finish(&report.clients, &report.summary)?;
    Ok(report)
}

fn num_classes(config: &ExperimentConfig) -> usize {
    match config.dataset {
        DatasetSource::Mnist { .. } => 10,
        DatasetSource::Synthetic { num_classes, .. } => num_classes,
    }
}

/// Cost model for `config` with a fixed number of samples per client.
pub fn cost_model(config: &ExperimentConfig, samples_per_client: u64) -> CostModel {
    let arch = config.model.arch(num_classes(config));
    CostModel {
        samples_per_client,
        clients_per_round: config.clients_per_round() as u64,
        rounds: config.total_rounds,
        local_epochs: config.local_epochs as u64,
        counts: count_params(&arch),
    }
}

/// FedAvg, FedBABU, Vanilla and Anti under the config's unfreeze rounds.
pub fn cost_reports(config: &ExperimentConfig, samples_per_client: u64) -> Vec<CostReport> {
    compare_modes(
        &config.plan.unfreeze_rounds,
        &cost_model(config, samples_per_client),
        config.transmit_frozen,
    )
}

/// `client_id,n_train,n_test,class_0,...` with one row per client.
pub fn partition_csv(config: &ExperimentConfig) -> Result<String> {
    let data = config.dataset.load(config.seed, config.max_examples)?;
    let part = dirichlet_partition(data.labels(), data.num_classes(), &config.partition_spec())?;
    let hist = part.class_histogram(data.labels(), data.num_classes());
    let mut out = String::from("client_id,n_train,n_test");
    for c in 0..data.num_classes() {
        write!(out, ",class_{c}").unwrap();
    }
    out.push('\n');
    for (shard, row) in part.shards.iter().zip(&hist) {
        write!(
            out,
            "{},{},{}",
            shard.client_id,
            shard.train.len(),
            shard.test.len()
        )
        .unwrap();
        for n in row {
            write!(out, ",{n}").unwrap();
        }
        out.push('\n');
    }
    Ok(out)
}

/// Gradient check of the reference CNN at random parameters on a random
/// batch, every layer trainable.
pub fn gradcheck(seed: u64, samples: usize, batch: usize) -> Result<GradCheckReport> {
    if batch == 0 {
        return Err(Error::Config("batch: must be at least 1".into()));
    }
    let arch = ModelArch::reference(10);
    let params = init_params(&arch, seed);
    let (input, labels) = random_batch(&arch, batch, seed)?;
    let mask = FreezeMask::all_trainable(arch.num_trainable());
    finite_diff_check(&arch, &params, &input, &labels, &mask, samples, seed)
}

fn write_file(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn execute(command: Command) -> Result<bool> {
    match command {
        Command::Run { config, out } => {
            let cfg = parse_config(&config)?;
            let dir = resolve_out_dir(out, &cfg);
            let total = cfg.total_rounds;
            let start = Instant::now();
            let report = run(&cfg, &dir, |m| {
                if let Some(acc) = m.eval_acc {
                    eprintln!(
                        "round {:>4}/{total}  loss {:.4}  acc {:.4}",
                        m.round + 1,
                        m.mean_loss,
                        acc
                    );
                }
            })?;
            for w in &report.summary.warnings {
                eprintln!("warning: {w}");
            }
            let s = &report.summary;
            println!("mode            {}", s.mode);
            if let Some(acc) = s.pre_finetune_accuracy {
                println!("global accuracy {acc:.4}");
            }
            if let (Some(mean), Some(std)) = (s.mean_accuracy, s.std_accuracy) {
                println!(
                    "client accuracy {mean:.4} +- {std:.4} over {} clients",
                    s.accuracies_ascending.len()
                );
            }
            println!("total flops     {}", s.total_flops);
            println!(
                "params up/down  {} / {}",
                s.total_params_up, s.total_params_down
            );
            println!("wall time       {:.1}s", start.elapsed().as_secs_f64());
            println!("metrics         {}", dir.display());
            Ok(true)
        }
        Command::Cost {
            config,
            samples_per_client,
            csv,
        } => {
            let cfg = load_or_default(config.as_deref())?;
            let reports = cost_reports(&cfg, samples_per_client);
            let table = render_csv(&reports, cfg.total_rounds);
            print!("{}", render_table(&reports, cfg.total_rounds));
            println!();
            print!("{table}");
            if let Some(path) = csv {
                write_file(&path, &table)?;
            }
            Ok(true)
        }
        Command::Partition { config, out } => {
            let cfg = load_or_default(config.as_deref())?;
            let text = partition_csv(&cfg)?;
            match out {
                Some(path) => write_file(&path, &text)?,
                None => print!("{text}"),
            }
            Ok(true)
        }
        Command::Gradcheck {
            seed,
            samples,
            batch,
        } => {
            let report = gradcheck(seed, samples, batch)?;
            let pass = report.passes(GRADCHECK_TOL);
            println!(
                "max relative error {:.3e} over {} parameters ({} kinks skipped): {}",
                report.max_rel_error,
                report.sampled,
                report.skipped_kinks,
                if pass { "PASS" } else { "FAIL" }
            );
            Ok(pass)
        }
    }
}

/// Parses `args` (program name first) and runs the subcommand. Exit code 0
/// on success, 1 on a failed run or check, 2 on a usage error.
pub fn main_with_args<I, T>(args: I) -> ExitCode
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(e.exit_code() as u8);
        }
    };
    match execute(cli.command) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::schedule::Mode;

    #[test]
    fn default_cost_totals() {
        let reports = cost_reports(&ExperimentConfig::default(), 500);
        let totals: Vec<(Mode, u64)> = reports.iter().map(|r| (r.mode, r.total_flops)).collect();
        assert_eq!(
            totals,
            [
                (Mode::FedAvg, 873_039_000_000),
                (Mode::FedBabu, 865_344_000_000),
                (Mode::Vanilla, 314_912_000_000),
                (Mode::Anti, 838_880_000_000),
            ]
        );
    }

    #[test]
    fn out_dir_flag_wins() {
        let cfg = ExperimentConfig::default();
        assert_eq!(resolve_out_dir(Some("x".into()), &cfg), PathBuf::from("x"));
    }

    #[test]
    fn partition_rows_sum_to_shards() {
        let cfg = ExperimentConfig {
            n_clients: 10,
            dataset: DatasetSource::Synthetic {
                num_classes: 10,
                per_class: 20,
                image_size: 28,
            },
            ..Default::default()
        };
        let csv = partition_csv(&cfg).unwrap();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines.len(), 11);
        assert_eq!(lines[0].split(',').count(), 13);
        let mut total = 0;
        for line in &lines[1..] {
            let v: Vec<usize> = line.split(',').map(|x| x.parse().unwrap()).collect();
            assert_eq!(v[1] + v[2], v[3..].iter().sum::<usize>());
            total += v[1] + v[2];
        }
        assert_eq!(total, 200);
    }

    #[test]
    fn usage_error_exit_code() {
        assert_eq!(main_with_args(["fedsched", "fly"]), ExitCode::from(2));
    }
}
