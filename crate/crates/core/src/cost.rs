//! Analytic training-cost model.
//!
//! A round costs (trainable parameters) x (training samples processed),
//! summed over participating clients. Frozen layers are free, including the
//! forward pass through them. Communication counts parameters: each
//! participant uploads the layers it trained and the server broadcasts the
//! same layers back.

use std::fmt::Write as _;

use serde::Serialize;

use crate::nn::{FreezeMask, ParamCounts};
use crate::schedule::{trainable_mask, Mode, SchedulePlan};

/// Inputs of the analytic cost.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CostModel {
    pub samples_per_client: u64,
    pub clients_per_round: u64,
    pub rounds: u64,
    pub local_epochs: u64,
    pub counts: ParamCounts,
}

impl CostModel {
    /// 500 samples per client, 10 clients per round, 300 rounds, one epoch.
    pub fn reference_setup(counts: ParamCounts) -> Self {
        Self {
            samples_per_client: 500,
            clients_per_round: 10,
            rounds: 300,
            local_epochs: 1,
            counts,
        }
    }

    /// Training samples processed by all participants in one round.
    pub fn samples_per_round(&self) -> u64 {
        self.samples_per_client * self.clients_per_round * self.local_epochs
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
pub struct CommVolume {
    /// Parameters uploaded by all participants together.
    pub up: u64,
    /// Parameters broadcast back to the participants.
    pub down: u64,
}

/// FLOPs of one round: sum of `weight + bias` over trainable layers times
/// `samples_processed`.
pub fn round_flops(mask: &FreezeMask, counts: &ParamCounts, samples_processed: u64) -> u64 {
    assert_eq!(mask.len(), counts.layers.len(), "mask/count length");
    counts.masked_total(mask) * samples_processed
}

/// Layers that leave the client in a round.
pub fn communicated_layers(mask: &FreezeMask, transmit_frozen: bool) -> Vec<bool> {
    let head = mask.len() - 1;
    mask.flags()
        .iter()
        .enumerate()
        .map(|(l, &trainable)| trainable || (transmit_frozen && l < head))
        .collect()
}

/// Parameters communicated in one round by `participants` clients.
pub fn round_comm(
    mask: &FreezeMask,
    counts: &ParamCounts,
    participants: u64,
    transmit_frozen: bool,
) -> CommVolume {
    assert_eq!(mask.len(), counts.layers.len(), "mask/count length");
    let per_client: u64 = communicated_layers(mask, transmit_frozen)
        .iter()
        .zip(&counts.layers)
        .filter(|(&sent, _)| sent)
        .map(|(_, c)| c.total())
        .sum();
    CommVolume {
        up: participants * per_client,
        down: participants * per_client,
    }
}

/// A run of consecutive rounds sharing one mask.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct PhaseCost {
    pub start_round: u64,
    pub end_round: u64,
    pub trainable_params: u64,
    pub flops: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CostReport {
    pub mode: Mode,
    pub per_round_flops: Vec<u64>,
    pub cumulative_flops: Vec<u64>,
    pub per_round_comm: Vec<CommVolume>,
    pub phases: Vec<PhaseCost>,
    pub total_flops: u64,
    pub total_comm: CommVolume,
}

/// Integrates [`round_flops`] and [`round_comm`] over every round of `plan`.
pub fn total_flops(plan: &SchedulePlan, model: &CostModel, transmit_frozen: bool) -> CostReport {
    let k = model.counts.layers.len() - 1;
    let samples = model.samples_per_round();
    let mut per_round_flops = Vec::with_capacity(model.rounds as usize);
    let mut per_round_comm = Vec::with_capacity(model.rounds as usize);
    let mut phases: Vec<PhaseCost> = Vec::new();
    for t in 0..model.rounds {
        let mask = trainable_mask(plan, t, k);
        let flops = round_flops(&mask, &model.counts, samples);
        per_round_flops.push(flops);
        per_round_comm.push(round_comm(
            &mask,
            &model.counts,
            model.clients_per_round,
            transmit_frozen,
        ));
        let trainable_params = model.counts.masked_total(&mask);
        match phases.last_mut() {
            Some(p) if p.trainable_params == trainable_params => {
                p.end_round = t + 1;
                p.flops += flops;
            }
            _ => phases.push(PhaseCost {
                start_round: t,
                end_round: t + 1,
                trainable_params,
                flops,
            }),
        }
    }
    let cumulative_flops = per_round_flops
        .iter()
        .scan(0u64, |acc, f| {
            *acc += f;
            Some(*acc)
        })
        .collect();
    let total_flops = per_round_flops.iter().sum();
    let total_comm = per_round_comm
        .iter()
        .fold(CommVolume::default(), |acc, c| CommVolume {
            up: acc.up + c.up,
            down: acc.down + c.down,
        });
    CostReport {
        mode: plan.mode,
        per_round_flops,
        cumulative_flops,
        per_round_comm,
        phases,
        total_flops,
        total_comm,
    }
}

/// Cost of all four modes under one model, in FedAvg, FedBABU, Vanilla,
/// Anti order.
pub fn compare_modes(
    unfreeze_rounds: &[u64],
    model: &CostModel,
    transmit_frozen: bool,
) -> Vec<CostReport> {
    Mode::ALL
        .iter()
        .map(|&mode| {
            total_flops(
                &SchedulePlan::new(mode, unfreeze_rounds.to_vec()),
                model,
                transmit_frozen,
            )
        })
        .collect()
}

/// `873039000000` → `"873.039"` (billions, three decimals, exact).
pub fn format_billions(flops: u64) -> String {
    let whole = flops / 1_000_000_000;
    let frac = (flops % 1_000_000_000) / 1_000_000;
    let rem = flops % 1_000_000;
    if rem == 0 {
        format!("{whole}.{frac:03}")
    } else {
        format!("{:.3}", flops as f64 / 1e9)
    }
}

/// Aligned text table: mode, total FLOPs, billions, rounds, params up.
pub fn render_table(reports: &[CostReport], rounds: u64) -> String {
    let mut out = String::new();
    writeln!(
        out,
        "{:<10} {:>20} {:>12} {:>7} {:>16}",
        "method", "flops", "x10^9", "rounds", "params_up"
    )
    .unwrap();
    for r in reports {
        writeln!(
            out,
            "{:<10} {:>20} {:>12} {:>7} {:>16}",
            r.mode.name(),
            r.total_flops,
            format_billions(r.total_flops),
            rounds,
            r.total_comm.up
        )
        .unwrap();
    }
    out
}

/// CSV with header `method,flops,flops_billions,rounds,params_up,params_down`.
pub fn render_csv(reports: &[CostReport], rounds: u64) -> String {
    let mut out = String::from("method,flops,flops_billions,rounds,params_up,params_down\n");
    for r in reports {
        writeln!(
            out,
            "{},{},{},{},{},{}",
            r.mode.name(),
            r.total_flops,
            format_billions(r.total_flops),
            rounds,
            r.total_comm.up,
            r.total_comm.down
        )
        .unwrap();
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{count_params, ModelArch};

    fn counts() -> ParamCounts {
        count_params(&ModelArch::reference(10))
    }

    #[test]
    fn round_flops_examples() {
        let c = counts();
        assert_eq!(round_flops(&FreezeMask::all_frozen(4), &c, 5_000), 0);
        assert_eq!(
            round_flops(&FreezeMask::all_trainable(4), &c, 5_000),
            2_910_130_000
        );
        let conv1 = FreezeMask::new(vec![true, false, false, false]);
        assert_eq!(round_flops(&conv1, &c, 5_000), 4_160_000);
    }

    #[test]
    fn comm_examples() {
        let c = counts();
        let conv1 = FreezeMask::new(vec![true, false, false, false]);
        assert_eq!(round_comm(&conv1, &c, 10, false).up, 8_320);
        assert_eq!(
            round_comm(&FreezeMask::all_trainable(4), &c, 10, false).up,
            5_820_260
        );
        assert_eq!(round_comm(&conv1, &c, 10, true).up, 10 * 576_896);
        let babu = FreezeMask::new(vec![true, true, true, false]);
        assert_eq!(round_comm(&babu, &c, 10, false).up, 5_768_960);
        assert_eq!(round_comm(&conv1, &c, 10, false).down, 8_320);
    }

    #[test]
    fn four_mode_totals() {
        let model = CostModel::reference_setup(counts());
        let totals: Vec<(Mode, u64)> = compare_modes(&[0, 100, 200], &model, false)
            .into_iter()
            .map(|r| (r.mode, r.total_flops))
            .collect();
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
    fn vanilla_phases_sum_to_total() {
        let model = CostModel::reference_setup(counts());
        let r = total_flops(&SchedulePlan::default_for(Mode::Vanilla), &model, false);
        let phase: Vec<(u64, u64, u64)> = r
            .phases
            .iter()
            .map(|p| (p.start_round, p.end_round, p.trainable_params))
            .collect();
        assert_eq!(
            phase,
            [(0, 100, 832), (100, 200, 52_096), (200, 300, 576_896)]
        );
        assert_eq!(r.phases.iter().map(|p| p.flops).sum::<u64>(), r.total_flops);
        assert_eq!(*r.cumulative_flops.last().unwrap(), r.total_flops);
        assert_eq!(r.per_round_flops.len(), 300);
    }

    #[test]
    fn formatting() {
        assert_eq!(format_billions(873_039_000_000), "873.039");
        assert_eq!(format_billions(314_912_000_000), "314.912");
        assert_eq!(format_billions(4_160_000), "0.004");
        let model = CostModel::reference_setup(counts());
        let csv = render_csv(&compare_modes(&[0, 100, 200], &model, false), 300);
        assert!(csv.starts_with("method,flops,flops_billions,rounds,params_up,params_down\n"));
        assert!(csv.contains("Vanilla,314912000000,314.912,300,"));
    }
}
