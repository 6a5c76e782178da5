//! FLOPs and communication of FedAvg, FedBABU, Vanilla and Anti with 100
//! clients, 10 per round, 500 samples each and 300 rounds, followed by the
//! per-phase breakdown of the Vanilla schedule.

use fedsched::cost::{compare_modes, format_billions, render_csv, render_table, CostModel};
use fedsched::nn::{count_params, ModelArch};

fn main() {
    let model = CostModel::reference_setup(count_params(&ModelArch::reference(10)));
    let reports = compare_modes(&[0, 100, 200], &model, false);
    print!("{}", render_table(&reports, model.rounds));
    println!();
    print!("{}", render_csv(&reports, model.rounds));

    println!("\nVanilla phases");
    for p in &reports[2].phases {
        println!(
            "  rounds {:>3}..{:<3} {:>7} trainable params  {:>9}e9 FLOPs",
            p.start_round,
            p.end_round,
            p.trainable_params,
            format_billions(p.flops)
        );
    }
    let ratio = reports[2].total_flops as f64 / reports[0].total_flops as f64;
    println!("\nVanilla / FedAvg = {ratio:.4}");
}
