//! Which layers train in which round under each mode.

use fedsched::schedule::{trainable_mask, validate_plan, Mode, SchedulePlan};

fn row(flags: &[bool]) -> String {
    flags
        .iter()
        .map(|&f| format!("{:<6}", if f { "T" } else { "." }))
        .collect()
}

fn main() {
    let names = ["conv1", "conv2", "fc1", "fc2"];
    for mode in Mode::ALL {
        let plan = SchedulePlan::default_for(mode);
        println!("{mode}  {:?}", plan.unfreeze_rounds);
        println!(
            "  round  {}",
            names.iter().map(|n| format!("{n:<6}")).collect::<String>()
        );
        for t in [0, 50, 99, 100, 150, 199, 200, 299] {
            println!("  {t:>5}  {}", row(trainable_mask(&plan, t, 3).flags()));
        }
        match validate_plan(&plan, 300) {
            Ok(warnings) => warnings.iter().for_each(|w| println!("  warning: {w}")),
            Err(e) => println!("  invalid: {e}"),
        }
        println!();
    }

    let broken = SchedulePlan::new(Mode::Vanilla, vec![3, 200, 100]);
    println!(
        "{:?} -> {}",
        broken.unfreeze_rounds,
        validate_plan(&broken, 150).unwrap_err()
    );
}
