//! Per-layer parameter counts of the reference CNN and the compact variant.

use fedsched::nn::{count_params, ModelArch};

fn main() {
    for (label, arch) in [
        ("reference", ModelArch::reference(10)),
        ("compact", ModelArch::compact(10)),
    ] {
        let counts = count_params(&arch);
        println!("{label}");
        println!("  {:<6} {:>9} {:>6}", "layer", "weight", "bias");
        for c in &counts.layers {
            println!("  {:<6} {:>9} {:>6}", c.name, c.weight, c.bias);
        }
        println!(
            "  base {}  head {}  total {}\n",
            counts.base_total(),
            counts.total() - counts.base_total(),
            counts.total()
        );
    }
}
