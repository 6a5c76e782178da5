//! Finite-difference verification of the analytic gradients on the
//! reference CNN, for several seeds and freeze masks.
//!
//! ```bash
//! cargo run --release -p fedsched --example gradient_check
//! ```

use fedsched::nn::{finite_diff_check, init_params, FreezeMask, ModelArch};
use fedsched::Tensor;
use rand::{Rng, SeedableRng};

fn main() -> fedsched::Result<()> {
    let arch = ModelArch::reference(10);
    let masks = [
        ("all layers", FreezeMask::all_trainable(4)),
        (
            "conv1 only",
            FreezeMask::new(vec![true, false, false, false]),
        ),
        ("fc1 only", FreezeMask::new(vec![false, false, true, false])),
    ];
    for seed in 0..3u64 {
        let params = init_params(&arch, seed);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed + 1000);
        let batch = Tensor::new(
            vec![4, 1, 28, 28],
            (0..4 * 784).map(|_| rng.random::<f64>()).collect(),
        )?;
        let labels: Vec<usize> = (0..4).map(|_| rng.random_range(0..10)).collect();
        for (name, mask) in &masks {
            let start = std::time::Instant::now();
            let report = finite_diff_check(&arch, &params, &batch, &labels, mask, 200, seed)?;
            println!(
                "seed {seed} {name:<10}  max rel err {:.3e}  sampled {}  kinks skipped {}  {:.1}s  {}",
                report.max_rel_error,
                report.sampled,
                report.skipped_kinks,
                start.elapsed().as_secs_f64(),
                if report.passes(1e-3) { "PASS" } else { "FAIL" }
            );
        }
    }
    Ok(())
}
