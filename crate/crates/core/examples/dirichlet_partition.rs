//! Label skew of Dirichlet partitions of MNIST at several concentrations.
//!
//! ```bash
//! cargo run --release -p fedsched --example dirichlet_partition
//! ```

use fedsched::data::{dirichlet_partition, load_idx, mean_label_entropy, PartitionSpec};

fn main() -> fedsched::Result<()> {
    let data = load_idx(
        "data/mnist/images-idx3-ubyte",
        "data/mnist/labels-idx1-ubyte",
    )?;
    let labels = data.labels();
    for alpha in [0.1, 1.0, 10.0] {
        let spec = PartitionSpec {
            n_clients: 10,
            dirichlet_alpha: alpha,
            test_fraction: 0.25,
            seed: 0,
        };
        let part = dirichlet_partition(labels, 10, &spec)?;
        let hist = part.class_histogram(labels, 10);
        println!(
            "alpha = {alpha}  mean label entropy {:.3} nats",
            mean_label_entropy(&hist)
        );
        for (shard, row) in part.shards.iter().zip(&hist) {
            let cells: String = row.iter().map(|n| format!("{n:>5}")).collect();
            println!(
                "  client {:>2} {cells}   train {:>4} test {:>4}",
                shard.client_id,
                shard.train.len(),
                shard.test.len()
            );
        }
        if !part.empty_clients.is_empty() {
            println!("  empty clients: {:?}", part.empty_clients);
        }
        println!();
    }
    Ok(())
}
