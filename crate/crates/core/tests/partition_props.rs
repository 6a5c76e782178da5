use fedsched::data::{dirichlet_partition, mean_label_entropy, PartitionSpec};
use proptest::prelude::*;

fn spec(n_clients: usize, alpha: f64, seed: u64) -> PartitionSpec {
    PartitionSpec {
        n_clients,
        dirichlet_alpha: alpha,
        test_fraction: 0.25,
        seed,
    }
}

proptest! {
    #[test]
    fn every_example_lands_in_exactly_one_split(
        labels in prop::collection::vec(0usize..7, 1..400),
        n_clients in 1usize..15,
        alpha in 0.01f64..50.0,
        seed in any::<u64>(),
    ) {
        let part = dirichlet_partition(&labels, 7, &spec(n_clients, alpha, seed)).unwrap();
        prop_assert_eq!(part.shards.len(), n_clients);
        let mut owner = vec![0u32; labels.len()];
        for s in &part.shards {
            for &i in s.train.iter().chain(&s.test) {
                owner[i] += 1;
            }
            prop_assert_eq!(s.test.len(), (s.len() as f64 * 0.25).floor() as usize);
        }
        prop_assert!(owner.iter().all(|&c| c == 1));
        let hist = part.class_histogram(&labels, 7);
        for (s, row) in part.shards.iter().zip(&hist) {
            prop_assert_eq!(row.iter().sum::<usize>(), s.len());
        }
    }
}

#[test]
fn heterogeneity_grows_as_alpha_shrinks() {
    let labels: Vec<usize> = (0..2000).map(|i| i % 10).collect();
    let mean_entropy = |alpha: f64| {
        (0..10)
            .map(|seed| {
                let part = dirichlet_partition(&labels, 10, &spec(10, alpha, seed)).unwrap();
                mean_label_entropy(&part.class_histogram(&labels, 10))
            })
            .sum::<f64>()
            / 10.0
    };
    let (low, mid, high) = (mean_entropy(0.1), mean_entropy(1.0), mean_entropy(10.0));
    assert!(low < mid && mid < high, "{low} {mid} {high}");
}

#[test]
fn same_seed_same_partition() {
    let labels: Vec<usize> = (0..500).map(|i| (i * 7) % 10).collect();
    let a = dirichlet_partition(&labels, 10, &spec(8, 0.3, 42)).unwrap();
    let b = dirichlet_partition(&labels, 10, &spec(8, 0.3, 42)).unwrap();
    let c = dirichlet_partition(&labels, 10, &spec(8, 0.3, 43)).unwrap();
    assert_eq!(a.shards, b.shards);
    assert_ne!(a.shards, c.shards);
}
