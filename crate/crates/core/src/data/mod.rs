//! Datasets, synthetic data and Dirichlet non-IID partitioning.

mod dataset;
mod partition;
mod synthetic;

pub use dataset::{
    load_idx, parse_idx_images, parse_idx_labels, Dataset, IDX_IMAGES_MAGIC, IDX_LABELS_MAGIC,
};
pub use partition::{
    dirichlet_partition, mean_label_entropy, ClientShard, Partition, PartitionSpec,
};
pub use synthetic::make_synthetic;
