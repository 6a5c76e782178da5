use rand::Rng;
use rand_distr::{Distribution, Normal};

use super::dataset::Dataset;
use crate::rng::{self, Purpose};
use crate::tensor::Tensor;

const GRID: usize = 7;
const NOISE_STD: f64 = 0.25;

/// Class-separable single-channel images: each class owns a blocky
/// on/off prototype on a coarse grid, and every example is that prototype
/// plus Gaussian pixel noise clipped to `[0, 1]`. Example `k * num_classes + c`
/// has label `c`, so classes are balanced and interleaved.
pub fn make_synthetic(
    num_classes: usize,
    per_class: usize,
    image_size: usize,
    seed: u64,
) -> Dataset {
    assert!(
        num_classes > 0 && per_class > 0 && image_size > 0,
        "all sizes must be positive"
    );
    let grid = GRID.min(image_size);
    let pixels = image_size * image_size;
    let mut proto_rng = rng::stream(seed, Purpose::Synthetic, 0, 0);
    let prototypes: Vec<Vec<f64>> = (0..num_classes)
        .map(|_| {
            let cells: Vec<f64> = (0..grid * grid)
                .map(|_| {
                    if proto_rng.random_bool(0.5) {
                        0.85
                    } else {
                        0.15
                    }
                })
                .collect();
            (0..pixels)
                .map(|p| {
                    let (y, x) = (p / image_size, p % image_size);
                    cells[(y * grid / image_size) * grid + x * grid / image_size]
                })
                .collect()
        })
        .collect();

    let noise = Normal::new(0.0, NOISE_STD).expect("valid std");
    let mut noise_rng = rng::stream(seed, Purpose::Synthetic, 1, 0);
    let n = num_classes * per_class;
    let mut values = Vec::with_capacity(n * pixels);
    let mut labels = Vec::with_capacity(n);
    for _ in 0..per_class {
        for (c, proto) in prototypes.iter().enumerate() {
            values.extend(
                proto
                    .iter()
                    .map(|&v| (v + noise.sample(&mut noise_rng)).clamp(0.0, 1.0)),
            );
            labels.push(c);
        }
    }
    let images = Tensor::new(vec![n, 1, image_size, image_size], values).expect("consistent shape");
    Dataset::new(images, labels, num_classes).expect("valid synthetic dataset")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn class_mean(ds: &Dataset, class: usize) -> Vec<f64> {
        let mut mean = vec![0.0; ds.image_len()];
        let mut count = 0.0;
        for (i, &l) in ds.labels().iter().enumerate() {
            if l == class {
                for (m, v) in mean.iter_mut().zip(ds.image(i)) {
                    *m += v;
                }
                count += 1.0;
            }
        }
        mean.iter_mut().for_each(|m| *m /= count);
        mean
    }

    #[test]
    fn balanced_and_deterministic() {
        let ds = make_synthetic(10, 50, 28, 3);
        assert_eq!(ds.len(), 500);
        assert_eq!(ds.class_counts(), vec![50; 10]);
        assert_eq!(ds, make_synthetic(10, 50, 28, 3));
        assert_ne!(ds, make_synthetic(10, 50, 28, 4));
        assert!(ds.images().values().iter().all(|v| (0.0..=1.0).contains(v)));
    }

    #[test]
    fn class_means_are_separated() {
        // Measured minimum over all class pairs for seeds 0..5: 9.61.
        // Pinned at 8.0.
        for seed in 0..5 {
            let ds = make_synthetic(10, 50, 28, seed);
            let means: Vec<Vec<f64>> = (0..10).map(|c| class_mean(&ds, c)).collect();
            let mut min_dist = f64::INFINITY;
            for a in 0..10 {
                for b in a + 1..10 {
                    let d: f64 = means[a]
                        .iter()
                        .zip(&means[b])
                        .map(|(x, y)| (x - y).powi(2))
                        .sum::<f64>()
                        .sqrt();
                    min_dist = min_dist.min(d);
                }
            }
            assert!(
                min_dist > 8.0,
                "seed {seed}: min class-mean distance {min_dist}"
            );
        }
    }
}
