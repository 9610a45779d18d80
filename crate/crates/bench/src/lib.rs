//! Deterministic inputs shared by the benchmarks.

use curviqa::datasets::synthetic_base;
use curviqa::image_io::BLOCK_SIZE;
use curviqa::GrayImage;
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// A textured image of side `size`.
pub fn image(size: usize, seed: u64) -> GrayImage {
    synthetic_base(size, seed)
}

/// One transform-sized block of pixel intensities.
pub fn block(seed: u64) -> Array2<f64> {
    image(BLOCK_SIZE, seed).to_array()
}

/// Four Gaussian clusters in `dim` dimensions, `per_class` points each.
pub fn blobs(per_class: usize, dim: usize, seed: u64) -> (Vec<Vec<f64>>, Vec<usize>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rows = Vec::with_capacity(4 * per_class);
    let mut labels = Vec::with_capacity(4 * per_class);
    for class in 0..4 {
        let centre: Vec<f64> = (0..dim)
            .map(|d| if d % 4 == class { 2.0 } else { 0.0 })
            .collect();
        for _ in 0..per_class {
            rows.push(
                centre
                    .iter()
                    .map(|c| c + rng.random_range(-1.0..1.0))
                    .collect(),
            );
            labels.push(class);
        }
    }
    (rows, labels)
}

/// Smooth nonlinear regression targets for `rows`.
pub fn targets(rows: &[Vec<f64>]) -> Vec<f64> {
    rows.iter()
        .map(|r| {
            r.iter()
                .enumerate()
                .map(|(i, x)| (x * (i + 1) as f64).sin())
                .sum()
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fixtures_have_expected_shapes() {
        assert_eq!(block(1).dim(), (BLOCK_SIZE, BLOCK_SIZE));
        let (rows, labels) = blobs(10, 11, 2);
        assert_eq!((rows.len(), labels.len(), rows[0].len()), (40, 40, 11));
        assert_eq!(targets(&rows).len(), 40);
        assert_eq!(blobs(3, 5, 9), blobs(3, 5, 9));
    }
}
