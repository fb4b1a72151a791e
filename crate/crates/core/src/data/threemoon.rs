use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::LabeledDataset;
use crate::error::{Error, Result};
use crate::graph::PointCloud;

pub const THREE_MOON_PER_CLASS: usize = 500;
pub const THREE_MOON_DIM: usize = 100;
pub const THREE_MOON_NOISE: f64 = 0.14;

// (center, radius, upper half)
const ARCS: [((f64, f64), f64, bool); 3] = [
    ((0.0, 0.0), 1.0, true),
    ((3.0, 0.0), 1.0, true),
    ((1.5, 0.4), 1.5, false),
];

/// Three half circles in the first two coordinates of R^100 with Gaussian
/// noise of standard deviation 0.14 on every coordinate.
pub fn gen_three_moon(seed: u64) -> LabeledDataset {
    gen_three_moon_with_noise(seed, THREE_MOON_NOISE).expect("default noise is valid")
}

/// Same construction with a custom noise level; `0.0` gives the exact arcs.
pub fn gen_three_moon_with_noise(seed: u64, noise: f64) -> Result<LabeledDataset> {
    if !(noise >= 0.0 && noise.is_finite()) {
        return Err(Error::invalid(format!("noise must be finite and >= 0, got {noise}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = ARCS.len() * THREE_MOON_PER_CLASS;
    let mut data = vec![0.0; n * THREE_MOON_DIM];
    let mut labels = Vec::with_capacity(n);
    for (class, &((cx, cy), r, upper)) in ARCS.iter().enumerate() {
        for j in 0..THREE_MOON_PER_CLASS {
            let t = rng.random::<f64>() * PI;
            let angle = if upper { t } else { t + PI };
            let row = (class * THREE_MOON_PER_CLASS + j) * THREE_MOON_DIM;
            data[row] = cx + r * angle.cos();
            data[row + 1] = cy + r * angle.sin();
            labels.push(class);
        }
    }
    if noise > 0.0 {
        let normal = Normal::new(0.0, noise).expect("positive standard deviation");
        for v in data.iter_mut() {
            *v += normal.sample(&mut rng);
        }
    }
    let cloud = PointCloud::new(data, THREE_MOON_DIM)?;
    LabeledDataset::new(cloud, labels, ARCS.len(), "three-moon")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn counts_and_shape() {
        let ds = gen_three_moon(1);
        assert_eq!(ds.len(), 1500);
        assert_eq!(ds.cloud.dim(), 100);
        assert_eq!(ds.class_counts(), vec![500, 500, 500]);
    }

    #[test]
    fn seeded() {
        assert_eq!(gen_three_moon(3), gen_three_moon(3));
        assert_ne!(gen_three_moon(3), gen_three_moon(4));
    }

    #[test]
    fn noise_free_padding_is_zero() {
        let ds = gen_three_moon_with_noise(2, 0.0).unwrap();
        assert!(ds.cloud.points().all(|p| p[2..].iter().all(|&v| v == 0.0)));
        assert!(gen_three_moon_with_noise(2, -1.0).is_err());
    }
}
