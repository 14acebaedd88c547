use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::tensor::Tensor;

/// One labelled image.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub image: Tensor,
    pub label: usize,
}

/// Quadrant classification: background noise in `[0, noise)`, with `boost`
/// added over one quadrant. The label is the quadrant index in raster order
/// (top-left 0, top-right 1, bottom-left 2, bottom-right 3). Labels cycle
/// through the four classes, so both splits are balanced.
#[derive(Debug, Clone, PartialEq)]
pub struct ToyTask {
    pub seed: u64,
    pub channels: usize,
    pub image_size: usize,
    pub noise: f64,
    pub boost: f64,
    pub train: Vec<Sample>,
    pub eval: Vec<Sample>,
}

pub const NUM_QUADRANTS: usize = 4;
pub const DEFAULT_NOISE: f64 = 0.5;
pub const DEFAULT_BOOST: f64 = 0.5;

impl ToyTask {
    /// The 1×16×16 task used throughout the crate.
    pub fn new(seed: u64, train_size: usize, eval_size: usize) -> Self {
        Self::with_shape(seed, 1, 16, train_size, eval_size)
    }

    pub fn with_shape(
        seed: u64,
        channels: usize,
        image_size: usize,
        train_size: usize,
        eval_size: usize,
    ) -> Self {
        Self::generate(
            seed,
            channels,
            image_size,
            DEFAULT_NOISE,
            DEFAULT_BOOST,
            train_size,
            eval_size,
        )
    }

    #[allow(clippy::too_many_arguments)]
    pub fn generate(
        seed: u64,
        channels: usize,
        image_size: usize,
        noise: f64,
        boost: f64,
        train_size: usize,
        eval_size: usize,
    ) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut split = |n: usize| -> Vec<Sample> {
            (0..n)
                .map(|i| {
                    quadrant_image(
                        &mut rng,
                        channels,
                        image_size,
                        noise,
                        boost,
                        i % NUM_QUADRANTS,
                    )
                })
                .collect()
        };
        let train = split(train_size);
        let eval = split(eval_size);
        ToyTask {
            seed,
            channels,
            image_size,
            noise,
            boost,
            train,
            eval,
        }
    }
}

pub fn quadrant_image(
    rng: &mut ChaCha8Rng,
    channels: usize,
    size: usize,
    noise: f64,
    boost: f64,
    label: usize,
) -> Sample {
    let half = size / 2;
    let (qy, qx) = (label / 2, label % 2);
    let mut data = Vec::with_capacity(channels * size * size);
    for _ in 0..channels {
        for y in 0..size {
            for x in 0..size {
                let inside = y / half.max(1) == qy && x / half.max(1) == qx;
                let v: f64 = if noise > 0.0 {
                    rng.random_range(0.0..noise)
                } else {
                    0.0
                };
                data.push(if inside { v + boost } else { v });
            }
        }
    }
    Sample {
        image: Tensor::new([channels, size, size], data).expect("image dims"),
        label,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seeded_and_balanced() {
        let a = ToyTask::new(3, 8, 4);
        assert_eq!(a, ToyTask::new(3, 8, 4));
        assert_ne!(a.train[0].image, ToyTask::new(4, 8, 4).train[0].image);
        let labels: Vec<usize> = a.train.iter().map(|s| s.label).collect();
        assert_eq!(labels, [0, 1, 2, 3, 0, 1, 2, 3]);
        assert_eq!(a.train[0].image.shape(), &[1, 16, 16]);
    }

    #[test]
    fn boosted_quadrant_is_brightest() {
        let t = ToyTask::new(0, 4, 0);
        for s in &t.train {
            let d = s.image.data();
            let mut sums = [0.0; 4];
            for y in 0..16 {
                for x in 0..16 {
                    sums[(y / 8) * 2 + x / 8] += d[y * 16 + x];
                }
            }
            let best = (0..4).max_by(|&a, &b| sums[a].total_cmp(&sums[b])).unwrap();
            assert_eq!(best, s.label);
        }
    }
}
