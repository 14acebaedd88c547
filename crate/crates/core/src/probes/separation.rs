use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::similarity::cosine;
use crate::error::{Error, Result};
use crate::model::LN_EPS;
use crate::tensor::{kernels, Tensor};

/// Token construction for the LayerNorm separation demo.
///
/// Dimensions split into a shared block (the first half, rounded down to an
/// even count so its alternating pattern has zero mean), a CLS block and a
/// patch block. Every token carries `±shared` alternating on the shared
/// block; CLS adds `distinct` on its block, patches add `distinct` on theirs
/// plus Gaussian noise of std `noise`. The norm's γ is `gamma_shared` on the
/// shared block and 1 elsewhere, β = 0.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SeparationSetup {
    pub shared: f64,
    pub distinct: f64,
    pub gamma_shared: f64,
    pub noise: f64,
}

impl Default for SeparationSetup {
    fn default() -> Self {
        SeparationSetup {
            shared: 10.0,
            distinct: 1.0,
            gamma_shared: 0.01,
            noise: 0.1,
        }
    }
}

fn mean_row(rows: &Tensor) -> Vec<f64> {
    let mut m = vec![0.0; rows.cols()];
    for r in 0..rows.rows() {
        for (a, v) in m.iter_mut().zip(rows.row(r)) {
            *a += v;
        }
    }
    m.iter_mut().for_each(|a| *a /= rows.rows() as f64);
    m
}

/// Cosine between `cls` and the mean patch, before and after LayerNorm
/// with the given affine parameters.
pub fn ln_similarity(
    cls: &[f64],
    patches: &Tensor,
    gamma: &Tensor,
    beta: &Tensor,
) -> Result<(f64, f64)> {
    let d = cls.len();
    if patches.cols() != d || patches.rows() == 0 {
        return Err(Error::Contract(format!(
            "patches {:?} do not match a CLS width of {d}",
            patches.shape()
        )));
    }
    let pre = cosine(cls, &mean_row(patches));
    let cls_t = Tensor::new([1, d], cls.to_vec())?;
    let (cls_n, _) = kernels::layer_norm(&cls_t, gamma, beta, LN_EPS)?;
    let (patch_n, _) = kernels::layer_norm(patches, gamma, beta, LN_EPS)?;
    Ok((pre, cosine(cls_n.data(), &mean_row(&patch_n))))
}

pub fn ln_separation_with(
    setup: &SeparationSetup,
    d: usize,
    n_patches: usize,
    seed: u64,
) -> Result<(f64, f64)> {
    if d < 4 || n_patches == 0 {
        return Err(Error::Contract(format!(
            "separation demo needs d ≥ 4 and at least one patch, got d = {d}, {n_patches} patches"
        )));
    }
    let shared_end = (d / 2) & !1;
    let cls_end = shared_end + (d - shared_end) / 2;
    let mut base = vec![0.0; d];
    for (j, b) in base[..shared_end].iter_mut().enumerate() {
        *b = if j % 2 == 0 {
            setup.shared
        } else {
            -setup.shared
        };
    }
    let mut cls = base.clone();
    cls[shared_end..cls_end]
        .iter_mut()
        .for_each(|v| *v += setup.distinct);

    let noise =
        Normal::new(0.0, setup.noise).map_err(|e| Error::Config(format!("noise std: {e}")))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut data = Vec::with_capacity(n_patches * d);
    for _ in 0..n_patches {
        for (j, &b) in base.iter().enumerate() {
            let bump = if j >= cls_end { setup.distinct } else { 0.0 };
            data.push(b + bump + noise.sample(&mut rng));
        }
    }
    let patches = Tensor::new([n_patches, d], data)?;
    let gamma = Tensor::vector(
        (0..d)
            .map(|j| {
                if j < shared_end {
                    setup.gamma_shared
                } else {
                    1.0
                }
            })
            .collect(),
    );
    ln_similarity(&cls, &patches, &gamma, &Tensor::zeros([d]))
}

/// Pre- and post-LayerNorm CLS/patch similarity under the default
/// [`SeparationSetup`].
pub fn ln_separation_demo(d: usize, n_patches: usize, seed: u64) -> Result<(f64, f64)> {
    ln_separation_with(&SeparationSetup::default(), d, n_patches, seed)
}
