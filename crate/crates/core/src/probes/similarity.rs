use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::trace::{ProbePoint, ProbeTrace};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Above this many patches, patch-patch pairs are sampled.
pub const ALL_PAIRS_MAX_PATCHES: usize = 1024;
pub const SAMPLED_PAIRS: usize = 100_000;
const PAIR_SEED: u64 = 0x9a1_5eed;

/// Cosine of two vectors; 0 when either has zero norm.
pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        dot / (na * nb)
    }
}

/// Mean and population standard deviation of cosine similarities.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimStats {
    pub cls_patch_mean: f64,
    pub cls_patch_std: f64,
    pub patch_patch_mean: f64,
    pub patch_patch_std: f64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum BlockSelector {
    All,
    Blocks(Vec<usize>),
}

impl BlockSelector {
    fn selects(&self, block: usize) -> bool {
        match self {
            BlockSelector::All => true,
            BlockSelector::Blocks(b) => b.contains(&block),
        }
    }
}

fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Similarities of one activation matrix: CLS against every patch row, and
/// patch rows pairwise. Register rows are skipped.
pub fn token_similarities(
    activation: &Tensor,
    patch_rows: std::ops::Range<usize>,
) -> (Vec<f64>, Vec<f64>) {
    let cls = activation.row(0);
    let rows: Vec<&[f64]> = patch_rows.map(|r| activation.row(r)).collect();
    let cls_patch = rows.iter().map(|r| cosine(cls, r)).collect();
    let p = rows.len();
    let mut patch_patch = Vec::new();
    if p <= ALL_PAIRS_MAX_PATCHES {
        patch_patch.reserve(p * p.saturating_sub(1) / 2);
        for i in 0..p {
            for j in i + 1..p {
                patch_patch.push(cosine(rows[i], rows[j]));
            }
        }
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(PAIR_SEED);
        patch_patch.reserve(SAMPLED_PAIRS);
        while patch_patch.len() < SAMPLED_PAIRS {
            let i = rng.random_range(0..p);
            let j = rng.random_range(0..p);
            if i != j {
                patch_patch.push(cosine(rows[i], rows[j]));
            }
        }
    }
    (cls_patch, patch_patch)
}

/// Pools CLS-patch and patch-patch similarities at `point` over the
/// selected blocks of every trace.
pub fn cosine_stats(
    traces: &[ProbeTrace],
    point: ProbePoint,
    blocks: &BlockSelector,
) -> Result<SimStats> {
    let mut cls_patch = Vec::new();
    let mut patch_patch = Vec::new();
    for trace in traces {
        let patches = trace.partition.patch_indices();
        for rec in trace
            .records
            .iter()
            .filter(|r| r.point == point && blocks.selects(r.block))
        {
            let (cp, pp) = token_similarities(&rec.activation, patches.clone());
            cls_patch.extend(cp);
            patch_patch.extend(pp);
        }
    }
    if cls_patch.is_empty() {
        return Err(Error::Contract(format!(
            "no activations recorded at {point} for the selected blocks"
        )));
    }
    let (cm, cs) = mean_std(&cls_patch);
    let (pm, ps) = if patch_patch.is_empty() {
        (0.0, 0.0)
    } else {
        mean_std(&patch_patch)
    };
    Ok(SimStats {
        cls_patch_mean: cm,
        cls_patch_std: cs,
        patch_patch_mean: pm,
        patch_patch_std: ps,
    })
}

/// One CSV row of the similarity export.
#[derive(Debug, Clone, PartialEq)]
pub struct SimRow {
    pub block: usize,
    pub point: ProbePoint,
    pub population: &'static str,
    pub mean: f64,
    pub std: f64,
}

/// Statistics for every (block, point) pair, pooled across traces.
pub fn similarity_table(traces: &[ProbeTrace]) -> Result<Vec<SimRow>> {
    let blocks = traces.iter().map(ProbeTrace::num_blocks).max().unwrap_or(0);
    let mut rows = Vec::with_capacity(blocks * ProbePoint::ALL.len() * 2);
    for block in 0..blocks {
        for point in ProbePoint::ALL {
            let s = cosine_stats(traces, point, &BlockSelector::Blocks(vec![block]))?;
            rows.push(SimRow {
                block,
                point,
                population: "cls_patch",
                mean: s.cls_patch_mean,
                std: s.cls_patch_std,
            });
            rows.push(SimRow {
                block,
                point,
                population: "patch_patch",
                mean: s.patch_patch_mean,
                std: s.patch_patch_std,
            });
        }
    }
    Ok(rows)
}
