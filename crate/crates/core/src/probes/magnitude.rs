use super::trace::{ProbePoint, ProbeTrace};
use crate::error::{Error, Result};
use crate::model::TokenPartition;
use crate::tensor::Tensor;

/// Highest mean-|activation| dimensions per token type, descending.
#[derive(Debug, Clone, PartialEq)]
pub struct DominantDims {
    pub cls: Vec<(usize, f64)>,
    pub patch: Vec<(usize, f64)>,
}

fn top_k(rows: &[&[f64]], k: usize) -> Vec<(usize, f64)> {
    let d = rows[0].len();
    let mut means: Vec<(usize, f64)> = (0..d)
        .map(|j| {
            let s: f64 = rows.iter().map(|r| r[j].abs()).sum();
            (j, s / rows.len() as f64)
        })
        .collect();
    // Stable sort keeps lower indices first among ties.
    means.sort_by(|a, b| b.1.total_cmp(&a.1));
    means.truncate(k);
    means
}

pub fn dominant_dims(
    activation: &Tensor,
    partition: &TokenPartition,
    k: usize,
) -> Result<DominantDims> {
    let d = activation.cols();
    if k > d {
        return Err(Error::Contract(format!(
            "k = {k} exceeds feature width {d}"
        )));
    }
    let cls = [activation.row(0)];
    let patches: Vec<&[f64]> = partition
        .patch_indices()
        .map(|r| activation.row(r))
        .collect();
    Ok(DominantDims {
        cls: top_k(&cls, k),
        patch: top_k(&patches, k),
    })
}

/// Dominant dimensions at the output of `block`.
pub fn top_magnitude_dims(trace: &ProbeTrace, block: usize, k: usize) -> Result<DominantDims> {
    let act = trace
        .get(block, ProbePoint::BlockOut)
        .ok_or_else(|| Error::Contract(format!("block {block} not in trace")))?;
    dominant_dims(act, &trace.partition, k)
}
