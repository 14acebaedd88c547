use super::layers::{specialized_apply, PathPair};
use super::params::{ParamId, Session};
use super::partition::Route;
use crate::tensor::{Result, Tensor, TensorError, Var};

/// Shape and options of a multi-head attention layer.
#[derive(Debug, Clone, Copy)]
pub struct AttentionSpec {
    pub heads: usize,
    /// Learned per-head `(key, value)` pair appended as an extra slot.
    pub kv_bias: Option<(ParamId, ParamId)>,
    /// Mask every off-diagonal score (and the bias slot) to −∞.
    pub self_only: bool,
}

/// One head: `softmax(q·kᵀ / √dₕ) · v`, with an optional extra key/value
/// row appended to `k` and `v`.
pub fn attention_head(
    s: &mut Session,
    q: Var,
    k: Var,
    v: Var,
    slot: Option<(Var, Var)>,
    self_only: bool,
) -> Result<Var> {
    let (k, v) = match slot {
        Some((bk, bv)) => (
            s.graph.concat_rows(&[k, bk])?,
            s.graph.concat_rows(&[v, bv])?,
        ),
        None => (k, v),
    };
    let hd = s.value(q).cols();
    let kt = s.graph.transpose(k)?;
    let scores = s.graph.matmul(q, kt)?;
    let mut scores = s.graph.scale(scores, 1.0 / (hd as f64).sqrt())?;
    if self_only {
        let (n, slots) = (s.value(scores).rows(), s.value(scores).cols());
        let mut mask = Tensor::full([n, slots], f64::NEG_INFINITY);
        for i in 0..n {
            mask.data_mut()[i * slots + i] = 0.0;
        }
        let m = s.constant(mask);
        scores = s.graph.add(scores, m)?;
    }
    let weights = s.graph.softmax_rows(scores)?;
    s.graph.matmul(weights, v)
}

/// Multi-head self-attention with specialized QKV and output projections.
pub fn attention(
    s: &mut Session,
    x: Var,
    qkv: &PathPair,
    attn_out: &PathPair,
    route: &Route,
    spec: &AttentionSpec,
) -> Result<Var> {
    let d = s.value(x).cols();
    if spec.heads == 0 || d % spec.heads != 0 {
        return Err(TensorError::Contract(format!(
            "embed dim {d} not divisible by {} heads",
            spec.heads
        )));
    }
    let hd = d / spec.heads;
    let proj = specialized_apply(s, qkv, x, route)?;
    let bias = spec.kv_bias.map(|(k, v)| (s.param(k), s.param(v)));
    let mut outs = Vec::with_capacity(spec.heads);
    for h in 0..spec.heads {
        let lo = h * hd;
        let q = s.graph.slice_cols(proj, lo, lo + hd)?;
        let k = s.graph.slice_cols(proj, d + lo, d + lo + hd)?;
        let v = s.graph.slice_cols(proj, 2 * d + lo, 2 * d + lo + hd)?;
        let slot = match bias {
            Some((bk, bv)) => Some((
                s.graph.slice_cols(bk, lo, lo + hd)?,
                s.graph.slice_cols(bv, lo, lo + hd)?,
            )),
            None => None,
        };
        outs.push(attention_head(s, q, k, v, slot, spec.self_only)?);
    }
    let merged = if outs.len() == 1 {
        outs[0]
    } else {
        s.graph.concat_cols(&outs)?
    };
    specialized_apply(s, attn_out, merged, route)
}
