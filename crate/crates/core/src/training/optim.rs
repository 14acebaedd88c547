use super::loss::require_grad;
use crate::error::{Error, Result};
use crate::model::{ParamGrads, ParamStore};

/// SGD state. Buffers are created lazily, one per parameter, when
/// momentum is positive.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimState {
    pub lr: f64,
    pub momentum: f64,
    pub buffers: Vec<Vec<f64>>,
}

impl OptimState {
    pub fn new(lr: f64, momentum: f64) -> Result<Self> {
        if !(lr > 0.0 && lr.is_finite()) {
            return Err(Error::Config(format!(
                "learning rate must be positive, got {lr}"
            )));
        }
        if !(0.0..1.0).contains(&momentum) {
            return Err(Error::Config(format!(
                "momentum must lie in [0, 1), got {momentum}"
            )));
        }
        Ok(Self {
            lr,
            momentum,
            buffers: Vec::new(),
        })
    }
}

/// Classic momentum: `b ← μ·b + g`, then `p ← p − lr·b`. With μ = 0 this is
/// plain SGD. Every parameter must have a gradient.
pub fn sgd_step(params: &mut ParamStore, grads: &ParamGrads, state: &mut OptimState) -> Result<()> {
    let ids: Vec<_> = params.ids().collect();
    let mut resolved = Vec::with_capacity(ids.len());
    for &id in &ids {
        let g = require_grad(grads, id)?;
        if g.len() != params.get(id).numel() {
            return Err(Error::Contract(format!(
                "gradient of {} has {} entries, parameter has {}",
                params.name(id),
                g.len(),
                params.get(id).numel()
            )));
        }
        resolved.push(g);
    }
    if state.momentum > 0.0 && state.buffers.is_empty() {
        state.buffers = ids
            .iter()
            .map(|&id| vec![0.0; params.get(id).numel()])
            .collect();
    }
    for (k, (&id, g)) in ids.iter().zip(resolved).enumerate() {
        let p = params.get_mut(id).data_mut();
        if state.momentum > 0.0 {
            let b = &mut state.buffers[k];
            for ((pv, bv), gv) in p.iter_mut().zip(b.iter_mut()).zip(g) {
                *bv = state.momentum * *bv + gv;
                *pv -= state.lr * *bv;
            }
        } else {
            for (pv, gv) in p.iter_mut().zip(g) {
                *pv -= state.lr * gv;
            }
        }
    }
    Ok(())
}
