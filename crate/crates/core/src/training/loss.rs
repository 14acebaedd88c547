use super::task::Sample;
use crate::error::{Error, Result};
use crate::exec;
use crate::model::{extract_patches, Model, ParamGrads, ParamId, Session};
use crate::tensor::{Tensor, Var};

/// Builds one sample's loss on `s`: cross-entropy of the linear head on the
/// CLS output, plus `w_aux` times the mean squared error of reconstructing
/// each patch's raw pixels from its output through the auxiliary head.
pub fn sample_loss(s: &mut Session, model: &Model, sample: &Sample, w_aux: f64) -> Result<Var> {
    let fv = model.forward_session(s, &sample.image, None)?;
    let (w, b) = (s.param(model.head.weight), s.param(model.head.bias));
    let logits = s.graph.matmul(fv.cls_out, w)?;
    let logits = s.graph.add_row(logits, b)?;
    let ce = s.graph.cross_entropy(logits, &[sample.label])?;
    if w_aux == 0.0 {
        return Ok(ce);
    }
    let (w, b) = (s.param(model.aux_head.weight), s.param(model.aux_head.bias));
    let pred = s.graph.matmul(fv.patch_out, w)?;
    let pred = s.graph.add_row(pred, b)?;
    let target = s.constant(extract_patches(&sample.image, model.config().patch_size)?);
    let diff = s.graph.sub(pred, target)?;
    let sq = s.graph.mul(diff, diff)?;
    let mse = s.graph.mean_all(sq)?;
    let aux = s.graph.scale(mse, w_aux)?;
    Ok(s.graph.add(ce, aux)?)
}

fn check_batch(batch: &[&Sample], w_aux: f64) -> Result<()> {
    if batch.is_empty() {
        return Err(Error::Contract("empty batch".into()));
    }
    if !(w_aux >= 0.0) {
        return Err(Error::Config(format!("w_aux must be ≥ 0, got {w_aux}")));
    }
    Ok(())
}

/// Mean loss over the batch.
pub fn loss_forward(model: &Model, batch: &[&Sample], w_aux: f64) -> Result<f64> {
    check_batch(batch, w_aux)?;
    let losses = exec::map_slice(batch, |sample| -> Result<f64> {
        let mut s = Session::new(model.params(), false);
        let l = sample_loss(&mut s, model, sample, w_aux)?;
        Ok(s.value(l).item())
    });
    let mut total = 0.0;
    for l in losses {
        total += l?;
    }
    Ok(total / batch.len() as f64)
}

/// Mean loss and its gradient with respect to every parameter of the model.
/// Parameters the loss does not reach get zero gradients. Samples run
/// independently and are reduced in batch order.
pub fn loss_and_grads(model: &Model, batch: &[&Sample], w_aux: f64) -> Result<(f64, ParamGrads)> {
    check_batch(batch, w_aux)?;
    let parts = exec::map_slice(batch, |sample| -> Result<(f64, ParamGrads)> {
        let mut s = Session::new(model.params(), true);
        let l = sample_loss(&mut s, model, sample, w_aux)?;
        s.graph.backward(l)?;
        Ok((s.value(l).item(), s.grads()))
    });
    let store = model.params();
    let mut grads = ParamGrads {
        entries: store
            .ids()
            .map(|id| (id, vec![0.0; store.get(id).numel()]))
            .collect(),
    };
    let mut total = 0.0;
    for part in parts {
        let (l, g) = part?;
        total += l;
        add_grads(&mut grads, &g);
    }
    let inv = 1.0 / batch.len() as f64;
    for (_, g) in &mut grads.entries {
        g.iter_mut().for_each(|v| *v *= inv);
    }
    Ok((total * inv, grads))
}

/// `acc` holds one entry per parameter in id order.
fn add_grads(acc: &mut ParamGrads, g: &ParamGrads) {
    for (id, vals) in &g.entries {
        let slot = &mut acc.entries[id.index()].1;
        slot.iter_mut().zip(vals).for_each(|(a, b)| *a += b);
    }
}

/// Index of the largest logit of the CLS head.
pub fn predict(model: &Model, image: &Tensor) -> Result<usize> {
    let out = model.forward(image)?;
    let store = model.params();
    let logits = out.cls_out.matmul(store.get(model.head.weight))?;
    let bias = store.get(model.head.bias).data();
    let scores: Vec<f64> = logits.data().iter().zip(bias).map(|(l, b)| l + b).collect();
    Ok((0..scores.len())
        .max_by(|&a, &b| scores[a].total_cmp(&scores[b]).then(b.cmp(&a)))
        .unwrap_or(0))
}

/// Fraction of samples whose predicted class matches the label.
pub fn accuracy(model: &Model, samples: &[Sample]) -> Result<f64> {
    if samples.is_empty() {
        return Ok(0.0);
    }
    let hits = exec::map_slice(samples, |s| predict(model, &s.image).map(|p| p == s.label));
    let mut n = 0usize;
    for h in hits {
        n += usize::from(h?);
    }
    Ok(n as f64 / samples.len() as f64)
}

/// Looks up a gradient, failing when it is absent.
pub fn require_grad(grads: &ParamGrads, id: ParamId) -> Result<&[f64]> {
    grads
        .get(id)
        .ok_or_else(|| Error::Contract(format!("no gradient for parameter {}", id.index())))
}
