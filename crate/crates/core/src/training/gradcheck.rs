use super::loss::{loss_and_grads, loss_forward};
use super::task::{Sample, ToyTask};
use crate::error::{Error, Result};
use crate::exec;
use crate::model::{Model, ModelConfig};
use crate::tensor::check::relative_error;
use crate::tensor::DEFAULT_EPS;

/// Largest model, heads included, that the whole-model check accepts.
pub const MAX_GRADCHECK_PARAMS: usize = 10_000;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradCheckOptions {
    pub eps: f64,
    pub w_aux: f64,
    /// Half-width of the uniform re-draw applied to every parameter, so no
    /// gradient sits at the degenerate initial point (`B = 0`, tiny λ).
    pub randomize: f64,
    pub batch: usize,
    /// Scales every analytic gradient by 1.01 before comparing. Test hook.
    pub inject_fault: bool,
}

impl Default for GradCheckOptions {
    fn default() -> Self {
        Self {
            eps: DEFAULT_EPS,
            w_aux: 0.1,
            randomize: 0.5,
            batch: 2,
            inject_fault: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    /// Parameter holding the worst coordinate.
    pub worst_param: String,
    pub coordinates: usize,
}

/// Central-difference check of the training loss over every parameter of
/// the model built from `config` and `seed`.
pub fn grad_check_model(
    config: &ModelConfig,
    seed: u64,
    opts: &GradCheckOptions,
) -> Result<GradCheckReport> {
    let mut model = Model::new(config.clone(), seed)?;
    let n = model.params().num_scalars();
    if n > MAX_GRADCHECK_PARAMS {
        return Err(Error::Config(format!(
            "gradient check needs a tiny model (≤ {MAX_GRADCHECK_PARAMS} parameters), this one has {n}"
        )));
    }
    if opts.batch == 0 || !(opts.eps > 0.0) {
        return Err(Error::Config(
            "gradient check needs batch ≥ 1 and eps > 0".into(),
        ));
    }
    model.randomize(seed.wrapping_add(1), opts.randomize);
    let task = ToyTask::with_shape(seed, config.in_chans, config.image_size, opts.batch, 0);
    let batch: Vec<&Sample> = task.train.iter().collect();
    let (_, grads) = loss_and_grads(&model, &batch, opts.w_aux)?;

    let coords: Vec<(usize, usize)> = grads
        .entries
        .iter()
        .enumerate()
        .flat_map(|(k, (_, g))| (0..g.len()).map(move |j| (k, j)))
        .collect();
    let fault = if opts.inject_fault { 1.01 } else { 1.0 };
    let errors = exec::map_indices(coords.len(), |c| -> Result<f64> {
        let (k, j) = coords[c];
        let id = grads.entries[k].0;
        let eval = |delta: f64| -> Result<f64> {
            let mut m = model.clone();
            m.params_mut().get_mut(id).data_mut()[j] += delta;
            loss_forward(&m, &batch, opts.w_aux)
        };
        let fd = (eval(opts.eps)? - eval(-opts.eps)?) / (2.0 * opts.eps);
        Ok(relative_error(fd, fault * grads.entries[k].1[j]))
    });
    let mut worst = (0.0f64, 0usize);
    for (c, e) in errors.into_iter().enumerate() {
        let e = e?;
        if e > worst.0 || !e.is_finite() {
            worst = (e, c);
        }
    }
    let worst_param = coords
        .get(worst.1)
        .map(|&(k, _)| model.params().name(grads.entries[k].0).to_string())
        .unwrap_or_default();
    Ok(GradCheckReport {
        max_rel_error: worst.0,
        worst_param,
        coordinates: coords.len(),
    })
}
