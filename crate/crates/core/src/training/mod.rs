//! Toy supervised training: quadrant classification with a linear head on
//! the CLS output and an optional patch-reconstruction loss.

mod gradcheck;
mod loss;
mod optim;
mod task;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub use gradcheck::{grad_check_model, GradCheckOptions, GradCheckReport, MAX_GRADCHECK_PARAMS};
pub use loss::{accuracy, loss_and_grads, loss_forward, predict, sample_loss};
pub use optim::{sgd_step, OptimState};
pub use task::{quadrant_image, Sample, ToyTask, DEFAULT_BOOST, DEFAULT_NOISE, NUM_QUADRANTS};

use crate::error::{Error, Result};
use crate::model::{Model, ModelConfig};

const BATCH_STREAM: u64 = 0xba7c_4000_0000_0001;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainOptions {
    pub steps: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub momentum: f64,
    pub w_aux: f64,
    pub seed: u64,
    /// Evaluate every this many steps (and after the last). 0 evaluates only
    /// at the end.
    pub eval_every: usize,
}

impl Default for TrainOptions {
    fn default() -> Self {
        Self {
            steps: 300,
            batch_size: 16,
            lr: 0.01,
            momentum: 0.9,
            w_aux: 0.1,
            seed: 0,
            eval_every: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepRecord {
    pub step: usize,
    pub loss: f64,
    pub eval_acc: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub curve: Vec<StepRecord>,
    pub eval_accuracy: f64,
    pub model: Model,
}

impl TrainOutcome {
    pub fn losses(&self) -> Vec<f64> {
        self.curve.iter().map(|r| r.loss).collect()
    }

    /// CSV `step,loss,eval_acc`; steps without an evaluation leave the last
    /// column empty.
    pub fn write_curve_csv<W: std::io::Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "step,loss,eval_acc")?;
        for r in &self.curve {
            match r.eval_acc {
                Some(a) => writeln!(w, "{},{},{}", r.step, r.loss, a)?,
                None => writeln!(w, "{},{},", r.step, r.loss)?,
            }
        }
        Ok(())
    }
}

/// Trains a freshly initialized model (seeded by `opts.seed`) on `task`.
/// Deterministic given the options, in both execution modes.
pub fn train_toy(
    config: &ModelConfig,
    task: &ToyTask,
    opts: &TrainOptions,
) -> Result<TrainOutcome> {
    let model = Model::new(config.clone(), opts.seed)?;
    train_model(model, task, opts)
}

/// Same as [`train_toy`] starting from an existing model.
pub fn train_model(mut model: Model, task: &ToyTask, opts: &TrainOptions) -> Result<TrainOutcome> {
    let cfg = model.config();
    if cfg.num_classes < NUM_QUADRANTS {
        return Err(Error::Config(format!(
            "the toy task has {NUM_QUADRANTS} classes, the model head has {}",
            cfg.num_classes
        )));
    }
    if (cfg.in_chans, cfg.image_size) != (task.channels, task.image_size) {
        return Err(Error::Config(format!(
            "task images are {}×{s}×{s}, model expects {}×{m}×{m}",
            task.channels,
            cfg.in_chans,
            s = task.image_size,
            m = cfg.image_size
        )));
    }
    if opts.steps > 0 && (opts.batch_size == 0 || task.train.is_empty()) {
        return Err(Error::Config(
            "training needs a nonempty train split and batch".into(),
        ));
    }
    let mut state = OptimState::new(opts.lr, opts.momentum)?;
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed ^ BATCH_STREAM);
    let mut curve = Vec::with_capacity(opts.steps);
    for step in 0..opts.steps {
        let batch: Vec<&Sample> = (0..opts.batch_size)
            .map(|_| &task.train[rng.random_range(0..task.train.len())])
            .collect();
        let (loss, grads) = loss_and_grads(&model, &batch, opts.w_aux)?;
        if !loss.is_finite() {
            return Err(Error::Diverged { step, loss });
        }
        sgd_step(model.params_mut(), &grads, &mut state)?;
        let last = step + 1 == opts.steps;
        let eval_acc = if last || (opts.eval_every > 0 && (step + 1) % opts.eval_every == 0) {
            Some(accuracy(&model, &task.eval)?)
        } else {
            None
        };
        curve.push(StepRecord {
            step,
            loss,
            eval_acc,
        });
    }
    let eval_accuracy = match curve.last().and_then(|r| r.eval_acc) {
        Some(a) => a,
        None => accuracy(&model, &task.eval)?,
    };
    Ok(TrainOutcome {
        curve,
        eval_accuracy,
        model,
    })
}
