use spectok::model::{ClsInit, LayerKind};
use spectok::training::{
    grad_check_model, loss_and_grads, loss_forward, train_model, train_toy, GradCheckOptions,
    Sample, ToyTask, TrainOptions,
};
use spectok::{Error, Model, ModelConfig, SpecConfig};

fn short(steps: usize) -> TrainOptions {
    TrainOptions {
        steps,
        batch_size: 4,
        eval_every: 5,
        ..Default::default()
    }
}

fn gc_config() -> ModelConfig {
    ModelConfig {
        image_size: 4,
        patch_size: 2,
        in_chans: 1,
        embed_dim: 8,
        depth: 2,
        heads: 2,
        mlp_ratio: 2,
        attn_bias: true,
        ..ModelConfig::tiny()
    }
}

#[test]
fn reruns_are_bitwise_identical() {
    let task = ToyTask::new(1, 32, 16);
    let c = ModelConfig::tiny().with_spec(SpecConfig::default_best(2));
    let a = train_toy(&c, &task, &short(12)).unwrap();
    let b = train_toy(&c, &task, &short(12)).unwrap();
    assert_eq!(a.curve, b.curve);
    for ((_, n, x), (_, _, y)) in a.model.params().iter().zip(b.model.params().iter()) {
        let bits = |t: &spectok::Tensor| t.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(x), bits(y), "{n}");
    }
    let mut csv = Vec::new();
    a.write_curve_csv(&mut csv).unwrap();
    let text = String::from_utf8(csv).unwrap();
    assert_eq!(text.lines().count(), 13);
    assert!(text
        .lines()
        .nth(5)
        .unwrap()
        .split(',')
        .nth(2)
        .unwrap()
        .parse::<f64>()
        .is_ok());
    assert!(text.lines().nth(1).unwrap().ends_with(','));
}

#[test]
fn copy_initialized_specialization_starts_on_the_same_loss() {
    let task = ToyTask::new(2, 16, 4);
    let base = Model::new(ModelConfig::tiny(), 3).unwrap();
    let spec = SpecConfig::default_best(2).with(LayerKind::Mlp, 0, 2);
    let copied =
        Model::with_init(ModelConfig::tiny().with_spec(spec), 3, ClsInit::CopyOfPatch).unwrap();
    let a = train_model(base, &task, &short(1)).unwrap();
    let b = train_model(copied, &task, &short(1)).unwrap();
    assert_eq!(a.curve[0].loss.to_bits(), b.curve[0].loss.to_bits());
}

#[test]
fn specialized_paths_receive_distinct_gradients() {
    let c = gc_config().with_spec(SpecConfig::empty().with(LayerKind::Qkv, 0, 2));
    let mut m = Model::new(c.clone(), 1).unwrap();
    m.randomize(2, 0.5);
    let task = ToyTask::with_shape(0, 1, 4, 3, 0);
    let batch: Vec<&Sample> = task.train.iter().collect();
    let (_, g) = loss_and_grads(&m, &batch, 0.1).unwrap();
    let get = |name: &str| g.get(m.params().id(name).unwrap()).unwrap().to_vec();
    let (cls, patch) = (get("block0.qkv.cls.weight"), get("block0.qkv.patch.weight"));
    assert_ne!(cls, patch);
    assert!(cls.iter().chain(&patch).all(|v| v.is_finite()));
    let r = grad_check_model(&c, 1, &GradCheckOptions::default()).unwrap();
    assert!(r.max_rel_error < 1e-4, "{r:?}");
}

#[test]
fn batch_gradient_is_the_mean_of_sample_gradients() {
    let m = Model::new(
        ModelConfig::tiny().with_spec(SpecConfig::default_best(2)),
        4,
    )
    .unwrap();
    let task = ToyTask::new(5, 3, 0);
    let all: Vec<&Sample> = task.train.iter().collect();
    let (l, g) = loss_and_grads(&m, &all, 0.1).unwrap();
    assert!((l - loss_forward(&m, &all, 0.1).unwrap()).abs() < 1e-12);
    let singles: Vec<_> = all
        .iter()
        .map(|s| loss_and_grads(&m, &[s], 0.1).unwrap().1)
        .collect();
    for (k, (id, v)) in g.entries.iter().enumerate() {
        for (j, x) in v.iter().enumerate() {
            let mean = singles.iter().map(|s| s.entries[k].1[j]).sum::<f64>() / 3.0;
            assert!((x - mean).abs() < 1e-12, "{}", m.params().name(*id));
        }
    }
}

#[test]
fn injected_fault_is_caught() {
    let opts = GradCheckOptions {
        inject_fault: true,
        ..Default::default()
    };
    let r = grad_check_model(&gc_config(), 0, &opts).unwrap();
    assert!(r.max_rel_error > 1e-3, "{r:?}");
}

#[test]
fn large_models_are_refused() {
    let err = grad_check_model(&ModelConfig::tiny(), 0, &GradCheckOptions::default()).unwrap_err();
    assert!(matches!(err, Error::Config(_)), "{err}");
}

#[test]
fn runaway_learning_rate_reports_divergence() {
    let task = ToyTask::new(0, 16, 4);
    let opts = TrainOptions {
        lr: 1e12,
        momentum: 0.0,
        ..short(30)
    };
    match train_toy(&ModelConfig::tiny(), &task, &opts) {
        Err(Error::Diverged { step, loss }) => assert!(step < 30 && !loss.is_finite()),
        other => panic!(
            "expected divergence, got {:?}",
            other.map(|o| o.eval_accuracy)
        ),
    }
}

#[test]
fn mismatched_task_is_a_config_error() {
    let task = ToyTask::with_shape(0, 3, 16, 4, 4);
    assert!(matches!(
        train_toy(&ModelConfig::tiny(), &task, &short(1)),
        Err(Error::Config(_))
    ));
    let c = ModelConfig {
        num_classes: 2,
        ..ModelConfig::tiny()
    };
    assert!(matches!(
        train_toy(&c, &ToyTask::new(0, 4, 4), &short(1)),
        Err(Error::Config(_))
    ));
}

#[test]
fn patch_pixels_reach_cls_weights_only_through_attention() {
    let spec = SpecConfig::empty().with(LayerKind::Qkv, 0, 1);
    let grads_for = |self_only: bool, bump: f64| {
        let c = ModelConfig {
            depth: 1,
            self_only_attention: self_only,
            ..gc_config()
        }
        .with_spec(spec.clone());
        let mut m = Model::new(c, 3).unwrap();
        m.randomize(4, 0.5);
        let mut task = ToyTask::with_shape(1, 1, 4, 2, 0);
        task.train
            .iter_mut()
            .for_each(|s| s.image.data_mut()[5] += bump);
        let batch: Vec<&Sample> = task.train.iter().collect();
        let (_, g) = loss_and_grads(&m, &batch, 0.1).unwrap();
        let get = |name: &str| g.get(m.params().id(name).unwrap()).unwrap().to_vec();
        (get("block0.qkv.cls.weight"), get("block0.qkv.patch.weight"))
    };
    let (cls_a, patch_a) = grads_for(true, 0.0);
    let (cls_b, patch_b) = grads_for(true, 0.3);
    assert_eq!(cls_a, cls_b);
    assert_ne!(patch_a, patch_b);
    let (cls_c, _) = grads_for(false, 0.0);
    let (cls_d, _) = grads_for(false, 0.3);
    assert_ne!(cls_c, cls_d);
}

#[test]
fn key_bias_gradient_vanishes_without_a_bias_slot() {
    // Softmax is shift-invariant per query, so a bias shared by every key
    // cannot change the loss.
    let key_bias_grad = |attn_bias: bool| {
        let c = ModelConfig {
            attn_bias,
            ..gc_config()
        };
        let mut m = Model::new(c, 0).unwrap();
        m.randomize(1, 0.5);
        let task = ToyTask::with_shape(0, 1, 4, 2, 0);
        let batch: Vec<&Sample> = task.train.iter().collect();
        let (_, g) = loss_and_grads(&m, &batch, 0.1).unwrap();
        let b = g
            .get(m.params().id("block0.qkv.patch.bias").unwrap())
            .unwrap()
            .to_vec();
        b[8..16].iter().fold(0.0f64, |a, v| a.max(v.abs()))
    };
    assert!(key_bias_grad(false) < 1e-12);
    assert!(key_bias_grad(true) > 1e-6);
}
