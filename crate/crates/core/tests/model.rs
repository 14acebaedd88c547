use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use spectok::model::{checkpoint, ClsInit, LayerKind, RegisterRouting, Session};
use spectok::probes::ProbePoint;
use spectok::tensor::ReduceOp;
use spectok::{Model, ModelConfig, SpecConfig, Tensor};

fn cfg(registers: usize) -> ModelConfig {
    ModelConfig {
        image_size: 8,
        patch_size: 4,
        in_chans: 2,
        embed_dim: 8,
        depth: 3,
        heads: 2,
        mlp_ratio: 2,
        num_registers: registers,
        ..ModelConfig::tiny()
    }
}

fn image(c: &ModelConfig, seed: u64) -> Tensor {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = c.in_chans * c.image_size * c.image_size;
    Tensor::new(
        [c.in_chans, c.image_size, c.image_size],
        (0..n).map(|_| rng.random_range(-1.0..1.0)).collect(),
    )
    .unwrap()
}

fn is_cls_path(name: &str) -> bool {
    name.contains(".cls.") || name.starts_with("final_norm.cls") || name.contains(".lora_")
}

fn bits(t: &Tensor) -> Vec<u64> {
    t.data().iter().map(|v| v.to_bits()).collect()
}

/// Gradient of `sum(patch_out · w)` for fixed weights `w`.
fn patch_loss_grads(m: &Model, img: &Tensor) -> Vec<(String, Vec<f64>)> {
    let mut s = Session::new(m.params(), true);
    let out = m.forward_session(&mut s, img, None).unwrap();
    let shape = s.value(out.patch_out).shape().to_vec();
    let n: usize = shape.iter().product();
    let w = s.constant(Tensor::new(shape, (0..n).map(|i| (i % 5) as f64 - 2.0).collect()).unwrap());
    let p = s.graph.mul(out.patch_out, w).unwrap();
    let l = s.graph.sum_all(p).unwrap();
    s.graph.backward(l).unwrap();
    let g = s.grads();
    m.params()
        .iter()
        .map(|(id, name, t)| {
            let v = g
                .get(id)
                .map(<[f64]>::to_vec)
                .unwrap_or_else(|| vec![0.0; t.numel()]);
            (name.to_string(), v)
        })
        .collect()
}

#[test]
fn spec_does_not_change_shared_weights() {
    let base = Model::new(cfg(1), 5).unwrap();
    let spec = SpecConfig::default_best(3).with_lora(LayerKind::Mlp, 1, 3, 2);
    let spec_m = Model::new(cfg(1).with_spec(spec), 5).unwrap();
    for (_, name, t) in base.params().iter() {
        let id = spec_m.params().id(name).unwrap();
        assert_eq!(spec_m.params().get(id), t, "{name}");
    }
}

#[test]
fn copy_init_matches_unspecialized_for_every_kind() {
    let c = cfg(0);
    let base = Model::new(c.clone(), 9).unwrap();
    for kind in LayerKind::ALL {
        let spec = SpecConfig::empty().with(kind, 0, c.depth);
        let m = Model::with_init(c.clone().with_spec(spec), 9, ClsInit::CopyOfPatch).unwrap();
        for k in 0..4 {
            let img = image(&c, k);
            let (a, b) = (base.forward(&img).unwrap(), m.forward(&img).unwrap());
            assert_eq!(bits(&a.cls_out), bits(&b.cls_out), "{kind}");
            assert_eq!(bits(&a.patch_out), bits(&b.patch_out), "{kind}");
        }
    }
}

#[test]
fn cls_path_never_reaches_patches_under_self_attention_only() {
    let c = ModelConfig {
        self_only_attention: true,
        ..cfg(0)
    }
    .with_spec(SpecConfig::default_best(3).with(LayerKind::Mlp, 0, 3));
    let mut m = Model::new(c.clone(), 2).unwrap();
    m.randomize(3, 0.5);
    let grads = patch_loss_grads(&m, &image(&c, 0));
    let mut cls_seen = 0;
    for (name, g) in grads {
        if is_cls_path(&name) || name == "cls_token" {
            cls_seen += 1;
            assert!(g.iter().all(|&v| v == 0.0), "{name}");
        }
    }
    assert!(cls_seen > 0);
}

#[test]
fn cls_qkv_feeds_patches_through_attention() {
    let c = cfg(0).with_spec(SpecConfig::empty().with(LayerKind::Qkv, 0, 1));
    let mut m = Model::new(c.clone(), 2).unwrap();
    m.randomize(3, 0.5);
    let grads = patch_loss_grads(&m, &image(&c, 0));
    let g = &grads
        .iter()
        .find(|(n, _)| n == "block0.qkv.cls.weight")
        .unwrap()
        .1;
    assert!(g.iter().any(|&v| v != 0.0));
}

#[test]
fn zero_layer_scale_cuts_its_branch() {
    let c = ModelConfig {
        layer_scale_init: 0.0,
        ..cfg(0)
    };
    let m = Model::new(c.clone(), 4).unwrap();
    let grads = patch_loss_grads(&m, &image(&c, 1));
    for (name, g) in &grads {
        if name.contains(".mlp.") || name.contains(".qkv.") || name.contains(".attn_out.") {
            assert!(g.iter().all(|&v| v == 0.0), "{name}");
        }
    }
    let lambda = &grads
        .iter()
        .find(|(n, _)| n == "block2.post_mlp_ls.patch.lambda")
        .unwrap()
        .1;
    assert!(lambda.iter().any(|&v| v != 0.0));
}

#[test]
fn register_routing_decides_which_rows_use_cls_weights() {
    for (routing, cls_rows) in [
        (RegisterRouting::WithCls, 3usize),
        (RegisterRouting::WithPatches, 1),
    ] {
        let c = ModelConfig {
            self_only_attention: true,
            ..cfg(2)
        }
        .with_spec(
            SpecConfig::empty()
                .with(LayerKind::Mlp, 0, 3)
                .with_routing(routing),
        );
        let m = Model::new(c.clone(), 6).unwrap();
        let mut moved = m.clone();
        let ids: Vec<_> = moved
            .params()
            .iter()
            .filter(|(_, n, _)| is_cls_path(n))
            .map(|(id, _, _)| id)
            .collect();
        for id in ids {
            moved
                .params_mut()
                .get_mut(id)
                .data_mut()
                .iter_mut()
                .for_each(|v| *v += 0.25);
        }
        let img = image(&c, 2);
        let rows = |m: &Model| {
            let mut s = Session::new(m.params(), false);
            let out = m.forward_session(&mut s, &img, None).unwrap();
            s.value(out.tokens).clone()
        };
        let (a, b) = (rows(&m), rows(&moved));
        for r in 0..a.rows() {
            assert_eq!(a.row(r) != b.row(r), r < cls_rows, "{routing:?} row {r}");
        }
    }
}

#[test]
fn trace_has_every_point_in_every_block() {
    let c = cfg(1);
    let m = Model::new(c.clone(), 0).unwrap();
    let out = m.forward(&image(&c, 0)).unwrap();
    assert_eq!(out.trace.num_blocks(), c.depth);
    for b in 0..c.depth {
        for p in ProbePoint::ALL {
            assert_eq!(out.trace.get(b, p).unwrap().rows(), c.num_tokens());
        }
    }
    let last = out.trace.get(c.depth - 1, ProbePoint::BlockOut).unwrap();
    assert_eq!(last.cols(), c.embed_dim);
}

#[test]
fn checkpoint_round_trip() {
    let c = cfg(1).with_spec(SpecConfig::default_best(3).with_lora(LayerKind::AttnOut, 0, 2, 3));
    let mut m = Model::new(c.clone(), 1).unwrap();
    m.randomize(8, 0.3);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("w.ckpt");
    checkpoint::save(m.params(), &path).unwrap();
    let mut fresh = Model::new(c.clone(), 99).unwrap();
    checkpoint::load_into(fresh.params_mut(), &path).unwrap();
    let img = image(&c, 3);
    assert_eq!(
        bits(&m.forward(&img).unwrap().patch_out),
        bits(&fresh.forward(&img).unwrap().patch_out)
    );

    let mut other = Model::new(cfg(1), 1).unwrap();
    assert!(checkpoint::load_into(other.params_mut(), &path).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn zero_low_rank_delta_is_neutral(kind in 0usize..3, rank in 1usize..4, seed in any::<u64>()) {
        let kind = [LayerKind::Qkv, LayerKind::AttnOut, LayerKind::Mlp][kind];
        let c = cfg(0);
        let base = Model::new(c.clone(), seed).unwrap();
        let m = Model::new(c.clone().with_spec(SpecConfig::empty().with_lora(kind, 0, 3, rank)), seed).unwrap();
        let img = image(&c, seed);
        let (a, b) = (base.forward(&img).unwrap(), m.forward(&img).unwrap());
        prop_assert_eq!(bits(&a.cls_out), bits(&b.cls_out));
        prop_assert_eq!(bits(&a.patch_out), bits(&b.patch_out));
    }

    #[test]
    fn outputs_are_finite_and_normalized(seed in any::<u64>(), regs in 0usize..3) {
        let c = cfg(regs).with_spec(SpecConfig::default_best(3));
        let m = Model::new(c.clone(), seed).unwrap();
        let out = m.forward(&image(&c, seed)).unwrap();
        prop_assert_eq!(out.patch_out.shape(), &[c.num_patches(), c.embed_dim]);
        prop_assert!(out.patch_out.data().iter().all(|v| v.is_finite()));
        // Fresh LayerNorm gains are 1 and offsets 0.
        let mean = out.patch_out.reduce(ReduceOp::Mean, 1).unwrap();
        prop_assert!(mean.data().iter().all(|v| v.abs() < 1e-9));
    }
}
