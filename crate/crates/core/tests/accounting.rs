use proptest::prelude::*;
use spectok::accounting::{count_flops, count_params};
use spectok::model::{LayerKind, RegisterRouting, Session};
use spectok::{Model, ModelConfig, SpecConfig, Tensor};

fn small(depth: usize, registers: usize, attn_bias: bool) -> ModelConfig {
    ModelConfig {
        image_size: 8,
        patch_size: 4,
        in_chans: 2,
        embed_dim: 8,
        depth,
        heads: 2,
        mlp_ratio: 2,
        num_registers: registers,
        attn_bias,
        ..ModelConfig::tiny()
    }
}

/// Backbone scalars in an actually built model, heads excluded.
fn walk_store(config: &ModelConfig) -> u64 {
    let m = Model::new(config.clone(), 0).unwrap();
    m.params()
        .iter()
        .filter(|(_, name, _)| !Model::is_head_param(name))
        .map(|(_, _, t)| t.numel() as u64)
        .sum()
}

/// Multiply-adds actually executed by one inference pass.
fn traced_madds(config: &ModelConfig) -> u64 {
    let m = Model::new(config.clone(), 0).unwrap();
    let mut s = Session::new(m.params(), false);
    let img = Tensor::full([config.in_chans, config.image_size, config.image_size], 0.3);
    let before = s.graph.multiply_adds();
    m.forward_session(&mut s, &img, None).unwrap();
    s.graph.multiply_adds() - before
}

fn spec_strategy(depth: usize) -> impl Strategy<Value = SpecConfig> {
    let kind_spec = (0..=depth, 0..=depth, prop::option::of(1usize..4));
    (
        prop::collection::vec(prop::option::of(kind_spec), 7),
        any::<bool>(),
        prop::option::of(any::<bool>()),
    )
        .prop_map(move |(entries, with_patches, final_norm)| {
            let mut s = SpecConfig::empty();
            for (kind, e) in LayerKind::ALL.into_iter().zip(entries) {
                let Some((a, b, rank)) = e else { continue };
                let (lo, hi) = (a.min(b), a.max(b));
                s = match rank {
                    Some(r) if !kind.is_norm() => s.with_lora(kind, lo, hi, r),
                    _ => s.with(kind, lo, hi),
                };
            }
            if with_patches {
                s = s.with_routing(RegisterRouting::WithPatches);
            }
            s.final_norm = final_norm;
            s
        })
}

fn config_and_spec() -> impl Strategy<Value = ModelConfig> {
    (1usize..4, 0usize..3, any::<bool>()).prop_flat_map(|(depth, regs, bias)| {
        spec_strategy(depth).prop_map(move |spec| small(depth, regs, bias).with_spec(spec))
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn closed_form_matches_built_model(c in config_and_spec()) {
        let r = count_params(&c);
        prop_assert_eq!(r.specialized_total, walk_store(&c));
        let base = c.clone().with_spec(SpecConfig::empty());
        prop_assert_eq!(r.baseline_total, walk_store(&base));
        prop_assert_eq!(r.delta(), r.specialized_total - r.baseline_total);
    }

    #[test]
    fn flops_match_executed_matmuls(c in config_and_spec()) {
        prop_assert_eq!(count_flops(&c, c.image_size).total, traced_madds(&c));
    }

    #[test]
    fn widening_a_range_never_shrinks_the_count(depth in 1usize..6, lo in 0usize..6, kind in 0usize..7) {
        let c = small(depth, 0, false);
        let kind = LayerKind::ALL[kind];
        let lo = lo.min(depth);
        let mut prev = 0;
        for hi in lo..=depth {
            let n = count_params(&c.clone().with_spec(SpecConfig::empty().with(kind, lo, hi))).delta();
            prop_assert!(n >= prev);
            prev = n;
        }
    }
}

#[test]
fn full_specialization_flops_equal_baseline() {
    for depth in [3, 6] {
        let c = small(depth, 1, true);
        let base = count_flops(&c, 8);
        let mut full = SpecConfig::empty();
        for k in LayerKind::ALL {
            full = full.with(k, 0, depth);
        }
        assert_eq!(count_flops(&c.clone().with_spec(full), 8), base);
    }
}

#[test]
fn lora_flops_are_the_only_overhead() {
    let c = small(2, 0, false);
    let spec = SpecConfig::empty().with_lora(LayerKind::Mlp, 0, 2, 3);
    let r = count_flops(&c.clone().with_spec(spec), 8);
    // One CLS row, two blocks, d → d delta through rank 3.
    assert_eq!(r.get("lora"), Some(2 * 3 * (8 + 8)));
    assert_eq!(r.total - count_flops(&c, 8).total, 2 * 3 * 16);
}

#[test]
fn csv_rows_sum_to_total() {
    let c = ModelConfig::vit_large().with_spec(SpecConfig::default_best(24));
    let r = count_params(&c);
    let mut buf = Vec::new();
    r.write_csv(&mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    let mut lines = text.lines();
    assert_eq!(
        lines.next(),
        Some("kind,baseline,specialized,delta,delta_percent")
    );
    let rows: Vec<Vec<&str>> = lines.map(|l| l.split(',').collect()).collect();
    let (body, total) = rows.split_at(rows.len() - 1);
    let sum: u64 = body.iter().map(|r| r[3].parse::<u64>().unwrap()).sum();
    assert_eq!(total[0][3].parse::<u64>().unwrap(), sum);
    assert_eq!(sum, r.delta());
}
