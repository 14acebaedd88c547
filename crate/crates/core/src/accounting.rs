//! Parameter and multiply-add bookkeeping for specialized models.
//!
//! Parameter counts cover the backbone: patch embedding, positional
//! embeddings, CLS and register tokens, attention biases, every block and
//! the output norm. Training heads are excluded. The baseline of a report is
//! the same configuration with an empty [`SpecConfig`].
//!
//! Multiply-adds count matrix products only: projections, attention scores
//! and attention mixing. Element-wise work is not counted.

use std::io::Write;

use crate::model::{LayerKind, ModelConfig, SpecConfig};

pub const REPORT_HEADER: &str = "kind,baseline,specialized,delta,delta_percent";

#[derive(Debug, Clone, PartialEq)]
pub struct KindCount {
    pub kind: String,
    pub baseline: u64,
    pub specialized: u64,
}

impl KindCount {
    pub fn delta(&self) -> u64 {
        self.specialized - self.baseline
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParamReport {
    pub baseline_total: u64,
    pub specialized_total: u64,
    pub per_kind: Vec<KindCount>,
}

impl ParamReport {
    pub fn delta(&self) -> u64 {
        self.specialized_total - self.baseline_total
    }

    /// `100 · delta / baseline_total`.
    pub fn delta_percent(&self) -> f64 {
        100.0 * self.delta() as f64 / self.baseline_total as f64
    }

    /// One row per kind, then `total`. Per-kind percentages share the
    /// overall denominator, so they sum to the total's.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "{REPORT_HEADER}")?;
        let pct = |delta: u64| 100.0 * delta as f64 / self.baseline_total as f64;
        for k in &self.per_kind {
            writeln!(
                w,
                "{},{},{},{},{}",
                k.kind,
                k.baseline,
                k.specialized,
                k.delta(),
                pct(k.delta())
            )?;
        }
        writeln!(
            w,
            "total,{},{},{},{}",
            self.baseline_total,
            self.specialized_total,
            self.delta(),
            self.delta_percent()
        )
    }
}

/// Multiply-adds of one forward pass, by stage.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FlopsReport {
    pub per_kind: Vec<(String, u64)>,
    pub total: u64,
}

impl FlopsReport {
    pub fn get(&self, kind: &str) -> Option<u64> {
        self.per_kind
            .iter()
            .find(|(k, _)| k == kind)
            .map(|&(_, v)| v)
    }

    /// Same columns as the parameter report, against `baseline`.
    pub fn write_csv<W: Write>(&self, baseline: &FlopsReport, mut w: W) -> std::io::Result<()> {
        writeln!(w, "{REPORT_HEADER}")?;
        let rows = self
            .per_kind
            .iter()
            .map(|(k, v)| (k.as_str(), *v))
            .chain([("total", self.total)]);
        for (kind, spec) in rows {
            let base = if kind == "total" {
                baseline.total
            } else {
                baseline.get(kind).unwrap_or(0)
            };
            let delta = spec as i128 - base as i128;
            let pct = 100.0 * delta as f64 / baseline.total as f64;
            writeln!(w, "{kind},{base},{spec},{delta},{pct}")?;
        }
        Ok(())
    }
}

/// Scalars in one copy of a layer of `kind`.
pub fn layer_params(config: &ModelConfig, kind: LayerKind) -> u64 {
    let d = config.embed_dim as u64;
    let h = config.mlp_hidden() as u64;
    match kind {
        LayerKind::PreAttnLn | LayerKind::PreMlpLn => 2 * d,
        LayerKind::PostAttnLs | LayerKind::PostMlpLs => d,
        LayerKind::Qkv => 3 * d * d + 3 * d,
        LayerKind::AttnOut => d * d + d,
        LayerKind::Mlp => 2 * d * h + h + d,
    }
}

/// Extra scalars the CLS path of `kind` adds in one block under `spec`.
fn cls_extra(config: &ModelConfig, spec: &SpecConfig, kind: LayerKind, block: usize) -> u64 {
    match spec.at(kind, block) {
        None => 0,
        Some(ks) => match ks.lora_rank {
            None => layer_params(config, kind),
            Some(r) => {
                let (din, dout) = config.io_dims(kind);
                (r * (din + dout)) as u64
            }
        },
    }
}

fn embedding_params(c: &ModelConfig) -> u64 {
    let d = c.embed_dim as u64;
    (c.patch_dim() as u64) * d + d + (c.num_patches() as u64) * d + d + (c.num_registers as u64) * d
}

pub fn count_params(config: &ModelConfig) -> ParamReport {
    let c = config;
    let d = c.embed_dim as u64;
    let depth = c.depth as u64;
    let mut per_kind = Vec::with_capacity(LayerKind::ALL.len() + 3);
    let embed = embedding_params(c);
    per_kind.push(KindCount {
        kind: "embeddings".into(),
        baseline: embed,
        specialized: embed,
    });
    let bias = if c.attn_bias { 2 * d * depth } else { 0 };
    per_kind.push(KindCount {
        kind: "attn_bias".into(),
        baseline: bias,
        specialized: bias,
    });
    for kind in LayerKind::ALL {
        let base = layer_params(c, kind) * depth;
        let extra: u64 = (0..c.depth).map(|b| cls_extra(c, &c.spec, kind, b)).sum();
        per_kind.push(KindCount {
            kind: kind.name().into(),
            baseline: base,
            specialized: base + extra,
        });
    }
    let fnorm = 2 * d;
    let fnorm_spec = if c.spec.final_norm_specialized(c.depth) {
        2 * fnorm
    } else {
        fnorm
    };
    per_kind.push(KindCount {
        kind: "final_norm".into(),
        baseline: fnorm,
        specialized: fnorm_spec,
    });
    ParamReport {
        baseline_total: per_kind.iter().map(|k| k.baseline).sum(),
        specialized_total: per_kind.iter().map(|k| k.specialized).sum(),
        per_kind,
    }
}

/// Multiply-adds of one forward pass at `image_size` (overriding the
/// config's). A specialized layer is counted as its CLS-route rows plus its
/// patch-route rows through equal-shaped weights.
pub fn count_flops(config: &ModelConfig, image_size: usize) -> FlopsReport {
    let c = ModelConfig {
        image_size,
        ..config.clone()
    };
    let d = c.embed_dim as u64;
    let h = c.mlp_hidden() as u64;
    let p = c.num_patches() as u64;
    let n = c.num_tokens() as u64;
    let nk = n + u64::from(c.attn_bias);
    let route = TokenRoute::of(&c);
    let depth = c.depth as u64;

    let linear = |din: u64, dout: u64| route.cls * din * dout + route.patch * din * dout;
    let mut lora = 0u64;
    for b in 0..c.depth {
        for kind in LayerKind::ALL {
            if let Some(r) = c.spec.at(kind, b).and_then(|ks| ks.lora_rank) {
                let (din, dout) = c.io_dims(kind);
                lora += route.cls * (r * (din + dout)) as u64;
            }
        }
    }
    let mut per_kind = vec![
        ("patch_embed".to_string(), p * c.patch_dim() as u64 * d),
        ("qkv".to_string(), depth * linear(d, 3 * d)),
        ("attn_scores".to_string(), depth * n * nk * d),
        ("attn_mix".to_string(), depth * n * nk * d),
        ("attn_out".to_string(), depth * linear(d, d)),
        ("mlp".to_string(), depth * (linear(d, h) + linear(h, d))),
    ];
    per_kind.push(("lora".to_string(), lora));
    let total = per_kind.iter().map(|(_, v)| v).sum();
    FlopsReport { per_kind, total }
}

/// Row counts on each side of a specialized layer.
struct TokenRoute {
    cls: u64,
    patch: u64,
}

impl TokenRoute {
    fn of(c: &ModelConfig) -> Self {
        let r = crate::model::TokenPartition::new(c.num_registers, c.num_patches())
            .route(c.spec.register_routing);
        TokenRoute {
            cls: r.cls_rows.len() as u64,
            patch: r.patch_rows.len() as u64,
        }
    }
}
