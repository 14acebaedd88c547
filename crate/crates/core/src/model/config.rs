use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// The seven intra-block layers that can be given a separate CLS path.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LayerKind {
    PreAttnLn,
    Qkv,
    AttnOut,
    PostAttnLs,
    PreMlpLn,
    Mlp,
    PostMlpLs,
}

impl LayerKind {
    pub const ALL: [LayerKind; 7] = [
        LayerKind::PreAttnLn,
        LayerKind::Qkv,
        LayerKind::AttnOut,
        LayerKind::PostAttnLs,
        LayerKind::PreMlpLn,
        LayerKind::Mlp,
        LayerKind::PostMlpLs,
    ];

    /// LayerNorms and LayerScales.
    pub const NORMS: [LayerKind; 4] = [
        LayerKind::PreAttnLn,
        LayerKind::PostAttnLs,
        LayerKind::PreMlpLn,
        LayerKind::PostMlpLs,
    ];

    pub fn name(self) -> &'static str {
        match self {
            LayerKind::PreAttnLn => "pre_attn_ln",
            LayerKind::Qkv => "qkv",
            LayerKind::AttnOut => "attn_out",
            LayerKind::PostAttnLs => "post_attn_ls",
            LayerKind::PreMlpLn => "pre_mlp_ln",
            LayerKind::Mlp => "mlp",
            LayerKind::PostMlpLs => "post_mlp_ls",
        }
    }

    pub fn is_norm(self) -> bool {
        Self::NORMS.contains(&self)
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.name() == name)
    }
}

impl fmt::Display for LayerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Specialization of one layer kind over the half-open block range `[lo, hi)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KindSpec {
    pub lo: usize,
    pub hi: usize,
    /// When set, the CLS path is the shared layer plus a rank-`r` delta
    /// instead of a full second weight set.
    #[serde(default)]
    pub lora_rank: Option<usize>,
}

impl KindSpec {
    pub fn covers(&self, block: usize) -> bool {
        self.lo <= block && block < self.hi
    }

    pub fn len(&self) -> usize {
        self.hi.saturating_sub(self.lo)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Which path register tokens take through specialized layers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RegisterRouting {
    #[default]
    WithCls,
    WithPatches,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpecConfig {
    #[serde(default)]
    pub kinds: BTreeMap<LayerKind, KindSpec>,
    #[serde(default)]
    pub register_routing: RegisterRouting,
    /// Overrides whether the output LayerNorm is specialized. By default it
    /// follows the LayerNorm kinds in the last block.
    #[serde(default)]
    pub final_norm: Option<bool>,
}

impl SpecConfig {
    pub fn empty() -> Self {
        Self::default()
    }

    pub fn with(mut self, kind: LayerKind, lo: usize, hi: usize) -> Self {
        self.kinds.insert(
            kind,
            KindSpec {
                lo,
                hi,
                lora_rank: None,
            },
        );
        self
    }

    pub fn with_lora(mut self, kind: LayerKind, lo: usize, hi: usize, rank: usize) -> Self {
        self.kinds.insert(
            kind,
            KindSpec {
                lo,
                hi,
                lora_rank: Some(rank),
            },
        );
        self
    }

    /// All four LayerNorm/LayerScale kinds over `[lo, hi)`.
    pub fn with_norms(self, lo: usize, hi: usize) -> Self {
        LayerKind::NORMS
            .into_iter()
            .fold(self, |s, k| s.with(k, lo, hi))
    }

    pub fn with_routing(mut self, routing: RegisterRouting) -> Self {
        self.register_routing = routing;
        self
    }

    /// Norms in every block and QKV over the first third of the depth.
    pub fn default_best(depth: usize) -> Self {
        Self::empty()
            .with_norms(0, depth)
            .with(LayerKind::Qkv, 0, depth.div_ceil(3))
    }

    pub fn is_empty(&self) -> bool {
        self.kinds.values().all(KindSpec::is_empty) && self.final_norm != Some(true)
    }

    /// The spec governing `kind` in `block`, if that layer is specialized there.
    pub fn at(&self, kind: LayerKind, block: usize) -> Option<&KindSpec> {
        self.kinds.get(&kind).filter(|s| s.covers(block))
    }

    pub fn final_norm_specialized(&self, depth: usize) -> bool {
        self.final_norm.unwrap_or_else(|| {
            [LayerKind::PreAttnLn, LayerKind::PreMlpLn]
                .into_iter()
                .any(|k| self.at(k, depth.saturating_sub(1)).is_some())
        })
    }
}

fn default_in_chans() -> usize {
    1
}
fn default_mlp_ratio() -> usize {
    4
}
fn default_num_classes() -> usize {
    4
}
fn default_layer_scale_init() -> f64 {
    1e-5
}
fn default_init_std() -> f64 {
    0.02
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub image_size: usize,
    pub patch_size: usize,
    #[serde(default = "default_in_chans")]
    pub in_chans: usize,
    pub embed_dim: usize,
    pub depth: usize,
    pub heads: usize,
    #[serde(default = "default_mlp_ratio")]
    pub mlp_ratio: usize,
    #[serde(default)]
    pub num_registers: usize,
    #[serde(default)]
    pub attn_bias: bool,
    #[serde(default)]
    pub spec: SpecConfig,
    #[serde(default = "default_num_classes")]
    pub num_classes: usize,
    #[serde(default = "default_layer_scale_init")]
    pub layer_scale_init: f64,
    /// Standard deviation of the truncated-normal draws for projections,
    /// embeddings and tokens, and of the low-rank `A` factors.
    #[serde(default = "default_init_std")]
    pub init_std: f64,
    /// Diagnostic: every token attends only to itself. Isolates the
    /// routing from token mixing.
    #[serde(default)]
    pub self_only_attention: bool,
}

impl ModelConfig {
    /// ViT-L/14 at 518 px with attention bias.
    pub fn vit_large() -> Self {
        Self {
            image_size: 518,
            patch_size: 14,
            in_chans: 3,
            embed_dim: 1024,
            depth: 24,
            heads: 16,
            mlp_ratio: 4,
            num_registers: 0,
            attn_bias: true,
            spec: SpecConfig::empty(),
            num_classes: 1000,
            layer_scale_init: default_layer_scale_init(),
            init_std: default_init_std(),
            self_only_attention: false,
        }
    }

    /// The toy-task model: 16 px single-channel images, 4×4 patches. At
    /// width 32 the large-model init (0.02, λ = 1e-5) leaves the CLS row
    /// near zero and SGD collapses it, so this preset uses unit LayerScale
    /// and an init scale near 1/√d.
    pub fn tiny() -> Self {
        Self {
            image_size: 16,
            patch_size: 4,
            in_chans: 1,
            embed_dim: 32,
            depth: 2,
            heads: 4,
            mlp_ratio: 4,
            num_registers: 0,
            attn_bias: false,
            spec: SpecConfig::empty(),
            num_classes: 4,
            layer_scale_init: 1.0,
            init_std: 0.2,
            self_only_attention: false,
        }
    }

    pub fn with_spec(mut self, spec: SpecConfig) -> Self {
        self.spec = spec;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Config(m));
        if self.depth < 1 {
            return fail("depth must be at least 1".into());
        }
        if self.patch_size == 0 || self.image_size == 0 || self.image_size % self.patch_size != 0 {
            return fail(format!(
                "image_size {} is not divisible by patch_size {}",
                self.image_size, self.patch_size
            ));
        }
        if self.heads == 0 || self.embed_dim == 0 || self.embed_dim % self.heads != 0 {
            return fail(format!(
                "embed_dim {} is not divisible by heads {}",
                self.embed_dim, self.heads
            ));
        }
        if !(self.init_std > 0.0 && self.init_std.is_finite()) {
            return fail(format!("init_std must be positive, got {}", self.init_std));
        }
        if self.in_chans == 0 || self.mlp_ratio == 0 || self.num_classes == 0 {
            return fail("in_chans, mlp_ratio and num_classes must be positive".into());
        }
        for (kind, s) in &self.spec.kinds {
            if s.lo > s.hi || s.hi > self.depth {
                return fail(format!(
                    "spec.{kind}: block range [{}, {}) outside [0, {}]",
                    s.lo, s.hi, self.depth
                ));
            }
            if let Some(r) = s.lora_rank {
                if kind.is_norm() {
                    return fail(format!(
                        "spec.{kind}: low-rank paths apply to linear layers only"
                    ));
                }
                if r == 0 || r >= self.embed_dim {
                    return fail(format!(
                        "spec.{kind}: lora_rank {r} must satisfy 1 <= r < {}",
                        self.embed_dim
                    ));
                }
            }
        }
        Ok(())
    }

    pub fn grid(&self) -> usize {
        self.image_size / self.patch_size
    }

    pub fn num_patches(&self) -> usize {
        self.grid() * self.grid()
    }

    pub fn num_tokens(&self) -> usize {
        1 + self.num_registers + self.num_patches()
    }

    pub fn head_dim(&self) -> usize {
        self.embed_dim / self.heads
    }

    pub fn mlp_hidden(&self) -> usize {
        self.embed_dim * self.mlp_ratio
    }

    pub fn patch_dim(&self) -> usize {
        self.in_chans * self.patch_size * self.patch_size
    }

    /// (input, output) widths of a linear-type layer kind.
    pub fn io_dims(&self, kind: LayerKind) -> (usize, usize) {
        let d = self.embed_dim;
        match kind {
            LayerKind::Qkv => (d, 3 * d),
            _ => (d, d),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn validation_rejects_bad_shapes() {
        let mut c = ModelConfig::tiny();
        assert!(c.validate().is_ok());
        c.depth = 0;
        assert!(c.validate().is_err());
        let mut c = ModelConfig::tiny();
        c.image_size = 15;
        assert!(c.validate().is_err());
        let mut c = ModelConfig::tiny();
        c.heads = 5;
        assert!(c.validate().is_err());
        let c = ModelConfig::tiny().with_spec(SpecConfig::empty().with(LayerKind::Qkv, 1, 3));
        assert!(c.validate().is_err());
        let c =
            ModelConfig::tiny().with_spec(SpecConfig::empty().with_lora(LayerKind::Qkv, 0, 1, 32));
        assert!(c.validate().is_err());
        let c = ModelConfig::tiny().with_spec(SpecConfig::empty().with_lora(
            LayerKind::PreAttnLn,
            0,
            1,
            2,
        ));
        assert!(c.validate().is_err());
    }

    #[test]
    fn default_best_covers_first_third() {
        let s = SpecConfig::default_best(24);
        assert_eq!(s.kinds[&LayerKind::Qkv].hi, 8);
        assert!(s.final_norm_specialized(24));
        assert_eq!(SpecConfig::default_best(2).kinds[&LayerKind::Qkv].hi, 1);
        assert!(!SpecConfig::empty().final_norm_specialized(24));
        let early = SpecConfig::empty().with(LayerKind::PreAttnLn, 0, 3);
        assert!(!early.final_norm_specialized(24));
    }
}
