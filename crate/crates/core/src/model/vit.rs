use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::attention::{attention, AttentionSpec};
use super::config::{LayerKind, ModelConfig};
use super::layers::{specialized_apply, ClsWeights, LayerWeights, PathPair};
use super::params::{ParamId, ParamStore, Session};
use super::partition::{Route, TokenPartition};
use crate::error::{Error, Result};
use crate::probes::{ProbePoint, ProbeTrace};
use crate::tensor::{Tensor, Var};

/// How CLS-path weights are initialized.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ClsInit {
    /// Fresh draws from a stream separate from the patch weights.
    #[default]
    Independent,
    /// Bit-exact copies of the patch weights (low-rank `B` stays zero).
    CopyOfPatch,
}

#[derive(Debug, Clone)]
pub struct Block {
    pub pre_attn_ln: PathPair,
    pub qkv: PathPair,
    pub attn_out: PathPair,
    pub post_attn_ls: PathPair,
    pub pre_mlp_ln: PathPair,
    pub mlp: PathPair,
    pub post_mlp_ls: PathPair,
    pub attn_bias: Option<(ParamId, ParamId)>,
}

impl Block {
    pub fn pair(&self, kind: LayerKind) -> &PathPair {
        match kind {
            LayerKind::PreAttnLn => &self.pre_attn_ln,
            LayerKind::Qkv => &self.qkv,
            LayerKind::AttnOut => &self.attn_out,
            LayerKind::PostAttnLs => &self.post_attn_ls,
            LayerKind::PreMlpLn => &self.pre_mlp_ln,
            LayerKind::Mlp => &self.mlp,
            LayerKind::PostMlpLs => &self.post_mlp_ls,
        }
    }

    fn pair_mut(&mut self, kind: LayerKind) -> &mut PathPair {
        match kind {
            LayerKind::PreAttnLn => &mut self.pre_attn_ln,
            LayerKind::Qkv => &mut self.qkv,
            LayerKind::AttnOut => &mut self.attn_out,
            LayerKind::PostAttnLs => &mut self.post_attn_ls,
            LayerKind::PreMlpLn => &mut self.pre_mlp_ln,
            LayerKind::Mlp => &mut self.mlp,
            LayerKind::PostMlpLs => &mut self.post_mlp_ls,
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct Linear {
    pub weight: ParamId,
    pub bias: ParamId,
}

/// A Vision Transformer whose layers may route CLS-path rows through their
/// own weights.
#[derive(Debug, Clone)]
pub struct Model {
    config: ModelConfig,
    params: ParamStore,
    pub patch_embed: Linear,
    pub pos_embed: ParamId,
    pub cls_token: ParamId,
    pub registers: Option<ParamId>,
    pub blocks: Vec<Block>,
    pub final_norm: PathPair,
    /// Classifier on the CLS output (training only).
    pub head: Linear,
    /// Patch-pixel reconstruction head (training only).
    pub aux_head: Linear,
}

/// Draws from N(0, std²), resampling anything beyond two standard deviations.
fn trunc_normal(rng: &mut ChaCha8Rng, shape: &[usize], std: f64) -> Tensor {
    let normal = Normal::new(0.0, std).expect("positive std");
    let n = shape.iter().product();
    let data = (0..n)
        .map(|_| loop {
            let v: f64 = normal.sample(rng);
            if v.abs() <= 2.0 * std {
                break v;
            }
        })
        .collect();
    Tensor::new(shape.to_vec(), data).expect("shape matches draw count")
}

struct Init<'a> {
    store: &'a mut ParamStore,
    rng: ChaCha8Rng,
    cfg: &'a ModelConfig,
}

impl Init<'_> {
    fn linear(&mut self, prefix: &str, din: usize, dout: usize) -> Linear {
        let w = trunc_normal(&mut self.rng, &[din, dout], self.cfg.init_std);
        Linear {
            weight: self.store.add(format!("{prefix}.weight"), w),
            bias: self
                .store
                .add(format!("{prefix}.bias"), Tensor::zeros([dout])),
        }
    }

    fn layer(&mut self, kind: LayerKind, prefix: &str) -> LayerWeights {
        let d = self.cfg.embed_dim;
        match kind {
            LayerKind::PreAttnLn | LayerKind::PreMlpLn => self.norm(prefix),
            LayerKind::PostAttnLs | LayerKind::PostMlpLs => LayerWeights::Scale {
                lambda: self.store.add(
                    format!("{prefix}.lambda"),
                    Tensor::full([d], self.cfg.layer_scale_init),
                ),
            },
            LayerKind::Qkv => {
                let l = self.linear(prefix, d, 3 * d);
                LayerWeights::Linear {
                    weight: l.weight,
                    bias: l.bias,
                }
            }
            LayerKind::AttnOut => {
                let l = self.linear(prefix, d, d);
                LayerWeights::Linear {
                    weight: l.weight,
                    bias: l.bias,
                }
            }
            LayerKind::Mlp => {
                let h = self.cfg.mlp_hidden();
                let fc1 = self.linear(&format!("{prefix}.fc1"), d, h);
                let fc2 = self.linear(&format!("{prefix}.fc2"), h, d);
                LayerWeights::Mlp {
                    fc1_weight: fc1.weight,
                    fc1_bias: fc1.bias,
                    fc2_weight: fc2.weight,
                    fc2_bias: fc2.bias,
                }
            }
        }
    }

    fn norm(&mut self, prefix: &str) -> LayerWeights {
        let d = self.cfg.embed_dim;
        LayerWeights::Norm {
            gamma: self
                .store
                .add(format!("{prefix}.gamma"), Tensor::full([d], 1.0)),
            beta: self.store.add(format!("{prefix}.beta"), Tensor::zeros([d])),
        }
    }

    /// Registers a second weight set for `patch` under `prefix`, copying
    /// tensors when `copy` is set.
    fn clone_layer(
        &mut self,
        patch: &LayerWeights,
        kind: LayerKind,
        prefix: &str,
        copy: bool,
    ) -> LayerWeights {
        if !copy {
            return self.layer(kind, prefix);
        }
        let mut dup = |id: ParamId| {
            let suffix = self
                .store
                .name(id)
                .rsplit_once(".patch.")
                .map(|(_, s)| s.to_string());
            let name = format!("{prefix}.{}", suffix.expect("patch parameter naming"));
            let t = self.store.get(id).detached();
            self.store.add(name, t)
        };
        match *patch {
            LayerWeights::Norm { gamma, beta } => LayerWeights::Norm {
                gamma: dup(gamma),
                beta: dup(beta),
            },
            LayerWeights::Scale { lambda } => LayerWeights::Scale {
                lambda: dup(lambda),
            },
            LayerWeights::Linear { weight, bias } => LayerWeights::Linear {
                weight: dup(weight),
                bias: dup(bias),
            },
            LayerWeights::Mlp {
                fc1_weight,
                fc1_bias,
                fc2_weight,
                fc2_bias,
            } => LayerWeights::Mlp {
                fc1_weight: dup(fc1_weight),
                fc1_bias: dup(fc1_bias),
                fc2_weight: dup(fc2_weight),
                fc2_bias: dup(fc2_bias),
            },
        }
    }
}

impl Model {
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self> {
        Self::with_init(config, seed, ClsInit::Independent)
    }

    /// Builds a model. Shared and patch-path weights come from one seeded
    /// stream whose draw order does not depend on the specialization, so
    /// two configs differing only in `spec` share those weights exactly.
    pub fn with_init(config: ModelConfig, seed: u64, cls_init: ClsInit) -> Result<Self> {
        config.validate()?;
        let cfg = config.clone();
        let d = cfg.embed_dim;
        let mut store = ParamStore::new();
        let mut init = Init {
            store: &mut store,
            rng: ChaCha8Rng::seed_from_u64(seed),
            cfg: &cfg,
        };

        let patch_embed = init.linear("patch_embed", cfg.patch_dim(), d);
        let pos = trunc_normal(&mut init.rng, &[cfg.num_patches(), d], cfg.init_std);
        let pos_embed = init.store.add("pos_embed", pos);
        let cls = trunc_normal(&mut init.rng, &[1, d], cfg.init_std);
        let cls_token = init.store.add("cls_token", cls);
        let registers = (cfg.num_registers > 0).then(|| {
            let r = trunc_normal(&mut init.rng, &[cfg.num_registers, d], cfg.init_std);
            init.store.add("registers", r)
        });

        let mut blocks = Vec::with_capacity(cfg.depth);
        for i in 0..cfg.depth {
            let pair = |init: &mut Init, kind: LayerKind| {
                PathPair::shared(init.layer(kind, &format!("block{i}.{kind}.patch")))
            };
            let pre_attn_ln = pair(&mut init, LayerKind::PreAttnLn);
            let qkv = pair(&mut init, LayerKind::Qkv);
            let attn_bias = cfg.attn_bias.then(|| {
                let k = trunc_normal(&mut init.rng, &[1, d], cfg.init_std);
                let v = trunc_normal(&mut init.rng, &[1, d], cfg.init_std);
                (
                    init.store.add(format!("block{i}.attn_bias.k"), k),
                    init.store.add(format!("block{i}.attn_bias.v"), v),
                )
            });
            let attn_out = pair(&mut init, LayerKind::AttnOut);
            let post_attn_ls = pair(&mut init, LayerKind::PostAttnLs);
            let pre_mlp_ln = pair(&mut init, LayerKind::PreMlpLn);
            let mlp = pair(&mut init, LayerKind::Mlp);
            let post_mlp_ls = pair(&mut init, LayerKind::PostMlpLs);
            blocks.push(Block {
                pre_attn_ln,
                qkv,
                attn_out,
                post_attn_ls,
                pre_mlp_ln,
                mlp,
                post_mlp_ls,
                attn_bias,
            });
        }
        let mut final_norm = PathPair::shared(init.norm("final_norm.patch"));
        let head = init.linear("head", d, cfg.num_classes);
        // A zero classifier leaves the backbone gradient-free on the first
        // step instead of pushing every input towards one class.
        init.store.get_mut(head.weight).data_mut().fill(0.0);
        let aux_head = init.linear("aux_head", d, cfg.patch_dim());

        // CLS-path weights draw from their own stream.
        init.rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5ec1_a11c_c15f_0000);
        let copy = cls_init == ClsInit::CopyOfPatch;
        for (i, block) in blocks.iter_mut().enumerate() {
            for kind in LayerKind::ALL {
                let Some(ks) = cfg.spec.at(kind, i) else {
                    continue;
                };
                let pair = block.pair_mut(kind);
                pair.cls = match ks.lora_rank {
                    None => ClsWeights::Full(init.clone_layer(
                        &pair.patch,
                        kind,
                        &format!("block{i}.{kind}.cls"),
                        copy,
                    )),
                    Some(r) => {
                        let (din, dout) = cfg.io_dims(kind);
                        let normal = Normal::new(0.0, cfg.init_std).expect("positive std");
                        let a: Vec<f64> =
                            (0..din * r).map(|_| normal.sample(&mut init.rng)).collect();
                        ClsWeights::LowRank {
                            a: init
                                .store
                                .add(format!("block{i}.{kind}.lora_a"), Tensor::new([din, r], a)?),
                            b: init
                                .store
                                .add(format!("block{i}.{kind}.lora_b"), Tensor::zeros([r, dout])),
                        }
                    }
                };
            }
        }
        if cfg.spec.final_norm_specialized(cfg.depth) {
            final_norm.cls = ClsWeights::Full(init.clone_layer(
                &final_norm.patch,
                LayerKind::PreAttnLn,
                "final_norm.cls",
                copy,
            ));
        }

        Ok(Self {
            config,
            params: store,
            patch_embed,
            pos_embed,
            cls_token,
            registers,
            blocks,
            final_norm,
            head,
            aux_head,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn params(&self) -> &ParamStore {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamStore {
        &mut self.params
    }

    pub fn partition(&self) -> TokenPartition {
        TokenPartition::new(self.config.num_registers, self.config.num_patches())
    }

    pub fn route(&self) -> Route {
        self.partition().route(self.config.spec.register_routing)
    }

    /// True for the training heads, which are not part of the backbone.
    pub fn is_head_param(name: &str) -> bool {
        name.starts_with("head.") || name.starts_with("aux_head.")
    }

    /// Overwrites every parameter with uniform draws in `[-scale, scale]`
    /// (gains and LayerScales centred on 1). Used to move away from the
    /// degenerate initial point before gradient checks.
    pub fn randomize(&mut self, seed: u64, scale: f64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let ids: Vec<ParamId> = self.params.ids().collect();
        for id in ids {
            let centred = {
                let n = self.params.name(id);
                n.ends_with(".gamma") || n.ends_with(".lambda")
            };
            for v in self.params.get_mut(id).data_mut() {
                let u: f64 = rng.random_range(-scale..=scale);
                *v = if centred { 1.0 + u } else { u };
            }
        }
    }

    /// Inference forward pass; returns detached outputs and the probe trace.
    pub fn forward(&self, image: &Tensor) -> Result<ModelOutput> {
        let mut s = Session::new(&self.params, false);
        let mut trace = ProbeTrace::new(self.partition());
        let out = self.forward_session(&mut s, image, Some(&mut trace))?;
        Ok(ModelOutput {
            cls_out: s.value(out.cls_out).detached(),
            patch_out: s.value(out.patch_out).detached(),
            trace,
        })
    }

    pub fn forward_session(
        &self,
        s: &mut Session,
        image: &Tensor,
        mut trace: Option<&mut ProbeTrace>,
    ) -> Result<ForwardVars> {
        let route = self.route();
        let mut x = self.patch_embed(s, image)?;
        for i in 0..self.blocks.len() {
            x = self.block_forward(s, i, x, &route, trace.as_deref_mut())?;
        }
        let y = specialized_apply(s, &self.final_norm, x, &route)?;
        let cls_out = s.graph.select_rows(y, &[0])?;
        let patches: Vec<usize> = self.partition().patch_indices().collect();
        let patch_out = s.graph.select_rows(y, &patches)?;
        Ok(ForwardVars {
            cls_out,
            patch_out,
            tokens: y,
        })
    }

    /// Projects flattened patches, adds positional embeddings, and prepends
    /// the CLS and register tokens.
    pub fn patch_embed(&self, s: &mut Session, image: &Tensor) -> Result<Var> {
        let c = &self.config;
        let want = [c.in_chans, c.image_size, c.image_size];
        if image.shape() != want {
            return Err(Error::Config(format!(
                "image shape {:?} does not match model input {want:?}",
                image.shape()
            )));
        }
        let patches = s.constant(extract_patches(image, c.patch_size)?);
        let (w, b) = (
            s.param(self.patch_embed.weight),
            s.param(self.patch_embed.bias),
        );
        let e = s.graph.matmul(patches, w)?;
        let e = s.graph.add_row(e, b)?;
        let pos = s.param(self.pos_embed);
        let e = s.graph.add(e, pos)?;
        let mut parts = vec![s.param(self.cls_token)];
        if let Some(r) = self.registers {
            parts.push(s.param(r));
        }
        parts.push(e);
        Ok(s.graph.concat_rows(&parts)?)
    }

    pub fn block_forward(
        &self,
        s: &mut Session,
        index: usize,
        x: Var,
        route: &Route,
        mut trace: Option<&mut ProbeTrace>,
    ) -> Result<Var> {
        let block = &self.blocks[index];
        let mut emit = |s: &Session, point: ProbePoint, v: Var| {
            if let Some(t) = trace.as_deref_mut() {
                t.push(index, point, s.value(v));
            }
        };
        let spec = AttentionSpec {
            heads: self.config.heads,
            kv_bias: block.attn_bias,
            self_only: self.config.self_only_attention,
        };

        emit(s, ProbePoint::PreAttnLnIn, x);
        let h = specialized_apply(s, &block.pre_attn_ln, x, route)?;
        emit(s, ProbePoint::PreAttnLnOut, h);
        let a = attention(s, h, &block.qkv, &block.attn_out, route, &spec)?;
        emit(s, ProbePoint::AttnOut, a);
        emit(s, ProbePoint::PostAttnLsIn, a);
        let a = specialized_apply(s, &block.post_attn_ls, a, route)?;
        emit(s, ProbePoint::PostAttnLsOut, a);
        let x = s.graph.add(x, a)?;

        emit(s, ProbePoint::PreMlpLnIn, x);
        let h = specialized_apply(s, &block.pre_mlp_ln, x, route)?;
        emit(s, ProbePoint::PreMlpLnOut, h);
        let m = specialized_apply(s, &block.mlp, h, route)?;
        emit(s, ProbePoint::MlpOut, m);
        emit(s, ProbePoint::PostMlpLsIn, m);
        let m = specialized_apply(s, &block.post_mlp_ls, m, route)?;
        emit(s, ProbePoint::PostMlpLsOut, m);
        let x = s.graph.add(x, m)?;
        emit(s, ProbePoint::BlockOut, x);
        Ok(x)
    }
}

#[derive(Debug, Clone, Copy)]
pub struct ForwardVars {
    pub cls_out: Var,
    pub patch_out: Var,
    /// All `N` rows after the final norm, registers included.
    pub tokens: Var,
}

#[derive(Debug, Clone)]
pub struct ModelOutput {
    pub cls_out: Tensor,
    pub patch_out: Tensor,
    pub trace: ProbeTrace,
}

/// Flattens a `C×H×W` image into `(H/p)·(W/p)` rows of `C·p·p` values,
/// patches in raster order, each patch ordered channel, row, column.
pub fn extract_patches(image: &Tensor, p: usize) -> Result<Tensor> {
    let [c, h, w] = image.shape() else {
        return Err(Error::Config(format!(
            "expected a C×H×W image, got shape {:?}",
            image.shape()
        )));
    };
    let (c, h, w) = (*c, *h, *w);
    if p == 0 || h % p != 0 || w % p != 0 {
        return Err(Error::Config(format!(
            "image {h}×{w} is not divisible into {p}×{p} patches"
        )));
    }
    let (gh, gw) = (h / p, w / p);
    let d = image.data();
    let mut out = Vec::with_capacity(c * h * w);
    for py in 0..gh {
        for px in 0..gw {
            for ch in 0..c {
                for dy in 0..p {
                    let row = (ch * h + py * p + dy) * w + px * p;
                    out.extend_from_slice(&d[row..row + p]);
                }
            }
        }
    }
    Ok(Tensor::new([gh * gw, c * p * p], out)?)
}
