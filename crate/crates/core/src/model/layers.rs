use super::params::{ParamId, Session};
use super::partition::Route;
use crate::tensor::{Result, Var};

/// LayerNorm epsilon used everywhere in the model.
pub const LN_EPS: f64 = 1e-6;

/// One weight set of a layer.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LayerWeights {
    Norm {
        gamma: ParamId,
        beta: ParamId,
    },
    Scale {
        lambda: ParamId,
    },
    Linear {
        weight: ParamId,
        bias: ParamId,
    },
    Mlp {
        fc1_weight: ParamId,
        fc1_bias: ParamId,
        fc2_weight: ParamId,
        fc2_bias: ParamId,
    },
}

impl LayerWeights {
    pub fn params(&self) -> Vec<ParamId> {
        match *self {
            LayerWeights::Norm { gamma, beta } => vec![gamma, beta],
            LayerWeights::Scale { lambda } => vec![lambda],
            LayerWeights::Linear { weight, bias } => vec![weight, bias],
            LayerWeights::Mlp {
                fc1_weight,
                fc1_bias,
                fc2_weight,
                fc2_bias,
            } => vec![fc1_weight, fc1_bias, fc2_weight, fc2_bias],
        }
    }

    pub fn apply(&self, s: &mut Session, x: Var) -> Result<Var> {
        match *self {
            LayerWeights::Norm { gamma, beta } => {
                let (g, b) = (s.param(gamma), s.param(beta));
                layer_norm(s, x, g, b)
            }
            LayerWeights::Scale { lambda } => {
                let l = s.param(lambda);
                layer_scale(s, x, l)
            }
            LayerWeights::Linear { weight, bias } => linear(s, x, weight, bias),
            LayerWeights::Mlp {
                fc1_weight,
                fc1_bias,
                fc2_weight,
                fc2_bias,
            } => {
                let h = linear(s, x, fc1_weight, fc1_bias)?;
                let h = s.graph.gelu(h)?;
                linear(s, h, fc2_weight, fc2_bias)
            }
        }
    }
}

pub fn layer_norm(s: &mut Session, x: Var, gamma: Var, beta: Var) -> Result<Var> {
    s.graph.layer_norm(x, gamma, beta, LN_EPS)
}

pub fn layer_scale(s: &mut Session, x: Var, lambda: Var) -> Result<Var> {
    s.graph.mul_row(x, lambda)
}

fn linear(s: &mut Session, x: Var, weight: ParamId, bias: ParamId) -> Result<Var> {
    let (w, b) = (s.param(weight), s.param(bias));
    let y = s.graph.matmul(x, w)?;
    s.graph.add_row(y, b)
}

/// The CLS-side weights of a [`PathPair`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ClsWeights {
    Shared,
    Full(LayerWeights),
    /// `cls(x) = patch(x) + (x · A) · B`.
    LowRank {
        a: ParamId,
        b: ParamId,
    },
}

/// A layer as seen by the two token types.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PathPair {
    pub patch: LayerWeights,
    pub cls: ClsWeights,
}

impl PathPair {
    pub fn shared(patch: LayerWeights) -> Self {
        Self {
            patch,
            cls: ClsWeights::Shared,
        }
    }

    pub fn is_specialized(&self) -> bool {
        !matches!(self.cls, ClsWeights::Shared)
    }

    pub fn cls_params(&self) -> Vec<ParamId> {
        match self.cls {
            ClsWeights::Shared => vec![],
            ClsWeights::Full(w) => w.params(),
            ClsWeights::LowRank { a, b } => vec![a, b],
        }
    }
}

/// Applies a layer row-wise, sending CLS-route rows through the CLS weights
/// and the rest through the patch weights. Row order is preserved.
pub fn specialized_apply(s: &mut Session, pair: &PathPair, x: Var, route: &Route) -> Result<Var> {
    match pair.cls {
        ClsWeights::Shared => pair.patch.apply(s, x),
        ClsWeights::Full(cls) => {
            let xc = s.graph.select_rows(x, &route.cls_rows)?;
            let yc = cls.apply(s, xc)?;
            if route.patch_rows.is_empty() {
                return Ok(yc);
            }
            let xp = s.graph.select_rows(x, &route.patch_rows)?;
            let yp = pair.patch.apply(s, xp)?;
            s.graph
                .stitch_rows(&[(yc, &route.cls_rows), (yp, &route.patch_rows)])
        }
        ClsWeights::LowRank { a, b } => {
            let shared = pair.patch.apply(s, x)?;
            let xc = s.graph.select_rows(x, &route.cls_rows)?;
            let (av, bv) = (s.param(a), s.param(b));
            let down = s.graph.matmul(xc, av)?;
            let delta = s.graph.matmul(down, bv)?;
            let base_c = s.graph.select_rows(shared, &route.cls_rows)?;
            let yc = s.graph.add(base_c, delta)?;
            if route.patch_rows.is_empty() {
                return Ok(yc);
            }
            let yp = s.graph.select_rows(shared, &route.patch_rows)?;
            s.graph
                .stitch_rows(&[(yc, &route.cls_rows), (yp, &route.patch_rows)])
        }
    }
}
