use std::fmt;

use crate::model::TokenPartition;
use crate::tensor::Tensor;

/// Named capture points inside a transformer block, in execution order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum ProbePoint {
    PreAttnLnIn,
    PreAttnLnOut,
    AttnOut,
    PostAttnLsIn,
    PostAttnLsOut,
    PreMlpLnIn,
    PreMlpLnOut,
    MlpOut,
    PostMlpLsIn,
    PostMlpLsOut,
    BlockOut,
}

impl ProbePoint {
    pub const ALL: [ProbePoint; 11] = [
        ProbePoint::PreAttnLnIn,
        ProbePoint::PreAttnLnOut,
        ProbePoint::AttnOut,
        ProbePoint::PostAttnLsIn,
        ProbePoint::PostAttnLsOut,
        ProbePoint::PreMlpLnIn,
        ProbePoint::PreMlpLnOut,
        ProbePoint::MlpOut,
        ProbePoint::PostMlpLsIn,
        ProbePoint::PostMlpLsOut,
        ProbePoint::BlockOut,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ProbePoint::PreAttnLnIn => "pre_attn_ln_in",
            ProbePoint::PreAttnLnOut => "pre_attn_ln_out",
            ProbePoint::AttnOut => "attn_out",
            ProbePoint::PostAttnLsIn => "post_attn_ls_in",
            ProbePoint::PostAttnLsOut => "post_attn_ls_out",
            ProbePoint::PreMlpLnIn => "pre_mlp_ln_in",
            ProbePoint::PreMlpLnOut => "pre_mlp_ln_out",
            ProbePoint::MlpOut => "mlp_out",
            ProbePoint::PostMlpLsIn => "post_mlp_ls_in",
            ProbePoint::PostMlpLsOut => "post_mlp_ls_out",
            ProbePoint::BlockOut => "block_out",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|p| p.name() == name)
    }
}

impl fmt::Display for ProbePoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProbeRecord {
    pub block: usize,
    pub point: ProbePoint,
    /// Detached `N×d` snapshot.
    pub activation: Tensor,
}

/// Activations captured during one forward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbeTrace {
    pub records: Vec<ProbeRecord>,
    pub partition: TokenPartition,
}

impl ProbeTrace {
    pub fn new(partition: TokenPartition) -> Self {
        Self {
            records: Vec::new(),
            partition,
        }
    }

    pub fn push(&mut self, block: usize, point: ProbePoint, activation: &Tensor) {
        self.records.push(ProbeRecord {
            block,
            point,
            activation: activation.detached(),
        });
    }

    pub fn get(&self, block: usize, point: ProbePoint) -> Option<&Tensor> {
        self.records
            .iter()
            .find(|r| r.block == block && r.point == point)
            .map(|r| &r.activation)
    }

    pub fn num_blocks(&self) -> usize {
        self.records.iter().map(|r| r.block + 1).max().unwrap_or(0)
    }
}
