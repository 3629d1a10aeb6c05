//! Dual-stream separator: target and interference streams refined by dual-path blocks
//! and exchanged through cross-attention over T_v, ending in a non-negative mask.

use cuenet_autograd::nn::Linear;
use cuenet_autograd::{ParamId, ParamStore, Session, Var};
use rand::Rng;

use crate::config::ModelConfig;
use crate::learner::DualPathBlock;

#[derive(Clone, Copy)]
pub struct DualStream<'g> {
    pub target: Var<'g>,
    pub interference: Var<'g>,
}

/// Scaled dot-product attention where target frames query interference frames,
/// independently for every (batch, K) row.
#[derive(Clone, Debug)]
pub struct CrossAttention {
    pub query: Linear,
    pub key: Linear,
    pub value: Linear,
    pub out_target: Linear,
    pub out_interference: Linear,
}

impl CrossAttention {
    pub fn new<R: Rng + ?Sized>(store: &mut ParamStore, name: &str, hidden: usize, rng: &mut R) -> Self {
        let mut lin = |tag: &str, bias: bool| Linear::new(store, &format!("{name}.{tag}"), hidden, hidden, bias, rng);
        Self {
            query: lin("query", false),
            key: lin("key", false),
            value: lin("value", false),
            out_target: lin("out_target", true),
            out_interference: lin("out_interference", true),
        }
    }

    /// Attention probabilities `[B*K, T, T]` (rows: target frames, columns: interference frames).
    pub fn weights<'g>(&self, s: &Session<'g>, streams: DualStream<'g>) -> Var<'g> {
        let (q, k) = (self.rows(s, &self.query, streams.target), self.rows(s, &self.key, streams.interference));
        let h = q.shape()[2];
        q.bmm(k, false, true).scale(1.0 / (h as f64).sqrt()).softmax(2)
    }

    pub fn forward<'g>(&self, s: &Session<'g>, streams: DualStream<'g>) -> DualStream<'g> {
        let sh = streams.target.shape();
        let (b, h, k, t) = (sh[0], sh[1], sh[2], sh[3]);
        let attn = self.weights(s, streams);
        let v = self.rows(s, &self.value, streams.interference);
        let summary = attn.bmm(v, false, false).reshape(&[b, k, t, h]).permute(&[0, 3, 1, 2]);
        DualStream {
            target: streams.target.sub(self.out_target.forward_channels(s, summary)),
            interference: streams
                .interference
                .add(self.out_interference.forward_channels(s, summary)),
        }
    }

    /// `[B, H, K, T]` to projected rows `[B*K, T, H]`.
    fn rows<'g>(&self, s: &Session<'g>, proj: &Linear, x: Var<'g>) -> Var<'g> {
        let sh = x.shape();
        let (b, h, k, t) = (sh[0], sh[1], sh[2], sh[3]);
        proj.forward_last(s, x.permute(&[0, 2, 3, 1]).reshape(&[b * k, t, h]))
    }

    pub fn output_params(&self) -> Vec<ParamId> {
        [self.out_target.params(), self.out_interference.params()].concat()
    }
}

#[derive(Clone, Debug)]
pub struct BackendBlock {
    pub target: DualPathBlock,
    pub interference: DualPathBlock,
    pub cross: CrossAttention,
}

impl BackendBlock {
    pub fn new<R: Rng + ?Sized>(store: &mut ParamStore, name: &str, cfg: &ModelConfig, rng: &mut R) -> Self {
        Self {
            target: DualPathBlock::new(store, &format!("{name}.target"), cfg.hidden, cfg.lstm_hidden, rng),
            interference: DualPathBlock::new(store, &format!("{name}.interference"), cfg.hidden, cfg.lstm_hidden, rng),
            cross: CrossAttention::new(store, &format!("{name}.cross"), cfg.hidden, rng),
        }
    }

    pub fn forward<'g>(&self, s: &Session<'g>, streams: DualStream<'g>) -> DualStream<'g> {
        let refined = DualStream {
            target: self.target.forward(s, streams.target),
            interference: self.interference.forward(s, streams.interference),
        };
        self.cross.forward(s, refined)
    }
}

#[derive(Clone, Debug)]
pub struct Backend {
    pub interference_init: Linear,
    pub blocks: Vec<BackendBlock>,
    pub mask_proj: Linear,
}

impl Backend {
    pub fn new<R: Rng + ?Sized>(store: &mut ParamStore, name: &str, cfg: &ModelConfig, rng: &mut R) -> Self {
        Self {
            interference_init: Linear::new(store, &format!("{name}.interference_init"), cfg.hidden, cfg.hidden, true, rng),
            blocks: (0..cfg.backend_blocks)
                .map(|i| BackendBlock::new(store, &format!("{name}.block{i}"), cfg, rng))
                .collect(),
            mask_proj: Linear::new(store, &format!("{name}.mask"), cfg.hidden, cfg.enc_channels, true, rng),
        }
    }

    pub fn initial_streams<'g>(&self, s: &Session<'g>, fused: Var<'g>) -> DualStream<'g> {
        DualStream {
            target: fused,
            interference: self.interference_init.forward_channels(s, fused),
        }
    }

    /// `R_e [B, H, K, T]` to the mask `[B, N, K, T]`.
    pub fn estimate_mask<'g>(&self, s: &Session<'g>, fused: Var<'g>) -> Var<'g> {
        let mut streams = self.initial_streams(s, fused);
        for block in &self.blocks {
            streams = block.forward(s, streams);
        }
        self.mask_proj.forward_channels(s, streams.target).relu()
    }
}
