//! Per-cue reliability, cue-enhanced speech features and reliability-weighted fusion.

use cuenet_autograd::nn::{Conv1d, Linear};
use cuenet_autograd::ops::{concat, stack};
use cuenet_autograd::{ParamId, ParamStore, Session, Tensor, Var};
use rand::Rng;

use crate::config::{CueToggles, FusionMode, ModelConfig};
use crate::learner::{broadcast_k, conv_time, mean_k};

/// Logit offset that removes a disabled branch from the softmax.
pub const DISABLED_LOGIT: f64 = -1e30;

/// Speech context `R_a = W_1 F_a + W_2 F_a_h` at width H.
#[derive(Clone, Debug)]
pub struct SpeechContext {
    pub from_encoder: Linear,
    pub from_learner: Linear,
}

impl SpeechContext {
    pub fn new<R: Rng + ?Sized>(store: &mut ParamStore, name: &str, cfg: &ModelConfig, rng: &mut R) -> Self {
        Self {
            from_encoder: Linear::new(store, &format!("{name}.from_encoder"), cfg.enc_channels, cfg.hidden, true, rng),
            from_learner: Linear::new(store, &format!("{name}.from_learner"), cfg.hidden, cfg.hidden, false, rng),
        }
    }

    /// `F_a [B, N, K, T]`, `F_a_h [B, H, K, T]` to `[B, H, K, T]`.
    pub fn forward<'g>(&self, s: &Session<'g>, encoded: Var<'g>, learned: Var<'g>) -> Var<'g> {
        self.from_encoder
            .forward_channels(s, encoded)
            .add(self.from_learner.forward_channels(s, learned))
    }
}

/// Reliability (H, Q) and enhancement (G, P) convolutions for one cue.
#[derive(Clone, Debug)]
pub struct CueBranch {
    pub h: Conv1d,
    pub q: Conv1d,
    pub g: Conv1d,
    pub p: Conv1d,
}

impl CueBranch {
    pub fn new<R: Rng + ?Sized>(store: &mut ParamStore, name: &str, channels: usize, kernel: usize, rng: &mut R) -> Self {
        let mut conv = |tag: &str| {
            Conv1d::new(
                store,
                &format!("{name}.{tag}"),
                channels,
                channels,
                kernel,
                Conv1d::same(kernel, 1),
                true,
                rng,
            )
        };
        Self {
            h: conv("h"),
            q: conv("q"),
            g: conv("g"),
            p: conv("p"),
        }
    }

    /// `H(cue) * sigmoid(Q(mean_K R_a))`, `[B, H, T]`.
    pub fn reliability<'g>(&self, s: &Session<'g>, cue: Var<'g>, context: Var<'g>) -> Var<'g> {
        let gate = conv_time(&self.q, s, mean_k(context)).sigmoid();
        conv_time(&self.h, s, cue).mul(gate)
    }

    /// `R_a + G(cue broadcast over K * sigmoid(P(R_a)))`, `[B, H, K, T]`.
    pub fn enhance<'g>(&self, s: &Session<'g>, cue: Var<'g>, context: Var<'g>) -> Var<'g> {
        let k = context.shape()[2];
        let gate = conv_time(&self.p, s, context).sigmoid();
        context.add(conv_time(&self.g, s, broadcast_k(cue, k).mul(gate)))
    }

    pub fn output_params(&self) -> Vec<ParamId> {
        self.g.params()
    }
}

/// Temporal (per j, h) then circular cross-cue (per h, t) convolution, softmax over cues.
#[derive(Clone, Debug)]
pub struct AttentionFusion {
    /// `[3H, kt]` depthwise taps along T_v.
    pub time_weight: ParamId,
    pub time_bias: ParamId,
    /// `[H, kj]` taps along the cue axis.
    pub cue_weight: ParamId,
    pub hidden: usize,
}

impl AttentionFusion {
    pub fn new<R: Rng + ?Sized>(store: &mut ParamStore, name: &str, cfg: &ModelConfig, rng: &mut R) -> Self {
        let h = cfg.hidden;
        let kt = cfg.fusion_time_kernel;
        let bound = 1.0 / (kt as f64).sqrt();
        Self {
            time_weight: store.add(format!("{name}.time.weight"), Tensor::uniform(&[3 * h, kt], bound, rng)),
            time_bias: store.add(format!("{name}.time.bias"), Tensor::uniform(&[3 * h], bound, rng)),
            cue_weight: store.add(
                format!("{name}.cue.weight"),
                Tensor::uniform(&[h, cfg.fusion_cue_kernel], 1.0 / (cfg.fusion_cue_kernel as f64).sqrt(), rng),
            ),
            hidden: h,
        }
    }

    /// Stacked reliabilities `[B, 3, H, T]` to pre-softmax logits of the same shape.
    pub fn logits<'g>(&self, s: &Session<'g>, rels: Var<'g>) -> Var<'g> {
        let sh = rels.shape();
        let (b, h, t) = (sh[0], sh[2], sh[3]);
        let x = rels
            .reshape(&[b, 3 * h, t])
            .depthwise_conv1d(s.param(self.time_weight), Some(s.param(self.time_bias)))
            .reshape(&[b, 3, h, t]);
        circular_cue_conv(x, s.param(self.cue_weight))
    }

    /// Attention weights `psi [B, 3, H, T]`; branches flagged off receive zero weight.
    pub fn weights<'g>(&self, s: &Session<'g>, rels: Var<'g>, enabled: [bool; 3]) -> Var<'g> {
        let logits = self.logits(s, rels);
        if enabled.iter().all(|&e| e) || enabled.iter().all(|&e| !e) {
            return logits.softmax(1);
        }
        let sh = logits.shape();
        let offset = Tensor::from_fn(&sh, |i| {
            let j = (i / (sh[2] * sh[3])) % 3;
            if enabled[j] {
                0.0
            } else {
                DISABLED_LOGIT
            }
        });
        logits.add(s.constant(offset)).softmax(1)
    }
}

/// `y[j] = sum_d w[:, d] * x[(j + d - c) mod 3]` over the cue axis of `[B, 3, H, T]`.
pub fn circular_cue_conv<'g>(x: Var<'g>, w: Var<'g>) -> Var<'g> {
    let sh = x.shape();
    let (b, j_len, h, t) = (sh[0], sh[1], sh[2], sh[3]);
    let kj = w.shape()[1];
    let center = kj / 2;
    let taps: Vec<Var<'g>> = (0..kj)
        .map(|d| w.narrow(1, d, 1).reshape(&[1, 1, h, 1]).broadcast_to(&[b, 1, h, t]))
        .collect();
    let rows: Vec<Var<'g>> = (0..j_len)
        .map(|j| {
            let mut acc: Option<Var<'g>> = None;
            for (d, tap) in taps.iter().enumerate() {
                let src = (j + j_len + d - center) % j_len;
                let term = x.narrow(1, src, 1).mul(*tap);
                acc = Some(match acc {
                    Some(a) => a.add(term),
                    None => term,
                });
            }
            acc.expect("cue kernel has at least one tap")
        })
        .collect();
    concat(&rows, 1)
}

/// `R_e[h, k, t] = sum_j psi[j, h, t] * enhanced[j][h, k, t]`.
pub fn fuse_weighted<'g>(psi: Var<'g>, enhanced: &[Var<'g>]) -> Var<'g> {
    let es = enhanced[0].shape();
    let (b, h, k, t) = (es[0], es[1], es[2], es[3]);
    let j = enhanced.len();
    let stacked = stack(enhanced, 1);
    let w = psi.reshape(&[b, j, h, 1, t]).broadcast_to(&[b, j, h, k, t]);
    stacked.mul(w).sum_axis(1).reshape(&[b, h, k, t])
}

pub struct FusionOutput<'g> {
    /// `[B, H, K, T]`
    pub fused: Var<'g>,
    /// `[B, 3, H, T]`, absent under concatenation fusion.
    pub psi: Option<Var<'g>>,
    /// `[B, 3, H, T]`
    pub reliabilities: Var<'g>,
}

/// The three cue branches plus the fusion stage.
#[derive(Clone, Debug)]
pub struct CueInteraction {
    pub context: SpeechContext,
    /// Speaker, acoustic, semantic; `None` for disabled cues.
    pub branches: [Option<CueBranch>; 3],
    pub attention: Option<AttentionFusion>,
    pub concat_proj: Option<Linear>,
    pub enabled: [bool; 3],
}

impl CueInteraction {
    pub fn new<R: Rng + ?Sized>(store: &mut ParamStore, name: &str, cfg: &ModelConfig, rng: &mut R) -> Self {
        let context = SpeechContext::new(store, &format!("{name}.context"), cfg, rng);
        let enabled = cfg.cues.as_array();
        let tags = ["speaker", "acoustic", "semantic"];
        let branches = std::array::from_fn(|j| {
            enabled[j].then(|| CueBranch::new(store, &format!("{name}.{}", tags[j]), cfg.hidden, cfg.temporal_kernel, rng))
        });
        let (attention, concat_proj) = match cfg.fusion {
            FusionMode::Interaction => (Some(AttentionFusion::new(store, &format!("{name}.fusion"), cfg, rng)), None),
            FusionMode::Concatenation => (
                None,
                Some(Linear::new(store, &format!("{name}.concat"), 3 * cfg.hidden, cfg.hidden, true, rng)),
            ),
        };
        Self {
            context,
            branches,
            attention,
            concat_proj,
            enabled,
        }
    }

    pub fn toggles(&self) -> CueToggles {
        CueToggles {
            speaker: self.enabled[0],
            acoustic: self.enabled[1],
            semantic: self.enabled[2],
        }
    }

    /// `cues` are speaker `[B, H]`, acoustic and semantic `[B, H, T]`.
    pub fn forward<'g>(&self, s: &Session<'g>, context: Var<'g>, cues: [Var<'g>; 3]) -> FusionOutput<'g> {
        let cs = context.shape();
        let (b, h, t) = (cs[0], cs[1], cs[3]);
        let speaker = cues[0].reshape(&[b, h, 1]).broadcast_to(&[b, h, t]);
        let aligned = [speaker, cues[1], cues[2]];
        let mut rels = Vec::with_capacity(3);
        let mut enhanced = Vec::with_capacity(3);
        for (branch, cue) in self.branches.iter().zip(aligned) {
            match branch {
                Some(br) => {
                    rels.push(br.reliability(s, cue, context));
                    enhanced.push(br.enhance(s, cue, context));
                }
                None => {
                    rels.push(s.constant(Tensor::zeros(&[b, h, t])));
                    enhanced.push(context);
                }
            }
        }
        let reliabilities = stack(&rels, 1);
        match (&self.attention, &self.concat_proj) {
            (Some(att), _) => {
                let psi = att.weights(s, reliabilities, self.enabled);
                FusionOutput {
                    fused: fuse_weighted(psi, &enhanced),
                    psi: Some(psi),
                    reliabilities,
                }
            }
            (None, Some(proj)) => FusionOutput {
                fused: proj.forward_channels(s, concat(&enhanced, 1)),
                psi: None,
                reliabilities,
            },
            (None, None) => unreachable!("fusion stage always constructed"),
        }
    }
}
