//! Dual-path audio blocks, the dilated visual block, audio-visual interaction and the
//! two learner levels that emit the speaker, acoustic and semantic cues.

use cuenet_autograd::nn::{BiLstm, Conv1d, Linear, Norm, PRelu};
use cuenet_autograd::{ParamId, ParamStore, Session, Tensor, Var};
use rand::Rng;

use crate::config::ModelConfig;
use crate::error::{CueError, Result};

/// Sets every tensor in `ids` to zero.
pub fn zero_params(store: &mut ParamStore, ids: &[ParamId]) {
    for &id in ids {
        store.get_mut(id).data_mut().iter_mut().for_each(|v| *v = 0.0);
    }
}

/// Applies a `[B, C, T]` convolution along the last axis of either `[B, C, T]` or
/// `[B, C, K, T]` (each K row convolved independently).
pub fn conv_time<'g>(conv: &Conv1d, s: &Session<'g>, x: Var<'g>) -> Var<'g> {
    let shape = x.shape();
    match shape.len() {
        3 => conv.forward(s, x),
        4 => {
            let (b, c, k, t) = (shape[0], shape[1], shape[2], shape[3]);
            let folded = x.permute(&[0, 2, 1, 3]).reshape(&[b * k, c, t]);
            let y = conv.forward(s, folded);
            let cout = y.shape()[1];
            y.reshape(&[b, k, cout, t]).permute(&[0, 2, 1, 3])
        }
        _ => panic!("conv_time expects rank 3 or 4, got {shape:?}"),
    }
}

/// `[B, C, T]` to `[B, C, K, T]` by repetition over K.
pub fn broadcast_k<'g>(x: Var<'g>, k: usize) -> Var<'g> {
    let s = x.shape();
    x.reshape(&[s[0], s[1], 1, s[2]]).broadcast_to(&[s[0], s[1], k, s[2]])
}

/// `[B, C, K, T]` to `[B, C, T]` by averaging over K.
pub fn mean_k<'g>(x: Var<'g>) -> Var<'g> {
    let s = x.shape();
    x.mean_axis(2).reshape(&[s[0], s[1], s[3]])
}

/// Intra-chunk (over K) then inter-chunk (over T_v) bidirectional recurrence, each
/// followed by a projection, residual add and one-group normalization.
#[derive(Clone, Debug)]
pub struct DualPathBlock {
    pub intra_rnn: BiLstm,
    pub intra_proj: Linear,
    pub intra_norm: Norm,
    pub inter_rnn: BiLstm,
    pub inter_proj: Linear,
    pub inter_norm: Norm,
}

impl DualPathBlock {
    pub fn new<R: Rng + ?Sized>(store: &mut ParamStore, name: &str, channels: usize, hidden: usize, rng: &mut R) -> Self {
        let intra_rnn = BiLstm::new(store, &format!("{name}.intra_rnn"), channels, hidden, rng);
        let intra_proj = Linear::new(store, &format!("{name}.intra_proj"), 2 * hidden, channels, true, rng);
        let intra_norm = Norm::new(store, &format!("{name}.intra_norm"), channels);
        let inter_rnn = BiLstm::new(store, &format!("{name}.inter_rnn"), channels, hidden, rng);
        let inter_proj = Linear::new(store, &format!("{name}.inter_proj"), 2 * hidden, channels, true, rng);
        let inter_norm = Norm::new(store, &format!("{name}.inter_norm"), channels);
        Self {
            intra_rnn,
            intra_proj,
            intra_norm,
            inter_rnn,
            inter_proj,
            inter_norm,
        }
    }

    /// `[B, C, K, T]` in and out.
    pub fn forward<'g>(&self, s: &Session<'g>, x: Var<'g>) -> Var<'g> {
        let sh = x.shape();
        let (b, c, k, t) = (sh[0], sh[1], sh[2], sh[3]);

        let seq = x.permute(&[0, 3, 2, 1]).reshape(&[b * t, k, c]);
        let y = self.intra_proj.forward_last(s, self.intra_rnn.forward(s, seq));
        let y = y.reshape(&[b, t, k, c]).permute(&[0, 3, 2, 1]);
        let x = self.intra_norm.global(s, x.add(y));

        let seq = x.permute(&[0, 2, 3, 1]).reshape(&[b * k, t, c]);
        let y = self.inter_proj.forward_last(s, self.inter_rnn.forward(s, seq));
        let y = y.reshape(&[b, k, t, c]).permute(&[0, 3, 1, 2]);
        self.inter_norm.global(s, x.add(y))
    }

    pub fn projection_params(&self) -> Vec<ParamId> {
        [self.intra_proj.params(), self.inter_proj.params()].concat()
    }
}

/// conv, PReLU, channel layer norm, dilation-2 conv, residual add; `[B, C, T]`.
#[derive(Clone, Debug)]
pub struct VisualTemporalBlock {
    pub conv1: Conv1d,
    pub act: PRelu,
    pub norm: Norm,
    pub conv2: Conv1d,
    pub kernel: usize,
}

impl VisualTemporalBlock {
    pub fn new<R: Rng + ?Sized>(store: &mut ParamStore, name: &str, channels: usize, kernel: usize, rng: &mut R) -> Self {
        Self {
            conv1: Conv1d::new(store, &format!("{name}.conv1"), channels, channels, kernel, Conv1d::same(kernel, 1), true, rng),
            act: PRelu::new(store, &format!("{name}.prelu")),
            norm: Norm::new(store, &format!("{name}.norm"), channels),
            conv2: Conv1d::new(store, &format!("{name}.conv2"), channels, channels, kernel, Conv1d::same(kernel, 2), true, rng),
            kernel,
        }
    }

    pub fn forward<'g>(&self, s: &Session<'g>, x: Var<'g>) -> Var<'g> {
        let y = self.norm.layer(s, self.act.forward(s, self.conv1.forward(s, x)));
        x.add(self.conv2.forward(s, y))
    }

    /// Frames on either side of `t` that can influence output `t`.
    pub fn receptive_radius(&self) -> usize {
        (self.kernel - 1) / 2 + 2 * ((self.kernel - 1) / 2)
    }
}

/// Temporal convolution followed by one-group normalization; the G and P networks.
#[derive(Clone, Debug)]
pub struct GatedConv {
    pub conv: Conv1d,
    pub norm: Norm,
}

impl GatedConv {
    pub fn new<R: Rng + ?Sized>(store: &mut ParamStore, name: &str, channels: usize, kernel: usize, rng: &mut R) -> Self {
        Self {
            conv: Conv1d::new(store, &format!("{name}.conv"), channels, channels, kernel, Conv1d::same(kernel, 1), true, rng),
            norm: Norm::new(store, &format!("{name}.norm"), channels),
        }
    }

    pub fn forward<'g>(&self, s: &Session<'g>, x: Var<'g>) -> Var<'g> {
        self.norm.global(s, conv_time(&self.conv, s, x))
    }

    pub fn params(&self) -> Vec<ParamId> {
        [self.conv.params(), self.norm.params()].concat()
    }
}

/// Cross-modal gated residual updates between the chunked audio and visual streams.
#[derive(Clone, Debug)]
pub struct Interaction {
    pub g_a: GatedConv,
    pub p_a: GatedConv,
    pub g_c: GatedConv,
    pub p_c: GatedConv,
}

impl Interaction {
    pub fn new<R: Rng + ?Sized>(store: &mut ParamStore, name: &str, channels: usize, kernel: usize, rng: &mut R) -> Self {
        Self {
            g_a: GatedConv::new(store, &format!("{name}.g_a"), channels, kernel, rng),
            p_a: GatedConv::new(store, &format!("{name}.p_a"), channels, kernel, rng),
            g_c: GatedConv::new(store, &format!("{name}.g_c"), channels, kernel, rng),
            p_c: GatedConv::new(store, &format!("{name}.p_c"), channels, kernel, rng),
        }
    }

    /// `I_a [B, d, K, T]`, `I_c [B, d, T]` to the updated pair.
    pub fn forward<'g>(&self, s: &Session<'g>, audio: Var<'g>, visual: Var<'g>) -> Result<(Var<'g>, Var<'g>)> {
        let (sa, sc) = (audio.shape(), visual.shape());
        if sa.len() != 4 || sc.len() != 3 || sa[0] != sc[0] || sa[1] != sc[1] {
            return Err(CueError::ShapeMismatch(format!("interact: audio {sa:?}, visual {sc:?}")));
        }
        if sa[3] != sc[2] {
            return Err(CueError::LengthMismatch(sa[3], sc[2]));
        }
        let k = sa[2];
        let gate_a = self.p_a.forward(s, audio).sigmoid();
        let audio_out = audio.add(self.g_a.forward(s, broadcast_k(visual, k).mul(gate_a)));
        let gate_c = self.p_c.forward(s, visual).sigmoid();
        let visual_out = visual.add(self.g_c.forward(s, mean_k(audio).mul(gate_c)));
        Ok((audio_out, visual_out))
    }

    /// Output (G) network parameters; zeroing them makes the update an identity.
    pub fn output_params(&self) -> Vec<ParamId> {
        [self.g_a.params(), self.g_c.params()].concat()
    }
}

/// One learner level: audio dual-path block, visual temporal block, then interaction.
#[derive(Clone, Debug)]
pub struct LearnerLevel {
    pub audio: DualPathBlock,
    pub visual: VisualTemporalBlock,
    pub interaction: Interaction,
}

impl LearnerLevel {
    pub fn new<R: Rng + ?Sized>(store: &mut ParamStore, name: &str, cfg: &ModelConfig, rng: &mut R) -> Self {
        Self {
            audio: DualPathBlock::new(store, &format!("{name}.audio"), cfg.hidden, cfg.lstm_hidden, rng),
            visual: VisualTemporalBlock::new(store, &format!("{name}.visual"), cfg.hidden, cfg.temporal_kernel, rng),
            interaction: Interaction::new(store, &format!("{name}.interact"), cfg.hidden, cfg.temporal_kernel, rng),
        }
    }

    pub fn forward<'g>(&self, s: &Session<'g>, audio: Var<'g>, visual: Var<'g>) -> Result<(Var<'g>, Var<'g>)> {
        let a = self.audio.forward(s, audio);
        let c = self.visual.forward(s, visual);
        self.interaction.forward(s, a, c)
    }
}

#[derive(Clone, Copy)]
pub struct LowLevelOutput<'g> {
    /// `[B, H, K, T]`
    pub audio: Var<'g>,
    /// `[B, H, T]`
    pub visual: Var<'g>,
    /// `[B, H]`
    pub speaker_cue: Var<'g>,
    /// `[B, speakers]`
    pub speaker_logits: Var<'g>,
    /// `[B, H, T]`
    pub acoustic_cue: Var<'g>,
    /// `[B, classes, T]`
    pub acoustic_logits: Var<'g>,
}

/// Projects `F_a` and `F_v` to the learner width and extracts speaker and acoustic cues.
#[derive(Clone, Debug)]
pub struct LowLevelLearner {
    pub audio_in: Linear,
    pub visual_in: Linear,
    pub level: LearnerLevel,
    pub acoustic_proj: Linear,
    pub speaker_proj: Linear,
    pub speaker_head: Linear,
    pub acoustic_head: Linear,
    pub visual_skip: Linear,
}

impl LowLevelLearner {
    pub fn new<R: Rng + ?Sized>(store: &mut ParamStore, name: &str, cfg: &ModelConfig, rng: &mut R) -> Self {
        let (n, h) = (cfg.enc_channels, cfg.hidden);
        Self {
            audio_in: Linear::new(store, &format!("{name}.audio_in"), n, h, true, rng),
            visual_in: Linear::new(store, &format!("{name}.visual_in"), n, h, true, rng),
            level: LearnerLevel::new(store, name, cfg, rng),
            acoustic_proj: Linear::new(store, &format!("{name}.acoustic_proj"), h, h, true, rng),
            speaker_proj: Linear::new(store, &format!("{name}.speaker_proj"), h, h, true, rng),
            speaker_head: Linear::new(store, &format!("{name}.speaker_head"), h, cfg.num_speakers, true, rng),
            acoustic_head: Linear::new(store, &format!("{name}.acoustic_head"), h, cfg.acoustic_classes, true, rng),
            visual_skip: Linear::new(store, &format!("{name}.visual_skip"), n, h, true, rng),
        }
    }

    /// `F_a [B, N, K, T]`, `F_v [B, N, T]`.
    pub fn forward<'g>(&self, s: &Session<'g>, audio: Var<'g>, visual: Var<'g>) -> Result<LowLevelOutput<'g>> {
        let ia = self.audio_in.forward_channels(s, audio);
        let ic = self.visual_in.forward_channels(s, visual);
        let (ia, ic) = self.level.forward(s, ia, ic)?;
        let acoustic_cue = self.acoustic_proj.forward_channels(s, ic);
        let pooled = ic.mean_axis(2);
        let pooled = pooled.reshape(&[pooled.shape()[0], pooled.shape()[1]]);
        let speaker_cue = self.speaker_proj.forward_last(s, pooled);
        Ok(LowLevelOutput {
            audio: ia,
            visual: ic.add(self.visual_skip.forward_channels(s, visual)),
            speaker_cue,
            speaker_logits: self.speaker_head.forward_last(s, speaker_cue),
            acoustic_cue,
            acoustic_logits: self.acoustic_head.forward_channels(s, acoustic_cue),
        })
    }
}

#[derive(Clone, Copy)]
pub struct HighLevelOutput<'g> {
    /// `[B, H, K, T]`
    pub audio: Var<'g>,
    /// `[B, H, T]`; also the high-level visual stream.
    pub semantic_cue: Var<'g>,
    /// `[B, 48, T]`
    pub semantic_logits: Var<'g>,
}

/// Same structure as the low level; its visual output is the semantic cue.
#[derive(Clone, Debug)]
pub struct HighLevelLearner {
    pub level: LearnerLevel,
    pub visual_skip: Linear,
    pub semantic_head: Linear,
}

impl HighLevelLearner {
    pub fn new<R: Rng + ?Sized>(store: &mut ParamStore, name: &str, cfg: &ModelConfig, rng: &mut R) -> Self {
        let h = cfg.hidden;
        Self {
            level: LearnerLevel::new(store, name, cfg, rng),
            visual_skip: Linear::new(store, &format!("{name}.visual_skip"), h, h, true, rng),
            semantic_head: Linear::new(store, &format!("{name}.semantic_head"), h, cfg.semantic_classes, true, rng),
        }
    }

    pub fn forward<'g>(&self, s: &Session<'g>, audio: Var<'g>, visual: Var<'g>) -> Result<HighLevelOutput<'g>> {
        let (ia, ic) = self.level.forward(s, audio, visual)?;
        let semantic_cue = ic.add(self.visual_skip.forward_channels(s, visual));
        Ok(HighLevelOutput {
            audio: ia,
            semantic_cue,
            semantic_logits: self.semantic_head.forward_channels(s, semantic_cue),
        })
    }
}

/// Evaluates `f` in a fresh non-trainable session and returns the value.
pub fn eval_with<F>(store: &ParamStore, f: F) -> Tensor
where
    F: for<'g> FnOnce(&Session<'g>) -> Var<'g>,
{
    let graph = cuenet_autograd::Graph::new();
    let s = Session::new(&graph, store, false);
    let out = f(&s);
    let v = out.value();
    (*v).clone()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn dual_path_of_zeros_with_zero_projections_is_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut store = ParamStore::new();
        let block = DualPathBlock::new(&mut store, "dp", 4, 3, &mut rng);
        zero_params(&mut store, &block.projection_params());
        let out = eval_with(&store, |s| block.forward(s, s.constant(Tensor::zeros(&[1, 4, 6, 5]))));
        assert_eq!(out.shape(), &[1, 4, 6, 5]);
        assert!(out.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn visual_block_with_zero_second_conv_is_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut store = ParamStore::new();
        let block = VisualTemporalBlock::new(&mut store, "v", 4, 3, &mut rng);
        zero_params(&mut store, &block.conv2.params());
        let x = Tensor::randn(&[2, 4, 7], 1.0, &mut rng);
        let out = eval_with(&store, |s| block.forward(s, s.constant(x.clone())));
        assert_eq!(out, x);
    }

    #[test]
    fn interaction_rejects_misaligned_time() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut store = ParamStore::new();
        let inter = Interaction::new(&mut store, "i", 3, 3, &mut rng);
        let g = cuenet_autograd::Graph::new();
        let s = Session::new(&g, &store, false);
        let r = inter.forward(&s, s.constant(Tensor::zeros(&[1, 3, 4, 5])), s.constant(Tensor::zeros(&[1, 3, 6])));
        assert!(matches!(r, Err(CueError::LengthMismatch(5, 6))));
    }
}
