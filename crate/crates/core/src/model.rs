//! The full extraction network and its checkpoint format.

use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use cuenet_autograd::{Graph, ParamStore, Session, Tensor, Var};

use crate::backend::Backend;
use crate::config::ModelConfig;
use crate::cues::CueInteraction;
use crate::error::{CueError, Result};
use crate::frontends::{apply_mask, chunk, dechunk, SpeechDecoder, SpeechEncoder, VisualEncoder};
use crate::learner::{HighLevelLearner, LowLevelLearner};
use crate::synth::{MixtureSample, FRAME_PIXELS, FRAME_SIDE};

pub const CHECKPOINT_FORMAT: &str = "cuenet-checkpoint-1";

/// A batch of equal-length clips.
#[derive(Clone, Debug, PartialEq)]
pub struct Batch {
    /// `[B, L]`
    pub mixture: Tensor,
    /// `[B, L]`
    pub target: Tensor,
    /// `[B, T_v, 88, 88]`
    pub frames: Tensor,
    /// `[B, T_v]` with 1 for kept and 0 for masked visual feature columns.
    pub feature_keep: Option<Tensor>,
    pub speaker_ids: Vec<usize>,
}

impl Batch {
    pub fn from_samples(samples: &[&MixtureSample]) -> Result<Self> {
        let first = samples
            .first()
            .ok_or_else(|| CueError::InvalidArgument("empty batch".into()))?;
        let (len, tv) = (first.mixture.len(), first.video.num_frames);
        let mut mixture = Vec::with_capacity(samples.len() * len);
        let mut target = Vec::with_capacity(samples.len() * len);
        let mut frames = Vec::with_capacity(samples.len() * tv * FRAME_PIXELS);
        for s in samples {
            if s.mixture.len() != len || s.video.num_frames != tv {
                return Err(CueError::LengthMismatch(s.mixture.len(), len));
            }
            mixture.extend_from_slice(&s.mixture.samples);
            target.extend_from_slice(&s.target.samples);
            frames.extend_from_slice(&s.video.pixels);
        }
        let b = samples.len();
        Ok(Self {
            mixture: Tensor::new(vec![b, len], mixture),
            target: Tensor::new(vec![b, len], target),
            frames: Tensor::new(vec![b, tv, FRAME_SIDE, FRAME_SIDE], frames),
            feature_keep: None,
            speaker_ids: samples.iter().map(|s| s.speaker_id).collect(),
        })
    }

    pub fn size(&self) -> usize {
        self.mixture.dim(0)
    }
}

/// Everything the forward pass exposes, all batch-first.
pub struct ModelOutput<'g> {
    /// `[B, L]`
    pub estimate: Var<'g>,
    /// `[B, N, K, T_v]`
    pub mask: Var<'g>,
    /// `[B, N, K, T_v]`
    pub encoded: Var<'g>,
    /// `[B, N, T_v]`
    pub visual: Var<'g>,
    /// `[B, 3, H, T_v]`
    pub psi: Option<Var<'g>>,
    /// `[B, 3, H, T_v]`
    pub reliabilities: Var<'g>,
    pub speaker_cue: Var<'g>,
    pub acoustic_cue: Var<'g>,
    pub semantic_cue: Var<'g>,
    /// `[B, speakers]`
    pub speaker_logits: Var<'g>,
    /// `[B, acoustic classes, T_v]`
    pub acoustic_logits: Var<'g>,
    /// `[B, 48, T_v]`
    pub semantic_logits: Var<'g>,
}

#[derive(Clone, Debug)]
pub struct CueNet {
    pub config: ModelConfig,
    pub store: ParamStore,
    pub encoder: SpeechEncoder,
    pub decoder: SpeechDecoder,
    pub visual: VisualEncoder,
    pub low: LowLevelLearner,
    pub high: HighLevelLearner,
    pub cues: CueInteraction,
    pub backend: Backend,
}

#[derive(Serialize, Deserialize)]
struct Checkpoint {
    format: String,
    config: ModelConfig,
    params: ParamStore,
}

impl CueNet {
    pub fn new(config: ModelConfig) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.init_seed);
        let mut store = ParamStore::new();
        let encoder = SpeechEncoder::new(&mut store, "encoder", &config, &mut rng);
        let decoder = SpeechDecoder::new(&mut store, "decoder", &config, &mut rng);
        let visual = VisualEncoder::new(&mut store, "visual", &config, &mut rng);
        let low = LowLevelLearner::new(&mut store, "low", &config, &mut rng);
        let high = HighLevelLearner::new(&mut store, "high", &config, &mut rng);
        let cues = CueInteraction::new(&mut store, "cues", &config, &mut rng);
        let backend = Backend::new(&mut store, "backend", &config, &mut rng);
        Ok(Self {
            config,
            store,
            encoder,
            decoder,
            visual,
            low,
            high,
            cues,
            backend,
        })
    }

    pub fn num_params(&self) -> usize {
        self.store.num_scalars()
    }

    /// Encoded visual features `[B, N, T_v]` with masked columns zeroed.
    pub fn visual_features<'g>(&self, s: &Session<'g>, batch: &Batch) -> Result<Var<'g>> {
        let fv = self.visual.forward(s, s.constant(batch.frames.clone()))?;
        Ok(match &batch.feature_keep {
            None => fv,
            Some(keep) => {
                let sh = fv.shape();
                if keep.shape() != [sh[0], sh[2]] {
                    return Err(CueError::ShapeMismatch(format!(
                        "feature mask {:?} for features {sh:?}",
                        keep.shape()
                    )));
                }
                let k = s.constant(keep.clone().reshape(&[sh[0], 1, sh[2]]));
                fv.mul(k.broadcast_to(&sh))
            }
        })
    }

    pub fn forward<'g>(&self, s: &Session<'g>, batch: &Batch) -> Result<ModelOutput<'g>> {
        let len = batch.mixture.dim(1);
        let feat = self.encoder.forward(s, s.constant(batch.mixture.clone()))?;
        let encoded = chunk(feat, self.config.chunk_len)?;
        let visual = self.visual_features(s, batch)?;
        if visual.shape()[2] != encoded.shape()[3] {
            return Err(CueError::LengthMismatch(visual.shape()[2], encoded.shape()[3]));
        }

        let low = self.low.forward(s, encoded, visual)?;
        let high = self.high.forward(s, low.audio, low.visual)?;
        let context = self.cues.context.forward(s, encoded, high.audio);
        let fusion = self
            .cues
            .forward(s, context, [low.speaker_cue, low.acoustic_cue, high.semantic_cue]);
        let mask = self.backend.estimate_mask(s, fusion.fused);
        let masked = apply_mask(encoded, mask)?;
        let estimate = self.decoder.forward(s, dechunk(masked)?, len)?;
        Ok(ModelOutput {
            estimate,
            mask,
            encoded,
            visual,
            psi: fusion.psi,
            reliabilities: fusion.reliabilities,
            speaker_cue: low.speaker_cue,
            acoustic_cue: low.acoustic_cue,
            semantic_cue: high.semantic_cue,
            speaker_logits: low.speaker_logits,
            acoustic_logits: low.acoustic_logits,
            semantic_logits: high.semantic_logits,
        })
    }

    /// Inference-only estimate `[B, L]`.
    pub fn separate(&self, batch: &Batch) -> Result<Tensor> {
        let g = Graph::new();
        let s = Session::new(&g, &self.store, false);
        let out = self.forward(&s, batch)?;
        let v = out.estimate.value();
        Ok((*v).clone())
    }

    /// Attention weights `[B, 3, H, T_v]` (None under concatenation fusion).
    pub fn attention(&self, batch: &Batch) -> Result<Option<Tensor>> {
        let g = Graph::new();
        let s = Session::new(&g, &self.store, false);
        let out = self.forward(&s, batch)?;
        Ok(out.psi.map(|p| (*p.value()).clone()))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let ck = Checkpoint {
            format: CHECKPOINT_FORMAT.into(),
            config: self.config.clone(),
            params: self.store.clone(),
        };
        std::fs::write(path, serde_json::to_vec(&ck)?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| CueError::Checkpoint(format!("{}: {e}", path.display())))?;
        let ck: Checkpoint = serde_json::from_slice(&bytes)?;
        if ck.format != CHECKPOINT_FORMAT {
            return Err(CueError::Checkpoint(format!("unsupported format {:?}", ck.format)));
        }
        let mut model = CueNet::new(ck.config)?;
        model.store.load_from(&ck.params).map_err(CueError::Checkpoint)?;
        Ok(model)
    }
}
