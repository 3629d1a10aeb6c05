//! Frame-level token targets for the acoustic and semantic heads.

use cuenet_core::config::SEMANTIC_CLASSES;
use cuenet_core::features::{extract_frame_feats, FeatureKind, FrameFeatures};
use cuenet_core::kmeans::{fit_kmeans, pool_columns, tokenize, Codebook};
use cuenet_core::synth::MixtureSample;
use cuenet_core::{CueError, CueToggles, Result};

/// Codebooks fitted on clean targets plus the token sequence of every sample.
/// A disabled cue has no codebook and empty token rows.
#[derive(Clone, Debug, PartialEq)]
pub struct TokenTargets {
    pub acoustic: Option<Codebook>,
    pub semantic: Option<Codebook>,
    pub acoustic_tokens: Vec<Vec<usize>>,
    pub semantic_tokens: Vec<Vec<usize>>,
}

impl TokenTargets {
    /// Fits codebooks on the clean targets of `samples` for the enabled cues.
    pub fn build(samples: &[MixtureSample], cues: CueToggles, acoustic_omega: usize, seed: u64) -> Result<Self> {
        let fit = |kind: FeatureKind, omega: usize, seed: u64| -> Result<(Codebook, Vec<Vec<usize>>)> {
            let feats = clean_features(samples, kind)?;
            let cb = fit_kmeans(&pool_columns(&feats)?, omega, seed)?.codebook;
            let toks = feats.iter().map(|f| tokenize(f, &cb)).collect::<Result<_>>()?;
            Ok((cb, toks))
        };
        let (acoustic, acoustic_tokens) = if cues.acoustic {
            let (cb, t) = fit(FeatureKind::Acoustic, acoustic_omega, seed)?;
            (Some(cb), t)
        } else {
            (None, vec![Vec::new(); samples.len()])
        };
        let (semantic, semantic_tokens) = if cues.semantic {
            let (cb, t) = fit(FeatureKind::Semantic, SEMANTIC_CLASSES, seed.wrapping_add(1))?;
            (Some(cb), t)
        } else {
            (None, vec![Vec::new(); samples.len()])
        };
        Ok(Self {
            acoustic,
            semantic,
            acoustic_tokens,
            semantic_tokens,
        })
    }

    /// Tokenizes `samples` with existing codebooks.
    pub fn apply(acoustic: Option<Codebook>, semantic: Option<Codebook>, samples: &[MixtureSample]) -> Result<Self> {
        let run = |cb: &Option<Codebook>, kind: FeatureKind| -> Result<Vec<Vec<usize>>> {
            match cb {
                None => Ok(vec![Vec::new(); samples.len()]),
                Some(cb) => clean_features(samples, kind)?
                    .iter()
                    .map(|f| tokenize(f, cb))
                    .collect(),
            }
        };
        Ok(Self {
            acoustic_tokens: run(&acoustic, FeatureKind::Acoustic)?,
            semantic_tokens: run(&semantic, FeatureKind::Semantic)?,
            acoustic,
            semantic,
        })
    }

    pub fn len(&self) -> usize {
        self.acoustic_tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.acoustic_tokens.is_empty()
    }
}

fn clean_features(samples: &[MixtureSample], kind: FeatureKind) -> Result<Vec<FrameFeatures>> {
    samples
        .iter()
        .map(|s| {
            let f = extract_frame_feats(&s.target, kind)?;
            if f.num_frames() != s.video.num_frames {
                return Err(CueError::LengthMismatch(f.num_frames(), s.video.num_frames));
            }
            Ok(f)
        })
        .collect()
}
