//! Frame-level features of clean target speech, one column per video frame.

use std::f64::consts::PI;
use std::sync::Arc;

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use cuenet_autograd::Tensor;

use crate::error::{CueError, Result};
use crate::synth::{frames_for_samples, Waveform, SAMPLES_PER_FRAME, SAMPLE_RATE};

/// 64 ms analysis window.
pub const WINDOW: usize = 1024;
pub const MEL_BINS: usize = 40;
pub const LOG_FLOOR: f64 = 1e-10;
pub const VOICING_THRESHOLD: f64 = 0.3;
pub const MIN_F0: f64 = 50.0;
pub const MAX_F0: f64 = 400.0;
/// Context frames stacked on each side for the semantic features.
pub const CONTEXT: usize = 2;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum FeatureKind {
    Acoustic,
    Semantic,
}

#[derive(Clone, Debug, PartialEq)]
pub struct FrameFeatures {
    /// `[D, T_v]`
    pub values: Tensor,
    pub kind: FeatureKind,
}

impl FrameFeatures {
    pub fn dim(&self) -> usize {
        self.values.dim(0)
    }

    pub fn num_frames(&self) -> usize {
        self.values.dim(1)
    }

    pub fn column(&self, t: usize) -> Vec<f64> {
        (0..self.dim()).map(|d| self.values.at(&[d, t])).collect()
    }
}

/// Source of per-frame features; lets stronger semantic encoders replace the default.
pub trait FeatureExtractor {
    fn kind(&self) -> FeatureKind;
    fn dim(&self) -> usize;
    fn extract(&self, speech: &Waveform) -> Result<FrameFeatures>;
}

/// Pitch in Hz (0 when unvoiced) followed by 40 log-mel magnitudes.
#[derive(Clone, Debug, Default)]
pub struct AcousticExtractor;

impl FeatureExtractor for AcousticExtractor {
    fn kind(&self) -> FeatureKind {
        FeatureKind::Acoustic
    }

    fn dim(&self) -> usize {
        1 + MEL_BINS
    }

    fn extract(&self, speech: &Waveform) -> Result<FrameFeatures> {
        let frames = analysis_frames(speech)?;
        let mel = LogMel::new();
        let t_v = frames.len();
        let mut values = Tensor::zeros(&[self.dim(), t_v]);
        for (t, frame) in frames.iter().enumerate() {
            values.set(&[0, t], frame_pitch(frame));
            for (m, v) in mel.apply(frame).into_iter().enumerate() {
                values.set(&[1 + m, t], v);
            }
        }
        Ok(FrameFeatures {
            values,
            kind: FeatureKind::Acoustic,
        })
    }
}

/// Log-mel frames stacked with two neighbours on each side (edges replicated).
#[derive(Clone, Debug, Default)]
pub struct ContextMelExtractor;

impl FeatureExtractor for ContextMelExtractor {
    fn kind(&self) -> FeatureKind {
        FeatureKind::Semantic
    }

    fn dim(&self) -> usize {
        (2 * CONTEXT + 1) * MEL_BINS
    }

    fn extract(&self, speech: &Waveform) -> Result<FrameFeatures> {
        let frames = analysis_frames(speech)?;
        let mel = LogMel::new();
        let cols: Vec<Vec<f64>> = frames.iter().map(|f| mel.apply(f)).collect();
        let t_v = cols.len();
        let mut values = Tensor::zeros(&[self.dim(), t_v]);
        for t in 0..t_v {
            for (c, off) in (-(CONTEXT as isize)..=CONTEXT as isize).enumerate() {
                let src = (t as isize + off).clamp(0, t_v as isize - 1) as usize;
                for m in 0..MEL_BINS {
                    values.set(&[c * MEL_BINS + m, t], cols[src][m]);
                }
            }
        }
        Ok(FrameFeatures {
            values,
            kind: FeatureKind::Semantic,
        })
    }
}

pub fn extract_frame_feats(speech: &Waveform, kind: FeatureKind) -> Result<FrameFeatures> {
    match kind {
        FeatureKind::Acoustic => AcousticExtractor.extract(speech),
        FeatureKind::Semantic => ContextMelExtractor.extract(speech),
    }
}

/// 1024-sample windows centred on each video frame's midpoint, zero-padded at the edges.
pub fn analysis_frames(speech: &Waveform) -> Result<Vec<Vec<f64>>> {
    let len = speech.len();
    if len < WINDOW {
        return Err(CueError::ClipTooShort { len, min: WINDOW });
    }
    let t_v = frames_for_samples(len);
    Ok((0..t_v)
        .map(|t| {
            let center = (t * SAMPLES_PER_FRAME + SAMPLES_PER_FRAME / 2) as isize;
            let start = center - (WINDOW / 2) as isize;
            (0..WINDOW)
                .map(|n| {
                    let i = start + n as isize;
                    if i >= 0 && (i as usize) < len {
                        speech.samples[i as usize]
                    } else {
                        0.0
                    }
                })
                .collect()
        })
        .collect())
}

/// Normalized cross-correlation pitch estimate; 0 when the best peak is below the
/// voicing threshold. The shortest-lag local peak within 90% of the best is taken to
/// avoid octave errors, then refined by parabolic interpolation.
pub fn frame_pitch(frame: &[f64]) -> f64 {
    let sr = SAMPLE_RATE as f64;
    let min_lag = (sr / MAX_F0).floor() as usize;
    let max_lag = ((sr / MIN_F0).ceil() as usize).min(frame.len() / 2);
    let nccf: Vec<f64> = (0..=max_lag + 1)
        .map(|lag| {
            if lag < min_lag.saturating_sub(1) {
                return 0.0;
            }
            let n = frame.len() - lag;
            let (mut xy, mut xx, mut yy) = (0.0, 0.0, 0.0);
            for i in 0..n {
                let (a, b) = (frame[i], frame[i + lag]);
                xy += a * b;
                xx += a * a;
                yy += b * b;
            }
            let den = (xx * yy).sqrt();
            if den > 0.0 {
                xy / den
            } else {
                0.0
            }
        })
        .collect();
    let peaks: Vec<usize> = (min_lag..=max_lag)
        .filter(|&l| nccf[l] > nccf[l - 1] && nccf[l] >= nccf[l + 1])
        .collect();
    let best = peaks.iter().map(|&l| nccf[l]).fold(f64::NEG_INFINITY, f64::max);
    if !(best >= VOICING_THRESHOLD) {
        return 0.0;
    }
    let lag = peaks
        .into_iter()
        .find(|&l| nccf[l] >= 0.9 * best)
        .expect("best peak qualifies");
    let (a, b, c) = (nccf[lag - 1], nccf[lag], nccf[lag + 1]);
    let den = a - 2.0 * b + c;
    let shift = if den.abs() > 1e-12 { 0.5 * (a - c) / den } else { 0.0 };
    sr / (lag as f64 + shift.clamp(-0.5, 0.5))
}

fn hz_to_mel(f: f64) -> f64 {
    2595.0 * (1.0 + f / 700.0).log10()
}

fn mel_to_hz(m: f64) -> f64 {
    700.0 * (10f64.powf(m / 2595.0) - 1.0)
}

/// Hann-windowed magnitude spectrum through a triangular mel filterbank, then log.
pub struct LogMel {
    fft: Arc<dyn Fft<f64>>,
    window: Vec<f64>,
    /// `[MEL_BINS][WINDOW / 2 + 1]`
    filters: Vec<Vec<f64>>,
}

impl LogMel {
    pub fn new() -> Self {
        let bins = WINDOW / 2 + 1;
        let nyquist = SAMPLE_RATE as f64 / 2.0;
        let (lo, hi) = (hz_to_mel(0.0), hz_to_mel(nyquist));
        let edges: Vec<f64> = (0..MEL_BINS + 2)
            .map(|i| mel_to_hz(lo + (hi - lo) * i as f64 / (MEL_BINS + 1) as f64))
            .collect();
        let filters = (0..MEL_BINS)
            .map(|m| {
                let (l, c, r) = (edges[m], edges[m + 1], edges[m + 2]);
                (0..bins)
                    .map(|k| {
                        let f = k as f64 * SAMPLE_RATE as f64 / WINDOW as f64;
                        if f <= l || f >= r {
                            0.0
                        } else if f <= c {
                            (f - l) / (c - l)
                        } else {
                            (r - f) / (r - c)
                        }
                    })
                    .collect()
            })
            .collect();
        Self {
            fft: FftPlanner::new().plan_fft_forward(WINDOW),
            window: (0..WINDOW)
                .map(|n| 0.5 - 0.5 * (2.0 * PI * n as f64 / WINDOW as f64).cos())
                .collect(),
            filters,
        }
    }

    pub fn apply(&self, frame: &[f64]) -> Vec<f64> {
        let mut buf: Vec<Complex<f64>> = frame
            .iter()
            .zip(&self.window)
            .map(|(x, w)| Complex::new(x * w, 0.0))
            .collect();
        self.fft.process(&mut buf);
        let mag: Vec<f64> = buf[..WINDOW / 2 + 1].iter().map(|c| c.norm()).collect();
        self.filters
            .iter()
            .map(|f| {
                let e: f64 = f.iter().zip(&mag).map(|(a, b)| a * b).sum();
                e.max(LOG_FLOOR).ln()
            })
            .collect()
    }
}

impl Default for LogMel {
    fn default() -> Self {
        Self::new()
    }
}
