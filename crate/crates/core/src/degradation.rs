//! Inference-time visual corruptions applied to blocks of consecutive frames.
//!
//! Gaussian blur, concealment and face-missing act on pixels; masked-feature acts on
//! the visual encoder output.

use std::fmt;
use std::str::FromStr;

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{CueError, Result};
use crate::synth::{FrameSeq, FRAME_SIDE};
use cuenet_autograd::Tensor;

pub const DEFAULT_BLOCK_LEN: usize = 5;
pub const BLUR_KERNEL: usize = 9;
pub const BLUR_SIGMA: f64 = 3.0;
pub const OCCLUDER_LEVEL: f64 = 0.5;
pub const OCCLUDER_MIN: usize = 30;
pub const OCCLUDER_MAX: usize = 60;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum DegradationKind {
    GaussianBlur,
    Concealment,
    MaskedFeature,
    FaceMissing,
}

impl DegradationKind {
    pub const ALL: [DegradationKind; 4] = [
        DegradationKind::GaussianBlur,
        DegradationKind::Concealment,
        DegradationKind::MaskedFeature,
        DegradationKind::FaceMissing,
    ];

    /// Whether the corruption applies to encoded features rather than pixels.
    pub fn acts_on_features(self) -> bool {
        self == DegradationKind::MaskedFeature
    }

    pub fn tag(self) -> &'static str {
        match self {
            DegradationKind::GaussianBlur => "gb",
            DegradationKind::Concealment => "cc",
            DegradationKind::MaskedFeature => "mf",
            DegradationKind::FaceMissing => "fm",
        }
    }
}

impl fmt::Display for DegradationKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

impl FromStr for DegradationKind {
    type Err = CueError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "gb" => Ok(DegradationKind::GaussianBlur),
            "cc" => Ok(DegradationKind::Concealment),
            "mf" => Ok(DegradationKind::MaskedFeature),
            "fm" => Ok(DegradationKind::FaceMissing),
            other => Err(CueError::InvalidArgument(format!("unknown degradation {other:?}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct FrameMask {
    pub flags: Vec<bool>,
    pub block_len: usize,
    pub proportion: f64,
    /// `(start, len)` of each sampled block, in time order.
    pub blocks: Vec<(usize, usize)>,
}

impl FrameMask {
    pub fn none(num_frames: usize) -> Self {
        Self {
            flags: vec![false; num_frames],
            block_len: DEFAULT_BLOCK_LEN,
            proportion: 0.0,
            blocks: vec![],
        }
    }

    pub fn count(&self) -> usize {
        self.flags.iter().filter(|&&f| f).count()
    }

    /// Lengths of maximal runs of masked frames.
    pub fn runs(&self) -> Vec<usize> {
        let mut runs = Vec::new();
        let mut cur = 0;
        for &f in &self.flags {
            if f {
                cur += 1;
            } else if cur > 0 {
                runs.push(cur);
                cur = 0;
            }
        }
        if cur > 0 {
            runs.push(cur);
        }
        runs
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DegradationSpec {
    pub kind: DegradationKind,
    pub mask: FrameMask,
    pub blur_sigma: f64,
    pub occluder_range: (usize, usize),
}

impl DegradationSpec {
    pub fn new(kind: DegradationKind, mask: FrameMask) -> Self {
        Self {
            kind,
            mask,
            blur_sigma: BLUR_SIGMA,
            occluder_range: (OCCLUDER_MIN, OCCLUDER_MAX),
        }
    }
}

/// Visual data at either side of the visual encoder.
#[derive(Clone, Debug, PartialEq)]
pub enum VisualData {
    Frames(FrameSeq),
    /// `[N, T_v]` encoder output, one column per frame.
    Features(Tensor),
}

/// Picks `round(proportion * num_frames)` frames as non-overlapping blocks of `block_len`
/// (the last block is shortened when the count is not a multiple of `block_len`).
///
/// Every arrangement of the blocks is equally likely: block start offsets are drawn as a
/// sorted sample of slot positions in the sequence with the masked length collapsed.
pub fn sample_mask_blocks(num_frames: usize, proportion: f64, block_len: usize, seed: u64) -> Result<FrameMask> {
    if !(0.0..=1.0).contains(&proportion) {
        return Err(CueError::InvalidArgument(format!("proportion {proportion} outside [0, 1]")));
    }
    if block_len == 0 {
        return Err(CueError::InvalidArgument("block length must be at least 1".into()));
    }
    let count = (proportion * num_frames as f64).round() as usize;
    if count > num_frames {
        return Err(CueError::MaskOverflow {
            requested: count,
            available: num_frames,
        });
    }
    let mut flags = vec![false; num_frames];
    let mut placed = Vec::new();
    if count > 0 {
        let blocks = count.div_ceil(block_len);
        let lengths: Vec<usize> = (0..blocks)
            .map(|b| if b + 1 < blocks { block_len } else { count - block_len * (blocks - 1) })
            .collect();
        // Collapse each block to a single slot: free frames + blocks slots in total.
        let slots = num_frames - count + blocks;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut picks = sample(&mut rng, slots, blocks).into_vec();
        picks.sort_unstable();
        let mut consumed = 0;
        for (b, &slot) in picks.iter().enumerate() {
            let start = slot + consumed - b;
            for f in &mut flags[start..start + lengths[b]] {
                *f = true;
            }
            placed.push((start, lengths[b]));
            consumed += lengths[b];
        }
    }
    Ok(FrameMask {
        flags,
        block_len,
        proportion,
        blocks: placed,
    })
}

/// Applies `spec` to its masked frames (pixel kinds) or feature columns (MF).
/// Unmasked frames are returned bit-identical.
pub fn degrade(data: &VisualData, spec: &DegradationSpec, seed: u64) -> Result<VisualData> {
    match (data, spec.kind.acts_on_features()) {
        (VisualData::Frames(frames), false) => Ok(VisualData::Frames(degrade_frames(frames, spec, seed)?)),
        (VisualData::Features(feat), true) => Ok(VisualData::Features(mask_feature_columns(feat, &spec.mask)?)),
        (VisualData::Frames(_), true) => Err(CueError::WrongDegradationStage(format!(
            "{} applies to encoded features, got pixels",
            spec.kind
        ))),
        (VisualData::Features(_), false) => Err(CueError::WrongDegradationStage(format!(
            "{} applies to pixels, got encoded features",
            spec.kind
        ))),
    }
}

pub fn degrade_frames(frames: &FrameSeq, spec: &DegradationSpec, seed: u64) -> Result<FrameSeq> {
    if spec.kind.acts_on_features() {
        return Err(CueError::WrongDegradationStage(format!("{} cannot act on pixels", spec.kind)));
    }
    if spec.mask.flags.len() != frames.num_frames {
        return Err(CueError::LengthMismatch(spec.mask.flags.len(), frames.num_frames));
    }
    let mut out = frames.clone();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let kernel = gaussian_kernel(BLUR_KERNEL, spec.blur_sigma);
    for t in 0..frames.num_frames {
        if !spec.mask.flags[t] {
            continue;
        }
        let frame = out.frame_mut(t);
        match spec.kind {
            DegradationKind::GaussianBlur => blur_frame(frame, &kernel),
            DegradationKind::Concealment => occlude_frame(frame, spec.occluder_range, &mut rng),
            DegradationKind::FaceMissing => frame.iter_mut().for_each(|p| *p = 0.0),
            DegradationKind::MaskedFeature => unreachable!(),
        }
    }
    Ok(out)
}

/// Zeroes masked columns of an `[N, T_v]` feature matrix.
pub fn mask_feature_columns(feat: &Tensor, mask: &FrameMask) -> Result<Tensor> {
    if feat.rank() != 2 {
        return Err(CueError::ShapeMismatch(format!("features must be [N, T_v], got {:?}", feat.shape())));
    }
    let (n, t) = (feat.dim(0), feat.dim(1));
    if mask.flags.len() != t {
        return Err(CueError::LengthMismatch(mask.flags.len(), t));
    }
    let mut out = feat.clone();
    let d = out.data_mut();
    for c in 0..n {
        for (j, &m) in mask.flags.iter().enumerate() {
            if m {
                d[c * t + j] = 0.0;
            }
        }
    }
    Ok(out)
}

/// Normalised 1-D Gaussian taps (the 2-D kernel is their outer product).
pub fn gaussian_kernel(size: usize, sigma: f64) -> Vec<f64> {
    let c = (size / 2) as f64;
    let w: Vec<f64> = (0..size)
        .map(|i| (-((i as f64 - c).powi(2)) / (2.0 * sigma * sigma)).exp())
        .collect();
    let s: f64 = w.iter().sum();
    w.into_iter().map(|v| v / s).collect()
}

/// Mirror index without repeating the edge sample (`-1 -> 1`, `n -> n - 2`).
fn reflect(i: isize, n: usize) -> usize {
    let n = n as isize;
    let period = 2 * (n - 1);
    let mut i = i.rem_euclid(period.max(1));
    if i >= n {
        i = period - i;
    }
    i as usize
}

fn blur_frame(frame: &mut [f64], taps: &[f64]) {
    let side = FRAME_SIDE;
    let half = (taps.len() / 2) as isize;
    let mut tmp = vec![0.0; frame.len()];
    for y in 0..side {
        for x in 0..side {
            tmp[y * side + x] = taps
                .iter()
                .enumerate()
                .map(|(k, w)| w * frame[y * side + reflect(x as isize + k as isize - half, side)])
                .sum();
        }
    }
    for y in 0..side {
        for x in 0..side {
            frame[y * side + x] = taps
                .iter()
                .enumerate()
                .map(|(k, w)| w * tmp[reflect(y as isize + k as isize - half, side) * side + x])
                .sum();
        }
    }
}

fn occlude_frame(frame: &mut [f64], range: (usize, usize), rng: &mut ChaCha8Rng) {
    let side = FRAME_SIDE;
    let w = rng.gen_range(range.0..=range.1).min(side);
    let h = rng.gen_range(range.0..=range.1).min(side);
    let x0 = rng.gen_range(0..=side - w);
    let y0 = rng.gen_range(0..=side - h);
    for y in y0..y0 + h {
        for p in &mut frame[y * side + x0..y * side + x0 + w] {
            *p = OCCLUDER_LEVEL;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::synth_av_pair;

    #[test]
    fn half_mask_is_five_blocks_of_five() {
        let m = sample_mask_blocks(50, 0.5, 5, 7).unwrap();
        assert_eq!(m.count(), 25);
        let runs = m.runs();
        // adjacent blocks may touch, so runs are multiples of the block length
        assert!(runs.iter().all(|r| r % 5 == 0), "{runs:?}");
        assert_eq!(runs.iter().sum::<usize>(), 25);
        assert_eq!(m.blocks.len(), 5);
        for w in m.blocks.windows(2) {
            assert!(w[0].0 + w[0].1 <= w[1].0, "blocks overlap: {:?}", m.blocks);
        }
        assert!(m.blocks.iter().all(|&(_, l)| l == 5));
    }

    #[test]
    fn mask_extremes() {
        assert_eq!(sample_mask_blocks(50, 0.0, 5, 1).unwrap().count(), 0);
        assert!(sample_mask_blocks(50, 1.0, 5, 1).unwrap().flags.iter().all(|&f| f));
        let m = sample_mask_blocks(50, 0.22, 5, 3).unwrap();
        assert_eq!(m.count(), 11);
        assert!(sample_mask_blocks(50, 1.5, 5, 1).is_err());
        assert!(sample_mask_blocks(50, 0.5, 0, 1).is_err());
    }

    #[test]
    fn masks_are_seeded() {
        let a = sample_mask_blocks(50, 0.3, 5, 42).unwrap();
        assert_eq!(a, sample_mask_blocks(50, 0.3, 5, 42).unwrap());
        let differs = (0..20).any(|s| sample_mask_blocks(50, 0.3, 5, s).unwrap() != a);
        assert!(differs);
    }

    #[test]
    fn pixel_kinds_leave_unmasked_frames_alone() {
        let (_, video) = synth_av_pair(0, 2.0, 1).unwrap();
        let mask = sample_mask_blocks(50, 0.4, 5, 9).unwrap();
        for kind in [DegradationKind::GaussianBlur, DegradationKind::Concealment, DegradationKind::FaceMissing] {
            let spec = DegradationSpec::new(kind, mask.clone());
            let out = degrade_frames(&video, &spec, 3).unwrap();
            for t in 0..50 {
                if mask.flags[t] {
                    assert_ne!(out.frame(t), video.frame(t), "{kind} left frame {t} intact");
                } else {
                    assert_eq!(out.frame(t), video.frame(t));
                }
            }
            assert_eq!(out, degrade_frames(&video, &spec, 3).unwrap());
            assert!(out.pixels.iter().all(|p| (0.0..=1.0).contains(p)));
        }
    }

    #[test]
    fn face_missing_everywhere_is_black() {
        let (_, video) = synth_av_pair(0, 1.0, 1).unwrap();
        let spec = DegradationSpec::new(DegradationKind::FaceMissing, sample_mask_blocks(25, 1.0, 5, 0).unwrap());
        let out = degrade_frames(&video, &spec, 0).unwrap();
        assert!(out.pixels.iter().all(|&p| p == 0.0));
    }

    #[test]
    fn empty_mask_is_noop() {
        let (_, video) = synth_av_pair(0, 2.0, 1).unwrap();
        let spec = DegradationSpec::new(DegradationKind::GaussianBlur, sample_mask_blocks(50, 0.0, 5, 0).unwrap());
        assert_eq!(degrade(&VisualData::Frames(video.clone()), &spec, 1).unwrap(), VisualData::Frames(video));
    }

    #[test]
    fn blur_preserves_constant_frames() {
        let mut f = vec![0.3; FRAME_SIDE * FRAME_SIDE];
        blur_frame(&mut f, &gaussian_kernel(9, 3.0));
        assert!(f.iter().all(|v| (v - 0.3).abs() < 1e-12));
        assert_eq!(reflect(-1, 88), 1);
        assert_eq!(reflect(88, 88), 86);
    }

    #[test]
    fn masked_feature_zeroes_columns() {
        let feat = Tensor::from_fn(&[8, 50], |i| 1.0 + i as f64);
        let mask = sample_mask_blocks(50, 0.5, 5, 7).unwrap();
        let spec = DegradationSpec::new(DegradationKind::MaskedFeature, mask);
        let VisualData::Features(out) = degrade(&VisualData::Features(feat), &spec, 0).unwrap() else {
            panic!("expected features")
        };
        let zero_cols = (0..50).filter(|&t| (0..8).all(|c| out.at(&[c, t]) == 0.0)).count();
        assert_eq!(zero_cols, 25);
    }

    #[test]
    fn stage_mismatch_is_rejected() {
        let mask = FrameMask::none(2);
        let feat = VisualData::Features(Tensor::zeros(&[3, 2]));
        let frames = VisualData::Frames(FrameSeq::blank(2));
        let gb = DegradationSpec::new(DegradationKind::GaussianBlur, mask.clone());
        let mf = DegradationSpec::new(DegradationKind::MaskedFeature, mask);
        assert!(matches!(degrade(&feat, &gb, 0), Err(CueError::WrongDegradationStage(_))));
        assert!(matches!(degrade(&frames, &mf, 0), Err(CueError::WrongDegradationStage(_))));
    }
}
