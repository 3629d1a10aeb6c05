//! Speech encoder/decoder, chunking, and the per-frame visual encoder.

use cuenet_autograd::nn::{Conv1d, Conv2d, Linear, PRelu};
use cuenet_autograd::ops::Conv1dGeometry;
use cuenet_autograd::{ParamStore, Session, Tensor, Var};
use rand::Rng;

use crate::config::ModelConfig;
use crate::error::{CueError, Result};
use crate::synth::{frames_for_samples, FRAME_SIDE};

/// Encoder columns before padding: `floor((L - kernel) / stride) + 1`.
pub fn raw_feature_len(num_samples: usize, kernel: usize, stride: usize) -> Result<usize> {
    if num_samples < kernel {
        return Err(CueError::ClipTooShort {
            len: num_samples,
            min: kernel,
        });
    }
    Ok((num_samples - kernel) / stride + 1)
}

/// Encoder columns after padding so exactly `num_chunks` chunks of width `chunk_len` fit.
pub fn padded_feature_len(num_chunks: usize, chunk_len: usize) -> usize {
    chunk_len + (num_chunks.max(1) - 1) * (chunk_len / 2)
}

/// Number of chunks a padded feature of `len` columns splits into.
pub fn num_chunks(len: usize, chunk_len: usize) -> Result<usize> {
    let hop = chunk_len / 2;
    if len < chunk_len || (len - chunk_len) % hop != 0 {
        return Err(CueError::UnpaddedFeature {
            frames: len,
            chunk: chunk_len,
            hop,
        });
    }
    Ok((len - chunk_len) / hop + 1)
}

fn chunk_forward(x: &[f64], rows: usize, len: usize, k: usize, tv: usize) -> Vec<f64> {
    let hop = k / 2;
    let mut out = vec![0.0; rows * k * tv];
    for r in 0..rows {
        let src = &x[r * len..(r + 1) * len];
        let dst = &mut out[r * k * tv..(r + 1) * k * tv];
        for j in 0..k {
            for t in 0..tv {
                dst[j * tv + t] = src[t * hop + j];
            }
        }
    }
    out
}

/// Adjoint of [`chunk_forward`]: sums every chunk entry back onto its column.
fn chunk_adjoint(g: &[f64], rows: usize, len: usize, k: usize, tv: usize) -> Vec<f64> {
    let hop = k / 2;
    let mut out = vec![0.0; rows * len];
    for r in 0..rows {
        let src = &g[r * k * tv..(r + 1) * k * tv];
        let dst = &mut out[r * len..(r + 1) * len];
        for j in 0..k {
            for t in 0..tv {
                dst[t * hop + j] += src[j * tv + t];
            }
        }
    }
    out
}

/// How many chunks cover each column.
fn coverage(len: usize, k: usize, tv: usize) -> Vec<f64> {
    let hop = k / 2;
    let mut c = vec![0.0; len];
    for t in 0..tv {
        for v in &mut c[t * hop..t * hop + k] {
            *v += 1.0;
        }
    }
    c
}

/// `[B, N, T_f]` to `[B, N, K, T_v]`; chunk `t` holds columns `[t*K/2, t*K/2 + K)`.
pub fn chunk<'g>(f: Var<'g>, chunk_len: usize) -> Result<Var<'g>> {
    let shape = f.shape();
    if shape.len() != 3 {
        return Err(CueError::ShapeMismatch(format!("chunk expects [B, N, T], got {shape:?}")));
    }
    let (b, n, len) = (shape[0], shape[1], shape[2]);
    let tv = num_chunks(len, chunk_len)?;
    let rows = b * n;
    let value = Tensor::new(
        vec![b, n, chunk_len, tv],
        chunk_forward(f.value().data(), rows, len, chunk_len, tv),
    );
    Ok(f.graph().apply(&[f], value, move |g| {
        vec![Some(Tensor::new(
            vec![b, n, len],
            chunk_adjoint(g.data(), rows, len, chunk_len, tv),
        ))]
    }))
}

/// Inverse of [`chunk`]: overlap-add divided by the per-column chunk count.
pub fn dechunk<'g>(x: Var<'g>) -> Result<Var<'g>> {
    let shape = x.shape();
    if shape.len() != 4 || shape[2] % 2 != 0 {
        return Err(CueError::ShapeMismatch(format!(
            "dechunk expects [B, N, K, T_v] with even K, got {shape:?}"
        )));
    }
    let (b, n, k, tv) = (shape[0], shape[1], shape[2], shape[3]);
    let len = padded_feature_len(tv, k);
    let rows = b * n;
    let cov = coverage(len, k, tv);
    let mut out = chunk_adjoint(x.value().data(), rows, len, k, tv);
    for (i, v) in out.iter_mut().enumerate() {
        *v /= cov[i % len];
    }
    let value = Tensor::new(vec![b, n, len], out);
    Ok(x.graph().apply(&[x], value, move |g| {
        let scaled: Vec<f64> = g.data().iter().enumerate().map(|(i, v)| v / cov[i % len]).collect();
        vec![Some(Tensor::new(vec![b, n, k, tv], chunk_forward(&scaled, rows, len, k, tv)))]
    }))
}

/// Tensor-level [`chunk`].
pub fn chunk_tensor(f: &Tensor, chunk_len: usize) -> Result<Tensor> {
    let g = cuenet_autograd::Graph::new();
    Ok((*chunk(g.constant(f.clone()), chunk_len)?.value()).clone())
}

/// Tensor-level [`dechunk`].
pub fn dechunk_tensor(x: &Tensor) -> Result<Tensor> {
    let g = cuenet_autograd::Graph::new();
    Ok((*dechunk(g.constant(x.clone()))?.value()).clone())
}

/// Overlap-adds `[B, T, W]` frames at `hop` into `[B, (T-1)*hop + W]`.
pub fn overlap_add<'g>(frames: Var<'g>, hop: usize) -> Var<'g> {
    let shape = frames.shape();
    assert_eq!(shape.len(), 3, "overlap_add expects [B, T, W]");
    let (b, t, w) = (shape[0], shape[1], shape[2]);
    let out_len = (t.max(1) - 1) * hop + w;
    let src = frames.value();
    let mut out = vec![0.0; b * out_len];
    for bi in 0..b {
        for ti in 0..t {
            let base = bi * out_len + ti * hop;
            for (o, v) in out[base..base + w].iter_mut().zip(&src.data()[(bi * t + ti) * w..(bi * t + ti + 1) * w]) {
                *o += v;
            }
        }
    }
    frames
        .graph()
        .apply(&[frames], Tensor::new(vec![b, out_len], out), move |g| {
            let mut gi = vec![0.0; b * t * w];
            for bi in 0..b {
                for ti in 0..t {
                    let base = bi * out_len + ti * hop;
                    gi[(bi * t + ti) * w..(bi * t + ti + 1) * w].copy_from_slice(&g.data()[base..base + w]);
                }
            }
            vec![Some(Tensor::new(vec![b, t, w], gi))]
        })
}

/// Learned analysis filterbank: strided conv, PReLU, zero right-padding to whole chunks.
#[derive(Clone, Debug)]
pub struct SpeechEncoder {
    pub conv: Conv1d,
    pub act: PRelu,
    pub kernel: usize,
    pub stride: usize,
    pub chunk_len: usize,
}

impl SpeechEncoder {
    pub fn new<R: Rng + ?Sized>(store: &mut ParamStore, name: &str, cfg: &ModelConfig, rng: &mut R) -> Self {
        let geo = Conv1dGeometry {
            stride: cfg.enc_stride,
            ..Default::default()
        };
        Self {
            conv: Conv1d::new(store, &format!("{name}.conv"), 1, cfg.enc_channels, cfg.enc_kernel, geo, true, rng),
            act: PRelu::new(store, &format!("{name}.prelu")),
            kernel: cfg.enc_kernel,
            stride: cfg.enc_stride,
            chunk_len: cfg.chunk_len,
        }
    }

    /// `[B, L]` waveforms to `[B, N, T_f]` with `T_f = K + (T_v - 1) K/2`.
    pub fn forward<'g>(&self, s: &Session<'g>, wave: Var<'g>) -> Result<Var<'g>> {
        let shape = wave.shape();
        if shape.len() != 2 {
            return Err(CueError::ShapeMismatch(format!("waveform batch must be [B, L], got {shape:?}")));
        }
        let len = shape[1];
        let raw = raw_feature_len(len, self.kernel, self.stride)?;
        let padded = padded_feature_len(frames_for_samples(len), self.chunk_len);
        let x = wave.reshape(&[shape[0], 1, len]);
        let f = self.act.forward(s, self.conv.forward(s, x));
        Ok(if padded >= raw {
            f.pad_axis(2, 0, padded - raw)
        } else {
            f.narrow(2, 0, padded)
        })
    }
}

/// Bias-free linear map from each N-vector to a kernel-length frame, overlap-added at the
/// encoder stride and cut to the original length.
#[derive(Clone, Debug)]
pub struct SpeechDecoder {
    pub basis: Linear,
    pub stride: usize,
}

impl SpeechDecoder {
    pub fn new<R: Rng + ?Sized>(store: &mut ParamStore, name: &str, cfg: &ModelConfig, rng: &mut R) -> Self {
        Self {
            basis: Linear::new(store, &format!("{name}.basis"), cfg.enc_channels, cfg.enc_kernel, false, rng),
            stride: cfg.enc_stride,
        }
    }

    /// `[B, N, T_f]` to `[B, len]`.
    pub fn forward<'g>(&self, s: &Session<'g>, f: Var<'g>, len: usize) -> Result<Var<'g>> {
        let frames = self.basis.forward_last(s, f.permute(&[0, 2, 1]));
        let wave = overlap_add(frames, self.stride);
        let avail = wave.shape()[1];
        if avail < len {
            return Err(CueError::LengthMismatch(avail, len));
        }
        Ok(wave.narrow(1, 0, len))
    }
}

/// Per-frame lip encoder: four stride-2 3x3 convolutions (ReLU after the first three),
/// then a spatial mean, giving one N-vector per frame.
#[derive(Clone, Debug)]
pub struct VisualEncoder {
    pub convs: Vec<Conv2d>,
    pub channels: usize,
}

impl VisualEncoder {
    pub fn new<R: Rng + ?Sized>(store: &mut ParamStore, name: &str, cfg: &ModelConfig, rng: &mut R) -> Self {
        let widths = [1, cfg.visual_channels[0], cfg.visual_channels[1], cfg.visual_channels[2], cfg.enc_channels];
        let convs = (0..4)
            .map(|i| Conv2d::new(store, &format!("{name}.conv{i}"), widths[i], widths[i + 1], 3, 2, 1, rng))
            .collect();
        Self {
            convs,
            channels: cfg.enc_channels,
        }
    }

    /// `[B, T_v, 88, 88]` frames to `[B, N, T_v]`.
    pub fn forward<'g>(&self, s: &Session<'g>, frames: Var<'g>) -> Result<Var<'g>> {
        let shape = frames.shape();
        if shape.len() != 4 || shape[2] != FRAME_SIDE || shape[3] != FRAME_SIDE {
            return Err(CueError::ShapeMismatch(format!(
                "frames must be [B, T_v, {FRAME_SIDE}, {FRAME_SIDE}], got {shape:?}"
            )));
        }
        let (b, tv) = (shape[0], shape[1]);
        let mut x = frames.reshape(&[b * tv, 1, FRAME_SIDE, FRAME_SIDE]);
        for (i, conv) in self.convs.iter().enumerate() {
            x = conv.forward(s, x);
            if i + 1 < self.convs.len() {
                x = x.relu();
            }
        }
        let xs = x.shape();
        let pooled = x.reshape(&[b * tv, xs[1], xs[2] * xs[3]]).mean_axis(2);
        Ok(pooled.reshape(&[b, tv, self.channels]).permute(&[0, 2, 1]))
    }
}

/// Elementwise masking of the chunked mixture feature.
pub fn apply_mask<'g>(feat: Var<'g>, mask: Var<'g>) -> Result<Var<'g>> {
    if feat.shape() != mask.shape() {
        return Err(CueError::ShapeMismatch(format!(
            "mask {:?} does not match feature {:?}",
            mask.shape(),
            feat.shape()
        )));
    }
    Ok(feat.mul(mask))
}

#[cfg(test)]
mod tests {
    use super::*;
    use cuenet_autograd::Graph;

    #[test]
    fn standard_clip_lengths() {
        assert_eq!(raw_feature_len(32000, 40, 20).unwrap(), 1599);
        assert_eq!(padded_feature_len(50, 64), 1632);
        assert_eq!(num_chunks(1632, 64).unwrap(), 50);
        assert_eq!(raw_feature_len(40, 40, 20).unwrap(), 1);
        assert!(raw_feature_len(39, 40, 20).is_err());
        assert!(matches!(num_chunks(1599, 64), Err(CueError::UnpaddedFeature { .. })));
    }

    #[test]
    fn two_chunks_share_middle_columns() {
        let f = Tensor::from_fn(&[1, 1, 96], |i| i as f64);
        let c = chunk_tensor(&f, 64).unwrap();
        assert_eq!(c.shape(), &[1, 1, 64, 2]);
        for j in 32..64 {
            assert_eq!(c.at(&[0, 0, j, 0]), j as f64);
            assert_eq!(c.at(&[0, 0, j - 32, 1]), j as f64);
        }
    }

    #[test]
    fn dechunk_of_ones_is_ones() {
        let c = Tensor::ones(&[2, 3, 8, 5]);
        let d = dechunk_tensor(&c).unwrap();
        assert_eq!(d.shape(), &[2, 3, 24]);
        assert!(d.data().iter().all(|&v| v == 1.0));
    }

    #[test]
    fn overlap_add_places_frames() {
        let g = Graph::new();
        let x = g.constant(Tensor::ones(&[1, 3, 4]));
        let y = overlap_add(x, 2);
        assert_eq!(y.value().data(), &[1.0, 1.0, 2.0, 2.0, 2.0, 2.0, 1.0, 1.0]);
    }
}
