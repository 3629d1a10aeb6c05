//! SI-SNR, multi-resolution STFT magnitude, token cross-entropy and their weighted sum.

use std::f64::consts::{LN_10, PI};

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use cuenet_autograd::ops::weighted_sum;
use cuenet_autograd::{Tensor, Var};

use crate::error::{CueError, Result};

pub const RATIO_MIN: f64 = 1e-10;
pub const RATIO_MAX: f64 = 1e10;

/// `(window, hop)` pairs in samples at 16 kHz.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct StftConfig {
    pub resolutions: Vec<(usize, usize)>,
}

impl Default for StftConfig {
    fn default() -> Self {
        Self {
            resolutions: vec![(960, 640), (640, 320), (320, 160)],
        }
    }
}

impl StftConfig {
    pub fn validate(&self) -> Result<()> {
        for &(w, h) in &self.resolutions {
            if !(w > h && h > 0) {
                return Err(CueError::InvalidArgument(format!("stft window {w} / hop {h} needs window > hop > 0")));
            }
        }
        Ok(())
    }
}

struct SiSnrParts {
    value: f64,
    alpha: f64,
    signal: f64,
    noise: f64,
    clamped: bool,
}

fn si_snr_parts(est: &[f64], reference: &[f64]) -> Result<SiSnrParts> {
    if est.len() != reference.len() {
        return Err(CueError::LengthMismatch(est.len(), reference.len()));
    }
    let rr: f64 = reference.iter().map(|r| r * r).sum();
    if rr == 0.0 {
        return Err(CueError::DegenerateReference);
    }
    let er: f64 = est.iter().zip(reference).map(|(e, r)| e * r).sum();
    let alpha = er / rr;
    let signal = alpha * alpha * rr;
    let noise: f64 = est
        .iter()
        .zip(reference)
        .map(|(e, r)| {
            let n = e - alpha * r;
            n * n
        })
        .sum();
    let ratio = if noise == 0.0 { f64::INFINITY } else { signal / noise };
    let clamped = !(RATIO_MIN..=RATIO_MAX).contains(&ratio);
    Ok(SiSnrParts {
        value: 10.0 * ratio.clamp(RATIO_MIN, RATIO_MAX).log10(),
        alpha,
        signal,
        noise,
        clamped,
    })
}

/// Scale-invariant SNR in dB with the power ratio clamped to `[1e-10, 1e10]`.
pub fn si_snr(est: &[f64], reference: &[f64]) -> Result<f64> {
    Ok(si_snr_parts(est, reference)?.value)
}

/// Per-row SI-SNR of `[B, L]` estimates against fixed references; output `[B]`.
pub fn si_snr_var<'g>(est: Var<'g>, reference: &Tensor) -> Result<Var<'g>> {
    let shape = est.shape();
    if shape.len() != 2 || reference.shape() != shape.as_slice() {
        return Err(CueError::ShapeMismatch(format!(
            "si_snr: estimate {shape:?} vs reference {:?}",
            reference.shape()
        )));
    }
    let (b, l) = (shape[0], shape[1]);
    let ev = est.value();
    let mut values = Vec::with_capacity(b);
    let mut grads = Vec::with_capacity(b * l);
    for i in 0..b {
        let e = &ev.data()[i * l..(i + 1) * l];
        let r = &reference.data()[i * l..(i + 1) * l];
        let p = si_snr_parts(e, r)?;
        values.push(p.value);
        for (ej, rj) in e.iter().zip(r) {
            grads.push(if p.clamped {
                0.0
            } else {
                let s = p.alpha * rj;
                (10.0 / LN_10) * (2.0 * s / p.signal - 2.0 * (ej - s) / p.noise)
            });
        }
    }
    Ok(est.graph().apply(&[est], Tensor::new(vec![b], values), move |g| {
        let mut d = grads;
        for i in 0..b {
            let gi = g.data()[i];
            d[i * l..(i + 1) * l].iter_mut().for_each(|v| *v *= gi);
        }
        vec![Some(Tensor::new(vec![b, l], d))]
    }))
}

/// Centred, zero-padded, periodic-Hann STFT frames: frame `m` covers
/// `[m*hop - window/2, m*hop + window/2)`, `m = 0..=L/hop`.
struct Stft {
    window: usize,
    hop: usize,
    taper: Vec<f64>,
    fft: std::sync::Arc<dyn rustfft::Fft<f64>>,
    ifft: std::sync::Arc<dyn rustfft::Fft<f64>>,
}

impl Stft {
    fn new(window: usize, hop: usize) -> Self {
        let mut planner = FftPlanner::new();
        Self {
            window,
            hop,
            taper: (0..window)
                .map(|n| 0.5 - 0.5 * (2.0 * PI * n as f64 / window as f64).cos())
                .collect(),
            fft: planner.plan_fft_forward(window),
            ifft: planner.plan_fft_inverse(window),
        }
    }

    fn frames(&self, len: usize) -> usize {
        len / self.hop + 1
    }

    fn bins(&self) -> usize {
        self.window / 2 + 1
    }

    fn start(&self, m: usize) -> isize {
        (m * self.hop) as isize - (self.window / 2) as isize
    }

    /// Half spectrum of frame `m`.
    fn spectrum(&self, x: &[f64], m: usize) -> Vec<Complex<f64>> {
        let start = self.start(m);
        let mut buf: Vec<Complex<f64>> = (0..self.window)
            .map(|n| {
                let i = start + n as isize;
                let v = if i >= 0 && (i as usize) < x.len() { x[i as usize] } else { 0.0 };
                Complex::new(v * self.taper[n], 0.0)
            })
            .collect();
        self.fft.process(&mut buf);
        buf.truncate(self.bins());
        buf
    }

    /// Mean absolute magnitude difference, and its gradient with respect to `est`.
    fn loss_and_grad(&self, est: &[f64], reference: &[f64], want_grad: bool) -> (f64, Vec<f64>) {
        let frames = self.frames(est.len());
        let scale = 1.0 / (frames * self.bins()) as f64;
        let mut total = 0.0;
        let mut grad = if want_grad { vec![0.0; est.len()] } else { vec![] };
        for m in 0..frames {
            let xe = self.spectrum(est, m);
            let xr = self.spectrum(reference, m);
            let mut full = vec![Complex::new(0.0, 0.0); self.window];
            for k in 0..self.bins() {
                let (ae, ar) = (xe[k].norm(), xr[k].norm());
                total += (ae - ar).abs();
                if want_grad && ae > 1e-12 && ae != ar {
                    full[k] = xe[k] * ((ae - ar).signum() * scale / ae);
                }
            }
            if want_grad {
                // d|X_k|/dx_n = w_n Re(X_k e^{+2 pi i k n / W}) / |X_k|
                self.ifft.process(&mut full);
                let start = self.start(m);
                for n in 0..self.window {
                    let i = start + n as isize;
                    if i >= 0 && (i as usize) < est.len() {
                        grad[i as usize] += self.taper[n] * full[n].re;
                    }
                }
            }
        }
        (total * scale, grad)
    }
}

/// Sum over resolutions of the mean L1 distance between magnitude spectrograms.
pub fn stft_mag_loss(est: &[f64], reference: &[f64], cfg: &StftConfig) -> Result<f64> {
    if est.len() != reference.len() {
        return Err(CueError::LengthMismatch(est.len(), reference.len()));
    }
    cfg.validate()?;
    Ok(cfg
        .resolutions
        .iter()
        .map(|&(w, h)| Stft::new(w, h).loss_and_grad(est, reference, false).0)
        .sum())
}

/// Per-row STFT magnitude loss of `[B, L]` estimates; output `[B]`.
pub fn stft_mag_loss_var<'g>(est: Var<'g>, reference: &Tensor, cfg: &StftConfig) -> Result<Var<'g>> {
    let shape = est.shape();
    if shape.len() != 2 || reference.shape() != shape.as_slice() {
        return Err(CueError::ShapeMismatch(format!(
            "stft loss: estimate {shape:?} vs reference {:?}",
            reference.shape()
        )));
    }
    cfg.validate()?;
    let (b, l) = (shape[0], shape[1]);
    let want_grad = est.requires_grad();
    let ev = est.value();
    let stfts: Vec<Stft> = cfg.resolutions.iter().map(|&(w, h)| Stft::new(w, h)).collect();
    let mut values = vec![0.0; b];
    let mut grads = vec![0.0; if want_grad { b * l } else { 0 }];
    for i in 0..b {
        let e = &ev.data()[i * l..(i + 1) * l];
        let r = &reference.data()[i * l..(i + 1) * l];
        for stft in &stfts {
            let (v, g) = stft.loss_and_grad(e, r, want_grad);
            values[i] += v;
            if want_grad {
                for (d, gv) in grads[i * l..(i + 1) * l].iter_mut().zip(g) {
                    *d += gv;
                }
            }
        }
    }
    Ok(est.graph().apply(&[est], Tensor::new(vec![b], values), move |g| {
        let mut d = grads;
        for i in 0..b {
            let gi = g.data()[i];
            d[i * l..(i + 1) * l].iter_mut().for_each(|v| *v *= gi);
        }
        vec![Some(Tensor::new(vec![b, l], d))]
    }))
}

/// Mean over frames of `-log softmax(logits[:, t])[tokens[t]]` for `[classes, T]` logits.
pub fn ce_token_loss(logits: &Tensor, tokens: &[usize]) -> Result<f64> {
    let g = cuenet_autograd::Graph::new();
    let l = logits.clone();
    let shape = l.shape().to_vec();
    if shape.len() != 2 {
        return Err(CueError::ShapeMismatch(format!("logits must be [classes, T], got {shape:?}")));
    }
    let v = ce_loss_var(g.constant(l.reshape(&[1, shape[0], shape[1]])), &[tokens.to_vec()])?;
    let out = v.value().item();
    Ok(out)
}

/// Cross-entropy over `[B, C, T]` logits with one token per `(b, t)`; mean over all
/// `B*T` positions. A `[B, C]` input is treated as `T = 1`.
pub fn ce_loss_var<'g>(logits: Var<'g>, tokens: &[Vec<usize>]) -> Result<Var<'g>> {
    let shape = logits.shape();
    let (b, c, t) = match shape.len() {
        2 => (shape[0], shape[1], 1),
        3 => (shape[0], shape[1], shape[2]),
        _ => return Err(CueError::ShapeMismatch(format!("logits must be [B, C, T], got {shape:?}"))),
    };
    if tokens.len() != b || tokens.iter().any(|s| s.len() != t) {
        return Err(CueError::ShapeMismatch(format!(
            "{} token rows for logits {shape:?}",
            tokens.len()
        )));
    }
    if let Some(&bad) = tokens.iter().flatten().find(|&&k| k >= c) {
        return Err(CueError::TokenOutOfRange { token: bad, classes: c });
    }
    let lv = logits.value();
    let x = lv.data();
    let n = (b * t) as f64;
    let mut loss = 0.0;
    let mut grad = vec![0.0; x.len()];
    for bi in 0..b {
        for ti in 0..t {
            let idx = |k: usize| (bi * c + k) * t + ti;
            let max = (0..c).map(|k| x[idx(k)]).fold(f64::NEG_INFINITY, f64::max);
            let sum: f64 = (0..c).map(|k| (x[idx(k)] - max).exp()).sum();
            let lse = max + sum.ln();
            let target = tokens[bi][ti];
            loss += lse - x[idx(target)];
            for k in 0..c {
                let p = (x[idx(k)] - lse).exp();
                grad[idx(k)] = (p - if k == target { 1.0 } else { 0.0 }) / n;
            }
        }
    }
    let gshape = shape.clone();
    Ok(logits
        .graph()
        .apply(&[logits], Tensor::scalar(loss / n), move |g| {
            let s = g.item();
            let mut d = grad;
            d.iter_mut().for_each(|v| *v *= s);
            vec![Some(Tensor::new(gshape, d))]
        }))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    pub sisnr: f64,
    pub stft: f64,
    pub speaker: f64,
    pub acoustic: f64,
    pub semantic: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            sisnr: 1.0,
            stft: 0.5,
            speaker: 0.1,
            acoustic: 0.1,
            semantic: 0.1,
        }
    }
}

impl LossWeights {
    pub fn as_array(&self) -> [f64; 5] {
        [self.sisnr, self.stft, self.speaker, self.acoustic, self.semantic]
    }

    pub fn validate(&self) -> Result<()> {
        let w = self.as_array();
        if w.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(CueError::InvalidArgument(format!("loss weights must be non-negative: {w:?}")));
        }
        if w.iter().all(|&v| v == 0.0) {
            return Err(CueError::InvalidArgument("at least one loss weight must be positive".into()));
        }
        Ok(())
    }
}

pub const TERM_NAMES: [&str; 5] = ["neg_sisnr", "stft", "ce_speaker", "ce_acoustic", "ce_semantic"];

/// Term values (in [`TERM_NAMES`] order; `None` when not computed) and their weighted sum.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub terms: [Option<f64>; 5],
    pub total: f64,
}

/// Scalar loss terms in [`TERM_NAMES`] order. `neg_sisnr` is already negated.
pub struct LossTerms<'g> {
    pub terms: [Option<Var<'g>>; 5],
}

/// `sum_i w_i term_i`, skipping zero-weight and absent terms so they send no gradient.
pub fn total_loss<'g>(terms: &LossTerms<'g>, w: &LossWeights) -> Result<(Var<'g>, LossBreakdown)> {
    w.validate()?;
    let weights = w.as_array();
    let mut vars = Vec::new();
    let mut ws = Vec::new();
    let mut values = [None; 5];
    for (i, t) in terms.terms.iter().enumerate() {
        if let Some(v) = t {
            values[i] = Some(v.value().item());
            if weights[i] != 0.0 {
                vars.push(*v);
                ws.push(weights[i]);
            }
        }
    }
    if vars.is_empty() {
        return Err(CueError::InvalidArgument("no loss term has positive weight".into()));
    }
    let total = weighted_sum(&vars, &ws);
    let tv = total.value().item();
    Ok((total, LossBreakdown { terms: values, total: tv }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use cuenet_autograd::gradcheck;

    #[test]
    fn hand_case_is_zero_db() {
        assert_eq!(si_snr(&[1.0, 0.0], &[1.0, 1.0]).unwrap(), 0.0);
        assert_eq!(si_snr(&[1.0, 2.0], &[1.0, 2.0]).unwrap(), 100.0);
        assert!(matches!(si_snr(&[1.0], &[0.0]), Err(CueError::DegenerateReference)));
    }

    #[test]
    fn uniform_logits_give_log_classes() {
        let l = ce_token_loss(&Tensor::zeros(&[48, 5]), &[0, 3, 47, 1, 2]).unwrap();
        assert!((l - 48f64.ln()).abs() < 1e-12);
        assert!(matches!(
            ce_token_loss(&Tensor::zeros(&[4, 1]), &[4]),
            Err(CueError::TokenOutOfRange { .. })
        ));
    }

    #[test]
    fn stft_loss_sign_invariance() {
        let x: Vec<f64> = (0..2000).map(|i| (i as f64 * 0.37).sin() + 0.1 * (i as f64 * 1.3).cos()).collect();
        let neg: Vec<f64> = x.iter().map(|v| -v).collect();
        let cfg = StftConfig::default();
        assert_eq!(stft_mag_loss(&x, &x, &cfg).unwrap(), 0.0);
        assert!(stft_mag_loss(&neg, &x, &cfg).unwrap() < 1e-12);
    }

    #[test]
    fn loss_gradients_match_finite_differences() {
        let est = Tensor::from_fn(&[2, 300], |i| (0.013 * (i * i) as f64).sin() + 0.3 * (i as f64 * 0.9).cos());
        let reference = Tensor::from_fn(&[2, 300], |i| (i as f64 * 0.21).sin());
        let cfg = StftConfig {
            resolutions: vec![(64, 32), (32, 16)],
        };
        let r1 = reference.clone();
        let rep = gradcheck::check(&[est.clone()], 1e-6, move |_, v| si_snr_var(v[0], &r1).unwrap());
        assert!(rep.max_rel_error() < 1e-6, "si_snr {:?}", rep.rel_errors);
        let rep = gradcheck::check(&[est], 1e-6, move |_, v| stft_mag_loss_var(v[0], &reference, &cfg).unwrap());
        assert!(rep.max_rel_error() < 1e-6, "stft {:?}", rep.rel_errors);
        let logits = Tensor::from_fn(&[2, 5, 3], |i| (i as f64 * 0.7).cos());
        let toks = vec![vec![0, 4, 2], vec![1, 1, 3]];
        let rep = gradcheck::check(&[logits], 1e-6, move |_, v| ce_loss_var(v[0], &toks).unwrap());
        assert!(rep.max_rel_error() < 1e-6, "ce {:?}", rep.rel_errors);
    }
}
