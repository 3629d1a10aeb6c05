//! Synthetic paired audio-visual speakers and mixtures.
//!
//! A voice is three harmonics of a speaker-specific fundamental under a slow random
//! amplitude envelope. The matching video is a mouth ellipse whose vertical radius
//! follows the same envelope, so lip motion and loudness are correlated by construction.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{CueError, Result};

pub const SAMPLE_RATE: usize = 16_000;
pub const VIDEO_FPS: usize = 25;
pub const SAMPLES_PER_FRAME: usize = SAMPLE_RATE / VIDEO_FPS;
pub const FRAME_SIDE: usize = 88;
pub const FRAME_PIXELS: usize = FRAME_SIDE * FRAME_SIDE;

const F0_GRID_STEPS: u64 = 17;
const PEAK_LEVEL: f64 = 0.9;
const MOUTH_LEVEL: f64 = 0.1;
const FACE_LEVEL: f64 = 0.6;

/// Mono audio at [`SAMPLE_RATE`].
#[derive(Clone, Debug, PartialEq)]
pub struct Waveform {
    pub samples: Vec<f64>,
}

impl Waveform {
    pub fn new(samples: Vec<f64>) -> Self {
        Self { samples }
    }

    pub fn zeros(len: usize) -> Self {
        Self::new(vec![0.0; len])
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn power(&self) -> f64 {
        mean_power(&self.samples)
    }

    pub fn duration_s(&self) -> f64 {
        self.samples.len() as f64 / SAMPLE_RATE as f64
    }
}

/// Grayscale lip frames at [`VIDEO_FPS`], `FRAME_SIDE x FRAME_SIDE`, values in `[0, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct FrameSeq {
    /// Row-major `num_frames x 88 x 88`.
    pub pixels: Vec<f64>,
    pub num_frames: usize,
}

impl FrameSeq {
    pub fn new(pixels: Vec<f64>, num_frames: usize) -> Result<Self> {
        if pixels.len() != num_frames * FRAME_PIXELS {
            return Err(CueError::ShapeMismatch(format!(
                "{} pixels for {num_frames} frames of {FRAME_SIDE}x{FRAME_SIDE}",
                pixels.len()
            )));
        }
        Ok(Self { pixels, num_frames })
    }

    pub fn blank(num_frames: usize) -> Self {
        Self {
            pixels: vec![0.0; num_frames * FRAME_PIXELS],
            num_frames,
        }
    }

    pub fn frame(&self, t: usize) -> &[f64] {
        &self.pixels[t * FRAME_PIXELS..(t + 1) * FRAME_PIXELS]
    }

    pub fn frame_mut(&mut self, t: usize) -> &mut [f64] {
        &mut self.pixels[t * FRAME_PIXELS..(t + 1) * FRAME_PIXELS]
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct MixtureSample {
    pub mixture: Waveform,
    pub target: Waveform,
    /// Interferer as it appears in the mixture (already gain-scaled).
    pub interferer: Waveform,
    pub video: FrameSeq,
    pub snr_db: f64,
    pub speaker_id: usize,
}

/// Number of video frames covering `num_samples` of audio.
pub fn frames_for_samples(num_samples: usize) -> usize {
    (num_samples as f64 / SAMPLES_PER_FRAME as f64).round() as usize
}

pub fn mean_power(x: &[f64]) -> f64 {
    if x.is_empty() {
        return 0.0;
    }
    x.iter().map(|v| v * v).sum::<f64>() / x.len() as f64
}

/// Fundamental frequency assigned to a speaker: a 10 Hz grid over 90..=250 Hz, walked
/// with stride 7 so consecutive ids land far apart.
pub fn speaker_f0(speaker_id: usize) -> f64 {
    90.0 + 10.0 * ((speaker_id as u64 * 7) % F0_GRID_STEPS) as f64
}

fn harmonic_amplitudes(speaker_id: usize) -> [f64; 3] {
    let frac = |x: f64| x - x.floor();
    let id = speaker_id as f64;
    [
        1.0,
        0.35 + 0.5 * frac(id * 0.381_966),
        0.15 + 0.4 * frac(id * 0.618_034 + 0.25),
    ]
}

fn mix_seed(seed: u64, speaker_id: usize) -> u64 {
    // splitmix64 finaliser over the pair
    let mut z = seed ^ (speaker_id as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Slow syllable-rate envelope in `[0, 1]` with silent stretches.
struct Envelope {
    parts: [(f64, f64, f64); 3],
}

impl Envelope {
    fn new(rng: &mut ChaCha8Rng) -> Self {
        let mut parts = [(0.0, 0.0, 0.0); 3];
        for p in &mut parts {
            *p = (rng.gen_range(0.5..1.0), rng.gen_range(2.0..6.0), rng.gen_range(0.0..2.0 * PI));
        }
        Self { parts }
    }

    fn at(&self, t: f64) -> f64 {
        let norm: f64 = self.parts.iter().map(|p| p.0).sum();
        let raw: f64 = self
            .parts
            .iter()
            .map(|&(a, f, ph)| a * (2.0 * PI * f * t + ph).sin())
            .sum::<f64>()
            / norm;
        ((raw + 0.2) / 1.2).clamp(0.0, 1.0)
    }
}

/// Generates a voice and its lip video; a pure function of `(seed, duration_s, speaker_id)`.
pub fn synth_av_pair(seed: u64, duration_s: f64, speaker_id: usize) -> Result<(Waveform, FrameSeq)> {
    if !(duration_s > 0.0) || !duration_s.is_finite() {
        return Err(CueError::InvalidArgument(format!("duration must be positive, got {duration_s}")));
    }
    let num_samples = (duration_s * SAMPLE_RATE as f64).round() as usize;
    let num_frames = (duration_s * VIDEO_FPS as f64).round() as usize;
    let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(seed, speaker_id));
    let env = Envelope::new(&mut rng);
    let drift_rate = rng.gen_range(0.3..0.8);
    let drift_phase = rng.gen_range(0.0..2.0 * PI);
    let harmonic_phase: [f64; 3] = [rng.gen_range(0.0..2.0 * PI), rng.gen_range(0.0..2.0 * PI), rng.gen_range(0.0..2.0 * PI)];
    let amps = harmonic_amplitudes(speaker_id);
    let f0 = speaker_f0(speaker_id);

    let dt = 1.0 / SAMPLE_RATE as f64;
    let mut phase = 0.0;
    let mut samples = Vec::with_capacity(num_samples);
    for n in 0..num_samples {
        let t = n as f64 * dt;
        let inst_f0 = f0 * (1.0 + 0.04 * (2.0 * PI * drift_rate * t + drift_phase).sin());
        let tone: f64 = (0..3)
            .map(|h| amps[h] * ((h + 1) as f64 * phase + harmonic_phase[h]).sin())
            .sum();
        samples.push(env.at(t) * tone);
        phase = (phase + 2.0 * PI * inst_f0 * dt) % (2.0 * PI * 60.0);
    }
    let peak = samples.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if peak > 0.0 {
        let g = PEAK_LEVEL / peak;
        samples.iter_mut().for_each(|v| *v *= g);
    }

    let mut pixels = Vec::with_capacity(num_frames * FRAME_PIXELS);
    for f in 0..num_frames {
        let t = (f as f64 + 0.5) / VIDEO_FPS as f64;
        draw_mouth(&mut pixels, env.at(t));
    }
    Ok((Waveform::new(samples), FrameSeq { pixels, num_frames }))
}

/// Appends one frame: a dark filled ellipse whose height grows with `opening` in `[0, 1]`.
fn draw_mouth(out: &mut Vec<f64>, opening: f64) {
    let (cx, cy) = (43.5, 52.0);
    let rx = 22.0;
    let ry = 2.0 + 20.0 * opening;
    for y in 0..FRAME_SIDE {
        for x in 0..FRAME_SIDE {
            let dx = (x as f64 - cx) / rx;
            let dy = (y as f64 - cy) / ry;
            out.push(if dx * dx + dy * dy <= 1.0 { MOUTH_LEVEL } else { FACE_LEVEL });
        }
    }
}

/// Gain that puts `interferer` at `snr_db` below `target` (by mean power).
pub fn snr_gain(target: &Waveform, interferer: &Waveform, snr_db: f64) -> Result<f64> {
    if target.len() != interferer.len() {
        return Err(CueError::LengthMismatch(target.len(), interferer.len()));
    }
    let pi = interferer.power();
    if pi == 0.0 {
        return Err(CueError::DegenerateInterferer);
    }
    Ok((target.power() / (pi * 10f64.powf(snr_db / 10.0))).sqrt())
}

/// `target + g * interferer` with `g` chosen so the component SNR equals `snr_db`.
pub fn mix_at_snr(target: &Waveform, interferer: &Waveform, snr_db: f64) -> Result<Waveform> {
    let g = snr_gain(target, interferer, snr_db)?;
    Ok(Waveform::new(
        target
            .samples
            .iter()
            .zip(&interferer.samples)
            .map(|(t, i)| t + g * i)
            .collect(),
    ))
}

/// One line of the synthetic corpus manifest.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SampleDescriptor {
    pub id: usize,
    pub target_seed: u64,
    pub target_speaker: usize,
    pub interferer_seed: u64,
    pub interferer_speaker: usize,
    pub snr_db: f64,
    pub duration_s: f64,
}

impl SampleDescriptor {
    pub fn materialize(&self) -> Result<MixtureSample> {
        let (target, video) = synth_av_pair(self.target_seed, self.duration_s, self.target_speaker)?;
        let (raw, _) = synth_av_pair(self.interferer_seed, self.duration_s, self.interferer_speaker)?;
        let g = snr_gain(&target, &raw, self.snr_db)?;
        let interferer = Waveform::new(raw.samples.iter().map(|v| g * v).collect());
        let mixture = Waveform::new(
            target
                .samples
                .iter()
                .zip(&interferer.samples)
                .map(|(t, i)| t + i)
                .collect(),
        );
        Ok(MixtureSample {
            mixture,
            target,
            interferer,
            video,
            snr_db: self.snr_db,
            speaker_id: self.target_speaker,
        })
    }
}

/// Draws `count` two-speaker mixtures; SNR uniform in `[-5, 5]` dB.
pub fn corpus_manifest(seed: u64, count: usize, num_speakers: usize, duration_s: f64) -> Vec<SampleDescriptor> {
    assert!(num_speakers >= 2, "need at least two speakers to mix");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|id| {
            let target_speaker = rng.gen_range(0..num_speakers);
            let mut interferer_speaker = rng.gen_range(0..num_speakers - 1);
            if interferer_speaker >= target_speaker {
                interferer_speaker += 1;
            }
            SampleDescriptor {
                id,
                target_seed: rng.gen(),
                target_speaker,
                interferer_seed: rng.gen(),
                interferer_speaker,
                snr_db: rng.gen_range(-5.0..=5.0),
                duration_s,
            }
        })
        .collect()
}

pub fn write_manifest<W: std::io::Write>(mut w: W, descriptors: &[SampleDescriptor]) -> Result<()> {
    for d in descriptors {
        serde_json::to_writer(&mut w, d)?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

pub fn read_manifest<R: std::io::BufRead>(r: R) -> Result<Vec<SampleDescriptor>> {
    let mut out = Vec::new();
    for line in r.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line)?);
    }
    Ok(out)
}
