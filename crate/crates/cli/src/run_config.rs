//! Flat `key = value` run configuration.

use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use cuenet_core::objectives::LossWeights;
use cuenet_core::{CueError, CueToggles, FusionMode, ModelConfig, Preset, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub preset: Preset,
    pub cues: CueToggles,
    pub fusion: FusionMode,
    pub lr: f64,
    pub batch_size: usize,
    pub steps: usize,
    pub train_samples: usize,
    pub eval_samples: usize,
    pub num_speakers: usize,
    pub duration_s: f64,
    pub data_seed: u64,
    pub eval_data_seed: u64,
    pub init_seed: u64,
    pub shuffle_seed: u64,
    pub token_seed: u64,
    pub degrade_seed: u64,
    pub weights: LossWeights,
    pub acoustic_omega: usize,
    /// Global gradient-norm ceiling; 0 disables clipping.
    pub grad_clip: f64,
    pub patience: usize,
    pub lr_factor: f64,
    /// Steps between training-set SI-SNRi checks; 0 disables them.
    pub check_every: usize,
    /// Stop once training-set SI-SNRi reaches this many dB.
    pub target_sisnri: Option<f64>,
    pub deterministic: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self::for_preset(Preset::Toy)
    }
}

impl RunConfig {
    pub fn for_preset(preset: Preset) -> Self {
        Self {
            preset,
            cues: CueToggles::ALL,
            fusion: FusionMode::Interaction,
            lr: 1e-3,
            batch_size: 2,
            steps: 2000,
            train_samples: 8,
            eval_samples: 4,
            num_speakers: 8,
            duration_s: 2.0,
            data_seed: 7,
            eval_data_seed: 1007,
            init_seed: 0,
            shuffle_seed: 11,
            token_seed: 3,
            degrade_seed: 5,
            weights: LossWeights::default(),
            acoustic_omega: ModelConfig::preset(preset, 2).acoustic_classes,
            grad_clip: 5.0,
            patience: 10,
            lr_factor: 0.5,
            check_every: 50,
            target_sisnri: None,
            deterministic: false,
        }
    }

    pub fn model_config(&self) -> ModelConfig {
        let mut m = ModelConfig::preset(self.preset, self.num_speakers);
        m.cues = self.cues;
        m.fusion = self.fusion;
        m.acoustic_classes = self.acoustic_omega;
        m.init_seed = self.init_seed;
        m
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(CueError::InvalidArgument(m.into()));
        if !(self.lr.is_finite() && self.lr > 0.0) {
            return bad("learning rate must be positive");
        }
        if self.batch_size == 0 || self.train_samples == 0 {
            return bad("batch size and training set must be non-empty");
        }
        if self.num_speakers < 2 {
            return bad("need at least two speakers");
        }
        if !(self.lr_factor > 0.0 && self.lr_factor < 1.0) {
            return bad("lr_factor must lie in (0, 1)");
        }
        if self.grad_clip < 0.0 {
            return bad("grad_clip must be non-negative");
        }
        self.weights.validate()?;
        self.model_config().validate()
    }

    /// Sets one key. Unknown keys are errors.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let v = value.trim();
        match key.trim() {
            "preset" => {
                // switching preset resets the preset-dependent codebook size
                let p: Preset = parse(key, v)?;
                if p != self.preset {
                    self.preset = p;
                    self.acoustic_omega = ModelConfig::preset(p, 2).acoustic_classes;
                }
            }
            "cues" => self.cues = parse(key, v)?,
            "fusion" => self.fusion = parse(key, v)?,
            "lr" => self.lr = parse(key, v)?,
            "batch_size" => self.batch_size = parse(key, v)?,
            "steps" => self.steps = parse(key, v)?,
            "train_samples" => self.train_samples = parse(key, v)?,
            "eval_samples" => self.eval_samples = parse(key, v)?,
            "num_speakers" => self.num_speakers = parse(key, v)?,
            "duration_s" => self.duration_s = parse(key, v)?,
            "data_seed" => self.data_seed = parse(key, v)?,
            "eval_data_seed" => self.eval_data_seed = parse(key, v)?,
            "init_seed" => self.init_seed = parse(key, v)?,
            "shuffle_seed" => self.shuffle_seed = parse(key, v)?,
            "token_seed" => self.token_seed = parse(key, v)?,
            "degrade_seed" => self.degrade_seed = parse(key, v)?,
            "w_sisnr" => self.weights.sisnr = parse(key, v)?,
            "w_stft" => self.weights.stft = parse(key, v)?,
            "w_speaker" => self.weights.speaker = parse(key, v)?,
            "w_acoustic" => self.weights.acoustic = parse(key, v)?,
            "w_semantic" => self.weights.semantic = parse(key, v)?,
            "acoustic_omega" => self.acoustic_omega = parse(key, v)?,
            "grad_clip" => self.grad_clip = parse(key, v)?,
            "patience" => self.patience = parse(key, v)?,
            "lr_factor" => self.lr_factor = parse(key, v)?,
            "check_every" => self.check_every = parse(key, v)?,
            "target_sisnri" => {
                self.target_sisnri = if v == "none" { None } else { Some(parse(key, v)?) };
            }
            "deterministic" => self.deterministic = parse(key, v)?,
            other => return Err(CueError::InvalidArgument(format!("unknown config key {other:?}"))),
        }
        Ok(())
    }

    /// Applies `key = value` lines on top of `self`; `#` starts a comment.
    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (n, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| CueError::InvalidArgument(format!("line {}: expected key = value", n + 1)))?;
            self.set(k, v)?;
        }
        Ok(())
    }

    pub fn parse_text(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        // the preset decides the defaults of everything else, so apply it first
        if let Some(p) = text
            .lines()
            .map(|l| l.split('#').next().unwrap_or("").trim())
            .filter_map(|l| l.split_once('='))
            .find(|(k, _)| k.trim() == "preset")
        {
            cfg = Self::for_preset(parse("preset", p.1.trim())?);
        }
        cfg.apply_text(text)?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::parse_text(&std::fs::read_to_string(path)?)
    }

    pub fn to_text(&self) -> String {
        let w = &self.weights;
        let target = self.target_sisnri.map_or_else(|| "none".to_string(), |t| t.to_string());
        let mut out = String::new();
        let pairs: [(&str, String); 28] = [
            ("preset", self.preset.to_string()),
            ("cues", self.cues.to_string()),
            ("fusion", self.fusion.to_string()),
            ("lr", self.lr.to_string()),
            ("batch_size", self.batch_size.to_string()),
            ("steps", self.steps.to_string()),
            ("train_samples", self.train_samples.to_string()),
            ("eval_samples", self.eval_samples.to_string()),
            ("num_speakers", self.num_speakers.to_string()),
            ("duration_s", self.duration_s.to_string()),
            ("data_seed", self.data_seed.to_string()),
            ("eval_data_seed", self.eval_data_seed.to_string()),
            ("init_seed", self.init_seed.to_string()),
            ("shuffle_seed", self.shuffle_seed.to_string()),
            ("token_seed", self.token_seed.to_string()),
            ("degrade_seed", self.degrade_seed.to_string()),
            ("w_sisnr", w.sisnr.to_string()),
            ("w_stft", w.stft.to_string()),
            ("w_speaker", w.speaker.to_string()),
            ("w_acoustic", w.acoustic.to_string()),
            ("w_semantic", w.semantic.to_string()),
            ("acoustic_omega", self.acoustic_omega.to_string()),
            ("grad_clip", self.grad_clip.to_string()),
            ("patience", self.patience.to_string()),
            ("lr_factor", self.lr_factor.to_string()),
            ("check_every", self.check_every.to_string()),
            ("target_sisnri", target),
            ("deterministic", self.deterministic.to_string()),
        ];
        for (k, v) in pairs {
            writeln!(out, "{k} = {v}").expect("writing to a String");
        }
        out
    }
}

fn parse<T: FromStr>(key: &str, v: &str) -> Result<T>
where
    T::Err: std::fmt::Display,
{
    v.parse()
        .map_err(|e| CueError::InvalidArgument(format!("{key} = {v:?}: {e}")))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn text_round_trip() {
        let mut cfg = RunConfig::for_preset(Preset::Fast);
        cfg.cues = "spk,semantic".parse().unwrap();
        cfg.fusion = FusionMode::Concatenation;
        cfg.target_sisnri = Some(10.0);
        cfg.weights.stft = 0.25;
        assert_eq!(RunConfig::parse_text(&cfg.to_text()).unwrap(), cfg);
    }

    #[test]
    fn comments_and_unknown_keys() {
        let cfg = RunConfig::parse_text("# toy run\nsteps = 5 # short\n\ncues = none\n").unwrap();
        assert_eq!(cfg.steps, 5);
        assert_eq!(cfg.cues, CueToggles::NONE);
        assert!(RunConfig::parse_text("bogus = 1").is_err());
        assert!(RunConfig::parse_text("steps 5").is_err());
        assert!(RunConfig::parse_text("steps = -1").is_err());
    }

    #[test]
    fn preset_sets_codebook_size() {
        let cfg = RunConfig::parse_text("steps = 3\npreset = full").unwrap();
        assert_eq!(cfg.acoustic_omega, 512);
        assert_eq!(cfg.steps, 3);
        let cfg = RunConfig::parse_text("acoustic_omega = 32\npreset = toy").unwrap();
        assert_eq!(cfg.acoustic_omega, 32);
    }

    #[test]
    fn defaults_validate() {
        RunConfig::default().validate().unwrap();
        let mut cfg = RunConfig::default();
        cfg.lr_factor = 1.0;
        assert!(cfg.validate().is_err());
    }
}
