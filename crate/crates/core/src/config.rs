//! Model geometry, cue toggles and presets.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{CueError, Result};
use crate::synth::SAMPLES_PER_FRAME;

pub const SEMANTIC_CLASSES: usize = 48;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Preset {
    /// 10 backend blocks.
    Full,
    /// 5 backend blocks.
    Fast,
    /// Reduced widths and 2 backend blocks for desk-scale runs.
    Toy,
}

impl FromStr for Preset {
    type Err = CueError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "full" => Ok(Preset::Full),
            "fast" => Ok(Preset::Fast),
            "toy" => Ok(Preset::Toy),
            _ => Err(CueError::InvalidArgument(format!("unknown preset {s:?} (fast, full, toy)"))),
        }
    }
}

impl fmt::Display for Preset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Preset::Full => "full",
            Preset::Fast => "fast",
            Preset::Toy => "toy",
        })
    }
}

/// Which cues take part in fusion and receive token supervision.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CueToggles {
    pub speaker: bool,
    pub acoustic: bool,
    pub semantic: bool,
}

impl CueToggles {
    pub const ALL: CueToggles = CueToggles {
        speaker: true,
        acoustic: true,
        semantic: true,
    };
    pub const NONE: CueToggles = CueToggles {
        speaker: false,
        acoustic: false,
        semantic: false,
    };

    /// In fusion stacking order (speaker, acoustic, semantic).
    pub fn as_array(self) -> [bool; 3] {
        [self.speaker, self.acoustic, self.semantic]
    }

    /// All eight on/off combinations.
    pub fn all_combinations() -> Vec<CueToggles> {
        (0..8u8)
            .map(|m| CueToggles {
                speaker: m & 4 != 0,
                acoustic: m & 2 != 0,
                semantic: m & 1 != 0,
            })
            .collect()
    }
}

impl FromStr for CueToggles {
    type Err = CueError;

    /// Comma-separated subset of `spk,acoustic,semantic`; `none` or empty disables all.
    fn from_str(s: &str) -> Result<Self> {
        let mut t = CueToggles::NONE;
        for part in s.split(',').map(str::trim).filter(|p| !p.is_empty() && *p != "none") {
            match part {
                "spk" | "speaker" => t.speaker = true,
                "acoustic" => t.acoustic = true,
                "semantic" => t.semantic = true,
                other => return Err(CueError::InvalidArgument(format!("unknown cue {other:?}"))),
            }
        }
        Ok(t)
    }
}

impl fmt::Display for CueToggles {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let names: Vec<&str> = [(self.speaker, "spk"), (self.acoustic, "acoustic"), (self.semantic, "semantic")]
            .iter()
            .filter(|(on, _)| *on)
            .map(|(_, n)| *n)
            .collect();
        if names.is_empty() {
            f.write_str("none")
        } else {
            f.write_str(&names.join(","))
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum FusionMode {
    /// Reliability-weighted attention over the three cue branches.
    Interaction,
    /// Channel concatenation of the branches followed by a linear projection.
    Concatenation,
}

impl FromStr for FusionMode {
    type Err = CueError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "interaction" => Ok(FusionMode::Interaction),
            "concat" | "concatenation" => Ok(FusionMode::Concatenation),
            _ => Err(CueError::InvalidArgument(format!("unknown fusion mode {s:?}"))),
        }
    }
}

impl fmt::Display for FusionMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            FusionMode::Interaction => "interaction",
            FusionMode::Concatenation => "concat",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    /// Encoder output channels (N).
    pub enc_channels: usize,
    pub enc_kernel: usize,
    pub enc_stride: usize,
    /// Chunk width (K); chunks hop by K/2.
    pub chunk_len: usize,
    /// Learner and cue width (H).
    pub hidden: usize,
    /// LSTM units per direction.
    pub lstm_hidden: usize,
    /// Channels of the first three stride-2 visual conv blocks; the fourth outputs N.
    pub visual_channels: [usize; 3],
    pub backend_blocks: usize,
    pub num_speakers: usize,
    pub acoustic_classes: usize,
    pub semantic_classes: usize,
    /// Kernel of the learner's and cue modules' temporal convolutions.
    pub temporal_kernel: usize,
    /// Kernel of the fusion convolution along T_v.
    pub fusion_time_kernel: usize,
    /// Kernel of the circular fusion convolution across cues (1 or 3).
    pub fusion_cue_kernel: usize,
    pub cues: CueToggles,
    pub fusion: FusionMode,
    pub init_seed: u64,
}

impl ModelConfig {
    pub fn preset(preset: Preset, num_speakers: usize) -> Self {
        match preset {
            Preset::Full | Preset::Fast => Self {
                enc_channels: 256,
                enc_kernel: 40,
                enc_stride: 20,
                chunk_len: 64,
                hidden: 128,
                lstm_hidden: 128,
                visual_channels: [16, 32, 64],
                backend_blocks: if preset == Preset::Full { 10 } else { 5 },
                num_speakers,
                acoustic_classes: 512,
                semantic_classes: SEMANTIC_CLASSES,
                temporal_kernel: 3,
                fusion_time_kernel: 5,
                fusion_cue_kernel: 3,
                cues: CueToggles::ALL,
                fusion: FusionMode::Interaction,
                init_seed: 0,
            },
            Preset::Toy => Self {
                enc_channels: 64,
                enc_kernel: 160,
                enc_stride: 80,
                chunk_len: 16,
                hidden: 32,
                lstm_hidden: 32,
                visual_channels: [4, 8, 16],
                backend_blocks: 2,
                num_speakers,
                acoustic_classes: 64,
                semantic_classes: SEMANTIC_CLASSES,
                temporal_kernel: 3,
                fusion_time_kernel: 5,
                fusion_cue_kernel: 3,
                cues: CueToggles::ALL,
                fusion: FusionMode::Interaction,
                init_seed: 0,
            },
        }
    }

    /// Chunk hop in encoder frames.
    pub fn chunk_hop(&self) -> usize {
        self.chunk_len / 2
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(CueError::InvalidArgument(m));
        if self.chunk_len < 2 || self.chunk_len % 2 != 0 {
            return bad(format!("chunk length {} must be even and >= 2", self.chunk_len));
        }
        if self.chunk_hop() * self.enc_stride != SAMPLES_PER_FRAME {
            return bad(format!(
                "chunk hop {} x encoder stride {} must equal {SAMPLES_PER_FRAME} samples (one video frame)",
                self.chunk_hop(),
                self.enc_stride
            ));
        }
        if self.backend_blocks == 0 {
            return bad("at least one backend block is required".into());
        }
        if self.temporal_kernel % 2 == 0 || self.fusion_time_kernel % 2 == 0 {
            return bad("temporal kernels must be odd".into());
        }
        if !matches!(self.fusion_cue_kernel, 1 | 3) {
            return bad("cue kernel must be 1 or 3".into());
        }
        if self.num_speakers == 0 || self.acoustic_classes == 0 || self.semantic_classes == 0 {
            return bad("class counts must be positive".into());
        }
        Ok(())
    }
}
