//! Degradation sweeps, attention dumps and the cue ablation grid.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use cuenet_core::degradation::DegradationKind;
use cuenet_core::eval::{condition_batch, run_eval, EvalCondition, EvalReport, Separator};
use cuenet_core::synth::{MixtureSample, FRAME_PIXELS};
use cuenet_core::{Batch, CueError, CueNet, CueToggles, FusionMode, Result};

use crate::run_config::RunConfig;
use crate::train::{grad_norm_of, loss_and_grads, run_train};

pub const PROPORTIONS: [f64; 5] = [0.0, 0.25, 0.5, 0.75, 1.0];

/// The clean baseline followed by one report per degradation kind covering every proportion.
pub fn degradation_sweep<M: Separator + ?Sized>(
    model: &M,
    samples: &[MixtureSample],
    kinds: &[DegradationKind],
    proportions: &[f64],
    seed: u64,
) -> Result<Vec<(String, EvalReport)>> {
    let mut reports = vec![("clean".to_string(), run_eval(model, samples, &[EvalCondition::clean()])?)];
    for &kind in kinds {
        let conds: Vec<EvalCondition> = proportions
            .iter()
            .map(|&proportion| EvalCondition {
                kind: Some(kind),
                proportion,
                seed,
            })
            .collect();
        reports.push((kind.tag().to_string(), run_eval(model, samples, &conds)?));
    }
    Ok(reports)
}

/// Writes `eval_<label>.csv` per report and returns the paths.
pub fn write_sweep(dir: &Path, reports: &[(String, EvalReport)]) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir)?;
    reports
        .iter()
        .map(|(label, report)| {
            let path = dir.join(format!("eval_{label}.csv"));
            report.write_csv(&path)?;
            Ok(path)
        })
        .collect()
}

/// `psi[0, :, h, :]` for each requested `h` as CSV: one row per video frame and three
/// cue columns per head.
pub fn attention_csv(model: &CueNet, sample: &MixtureSample, heads: &[usize]) -> Result<String> {
    let batch = Batch::from_samples(&[sample])?;
    let psi = model
        .attention(&batch)?
        .ok_or_else(|| CueError::InvalidArgument("concatenation fusion has no attention weights".into()))?;
    let (hidden, tv) = (psi.dim(2), psi.dim(3));
    if let Some(&bad) = heads.iter().find(|&&h| h >= hidden) {
        return Err(CueError::InvalidArgument(format!("channel {bad} out of range for H = {hidden}")));
    }
    let mut out = String::from("t");
    for h in heads {
        write!(out, ",h{h}_spk,h{h}_acoustic,h{h}_semantic").expect("writing to a String");
    }
    out.push('\n');
    let d = psi.data();
    for t in 0..tv {
        write!(out, "{t}").expect("writing to a String");
        for &h in heads {
            for j in 0..3 {
                write!(out, ",{}", d[(j * hidden + h) * tv + t]).expect("writing to a String");
            }
        }
        out.push('\n');
    }
    Ok(out)
}

/// Pixels `[T_v, 88, 88]` seen under `cond` plus a per-frame flag for frames left intact.
/// Feature-level kinds keep the pixels and report their column mask instead.
pub fn degraded_view(sample: &MixtureSample, cond: &EvalCondition) -> Result<(Vec<f64>, Vec<bool>)> {
    let batch = condition_batch(sample, 0, cond)?;
    let frames = batch.frames.data();
    let intact = match &batch.feature_keep {
        Some(k) => k.data().iter().map(|&v| v != 0.0).collect(),
        None => (0..sample.video.num_frames)
            .map(|t| frames[t * FRAME_PIXELS..(t + 1) * FRAME_PIXELS] == *sample.video.frame(t))
            .collect(),
    };
    Ok((frames.to_vec(), intact))
}

#[derive(Clone, Debug, PartialEq)]
pub struct AblationRow {
    pub cues: CueToggles,
    pub fusion: FusionMode,
    pub num_params: usize,
    pub steps: usize,
    pub final_loss: f64,
    /// Gradient norms of the speaker, acoustic and semantic heads after training.
    pub head_grad_norms: [f64; 3],
}

impl AblationRow {
    pub const HEADER: &'static str =
        "cues,fusion,num_params,steps,final_loss,grad_speaker_head,grad_acoustic_head,grad_semantic_head";

    pub fn csv_line(&self) -> String {
        let g = self.head_grad_norms;
        format!(
            "\"{}\",{},{},{},{},{},{},{}",
            self.cues, self.fusion, self.num_params, self.steps, self.final_loss, g[0], g[1], g[2]
        )
    }
}

/// Every cue combination under interaction fusion, then all cues under concatenation.
pub fn ablation_grid() -> Vec<(CueToggles, FusionMode)> {
    let mut grid: Vec<(CueToggles, FusionMode)> = CueToggles::all_combinations()
        .into_iter()
        .map(|c| (c, FusionMode::Interaction))
        .collect();
    grid.push((CueToggles::ALL, FusionMode::Concatenation));
    grid
}

/// Trains `base` once per grid entry for `steps` steps, then probes the head gradients
/// on the first training batch.
pub fn run_ablation(base: &RunConfig, steps: usize, mut on_row: impl FnMut(&AblationRow)) -> Result<Vec<AblationRow>> {
    let mut rows = Vec::new();
    for (cues, fusion) in ablation_grid() {
        let mut cfg = base.clone();
        cfg.cues = cues;
        cfg.fusion = fusion;
        cfg.steps = steps;
        cfg.check_every = 0;
        cfg.target_sisnri = None;
        let out = run_train(&cfg)?;
        let n = cfg.batch_size.min(out.samples.len());
        let refs: Vec<&MixtureSample> = out.samples[..n].iter().collect();
        let batch = Batch::from_samples(&refs)?;
        let (_, grads) = loss_and_grads(
            &out.model,
            &batch,
            &out.tokens.acoustic_tokens[..n],
            &out.tokens.semantic_tokens[..n],
            &cfg.weights,
            &Default::default(),
        )?;
        let m = &out.model;
        let row = AblationRow {
            cues,
            fusion,
            num_params: m.num_params(),
            steps: out.steps_run,
            final_loss: out.log.final_loss().unwrap_or(f64::NAN),
            head_grad_norms: [
                grad_norm_of(&grads, &m.low.speaker_head.params()),
                grad_norm_of(&grads, &m.low.acoustic_head.params()),
                grad_norm_of(&grads, &m.high.semantic_head.params()),
            ],
        };
        on_row(&row);
        rows.push(row);
    }
    Ok(rows)
}

pub fn ablation_csv(rows: &[AblationRow]) -> String {
    let mut out = String::from(AblationRow::HEADER);
    out.push('\n');
    for r in rows {
        out.push_str(&r.csv_line());
        out.push('\n');
    }
    out
}
