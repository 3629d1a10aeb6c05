//! Degradation-sweep evaluation.

use std::fmt::Write as _;
use std::path::Path;

use cuenet_autograd::Tensor;

use crate::degradation::{degrade_frames, sample_mask_blocks, DegradationKind, DegradationSpec, DEFAULT_BLOCK_LEN};
use crate::error::Result;
use crate::metrics::{sdr, si_snri};
use crate::model::{Batch, CueNet};
use crate::synth::MixtureSample;

pub const CSV_HEADER: &str = "sample_id,degradation,proportion,sisnri_db,sdr_db";

/// Anything that maps a batch to `[B, L]` target estimates.
pub trait Separator {
    fn tag(&self) -> String;
    fn separate(&self, batch: &Batch) -> Result<Tensor>;
}

impl Separator for CueNet {
    fn tag(&self) -> String {
        format!("cuenet-{}blk-{}-{}", self.config.backend_blocks, self.config.cues, self.config.fusion)
    }

    fn separate(&self, batch: &Batch) -> Result<Tensor> {
        CueNet::separate(self, batch)
    }
}

/// Returns the mixture unchanged.
#[derive(Clone, Copy, Debug, Default)]
pub struct Bypass;

impl Separator for Bypass {
    fn tag(&self) -> String {
        "bypass".into()
    }

    fn separate(&self, batch: &Batch) -> Result<Tensor> {
        Ok(batch.mixture.clone())
    }
}

/// One evaluation setting; `kind: None` is the clean condition.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EvalCondition {
    pub kind: Option<DegradationKind>,
    pub proportion: f64,
    pub seed: u64,
}

impl EvalCondition {
    pub fn clean() -> Self {
        Self {
            kind: None,
            proportion: 0.0,
            seed: 0,
        }
    }

    pub fn label(&self) -> String {
        self.kind.map_or_else(|| "clean".to_string(), |k| k.tag().to_string())
    }
}

/// Builds the single-sample batch seen under `cond`. Masks are seeded per sample.
pub fn condition_batch(sample: &MixtureSample, sample_id: usize, cond: &EvalCondition) -> Result<Batch> {
    let mut batch = Batch::from_samples(&[sample])?;
    let Some(kind) = cond.kind else { return Ok(batch) };
    let tv = sample.video.num_frames;
    let seed = cond.seed ^ (sample_id as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    let mask = sample_mask_blocks(tv, cond.proportion, DEFAULT_BLOCK_LEN, seed)?;
    if kind.acts_on_features() {
        let keep: Vec<f64> = mask.flags.iter().map(|&m| if m { 0.0 } else { 1.0 }).collect();
        batch.feature_keep = Some(Tensor::new(vec![1, tv], keep));
    } else {
        let spec = DegradationSpec::new(kind, mask);
        let video = degrade_frames(&sample.video, &spec, seed.wrapping_add(1))?;
        batch.frames = Tensor::new(batch.frames.shape().to_vec(), video.pixels);
    }
    Ok(batch)
}

#[derive(Clone, Debug, PartialEq)]
pub struct EvalRow {
    pub sample_id: usize,
    pub degradation: String,
    pub proportion: f64,
    pub sisnri_db: f64,
    pub sdr_db: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EvalReport {
    pub model_tag: String,
    pub rows: Vec<EvalRow>,
}

impl EvalReport {
    pub fn mean_sisnri(&self) -> f64 {
        self.rows.iter().map(|r| r.sisnri_db).sum::<f64>() / self.rows.len().max(1) as f64
    }

    pub fn mean_sdr(&self) -> f64 {
        self.rows.iter().map(|r| r.sdr_db).sum::<f64>() / self.rows.len().max(1) as f64
    }

    /// Rows whose degradation label matches.
    pub fn filter(&self, label: &str) -> EvalReport {
        EvalReport {
            model_tag: self.model_tag.clone(),
            rows: self.rows.iter().filter(|r| r.degradation == label).cloned().collect(),
        }
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from(CSV_HEADER);
        out.push('\n');
        for r in &self.rows {
            writeln!(out, "{},{},{},{},{}", r.sample_id, r.degradation, r.proportion, r.sisnri_db, r.sdr_db)
                .expect("writing to a String");
        }
        out
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv())?;
        Ok(())
    }
}

/// Scores `model` on every `(sample, condition)` pair. Rows are sorted by sample id, then
/// condition order.
pub fn run_eval<M: Separator + ?Sized>(
    model: &M,
    samples: &[MixtureSample],
    conditions: &[EvalCondition],
) -> Result<EvalReport> {
    let mut rows = Vec::with_capacity(samples.len() * conditions.len());
    for (id, sample) in samples.iter().enumerate() {
        for cond in conditions {
            let batch = condition_batch(sample, id, cond)?;
            let est = model.separate(&batch)?;
            let est = est.data();
            rows.push(EvalRow {
                sample_id: id,
                degradation: cond.label(),
                proportion: cond.proportion,
                sisnri_db: si_snri(est, &sample.mixture.samples, &sample.target.samples)?,
                sdr_db: sdr(est, &sample.target.samples)?,
            });
        }
    }
    Ok(EvalReport {
        model_tag: model.tag(),
        rows,
    })
}
