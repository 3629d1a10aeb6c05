//! Training loop over a synthetic corpus.

use std::fmt::Write as _;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use cuenet_autograd::optim::{clip_grad_norm, grad_norm, Adam, PlateauScheduler};
use cuenet_autograd::{Graph, ParamId, Session, Tensor};
use cuenet_core::kmeans::Codebook;
use cuenet_core::metrics::si_snri;
use cuenet_core::objectives::{
    ce_loss_var, si_snr_var, stft_mag_loss_var, total_loss, LossBreakdown, LossTerms, LossWeights, StftConfig,
    TERM_NAMES,
};
use cuenet_core::synth::{corpus_manifest, MixtureSample};
use cuenet_core::{Batch, CueNet, Result};

use crate::run_config::RunConfig;
use crate::tokens::TokenTargets;

pub const CHECKPOINT_FILE: &str = "checkpoint.json";
pub const LOG_FILE: &str = "train_log.csv";
pub const CONFIG_FILE: &str = "run.cfg";
pub const ACOUSTIC_CODEBOOK_FILE: &str = "acoustic_codebook.json";
pub const SEMANTIC_CODEBOOK_FILE: &str = "semantic_codebook.json";

pub fn synth_samples(seed: u64, count: usize, num_speakers: usize, duration_s: f64) -> Result<Vec<MixtureSample>> {
    corpus_manifest(seed, count, num_speakers, duration_s)
        .iter()
        .map(|d| d.materialize())
        .collect()
}

/// Weighted loss for one batch. CE terms of disabled cues are left out entirely.
pub fn loss_and_grads(
    model: &CueNet,
    batch: &Batch,
    acoustic_tokens: &[Vec<usize>],
    semantic_tokens: &[Vec<usize>],
    weights: &LossWeights,
    stft: &StftConfig,
) -> Result<(LossBreakdown, Vec<Option<Tensor>>)> {
    let g = Graph::new();
    let s = Session::new(&g, &model.store, true);
    let out = model.forward(&s, batch)?;
    let cues = model.config.cues;
    let neg_sisnr = si_snr_var(out.estimate, &batch.target)?.mean_all().neg();
    let stft_term = stft_mag_loss_var(out.estimate, &batch.target, stft)?.mean_all();
    let speaker = if cues.speaker {
        let ids: Vec<Vec<usize>> = batch.speaker_ids.iter().map(|&i| vec![i]).collect();
        Some(ce_loss_var(out.speaker_logits, &ids)?)
    } else {
        None
    };
    let acoustic = if cues.acoustic {
        Some(ce_loss_var(out.acoustic_logits, acoustic_tokens)?)
    } else {
        None
    };
    let semantic = if cues.semantic {
        Some(ce_loss_var(out.semantic_logits, semantic_tokens)?)
    } else {
        None
    };
    let terms = LossTerms {
        terms: [Some(neg_sisnr), Some(stft_term), speaker, acoustic, semantic],
    };
    let (total, breakdown) = total_loss(&terms, weights)?;
    let grads = g.backward(total);
    Ok((breakdown, s.param_grads(&grads)))
}

/// L2 norm of the gradient restricted to `ids`; untouched parameters count as zero.
pub fn grad_norm_of(grads: &[Option<Tensor>], ids: &[ParamId]) -> f64 {
    ids.iter()
        .filter_map(|&i| grads[i].as_ref())
        .flat_map(|t| t.data().iter())
        .map(|v| v * v)
        .sum::<f64>()
        .sqrt()
}

/// Mean SI-SNRi of the model's estimates over `samples`.
pub fn mean_sisnri(model: &CueNet, samples: &[MixtureSample]) -> Result<f64> {
    let refs: Vec<&MixtureSample> = samples.iter().collect();
    let batch = Batch::from_samples(&refs)?;
    let est = model.separate(&batch)?;
    let len = batch.mixture.dim(1);
    let mut total = 0.0;
    for (i, s) in samples.iter().enumerate() {
        total += si_snri(&est.data()[i * len..(i + 1) * len], &s.mixture.samples, &s.target.samples)?;
    }
    Ok(total / samples.len() as f64)
}

#[derive(Clone, Debug, PartialEq)]
pub struct LogRow {
    pub step: usize,
    pub epoch: usize,
    pub lr: f64,
    pub loss: LossBreakdown,
    pub grad_norm: f64,
    pub train_sisnri: Option<f64>,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct TrainLog {
    pub rows: Vec<LogRow>,
}

impl TrainLog {
    pub fn header() -> String {
        format!("step,epoch,lr,total,{},grad_norm,train_sisnri_db", TERM_NAMES.join(","))
    }

    pub fn to_csv(&self) -> String {
        let opt = |v: Option<f64>| v.map_or_else(String::new, |x| x.to_string());
        let mut out = Self::header();
        out.push('\n');
        for r in &self.rows {
            let terms: Vec<String> = r.loss.terms.iter().map(|&t| opt(t)).collect();
            writeln!(
                out,
                "{},{},{},{},{},{},{}",
                r.step,
                r.epoch,
                r.lr,
                r.loss.total,
                terms.join(","),
                r.grad_norm,
                opt(r.train_sisnri)
            )
            .expect("writing to a String");
        }
        out
    }

    pub fn final_loss(&self) -> Option<f64> {
        self.rows.last().map(|r| r.loss.total)
    }

    /// Most recent training-set SI-SNRi check.
    pub fn last_sisnri(&self) -> Option<f64> {
        self.rows.iter().rev().find_map(|r| r.train_sisnri)
    }
}

pub struct TrainOutcome {
    pub model: CueNet,
    pub tokens: TokenTargets,
    pub samples: Vec<MixtureSample>,
    pub log: TrainLog,
    pub steps_run: usize,
}

impl TrainOutcome {
    /// Writes checkpoint, log, config and codebooks into `dir`.
    pub fn save(&self, cfg: &RunConfig, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        self.model.save(&dir.join(CHECKPOINT_FILE))?;
        std::fs::write(dir.join(LOG_FILE), self.log.to_csv())?;
        std::fs::write(dir.join(CONFIG_FILE), cfg.to_text())?;
        let books: [(&Option<Codebook>, &str); 2] = [
            (&self.tokens.acoustic, ACOUSTIC_CODEBOOK_FILE),
            (&self.tokens.semantic, SEMANTIC_CODEBOOK_FILE),
        ];
        for (cb, name) in books {
            if let Some(cb) = cb {
                cb.save(&dir.join(name))?;
            }
        }
        Ok(())
    }
}

/// Adam over shuffled mini-batches with plateau halving on the epoch-mean loss.
/// `on_row` sees every log row as it is produced.
pub fn run_train_with(cfg: &RunConfig, mut on_row: impl FnMut(&LogRow)) -> Result<TrainOutcome> {
    cfg.validate()?;
    let samples = synth_samples(cfg.data_seed, cfg.train_samples, cfg.num_speakers, cfg.duration_s)?;
    let tokens = TokenTargets::build(&samples, cfg.cues, cfg.acoustic_omega, cfg.token_seed)?;
    let mut model = CueNet::new(cfg.model_config())?;
    let stft = StftConfig::default();
    let mut opt = Adam::new(&model.store, cfg.lr);
    let mut sched = PlateauScheduler::new(cfg.patience, cfg.lr_factor);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.shuffle_seed);
    let mut log = TrainLog::default();
    let mut order: Vec<usize> = (0..samples.len()).collect();
    let (mut step, mut epoch) = (0, 0);

    'train: while step < cfg.steps {
        order.shuffle(&mut rng);
        let (mut epoch_loss, mut batches) = (0.0, 0);
        for idx in order.chunks(cfg.batch_size) {
            if step == cfg.steps {
                break 'train;
            }
            let refs: Vec<&MixtureSample> = idx.iter().map(|&i| &samples[i]).collect();
            let batch = Batch::from_samples(&refs)?;
            let ac: Vec<Vec<usize>> = idx.iter().map(|&i| tokens.acoustic_tokens[i].clone()).collect();
            let se: Vec<Vec<usize>> = idx.iter().map(|&i| tokens.semantic_tokens[i].clone()).collect();
            let (loss, mut grads) = loss_and_grads(&model, &batch, &ac, &se, &cfg.weights, &stft)?;
            let norm = if cfg.grad_clip > 0.0 {
                clip_grad_norm(&mut grads, cfg.grad_clip)
            } else {
                grad_norm(&grads)
            };
            opt.step(&mut model.store, &grads);
            step += 1;
            epoch_loss += loss.total;
            batches += 1;

            let check = cfg.check_every > 0 && (step % cfg.check_every == 0 || step == cfg.steps);
            let train_sisnri = if check { Some(mean_sisnri(&model, &samples)?) } else { None };
            let row = LogRow {
                step,
                epoch,
                lr: opt.lr,
                loss,
                grad_norm: norm,
                train_sisnri,
            };
            on_row(&row);
            log.rows.push(row);
            if let (Some(got), Some(target)) = (train_sisnri, cfg.target_sisnri) {
                if got >= target {
                    break 'train;
                }
            }
        }
        opt.lr = sched.observe(epoch_loss / batches as f64, opt.lr);
        epoch += 1;
    }
    Ok(TrainOutcome {
        model,
        tokens,
        samples,
        log,
        steps_run: step,
    })
}

pub fn run_train(cfg: &RunConfig) -> Result<TrainOutcome> {
    run_train_with(cfg, |_| {})
}
