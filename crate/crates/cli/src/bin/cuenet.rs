use std::error::Error;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use cuenet_cli::sweep::{
    ablation_csv, attention_csv, degradation_sweep, degraded_view, run_ablation, write_sweep, AblationRow, PROPORTIONS,
};
use cuenet_cli::tokens::TokenTargets;
use cuenet_cli::train::{synth_samples, CHECKPOINT_FILE};
use cuenet_cli::{run_train_with, RunConfig};
use cuenet_core::degradation::DegradationKind;
use cuenet_core::eval::EvalCondition;
use cuenet_core::synth::FRAME_SIDE;
use cuenet_core::{CueNet, CueToggles, FusionMode, Preset};

type CliResult<T = ()> = Result<T, Box<dyn Error>>;

#[derive(Parser)]
#[command(name = "cuenet", version, about = "Audio-visual target speaker extraction with multi-cue fusion")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train on the synthetic corpus and write a checkpoint plus training log.
    Train {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long, default_value = "runs/train")]
        out: PathBuf,
    },
    /// Sweep degradation kinds and proportions; writes a clean baseline CSV and one CSV per kind.
    Eval {
        #[command(flatten)]
        run: RunArgs,
        /// Checkpoint file or a training output directory.
        #[arg(long)]
        checkpoint: PathBuf,
        /// Score the training corpus instead of the held-out one.
        #[arg(long)]
        train_set: bool,
        #[arg(long, default_value = "runs/eval")]
        out: PathBuf,
    },
    /// Render one degraded clip as PGM frames plus a per-frame CSV.
    Degrade {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long, default_value = "runs/degrade")]
        out: PathBuf,
    },
    /// Fit codebooks on the training corpus and write per-frame tokens.
    Tokenize {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long, default_value = "runs/tokens")]
        out: PathBuf,
    },
    /// Train every cue combination and the concatenation baseline briefly.
    Ablate {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long, default_value = "runs/ablation.csv")]
        out: PathBuf,
    },
    /// Write attention traces for selected channels of one sample.
    DumpAttention {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long)]
        checkpoint: PathBuf,
        /// Channel indices h, comma separated.
        #[arg(long, value_delimiter = ',', default_value = "0")]
        heads: Vec<usize>,
        /// Index into the held-out corpus.
        #[arg(long, default_value_t = 0)]
        sample: usize,
        #[arg(long, default_value = "runs/attention.csv")]
        out: PathBuf,
    },
}

#[derive(Args, Clone)]
struct RunArgs {
    /// Flat key = value run configuration.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    preset: Option<Preset>,
    /// Enabled cues, e.g. spk,acoustic,semantic or none.
    #[arg(long)]
    cues: Option<CueToggles>,
    #[arg(long)]
    fusion: Option<FusionMode>,
    /// Degradation kinds (gb, cc, mf, fm), comma separated.
    #[arg(long, value_delimiter = ',')]
    degrade: Vec<DegradationKind>,
    /// Corruption proportions, comma separated.
    #[arg(long, value_delimiter = ',')]
    proportion: Vec<f64>,
    /// Derives every seed of the run from this one value.
    #[arg(long)]
    seed: Option<u64>,
    /// Bit-exact reruns (the harness is single-threaded either way).
    #[arg(long)]
    deterministic: bool,
    #[arg(long)]
    steps: Option<usize>,
}

impl RunArgs {
    fn run_config(&self) -> CliResult<RunConfig> {
        let mut cfg = match &self.config {
            Some(p) => RunConfig::load(p)?,
            None => RunConfig::default(),
        };
        if let Some(p) = self.preset {
            cfg.set("preset", &p.to_string())?;
        }
        if let Some(c) = self.cues {
            cfg.cues = c;
        }
        if let Some(f) = self.fusion {
            cfg.fusion = f;
        }
        if let Some(s) = self.seed {
            cfg.data_seed = s;
            cfg.eval_data_seed = s.wrapping_add(1000);
            cfg.init_seed = s;
            cfg.shuffle_seed = s.wrapping_add(1);
            cfg.token_seed = s.wrapping_add(2);
            cfg.degrade_seed = s.wrapping_add(3);
        }
        if let Some(n) = self.steps {
            cfg.steps = n;
        }
        cfg.deterministic |= self.deterministic;
        cfg.validate()?;
        Ok(cfg)
    }

    fn kinds(&self) -> Vec<DegradationKind> {
        if self.degrade.is_empty() {
            DegradationKind::ALL.to_vec()
        } else {
            self.degrade.clone()
        }
    }

    fn proportions(&self) -> Vec<f64> {
        if self.proportion.is_empty() {
            PROPORTIONS.to_vec()
        } else {
            self.proportion.clone()
        }
    }
}

fn load_model(path: &Path) -> CliResult<CueNet> {
    let file = if path.is_dir() { path.join(CHECKPOINT_FILE) } else { path.to_path_buf() };
    if !file.exists() {
        return Err(format!("checkpoint not found: {}", file.display()).into());
    }
    Ok(CueNet::load(&file)?)
}

fn train(run: &RunArgs, out: &Path) -> CliResult {
    let cfg = run.run_config()?;
    eprintln!("training {} preset, cues {}, fusion {}", cfg.preset, cfg.cues, cfg.fusion);
    let outcome = run_train_with(&cfg, |row| {
        if let Some(s) = row.train_sisnri {
            eprintln!("step {:5}  loss {:9.4}  lr {:.2e}  train SI-SNRi {:6.2} dB", row.step, row.loss.total, row.lr, s);
        }
    })?;
    outcome.save(&cfg, out)?;
    eprintln!("{} steps; wrote {}", outcome.steps_run, out.display());
    Ok(())
}

fn eval(run: &RunArgs, checkpoint: &Path, train_set: bool, out: &Path) -> CliResult {
    let cfg = run.run_config()?;
    let model = load_model(checkpoint)?;
    let speakers = model.config.num_speakers;
    let samples = if train_set {
        synth_samples(cfg.data_seed, cfg.train_samples, speakers, cfg.duration_s)?
    } else {
        synth_samples(cfg.eval_data_seed, cfg.eval_samples, speakers, cfg.duration_s)?
    };
    let reports = degradation_sweep(&model, &samples, &run.kinds(), &run.proportions(), cfg.degrade_seed)?;
    for path in write_sweep(out, &reports)? {
        println!("{}", path.display());
    }
    for (label, r) in &reports {
        eprintln!("{label}: mean SI-SNRi {:.2} dB, SDR {:.2} dB", r.mean_sisnri(), r.mean_sdr());
    }
    Ok(())
}

fn degrade(run: &RunArgs, out: &Path) -> CliResult {
    let cfg = run.run_config()?;
    let kind = *run.kinds().first().expect("non-empty");
    let proportion = run.proportion.first().copied().unwrap_or(0.5);
    let sample = synth_samples(cfg.data_seed, 1, cfg.num_speakers, cfg.duration_s)?.remove(0);
    let cond = EvalCondition {
        kind: Some(kind),
        proportion,
        seed: cfg.degrade_seed,
    };
    let (pixels, intact) = degraded_view(&sample, &cond)?;
    std::fs::create_dir_all(out)?;
    let px = FRAME_SIDE * FRAME_SIDE;
    let mut csv = String::from("frame,intact,mean_pixel\n");
    for (t, ok) in intact.iter().enumerate() {
        let frame = &pixels[t * px..(t + 1) * px];
        csv.push_str(&format!("{t},{},{}\n", u8::from(*ok), frame.iter().sum::<f64>() / px as f64));
        let mut f = std::fs::File::create(out.join(format!("frame_{t:03}.pgm")))?;
        write!(f, "P5\n{FRAME_SIDE} {FRAME_SIDE}\n255\n")?;
        let bytes: Vec<u8> = frame.iter().map(|v| (v.clamp(0.0, 1.0) * 255.0).round() as u8).collect();
        f.write_all(&bytes)?;
    }
    std::fs::write(out.join("frames.csv"), csv)?;
    eprintln!(
        "{kind} at p = {proportion}: {} of {} frames altered",
        intact.iter().filter(|k| !**k).count(),
        intact.len()
    );
    Ok(())
}

fn tokenize(run: &RunArgs, out: &Path) -> CliResult {
    let cfg = run.run_config()?;
    let samples = synth_samples(cfg.data_seed, cfg.train_samples, cfg.num_speakers, cfg.duration_s)?;
    let tokens = TokenTargets::build(&samples, cfg.cues, cfg.acoustic_omega, cfg.token_seed)?;
    std::fs::create_dir_all(out)?;
    if let Some(cb) = &tokens.acoustic {
        cb.save(&out.join("acoustic_codebook.json"))?;
    }
    if let Some(cb) = &tokens.semantic {
        cb.save(&out.join("semantic_codebook.json"))?;
    }
    let mut csv = String::from("sample_id,frame,acoustic,semantic\n");
    for i in 0..tokens.len() {
        let (a, s) = (&tokens.acoustic_tokens[i], &tokens.semantic_tokens[i]);
        for t in 0..a.len().max(s.len()) {
            let cell = |v: &Vec<usize>| v.get(t).map_or_else(String::new, |x| x.to_string());
            csv.push_str(&format!("{i},{t},{},{}\n", cell(a), cell(s)));
        }
    }
    std::fs::write(out.join("tokens.csv"), csv)?;
    eprintln!("wrote {}", out.display());
    Ok(())
}

fn ablate(run: &RunArgs, out: &Path) -> CliResult {
    let cfg = run.run_config()?;
    let steps = run.steps.unwrap_or(50);
    eprintln!("{}", AblationRow::HEADER);
    let rows = run_ablation(&cfg, steps, |r| eprintln!("{}", r.csv_line()))?;
    if let Some(dir) = out.parent() {
        std::fs::create_dir_all(dir)?;
    }
    std::fs::write(out, ablation_csv(&rows))?;
    Ok(())
}

fn dump_attention(run: &RunArgs, checkpoint: &Path, heads: &[usize], sample: usize, out: &Path) -> CliResult {
    let cfg = run.run_config()?;
    let model = load_model(checkpoint)?;
    let samples = synth_samples(cfg.eval_data_seed, sample + 1, model.config.num_speakers, cfg.duration_s)?;
    let csv = attention_csv(&model, &samples[sample], heads)?;
    if let Some(dir) = out.parent() {
        std::fs::create_dir_all(dir)?;
    }
    std::fs::write(out, csv)?;
    Ok(())
}

fn main() -> CliResult {
    let cli = Cli::parse();
    match &cli.command {
        Command::Train { run, out } => train(run, out),
        Command::Eval {
            run,
            checkpoint,
            train_set,
            out,
        } => eval(run, checkpoint, *train_set, out),
        Command::Degrade { run, out } => degrade(run, out),
        Command::Tokenize { run, out } => tokenize(run, out),
        Command::Ablate { run, out } => ablate(run, out),
        Command::DumpAttention {
            run,
            checkpoint,
            heads,
            sample,
            out,
        } => dump_attention(run, checkpoint, heads, *sample, out),
    }
}
