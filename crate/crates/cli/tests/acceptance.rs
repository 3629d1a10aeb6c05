//! End-to-end acceptance run. Prints one PASS/FAIL line per criterion and exits non-zero
//! if any fails. `CUENET_ONLY=3,7` restricts the run to the listed criteria.

use std::f64::consts::PI;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use cuenet_autograd::{Graph, ParamStore, Session, Tensor, Var};
use cuenet_cli::sweep::{degradation_sweep, run_ablation, write_sweep};
use cuenet_cli::train::{mean_sisnri, synth_samples};
use cuenet_cli::{run_train, RunConfig};
use cuenet_core::backend::{CrossAttention, DualStream};
use cuenet_core::config::{ModelConfig, Preset};
use cuenet_core::cues::{fuse_weighted, AttentionFusion, CueBranch};
use cuenet_core::degradation::{
    degrade_frames, mask_feature_columns, sample_mask_blocks, DegradationKind, DegradationSpec,
};
use cuenet_core::features::{analysis_frames, frame_pitch, extract_frame_feats, FeatureKind};
use cuenet_core::frontends::{padded_feature_len, raw_feature_len};
use cuenet_core::kmeans::{fit_kmeans, pool_columns, tokenize};
use cuenet_core::learner::{eval_with, zero_params, Interaction};
use cuenet_core::metrics::si_snri;
use cuenet_core::objectives::{ce_token_loss, si_snr, stft_mag_loss, StftConfig};
use cuenet_core::synth::{frames_for_samples, synth_av_pair, Waveform, SAMPLE_RATE};
use cuenet_core::{Batch, CueNet, CueToggles, FusionMode};

type Outcome = Result<String, String>;

fn check(cond: bool, what: impl Into<String>) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(what.into())
    }
}

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn random_vec(r: &mut ChaCha8Rng, len: usize) -> Vec<f64> {
    (0..len).map(|_| r.gen_range(-1.0..1.0)).collect()
}

// ---------------------------------------------------------------------------------------
// Independent oracles

/// Scale-invariant SNR straight from its definition.
fn si_snr_direct(est: &[f64], r: &[f64]) -> f64 {
    let dot: f64 = est.iter().zip(r).map(|(a, b)| a * b).sum();
    let rr: f64 = r.iter().map(|b| b * b).sum();
    let alpha = dot / rr;
    let (mut pt, mut pn) = (0.0, 0.0);
    for (e, b) in est.iter().zip(r) {
        let t = alpha * b;
        pt += t * t;
        pn += (e - t) * (e - t);
    }
    10.0 * (pt / pn).log10()
}

/// Multi-resolution magnitude loss by direct DFT summation: centred frames every `hop`
/// samples (zero outside the signal), periodic Hann taper, one-sided bins, mean over
/// frames and bins, summed over resolutions.
fn stft_loss_direct(est: &[f64], r: &[f64], cfg: &StftConfig) -> f64 {
    let mut total = 0.0;
    for &(w, hop) in &cfg.resolutions {
        let frames = est.len() / hop + 1;
        let bins = w / 2 + 1;
        let taper: Vec<f64> = (0..w).map(|n| 0.5 - 0.5 * (2.0 * PI * n as f64 / w as f64).cos()).collect();
        let mag = |x: &[f64], m: usize, k: usize| {
            let (mut re, mut im) = (0.0, 0.0);
            for n in 0..w {
                let i = (m * hop + n) as isize - (w / 2) as isize;
                if i < 0 || i as usize >= x.len() {
                    continue;
                }
                let v = x[i as usize] * taper[n];
                let ph = -2.0 * PI * (k * n % w) as f64 / w as f64;
                re += v * ph.cos();
                im += v * ph.sin();
            }
            (re * re + im * im).sqrt()
        };
        let mut acc = 0.0;
        for m in 0..frames {
            for k in 0..bins {
                acc += (mag(est, m, k) - mag(r, m, k)).abs();
            }
        }
        total += acc / (frames * bins) as f64;
    }
    total
}

fn cotangent(shape: &[usize]) -> Tensor {
    Tensor::from_fn(shape, |i| 2.0 * ((i as f64 + 1.0) * 0.618_033_988_749_894_9).fract() - 0.9)
}

/// Worst relative L2 error between analytic and central-difference gradients over the
/// inputs and every parameter of `store`.
fn module_gradcheck<F>(store: &ParamStore, inputs: &[Tensor], step: f64, f: F) -> f64
where
    F: for<'g> Fn(&Session<'g>, &[Var<'g>]) -> Var<'g>,
{
    let g = Graph::new();
    let s = Session::new(&g, store, true);
    let leaves: Vec<Var> = inputs.iter().map(|t| g.leaf(t.clone())).collect();
    let out = f(&s, &leaves);
    let w = cotangent(&out.shape());
    let grads = g.backward_with(out, w.clone());
    let mut analytic: Vec<Tensor> = leaves
        .iter()
        .zip(inputs)
        .map(|(l, t)| grads.get(*l).cloned().unwrap_or_else(|| Tensor::zeros(t.shape())))
        .collect();
    for (id, pg) in s.param_grads(&grads).into_iter().enumerate() {
        analytic.push(pg.unwrap_or_else(|| Tensor::zeros(store.get(id).shape())));
    }
    let eval = |st: &ParamStore, xs: &[Tensor]| -> f64 {
        let g = Graph::new();
        let s = Session::new(&g, st, false);
        let vars: Vec<Var> = xs.iter().map(|t| g.constant(t.clone())).collect();
        f(&s, &vars).value().data().iter().zip(w.data()).map(|(a, b)| a * b).sum()
    };
    let n_in = inputs.len();
    let slot = |xs: &mut Vec<Tensor>, st: &mut ParamStore, k: usize, i: usize, v: Option<f64>| -> f64 {
        let cell = if k < n_in {
            &mut xs[k].data_mut()[i]
        } else {
            &mut st.get_mut(k - n_in).data_mut()[i]
        };
        let old = *cell;
        if let Some(v) = v {
            *cell = v;
        }
        old
    };
    let (mut xs, mut st) = (inputs.to_vec(), store.clone());
    let mut worst = 0.0f64;
    for (k, a) in analytic.iter().enumerate() {
        let mut numeric = Tensor::zeros(a.shape());
        for i in 0..a.len() {
            let orig = slot(&mut xs, &mut st, k, i, None);
            slot(&mut xs, &mut st, k, i, Some(orig + step));
            let plus = eval(&st, &xs);
            slot(&mut xs, &mut st, k, i, Some(orig - step));
            let minus = eval(&st, &xs);
            slot(&mut xs, &mut st, k, i, Some(orig));
            numeric.data_mut()[i] = (plus - minus) / (2.0 * step);
        }
        let diff = a.zip_map(&numeric, |x, y| x - y).sq_norm().sqrt();
        let denom = a.sq_norm().sqrt().max(numeric.sq_norm().sqrt());
        if denom > 0.0 {
            worst = worst.max(diff / denom);
        }
    }
    worst
}

// ---------------------------------------------------------------------------------------
// Criteria

fn shape_pipeline() -> Outcome {
    let len = 2 * SAMPLE_RATE;
    let mut cfg = ModelConfig::preset(Preset::Full, 4);
    // full front-end geometry; the learner width is narrowed so one CPU pass stays short
    cfg.hidden = 8;
    cfg.lstm_hidden = 8;
    cfg.backend_blocks = 1;
    cfg.visual_channels = [4, 8, 16];
    let raw = raw_feature_len(len, cfg.enc_kernel, cfg.enc_stride).map_err(|e| e.to_string())?;
    let tv = frames_for_samples(len);
    let padded = padded_feature_len(tv, cfg.chunk_len);
    check(raw == 1599 && padded == 1632 && tv == 50, format!("lengths {raw}/{padded}/{tv}"))?;

    let model = CueNet::new(cfg.clone()).map_err(|e| e.to_string())?;
    let sample = synth_samples(1, 1, 4, 2.0).map_err(|e| e.to_string())?.remove(0);
    let batch = Batch::from_samples(&[&sample]).map_err(|e| e.to_string())?;
    let start = Instant::now();
    let g = Graph::new();
    let s = Session::new(&g, &model.store, false);
    let out = model.forward(&s, &batch).map_err(|e| e.to_string())?;
    let elapsed = start.elapsed().as_secs_f64();
    let psi = out.psi.ok_or("no attention weights")?.shape();
    let mask = out.mask.shape();
    let h = cfg.hidden;
    check(psi == [1, 3, h, 50], format!("psi {psi:?}"))?;
    check(mask == [1, 256, 64, 50], format!("mask {mask:?}"))?;
    check(out.estimate.shape() == [1, len], "estimate length")?;
    check(elapsed < 1.0, format!("forward took {elapsed:.3} s"))?;
    Ok(format!("T_f 1599/1632, T_v 50, psi 3x{h}x50, mask 256x64x50, {elapsed:.3} s"))
}

fn si_snr_oracle() -> Outcome {
    let mut r = rng(2);
    let mut worst = 0.0f64;
    let mut worst_scale = 0.0f64;
    for _ in 0..1000 {
        let len = r.gen_range(8..256);
        let (est, refv) = (random_vec(&mut r, len), random_vec(&mut r, len));
        let got = si_snr(&est, &refv).map_err(|e| e.to_string())?;
        worst = worst.max((got - si_snr_direct(&est, &refv)).abs());
        for a in [0.1, 2.0, 100.0] {
            let scaled: Vec<f64> = est.iter().map(|v| a * v).collect();
            worst_scale = worst_scale.max((si_snr(&scaled, &refv).map_err(|e| e.to_string())? - got).abs());
        }
    }
    let hand = si_snr(&[1.0, 0.0], &[1.0, 1.0]).map_err(|e| e.to_string())?;
    check(worst < 1e-9, format!("oracle gap {worst:e} dB"))?;
    check(worst_scale < 1e-6, format!("scale gap {worst_scale:e} dB"))?;
    check(hand == 0.0, format!("hand case {hand}"))?;
    Ok(format!("max gap {worst:.1e} dB, scale gap {worst_scale:.1e} dB, hand case {hand} dB"))
}

fn si_snri_identity() -> Outcome {
    let mut r = rng(3);
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let len = r.gen_range(16..512);
        let (target, interferer) = (random_vec(&mut r, len), random_vec(&mut r, len));
        let mix: Vec<f64> = target.iter().zip(&interferer).map(|(a, b)| a + b).collect();
        worst = worst.max(si_snri(&mix, &mix, &target).map_err(|e| e.to_string())?.abs());
    }
    check(worst < 1e-9, format!("max |SI-SNRi| {worst:e}"))?;
    Ok(format!("max |SI-SNRi(mix, mix)| = {worst:.1e} dB over 100 mixtures"))
}

fn stft_loss() -> Outcome {
    let cfg = StftConfig::default();
    let len = 4000;
    let sine: Vec<f64> = (0..len).map(|n| (2.0 * PI * 440.0 * n as f64 / SAMPLE_RATE as f64).sin()).collect();
    let neg: Vec<f64> = sine.iter().map(|v| -v).collect();
    let zero = vec![0.0; len];
    let e = |a: &[f64], b: &[f64]| stft_mag_loss(a, b, &cfg).map_err(|e| e.to_string());
    let same = e(&sine, &sine)?;
    let flipped = e(&neg, &sine)?;
    let silent = e(&zero, &sine)?;
    let direct = stft_loss_direct(&zero, &sine, &cfg);
    check(same == 0.0 && flipped == 0.0, format!("ref {same:e}, -ref {flipped:e}"))?;
    check(silent > 0.0, "loss of silence is not positive")?;
    check((silent - direct).abs() < 1e-9, format!("fft {silent} vs direct {direct}"))?;
    Ok(format!("0 at ref and -ref; silence {silent:.9} vs direct sum {direct:.9}"))
}

fn ce_closed_form() -> Outcome {
    let tokens: Vec<usize> = (0..50).map(|t| (t * 7) % 48).collect();
    let l = ce_token_loss(&Tensor::zeros(&[48, 50]), &tokens).map_err(|e| e.to_string())?;
    check((l - 48f64.ln()).abs() < 1e-6 && (l - 3.8712).abs() < 1e-4, format!("got {l}"))?;
    Ok(format!("uniform logits over 48 classes give {l:.6}"))
}

fn fusion_properties() -> Outcome {
    let (h, k, tv) = (8, 8, 6);
    let mut cfg = ModelConfig::preset(Preset::Toy, 4);
    cfg.hidden = h;
    let mut store = ParamStore::new();
    let mut r = rng(6);
    let fusion = AttentionFusion::new(&mut store, "f", &cfg, &mut r);
    let rels = Tensor::randn(&[1, 3, h, tv], 3.0, &mut r);
    let enhanced: Vec<Tensor> = (0..3).map(|_| Tensor::randn(&[1, h, k, tv], 1.0, &mut r)).collect();
    let g = Graph::new();
    let s = Session::new(&g, &store, false);
    let psi = fusion.weights(&s, s.constant(rels), [true; 3]);
    let ev: Vec<Var> = enhanced.iter().map(|t| s.constant(t.clone())).collect();
    let fused = fuse_weighted(psi, &ev).value();
    let p = psi.value();

    let mut sum_gap = 0.0f64;
    for hh in 0..h {
        for t in 0..tv {
            let total: f64 = (0..3).map(|j| p.at(&[0, j, hh, t])).sum();
            sum_gap = sum_gap.max((total - 1.0).abs());
        }
    }
    let mut loop_gap = 0.0f64;
    for hh in 0..h {
        for kk in 0..k {
            for t in 0..tv {
                let want: f64 = (0..3).map(|j| p.at(&[0, j, hh, t]) * enhanced[j].at(&[0, hh, kk, t])).sum();
                loop_gap = loop_gap.max((fused.at(&[0, hh, kk, t]) - want).abs());
            }
        }
    }
    let mut one_hot_exact = true;
    for pick in 0..3 {
        let onehot = Tensor::from_fn(&[1, 3, h, tv], |i| if i / (h * tv) == pick { 1.0 } else { 0.0 });
        let y = fuse_weighted(g.constant(onehot), &ev).value();
        one_hot_exact &= y.data() == enhanced[pick].data();
    }
    check(sum_gap < 1e-6, format!("psi sum gap {sum_gap:e}"))?;
    check(one_hot_exact, "one-hot psi did not select exactly")?;
    check(loop_gap < 1e-12, format!("loop gap {loop_gap:e}"))?;
    Ok(format!("psi sum gap {sum_gap:.1e}, one-hot exact, loop gap {loop_gap:.1e}"))
}

fn gradient_checks() -> Outcome {
    let (h, k, tv, step) = (8, 8, 4, 1e-5);
    let start = Instant::now();
    let mut r = rng(7);
    let mut cfg = ModelConfig::preset(Preset::Toy, 4);
    cfg.hidden = h;

    let mut store = ParamStore::new();
    let inter = Interaction::new(&mut store, "i", h, 3, &mut r);
    let audio = Tensor::randn(&[1, h, k, tv], 1.0, &mut r);
    let visual = Tensor::randn(&[1, h, tv], 1.0, &mut r);
    let e_int = module_gradcheck(&store, &[audio, visual], step, |s, x| {
        let (a, c) = inter.forward(s, x[0], x[1]).expect("aligned shapes");
        a.mean_axis(2).reshape(&[1, h, tv]).add(c)
    });

    let mut store = ParamStore::new();
    let branch = CueBranch::new(&mut store, "b", h, 3, &mut r);
    let cue = Tensor::randn(&[1, h, tv], 1.0, &mut r);
    let ctx = Tensor::randn(&[1, h, k, tv], 1.0, &mut r);
    let e_rel = module_gradcheck(&store, &[cue.clone(), ctx.clone()], step, |s, x| branch.reliability(s, x[0], x[1]));
    let e_enh = module_gradcheck(&store, &[cue, ctx], step, |s, x| branch.enhance(s, x[0], x[1]));

    let mut store = ParamStore::new();
    let fusion = AttentionFusion::new(&mut store, "f", &cfg, &mut r);
    let mut inputs = vec![Tensor::randn(&[1, 3, h, tv], 1.0, &mut r)];
    inputs.extend((0..3).map(|_| Tensor::randn(&[1, h, k, tv], 1.0, &mut r)));
    let e_fuse = module_gradcheck(&store, &inputs, step, |s, x| {
        fuse_weighted(fusion.weights(s, x[0], [true; 3]), &x[1..4])
    });

    let elapsed = start.elapsed().as_secs_f64();
    let worst = e_int.max(e_rel).max(e_enh).max(e_fuse);
    let summary = format!(
        "interact {e_int:.1e}, reliability {e_rel:.1e}, enhance {e_enh:.1e}, fuse {e_fuse:.1e}, {elapsed:.1} s"
    );
    check(worst < 1e-4 && elapsed < 60.0, summary.clone())?;
    Ok(summary)
}

fn residual_identities() -> Outcome {
    let (h, k, tv) = (8, 6, 5);
    let mut r = rng(8);

    let mut store = ParamStore::new();
    let inter = Interaction::new(&mut store, "i", h, 3, &mut r);
    zero_params(&mut store, &inter.output_params());
    let a = Tensor::randn(&[2, h, k, tv], 1.0, &mut r);
    let c = Tensor::randn(&[2, h, tv], 1.0, &mut r);
    let (a2, c2) = {
        let g = Graph::new();
        let s = Session::new(&g, &store, false);
        let (x, y) = inter.forward(&s, s.constant(a.clone()), s.constant(c.clone())).map_err(|e| e.to_string())?;
        ((*x.value()).clone(), (*y.value()).clone())
    };
    check(a2 == a && c2 == c, "interact is not an identity")?;

    let mut store = ParamStore::new();
    let branch = CueBranch::new(&mut store, "b", h, 3, &mut r);
    zero_params(&mut store, &branch.output_params());
    let cue = Tensor::randn(&[2, h, tv], 1.0, &mut r);
    let enh = eval_with(&store, |s| branch.enhance(s, s.constant(cue.clone()), s.constant(a.clone())));
    check(enh == a, "cue_enhance is not an identity")?;

    let mut store = ParamStore::new();
    let cross = CrossAttention::new(&mut store, "x", h, &mut r);
    zero_params(&mut store, &cross.output_params());
    let other = Tensor::randn(&[2, h, k, tv], 1.0, &mut r);
    let (t2, i2) = {
        let g = Graph::new();
        let s = Session::new(&g, &store, false);
        let out = cross.forward(
            &s,
            DualStream {
                target: s.constant(a.clone()),
                interference: s.constant(other.clone()),
            },
        );
        ((*out.target.value()).clone(), (*out.interference.value()).clone())
    };
    check(t2 == a && i2 == other, "cross-attention is not an identity")?;
    Ok("interact, cue_enhance and cross-attention are exact identities".into())
}

fn degradation_protocol() -> Outcome {
    let mask = sample_mask_blocks(50, 0.5, 5, 7).map_err(|e| e.to_string())?;
    check(mask.count() == 25, format!("{} frames masked", mask.count()))?;
    check(
        mask.blocks.len() == 5 && mask.blocks.iter().all(|&(_, l)| l == 5),
        format!("blocks {:?}", mask.blocks),
    )?;
    let disjoint = mask.blocks.windows(2).all(|w| w[0].0 + w[0].1 <= w[1].0);
    check(disjoint, "blocks overlap")?;

    let (_, video) = synth_av_pair(3, 2.0, 1).map_err(|e| e.to_string())?;
    let feat = Tensor::randn(&[16, 50], 1.0, &mut rng(9));
    let zero_cols = |t: &Tensor| (0..50).filter(|&j| (0..16).all(|c| t.at(&[c, j]) == 0.0)).count();
    let mf = mask_feature_columns(&feat, &mask).map_err(|e| e.to_string())?;
    check(zero_cols(&mf) == 25, "MF did not zero 25 columns")?;

    for kind in DegradationKind::ALL {
        let empty = sample_mask_blocks(50, 0.0, 5, 11).map_err(|e| e.to_string())?;
        if kind.acts_on_features() {
            let a = mask_feature_columns(&feat, &mask).map_err(|e| e.to_string())?;
            check(a == mf, "MF not deterministic")?;
            check(mask_feature_columns(&feat, &empty).map_err(|e| e.to_string())? == feat, "MF p=0 changed features")?;
            continue;
        }
        let spec = DegradationSpec::new(kind, mask.clone());
        let a = degrade_frames(&video, &spec, 21).map_err(|e| e.to_string())?;
        let b = degrade_frames(&video, &spec, 21).map_err(|e| e.to_string())?;
        check(a == b, format!("{kind} not deterministic"))?;
        let noop = degrade_frames(&video, &DegradationSpec::new(kind, empty), 21).map_err(|e| e.to_string())?;
        check(noop.pixels == video.pixels, format!("{kind} at p=0 changed pixels"))?;
    }
    Ok(format!("25 frames in blocks {:?}; seeded; p=0 no-op for gb, cc, mf, fm", mask.blocks))
}

fn tokenizer_oracles() -> Outcome {
    let pair = Tensor::new(vec![2, 1], vec![0.0, 10.0]);
    let fit = fit_kmeans(&pair, 2, 1).map_err(|e| e.to_string())?;
    let mut c = fit.codebook.centroids.clone();
    c.sort_by(f64::total_cmp);
    check(c == [0.0, 10.0], format!("centroids {c:?}"))?;

    let clips: Vec<Waveform> = (0..3)
        .map(|i| synth_av_pair(i, 1.0, i as usize).map(|p| p.0))
        .collect::<Result<_, _>>()
        .map_err(|e| e.to_string())?;
    let feats: Vec<_> = clips
        .iter()
        .map(|w| extract_frame_feats(w, FeatureKind::Acoustic))
        .collect::<Result<_, _>>()
        .map_err(|e| e.to_string())?;
    let points = pool_columns(&feats).map_err(|e| e.to_string())?;
    let fit = fit_kmeans(&points, 8, 4).map_err(|e| e.to_string())?;
    let monotone = fit.inertia.windows(2).all(|w| w[1] <= w[0]);
    check(monotone, format!("inertia {:?}", fit.inertia))?;

    let cb = &fit.codebook;
    let mut mismatches = 0;
    for f in &feats {
        let toks = tokenize(f, cb).map_err(|e| e.to_string())?;
        for (t, &tok) in toks.iter().enumerate() {
            let col = f.column(t);
            let mut best = (0, f64::INFINITY);
            for j in 0..cb.omega {
                let d: f64 = col.iter().zip(cb.centroid(j)).map(|(a, b)| (a - b) * (a - b)).sum();
                if d < best.1 {
                    best = (j, d);
                }
            }
            mismatches += usize::from(best.0 != tok);
        }
    }
    check(mismatches == 0, format!("{mismatches} tokens differ from the brute-force loop"))?;

    let sine = Waveform::new((0..32000).map(|n| (2.0 * PI * 200.0 * n as f64 / SAMPLE_RATE as f64).sin()).collect());
    let frames = analysis_frames(&sine).map_err(|e| e.to_string())?;
    let interior = &frames[1..frames.len() - 1];
    let worst = interior.iter().map(|f| (frame_pitch(f) - 200.0).abs()).fold(0.0, f64::max);
    check(worst < 2.0, format!("pitch error {worst} Hz"))?;
    Ok(format!(
        "{{0,10}} recovered; {} inertia steps non-increasing; tokens match loop; 200 Hz pitch err {worst:.3} Hz",
        fit.inertia.len()
    ))
}

fn overfit_sanity() -> Outcome {
    let mut cfg = RunConfig::for_preset(Preset::Toy);
    cfg.train_samples = 8;
    cfg.steps = 2000;
    cfg.check_every = 50;
    cfg.target_sisnri = Some(10.0);
    cfg.deterministic = true;
    let start = Instant::now();
    let out = run_train(&cfg).map_err(|e| e.to_string())?;
    let minutes = start.elapsed().as_secs_f64() / 60.0;
    // rescored from scratch rather than read back from the log
    let score = mean_sisnri(&out.model, &out.samples).map_err(|e| e.to_string())?;
    let summary = format!("{score:.2} dB training SI-SNRi after {} steps in {minutes:.1} min", out.steps_run);
    check(score >= 10.0 && out.steps_run <= 2000 && minutes < 30.0, summary.clone())?;
    Ok(summary)
}

fn ablation_surface() -> Outcome {
    let mut base = RunConfig::for_preset(Preset::Toy);
    base.deterministic = true;
    let rows = run_ablation(&base, 50, |_| {}).map_err(|e| e.to_string())?;
    check(rows.len() == 9, format!("{} configurations ran", rows.len()))?;
    for row in &rows {
        check(row.steps == 50 && row.final_loss.is_finite(), format!("{} did not train", row.cues))?;
        for (j, on) in row.cues.as_array().into_iter().enumerate() {
            let g = row.head_grad_norms[j];
            check(on == (g > 0.0), format!("{} {:?}: head {j} grad norm {g}", row.cues, row.fusion))?;
        }
    }
    let all_on = rows.iter().find(|r| r.cues == CueToggles::ALL && r.fusion == FusionMode::Interaction);
    let all_off = rows.iter().find(|r| r.cues == CueToggles::NONE);
    let (on, off) = (all_on.ok_or("missing all-on")?.num_params, all_off.ok_or("missing all-off")?.num_params);
    check(off < on, format!("params off {off} vs on {on}"))?;
    Ok(format!("8 cue combinations + concat trained 50 steps; disabled heads get zero gradient; params {off} < {on}"))
}

fn determinism() -> Outcome {
    let mut cfg = RunConfig::for_preset(Preset::Toy);
    cfg.steps = 12;
    cfg.check_every = 6;
    cfg.eval_samples = 2;
    cfg.deterministic = true;
    let run = |dir: &std::path::Path| -> Result<(String, Vec<String>), String> {
        let out = run_train(&cfg).map_err(|e| e.to_string())?;
        out.save(&cfg, dir).map_err(|e| e.to_string())?;
        let model = CueNet::load(&dir.join(cuenet_cli::train::CHECKPOINT_FILE)).map_err(|e| e.to_string())?;
        let samples = synth_samples(cfg.eval_data_seed, cfg.eval_samples, cfg.num_speakers, cfg.duration_s)
            .map_err(|e| e.to_string())?;
        let reports = degradation_sweep(&model, &samples, &DegradationKind::ALL, &[0.0, 0.5], cfg.degrade_seed)
            .map_err(|e| e.to_string())?;
        let paths = write_sweep(&dir.join("eval"), &reports).map_err(|e| e.to_string())?;
        let log = std::fs::read_to_string(dir.join(cuenet_cli::train::LOG_FILE)).map_err(|e| e.to_string())?;
        let csvs = paths
            .iter()
            .map(|p| std::fs::read_to_string(p).map_err(|e| e.to_string()))
            .collect::<Result<_, _>>()?;
        Ok((log, csvs))
    };
    let (d1, d2) = (tempfile::tempdir().map_err(|e| e.to_string())?, tempfile::tempdir().map_err(|e| e.to_string())?);
    let (log1, csv1) = run(d1.path())?;
    let (log2, csv2) = run(d2.path())?;
    check(log1 == log2, "training logs differ")?;
    check(csv1 == csv2, "eval CSVs differ")?;
    Ok(format!("training log ({} bytes) and {} eval CSVs bit-identical across runs", log1.len(), csv1.len()))
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 13] = [
        ("shape pipeline", shape_pipeline),
        ("SI-SNR oracle", si_snr_oracle),
        ("SI-SNRi identity", si_snri_identity),
        ("STFT loss", stft_loss),
        ("CE closed form", ce_closed_form),
        ("fusion properties", fusion_properties),
        ("gradient checks", gradient_checks),
        ("residual identities", residual_identities),
        ("degradation protocol", degradation_protocol),
        ("tokenizer oracles", tokenizer_oracles),
        ("overfit sanity", overfit_sanity),
        ("ablation surface", ablation_surface),
        ("determinism", determinism),
    ];
    let only: Option<Vec<usize>> = std::env::var("CUENET_ONLY")
        .ok()
        .map(|v| v.split(',').filter_map(|x| x.trim().parse().ok()).collect());
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        let n = i + 1;
        if only.as_ref().is_some_and(|o| !o.contains(&n)) {
            continue;
        }
        let start = Instant::now();
        let result = std::panic::catch_unwind(run).unwrap_or_else(|_| Err("panicked".into()));
        let secs = start.elapsed().as_secs_f64();
        match result {
            Ok(msg) => println!("PASS  {n:2}. {name}: {msg} [{secs:.1} s]"),
            Err(msg) => {
                failed += 1;
                println!("FAIL  {n:2}. {name}: {msg} [{secs:.1} s]");
            }
        }
    }
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}
