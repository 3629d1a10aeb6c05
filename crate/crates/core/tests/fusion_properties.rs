mod common;

use cuenet_autograd::{Graph, ParamStore, Session, Tensor};
use cuenet_core::cues::{circular_cue_conv, fuse_weighted, AttentionFusion, CueInteraction};
use cuenet_core::CueToggles;
use proptest::prelude::*;

use common::{rng, tiny_config};

const H: usize = 4;
const K: usize = 3;
const TV: usize = 6;

/// Plain-loop reference for `R_e[h, k, t] = sum_j psi[j, h, t] * E_j[h, k, t]`.
fn fuse_loop(psi: &Tensor, enhanced: &[Tensor]) -> Vec<f64> {
    let mut out = vec![0.0; H * K * TV];
    for h in 0..H {
        for k in 0..K {
            for t in 0..TV {
                let mut acc = 0.0;
                for (j, e) in enhanced.iter().enumerate() {
                    acc += psi.at(&[0, j, h, t]) * e.at(&[0, h, k, t]);
                }
                out[(h * K + k) * TV + t] = acc;
            }
        }
    }
    out
}

/// Plain-loop reference for the circular convolution across the cue axis.
fn circular_loop(x: &Tensor, w: &Tensor) -> Vec<f64> {
    let (j_len, h_len, t_len, kj) = (x.dim(1), x.dim(2), x.dim(3), w.dim(1));
    let mut out = vec![0.0; j_len * h_len * t_len];
    for j in 0..j_len {
        for h in 0..h_len {
            for t in 0..t_len {
                let mut acc = 0.0;
                for d in 0..kj {
                    let src = (j + j_len + d - kj / 2) % j_len;
                    acc += w.at(&[h, d]) * x.at(&[0, src, h, t]);
                }
                out[(j * h_len + h) * t_len + t] = acc;
            }
        }
    }
    out
}

fn tensor(shape: &[usize], data: Vec<f64>) -> Tensor {
    Tensor::new(shape.to_vec(), data)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn psi_sums_to_one(rels in prop::collection::vec(-30.0f64..30.0, 3 * H * TV), seed in 0u64..1000, mask in 0usize..8) {
        let mut store = ParamStore::new();
        let fusion = AttentionFusion::new(&mut store, "f", &tiny_config(H), &mut rng(seed));
        let g = Graph::new();
        let s = Session::new(&g, &store, false);
        let enabled = [mask & 1 != 0, mask & 2 != 0, mask & 4 != 0];
        let psi = fusion.weights(&s, s.constant(tensor(&[1, 3, H, TV], rels)), enabled);
        let psi = psi.value();
        let some_on = enabled.iter().any(|&e| e);
        for h in 0..H {
            for t in 0..TV {
                let col: Vec<f64> = (0..3).map(|j| psi.at(&[0, j, h, t])).collect();
                prop_assert!((col.iter().sum::<f64>() - 1.0).abs() < 1e-6);
                for j in 0..3 {
                    prop_assert!(col[j] >= 0.0);
                    if some_on && !enabled[j] {
                        prop_assert_eq!(col[j], 0.0);
                    }
                }
            }
        }
    }

    #[test]
    fn fused_matches_loop(
        logits in prop::collection::vec(-5.0f64..5.0, 3 * H * TV),
        e in prop::collection::vec(-3.0f64..3.0, 3 * H * K * TV),
    ) {
        let g = Graph::new();
        let psi = g.constant(tensor(&[1, 3, H, TV], logits)).softmax(1);
        let enhanced: Vec<Tensor> = e.chunks(H * K * TV).map(|c| tensor(&[1, H, K, TV], c.to_vec())).collect();
        let vars: Vec<_> = enhanced.iter().map(|t| g.constant(t.clone())).collect();
        let fused = fuse_weighted(psi, &vars);
        let want = fuse_loop(&psi.value(), &enhanced);
        for (a, b) in fused.value().data().iter().zip(&want) {
            prop_assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn one_hot_psi_selects_exactly(pick in 0usize..3, e in prop::collection::vec(-3.0f64..3.0, 3 * H * K * TV)) {
        let g = Graph::new();
        let psi = Tensor::from_fn(&[1, 3, H, TV], |i| if i / (H * TV) == pick { 1.0 } else { 0.0 });
        let enhanced: Vec<Tensor> = e.chunks(H * K * TV).map(|c| tensor(&[1, H, K, TV], c.to_vec())).collect();
        let vars: Vec<_> = enhanced.iter().map(|t| g.constant(t.clone())).collect();
        let fused = fuse_weighted(g.constant(psi), &vars);
        let out = fused.value();
        prop_assert_eq!(out.data(), enhanced[pick].data());
    }

    #[test]
    fn circular_conv_matches_loop(x in prop::collection::vec(-2.0f64..2.0, 3 * H * TV), w in prop::collection::vec(-1.0f64..1.0, H * 3)) {
        let g = Graph::new();
        let (xt, wt) = (tensor(&[1, 3, H, TV], x), tensor(&[H, 3], w));
        let y = circular_cue_conv(g.constant(xt.clone()), g.constant(wt.clone()));
        for (a, b) in y.value().data().iter().zip(circular_loop(&xt, &wt)) {
            prop_assert!((a - b).abs() < 1e-12);
        }
    }
}

#[test]
fn disabled_cue_is_zero_reliability_and_identity_enhancement() {
    for cues in CueToggles::all_combinations() {
        let mut cfg = tiny_config(H);
        cfg.cues = cues;
        let mut store = ParamStore::new();
        let mut r = rng(9);
        let module = CueInteraction::new(&mut store, "c", &cfg, &mut r);
        let g = Graph::new();
        let s = Session::new(&g, &store, false);
        let context = s.constant(Tensor::randn(&[1, H, K, TV], 1.0, &mut r));
        let spk = s.constant(Tensor::randn(&[1, H], 1.0, &mut r));
        let ac = s.constant(Tensor::randn(&[1, H, TV], 1.0, &mut r));
        let se = s.constant(Tensor::randn(&[1, H, TV], 1.0, &mut r));
        let out = module.forward(&s, context, [spk, ac, se]);
        let rels = out.reliabilities.value();
        for (j, on) in cues.as_array().into_iter().enumerate() {
            let block = &rels.data()[j * H * TV..(j + 1) * H * TV];
            assert_eq!(block.iter().any(|&v| v != 0.0), on, "{cues} branch {j}");
        }
        if cues == CueToggles::NONE {
            // every branch is the identity, so fusion returns the context itself
            assert!(out.fused.value().max_abs_diff(&context.value()) < 1e-12);
        }
    }
}
