use cuenet_autograd::gradcheck::check;
use cuenet_autograd::ops::{concat, stack, weighted_sum, Conv1dGeometry};
use cuenet_autograd::{Graph, Tensor};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const STEP: f64 = 1e-5;
const TOL: f64 = 1e-6;

fn rnd(shape: &[usize], seed: u64) -> Tensor {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Tensor::randn(shape, 1.0, &mut rng)
}

fn assert_ok(name: &str, r: cuenet_autograd::gradcheck::GradCheckReport) {
    assert!(
        r.max_rel_error() < TOL,
        "{name}: rel errors {:?} (norms {:?})",
        r.rel_errors,
        r.grad_norms
    );
}

#[test]
fn elementwise_ops() {
    let a = rnd(&[3, 4], 1);
    let b = rnd(&[3, 4], 2);
    assert_ok("add/sub/mul", check(&[a.clone(), b.clone()], STEP, |_, v| v[0].add(v[1]).mul(v[0]).sub(v[1].scale(0.3))));
    assert_ok("sigmoid/tanh", check(&[a.clone()], STEP, |_, v| v[0].sigmoid().mul(v[0].tanh()).add_scalar(1.0)));
    assert_ok("square/neg", check(&[a.clone()], STEP, |_, v| v[0].square().neg()));
    let alpha = Tensor::new(vec![1], vec![0.2]);
    assert_ok("prelu", check(&[a.clone(), alpha], STEP, |_, v| v[0].prelu(v[1])));
    // keep away from the kink
    let shifted = a.map(|x| if x.abs() < 0.05 { x + 0.2 } else { x });
    assert_ok("relu", check(&[shifted], STEP, |_, v| v[0].relu()));
}

#[test]
fn shape_ops() {
    let a = rnd(&[2, 3, 4], 3);
    assert_ok("permute", check(&[a.clone()], STEP, |_, v| v[0].permute(&[2, 0, 1]).reshape(&[4, 6])));
    assert_ok("sum/mean", check(&[a.clone()], STEP, |_, v| v[0].sum_axis(1).mul(v[0].mean_axis(1))));
    let c = rnd(&[2, 1, 4], 4);
    assert_ok("broadcast", check(&[c], STEP, |_, v| v[0].broadcast_to(&[2, 3, 4]).square()));
    assert_ok("narrow/pad", check(&[a.clone()], STEP, |_, v| v[0].narrow(2, 1, 2).pad_axis(1, 1, 2)));
    let b = rnd(&[2, 2, 4], 5);
    assert_ok("concat", check(&[a.clone(), b], STEP, |_, v| concat(&[v[0], v[1]], 1).square()));
    assert_ok("stack", check(&[a.clone(), a.map(|x| x * 0.5)], STEP, |_, v| stack(&[v[0], v[1]], 0)));
    assert_ok("softmax", check(&[a.clone()], STEP, |_, v| v[0].softmax(1)));
    assert_ok("sum_all", check(&[a], STEP, |_, v| v[0].square().mean_all()));
}

#[test]
fn weighted_sum_of_scalars() {
    let a = rnd(&[3], 6);
    assert_ok(
        "weighted_sum",
        check(&[a], STEP, |_, v| {
            let s1 = v[0].square().sum_all();
            let s2 = v[0].sum_all();
            weighted_sum(&[s1, s2], &[0.5, -2.0])
        }),
    );
}

#[test]
fn linear_maps() {
    let x = rnd(&[2, 3, 5], 7);
    let w = rnd(&[4, 5], 8);
    let b = rnd(&[4], 9);
    assert_ok("linear_last", check(&[x.clone(), w, b], STEP, |_, v| v[0].linear_last(v[1], Some(v[2]))));
    let w2 = rnd(&[6, 3], 10);
    let b2 = rnd(&[6], 11);
    assert_ok("channel_linear", check(&[x, w2, b2], STEP, |_, v| v[0].channel_linear(v[1], Some(v[2]))));
}

#[test]
fn batched_matmul_all_transposes() {
    for (ta, tb) in [(false, false), (true, false), (false, true), (true, true)] {
        let a = rnd(if ta { &[2, 4, 3] } else { &[2, 3, 4] }, 12);
        let b = rnd(if tb { &[2, 5, 4] } else { &[2, 4, 5] }, 13);
        assert_ok("bmm", check(&[a, b], STEP, move |_, v| v[0].bmm(v[1], ta, tb)));
    }
}

#[test]
fn convolutions() {
    let x = rnd(&[2, 3, 11], 14);
    let w = rnd(&[4, 3, 3], 15);
    let b = rnd(&[4], 16);
    for geo in [
        Conv1dGeometry { stride: 1, padding: 1, dilation: 1 },
        Conv1dGeometry { stride: 2, padding: 0, dilation: 1 },
        Conv1dGeometry { stride: 1, padding: 2, dilation: 2 },
    ] {
        assert_ok("conv1d", check(&[x.clone(), w.clone(), b.clone()], STEP, move |_, v| v[0].conv1d(v[1], Some(v[2]), geo)));
    }
    let wd = rnd(&[3, 5], 17);
    let bd = rnd(&[3], 18);
    assert_ok("depthwise", check(&[x, wd, bd], STEP, |_, v| v[0].depthwise_conv1d(v[1], Some(v[2]))));
    let img = rnd(&[2, 2, 7, 7], 19);
    let w2 = rnd(&[3, 2, 3, 3], 20);
    let b2 = rnd(&[3], 21);
    assert_ok("conv2d", check(&[img, w2, b2], STEP, |_, v| v[0].conv2d(v[1], Some(v[2]), 2, 1)));
}

#[test]
fn normalizations() {
    let x = rnd(&[2, 3, 4, 5], 22);
    let g = rnd(&[3], 23);
    let b = rnd(&[3], 24);
    assert_ok("global_norm", check(&[x, g.clone(), b.clone()], STEP, |_, v| v[0].global_norm(v[1], v[2])));
    let y = rnd(&[2, 3, 6], 25);
    assert_ok("layer_norm", check(&[y, g, b], STEP, |_, v| v[0].channel_layer_norm(v[1], v[2])));
}

#[test]
fn lstm_both_directions() {
    let x = rnd(&[3, 5, 4], 26);
    let h = 3;
    let wih = rnd(&[4 * h, 4], 27).map(|v| v * 0.5);
    let whh = rnd(&[4 * h, h], 28).map(|v| v * 0.5);
    let bias = rnd(&[4 * h], 29).map(|v| v * 0.5);
    for reverse in [false, true] {
        assert_ok(
            "lstm",
            check(&[x.clone(), wih.clone(), whh.clone(), bias.clone()], STEP, move |_, v| {
                v[0].lstm(v[1], v[2], v[3], reverse)
            }),
        );
    }
}

#[test]
fn reverse_lstm_is_forward_on_reversed_input() {
    let x = rnd(&[2, 6, 3], 30);
    let h = 2;
    let wih = rnd(&[4 * h, 3], 31);
    let whh = rnd(&[4 * h, h], 32);
    let bias = rnd(&[4 * h], 33);
    let reversed = Tensor::from_fn(x.shape(), |i| {
        let (s, rem) = (i / 18, i % 18);
        let (l, c) = (rem / 3, rem % 3);
        x.at(&[s, 5 - l, c])
    });
    let g = Graph::new();
    let c = |t: &Tensor| g.constant(t.clone());
    let rev = c(&x).lstm(c(&wih), c(&whh), c(&bias), true).value();
    let fwd = c(&reversed).lstm(c(&wih), c(&whh), c(&bias), false).value();
    for s in 0..2 {
        for l in 0..6 {
            for j in 0..h {
                assert_eq!(rev.at(&[s, l, j]), fwd.at(&[s, 5 - l, j]));
            }
        }
    }
}

#[test]
fn constants_do_not_record_backward() {
    let g = Graph::new();
    let a = g.constant(Tensor::ones(&[2]));
    let b = a.add(a).sigmoid();
    assert!(!b.requires_grad());
    let l = g.leaf(Tensor::ones(&[2]));
    let c = b.mul(l).sum_all();
    let grads = g.backward(c);
    assert!(grads.get(a).is_none());
    assert_eq!(grads.get(l).unwrap(), &*b.value());
}
