//! Shared helpers for the integration tests.
#![allow(dead_code)]

use cuenet_autograd::{Graph, ParamStore, Session, Tensor, Var};
use cuenet_core::config::{ModelConfig, Preset};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Toy config narrowed to the shapes used by the finite-difference checks.
pub fn tiny_config(hidden: usize) -> ModelConfig {
    let mut cfg = ModelConfig::preset(Preset::Toy, 4);
    cfg.hidden = hidden;
    cfg.lstm_hidden = hidden;
    cfg
}

fn cotangent(shape: &[usize]) -> Tensor {
    Tensor::from_fn(shape, |i| 2.0 * ((i as f64 + 1.0) * 0.618_033_988_749_894_9).fract() - 0.9)
}

/// Largest relative error `|analytic - numeric| / max(|analytic|, |numeric|)` (L2 over each
/// tensor) across the inputs and every parameter in `store`, under central differences.
pub fn module_gradcheck<F>(store: &ParamStore, inputs: &[Tensor], step: f64, f: F) -> f64
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

    let mut worst = 0.0f64;
    let mut xs = inputs.to_vec();
    let mut st = store.clone();
    for (k, a) in analytic.iter().enumerate() {
        let mut numeric = Tensor::zeros(a.shape());
        for i in 0..a.len() {
            let n_in = inputs.len();
            let orig = *entry(&mut xs, &mut st, n_in, k, i);
            *entry(&mut xs, &mut st, n_in, k, i) = orig + step;
            let plus = eval(&st, &xs);
            *entry(&mut xs, &mut st, n_in, k, i) = orig - step;
            let minus = eval(&st, &xs);
            *entry(&mut xs, &mut st, n_in, k, i) = orig;
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

/// Slot `i` of tensor `k`, where inputs come first and parameters follow.
fn entry<'a>(xs: &'a mut [Tensor], st: &'a mut ParamStore, n_in: usize, k: usize, i: usize) -> &'a mut f64 {
    if k < n_in {
        &mut xs[k].data_mut()[i]
    } else {
        &mut st.get_mut(k - n_in).data_mut()[i]
    }
}
