//! Central finite-difference checks for analytic gradients.
//!
//! The function under test maps leaf vars to an output of any shape; it is contracted
//! with a fixed pseudo-random cotangent so every output element contributes.

use crate::graph::{Graph, Var};
use crate::tensor::Tensor;

#[derive(Clone, Debug)]
pub struct GradCheckReport {
    /// `||analytic - numeric|| / max(||analytic||, ||numeric||)` per input.
    pub rel_errors: Vec<f64>,
    /// Largest absolute elementwise difference over all inputs.
    pub max_abs_error: f64,
    /// L2 norm of each analytic gradient.
    pub grad_norms: Vec<f64>,
}

impl GradCheckReport {
    pub fn max_rel_error(&self) -> f64 {
        self.rel_errors.iter().copied().fold(0.0, f64::max)
    }
}

fn cotangent(shape: &[usize]) -> Tensor {
    // Deterministic, sign-varying weights; avoids pulling an RNG into the check.
    Tensor::from_fn(shape, |i| {
        let x = ((i as f64 + 1.0) * 0.618_033_988_749_894_9).fract();
        2.0 * x - 1.0 + 0.1
    })
}

fn contract(out: &Tensor, w: &Tensor) -> f64 {
    out.data().iter().zip(w.data()).map(|(a, b)| a * b).sum()
}

/// Compares analytic and finite-difference gradients of `f` at `inputs`.
pub fn check<F>(inputs: &[Tensor], step: f64, f: F) -> GradCheckReport
where
    F: for<'g> Fn(&'g Graph, &[Var<'g>]) -> Var<'g>,
{
    let graph = Graph::new();
    let leaves: Vec<Var<'_>> = inputs.iter().map(|t| graph.leaf(t.clone())).collect();
    let out = f(&graph, &leaves);
    let w = cotangent(&out.shape());
    let grads = graph.backward_with(out, w.clone());
    let analytic: Vec<Tensor> = leaves
        .iter()
        .zip(inputs)
        .map(|(l, t)| grads.get(*l).cloned().unwrap_or_else(|| Tensor::zeros(t.shape())))
        .collect();

    let eval = |values: &[Tensor]| -> f64 {
        let g = Graph::new();
        let vars: Vec<Var<'_>> = values.iter().map(|t| g.constant(t.clone())).collect();
        contract(&f(&g, &vars).value(), &w)
    };

    let mut rel_errors = Vec::with_capacity(inputs.len());
    let mut grad_norms = Vec::with_capacity(inputs.len());
    let mut max_abs_error = 0.0f64;
    let mut work: Vec<Tensor> = inputs.to_vec();
    for (k, a) in analytic.iter().enumerate() {
        let mut numeric = Tensor::zeros(inputs[k].shape());
        for i in 0..inputs[k].len() {
            let orig = inputs[k].data()[i];
            work[k].data_mut()[i] = orig + step;
            let plus = eval(&work);
            work[k].data_mut()[i] = orig - step;
            let minus = eval(&work);
            work[k].data_mut()[i] = orig;
            numeric.data_mut()[i] = (plus - minus) / (2.0 * step);
        }
        let diff = a.zip_map(&numeric, |x, y| x - y);
        let denom = a.sq_norm().sqrt().max(numeric.sq_norm().sqrt());
        let rel = if denom > 0.0 { diff.sq_norm().sqrt() / denom } else { 0.0 };
        rel_errors.push(rel);
        grad_norms.push(a.sq_norm().sqrt());
        max_abs_error = max_abs_error.max(a.max_abs_diff(&numeric));
    }
    GradCheckReport {
        rel_errors,
        max_abs_error,
        grad_norms,
    }
}
