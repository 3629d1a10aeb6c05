use crate::graph::Var;
use crate::tensor::Tensor;

pub const NORM_EPS: f64 = 1e-8;

/// Shared normalize-with-affine kernel. `groups` independent slices of `len` values each;
/// `chan(g, i)` gives the affine channel of element `i` in group `g`.
struct NormPlan {
    groups: usize,
    len: usize,
}

fn normalize(x: &[f64], plan: &NormPlan, index: impl Fn(usize, usize) -> usize) -> (Vec<f64>, Vec<f64>) {
    let mut xhat = vec![0.0; x.len()];
    let mut inv_std = vec![0.0; plan.groups];
    for g in 0..plan.groups {
        let mut mean = 0.0;
        for i in 0..plan.len {
            mean += x[index(g, i)];
        }
        mean /= plan.len as f64;
        let mut var = 0.0;
        for i in 0..plan.len {
            let d = x[index(g, i)] - mean;
            var += d * d;
        }
        var /= plan.len as f64;
        let is = 1.0 / (var + NORM_EPS).sqrt();
        inv_std[g] = is;
        for i in 0..plan.len {
            let o = index(g, i);
            xhat[o] = (x[o] - mean) * is;
        }
    }
    (xhat, inv_std)
}

fn normalize_backward(
    dxhat: &[f64],
    xhat: &[f64],
    inv_std: &[f64],
    plan: &NormPlan,
    index: impl Fn(usize, usize) -> usize,
) -> Vec<f64> {
    let mut dx = vec![0.0; dxhat.len()];
    let n = plan.len as f64;
    for g in 0..plan.groups {
        let mut m1 = 0.0;
        let mut m2 = 0.0;
        for i in 0..plan.len {
            let o = index(g, i);
            m1 += dxhat[o];
            m2 += dxhat[o] * xhat[o];
        }
        m1 /= n;
        m2 /= n;
        for i in 0..plan.len {
            let o = index(g, i);
            dx[o] = inv_std[g] * (dxhat[o] - m1 - xhat[o] * m2);
        }
    }
    dx
}

impl<'g> Var<'g> {
    /// Global (one-group) normalization: statistics over every non-batch element of
    /// `x [B, C, ...]`, then per-channel `gamma`, `beta`.
    pub fn global_norm(self, gamma: Var<'g>, beta: Var<'g>) -> Var<'g> {
        let x = self.value();
        let shape = x.shape().to_vec();
        let (batch, ch) = (shape[0], shape[1]);
        let rest: usize = shape[2..].iter().product();
        let per = ch * rest;
        let plan = NormPlan { groups: batch, len: per };
        let (xhat, inv_std) = normalize(x.data(), &plan, |g, i| g * per + i);
        let gv = gamma.value();
        let bv = beta.value();
        let chan = move |o: usize| (o / rest) % ch;
        let out: Vec<f64> = xhat
            .iter()
            .enumerate()
            .map(|(o, xh)| gv.data()[chan(o)] * xh + bv.data()[chan(o)])
            .collect();
        self.graph().apply(&[self, gamma, beta], Tensor::new(shape.clone(), out), move |g| {
            let gd = g.data();
            let mut dgamma = vec![0.0; ch];
            let mut dbeta = vec![0.0; ch];
            let mut dxhat = vec![0.0; gd.len()];
            for (o, gg) in gd.iter().enumerate() {
                let c = chan(o);
                dgamma[c] += gg * xhat[o];
                dbeta[c] += gg;
                dxhat[o] = gg * gv.data()[c];
            }
            let plan = NormPlan { groups: batch, len: per };
            let dx = normalize_backward(&dxhat, &xhat, &inv_std, &plan, |g, i| g * per + i);
            vec![
                Some(Tensor::new(shape, dx)),
                Some(Tensor::new(vec![ch], dgamma)),
                Some(Tensor::new(vec![ch], dbeta)),
            ]
        })
    }

    /// Channel layer normalization: for `x [B, C, T]` each `(b, t)` column is normalized over C.
    pub fn channel_layer_norm(self, gamma: Var<'g>, beta: Var<'g>) -> Var<'g> {
        let x = self.value();
        let shape = x.shape().to_vec();
        assert_eq!(shape.len(), 3, "channel_layer_norm expects [B, C, T]");
        let (batch, ch, len) = (shape[0], shape[1], shape[2]);
        let index = move |g: usize, i: usize| (g / len * ch + i) * len + g % len;
        let plan = NormPlan { groups: batch * len, len: ch };
        let (xhat, inv_std) = normalize(x.data(), &plan, index);
        let gv = gamma.value();
        let bv = beta.value();
        let chan = move |o: usize| (o / len) % ch;
        let out: Vec<f64> = xhat
            .iter()
            .enumerate()
            .map(|(o, xh)| gv.data()[chan(o)] * xh + bv.data()[chan(o)])
            .collect();
        self.graph().apply(&[self, gamma, beta], Tensor::new(shape.clone(), out), move |g| {
            let gd = g.data();
            let mut dgamma = vec![0.0; ch];
            let mut dbeta = vec![0.0; ch];
            let mut dxhat = vec![0.0; gd.len()];
            for (o, gg) in gd.iter().enumerate() {
                let c = chan(o);
                dgamma[c] += gg * xhat[o];
                dbeta[c] += gg;
                dxhat[o] = gg * gv.data()[c];
            }
            let plan = NormPlan { groups: batch * len, len: ch };
            let dx = normalize_backward(&dxhat, &xhat, &inv_std, &plan, index);
            vec![
                Some(Tensor::new(shape, dx)),
                Some(Tensor::new(vec![ch], dgamma)),
                Some(Tensor::new(vec![ch], dbeta)),
            ]
        })
    }

    /// Softmax along `axis`.
    pub fn softmax(self, axis: usize) -> Var<'g> {
        let x = self.value();
        let shape = x.shape().to_vec();
        let (outer, n, inner) = crate::tensor::axis_split(&shape, axis);
        let mut y = vec![0.0; x.len()];
        let xd = x.data();
        for o in 0..outer {
            for i in 0..inner {
                let at = |j: usize| (o * n + j) * inner + i;
                let m = (0..n).map(|j| xd[at(j)]).fold(f64::NEG_INFINITY, f64::max);
                let mut z = 0.0;
                for j in 0..n {
                    let e = (xd[at(j)] - m).exp();
                    y[at(j)] = e;
                    z += e;
                }
                for j in 0..n {
                    y[at(j)] /= z;
                }
            }
        }
        let yt = Tensor::new(shape.clone(), y);
        let yc = yt.clone();
        self.graph().apply(&[self], yt, move |g| {
            let gd = g.data();
            let yd = yc.data();
            let mut dx = vec![0.0; gd.len()];
            for o in 0..outer {
                for i in 0..inner {
                    let at = |j: usize| (o * n + j) * inner + i;
                    let dot: f64 = (0..n).map(|j| gd[at(j)] * yd[at(j)]).sum();
                    for j in 0..n {
                        dx[at(j)] = yd[at(j)] * (gd[at(j)] - dot);
                    }
                }
            }
            vec![Some(Tensor::new(shape, dx))]
        })
    }
}
