use crate::graph::Var;
use crate::tensor::{axis_split, inverse_permutation, numel, strides, Tensor};

/// Gather map for broadcasting `from` into `to` (same rank, dims equal or 1).
fn broadcast_index(from: &[usize], to: &[usize]) -> Vec<usize> {
    assert_eq!(from.len(), to.len(), "broadcast rank mismatch {from:?} -> {to:?}");
    for (&f, &t) in from.iter().zip(to) {
        assert!(f == t || f == 1, "cannot broadcast {from:?} -> {to:?}");
    }
    let fs = strides(from);
    let src: Vec<usize> = from
        .iter()
        .zip(&fs)
        .map(|(&f, &s)| if f == 1 { 0 } else { s })
        .collect();
    let n = numel(to);
    let mut map = Vec::with_capacity(n);
    let rank = to.len();
    if rank == 0 {
        return vec![0];
    }
    let mut idx = vec![0usize; rank];
    let mut off = 0usize;
    for _ in 0..n {
        map.push(off);
        let mut ax = rank;
        while ax > 0 {
            ax -= 1;
            idx[ax] += 1;
            off += src[ax];
            if idx[ax] < to[ax] {
                break;
            }
            off -= src[ax] * idx[ax];
            idx[ax] = 0;
        }
    }
    map
}

impl<'g> Var<'g> {
    pub fn reshape(self, shape: &[usize]) -> Var<'g> {
        let old = self.shape();
        let v = (*self.value()).clone().reshape(shape);
        self.graph()
            .apply(&[self], v, move |g| vec![Some(g.clone().reshape(&old))])
    }

    pub fn permute(self, axes: &[usize]) -> Var<'g> {
        let v = self.value().permute(axes);
        let inv = inverse_permutation(axes);
        self.graph()
            .apply(&[self], v, move |g| vec![Some(g.permute(&inv))])
    }

    /// Broadcasts size-1 axes up to `shape` (ranks must already agree).
    pub fn broadcast_to(self, shape: &[usize]) -> Var<'g> {
        let from = self.shape();
        if from == shape {
            return self;
        }
        let map = broadcast_index(&from, shape);
        let x = self.value();
        let v = Tensor::new(shape.to_vec(), map.iter().map(|&i| x.data()[i]).collect());
        self.graph().apply(&[self], v, move |g| {
            let mut out = Tensor::zeros(&from);
            let d = out.data_mut();
            for (gv, &i) in g.data().iter().zip(&map) {
                d[i] += gv;
            }
            vec![Some(out)]
        })
    }

    /// Sums over `axis`, keeping it with length 1.
    pub fn sum_axis(self, axis: usize) -> Var<'g> {
        let shape = self.shape();
        let (outer, n, inner) = axis_split(&shape, axis);
        let x = self.value();
        let mut out_shape = shape.clone();
        out_shape[axis] = 1;
        let mut out = vec![0.0; outer * inner];
        for o in 0..outer {
            for j in 0..n {
                let src = &x.data()[(o * n + j) * inner..(o * n + j + 1) * inner];
                for (acc, s) in out[o * inner..(o + 1) * inner].iter_mut().zip(src) {
                    *acc += s;
                }
            }
        }
        let v = Tensor::new(out_shape.clone(), out);
        self.graph().apply(&[self], v, move |g| {
            let mut dx = Vec::with_capacity(outer * n * inner);
            for o in 0..outer {
                for _ in 0..n {
                    dx.extend_from_slice(&g.data()[o * inner..(o + 1) * inner]);
                }
            }
            vec![Some(Tensor::new(shape, dx))]
        })
    }

    /// Mean over `axis`, keeping it with length 1.
    pub fn mean_axis(self, axis: usize) -> Var<'g> {
        let n = self.shape()[axis] as f64;
        self.sum_axis(axis).scale(1.0 / n)
    }

    pub fn sum_all(self) -> Var<'g> {
        let shape = self.shape();
        let v = Tensor::scalar(self.value().sum());
        self.graph()
            .apply(&[self], v, move |g| vec![Some(Tensor::full(&shape, g.item()))])
    }

    pub fn mean_all(self) -> Var<'g> {
        let n = numel(&self.shape()) as f64;
        self.sum_all().scale(1.0 / n)
    }

    /// Slice `[start, start + len)` along `axis`.
    pub fn narrow(self, axis: usize, start: usize, len: usize) -> Var<'g> {
        let shape = self.shape();
        let (outer, n, inner) = axis_split(&shape, axis);
        assert!(start + len <= n, "narrow out of range");
        let x = self.value();
        let mut out = Vec::with_capacity(outer * len * inner);
        for o in 0..outer {
            out.extend_from_slice(&x.data()[(o * n + start) * inner..(o * n + start + len) * inner]);
        }
        let mut out_shape = shape.clone();
        out_shape[axis] = len;
        self.graph().apply(&[self], Tensor::new(out_shape, out), move |g| {
            let mut dx = Tensor::zeros(&shape);
            let d = dx.data_mut();
            for o in 0..outer {
                d[(o * n + start) * inner..(o * n + start + len) * inner]
                    .copy_from_slice(&g.data()[o * len * inner..(o + 1) * len * inner]);
            }
            vec![Some(dx)]
        })
    }

    /// Zero-pads `axis` with `before` and `after` entries.
    pub fn pad_axis(self, axis: usize, before: usize, after: usize) -> Var<'g> {
        let shape = self.shape();
        let (outer, n, inner) = axis_split(&shape, axis);
        let m = n + before + after;
        let x = self.value();
        let mut out_shape = shape.clone();
        out_shape[axis] = m;
        let mut out = Tensor::zeros(&out_shape);
        {
            let d = out.data_mut();
            for o in 0..outer {
                d[(o * m + before) * inner..(o * m + before + n) * inner]
                    .copy_from_slice(&x.data()[o * n * inner..(o + 1) * n * inner]);
            }
        }
        self.graph().apply(&[self], out, move |g| {
            let mut dx = Vec::with_capacity(outer * n * inner);
            for o in 0..outer {
                dx.extend_from_slice(&g.data()[(o * m + before) * inner..(o * m + before + n) * inner]);
            }
            vec![Some(Tensor::new(shape, dx))]
        })
    }
}

/// Concatenates along `axis`; all other dimensions must agree.
pub fn concat<'g>(parts: &[Var<'g>], axis: usize) -> Var<'g> {
    assert!(!parts.is_empty());
    let shapes: Vec<Vec<usize>> = parts.iter().map(|p| p.shape()).collect();
    let base = &shapes[0];
    for s in &shapes[1..] {
        assert_eq!(s.len(), base.len());
        for (i, (&a, &b)) in s.iter().zip(base).enumerate() {
            assert!(i == axis || a == b, "concat shape mismatch {shapes:?}");
        }
    }
    let (outer, _, inner) = axis_split(base, axis);
    let lens: Vec<usize> = shapes.iter().map(|s| s[axis]).collect();
    let total: usize = lens.iter().sum();
    let values: Vec<_> = parts.iter().map(|p| p.value()).collect();
    let mut out = Vec::with_capacity(outer * total * inner);
    for o in 0..outer {
        for (v, &l) in values.iter().zip(&lens) {
            out.extend_from_slice(&v.data()[o * l * inner..(o + 1) * l * inner]);
        }
    }
    let mut out_shape = base.clone();
    out_shape[axis] = total;
    parts[0]
        .graph()
        .apply(parts, Tensor::new(out_shape, out), move |g| {
            let mut grads: Vec<Vec<f64>> = lens
                .iter()
                .map(|&l| Vec::with_capacity(outer * l * inner))
                .collect();
            let mut off = 0;
            for _ in 0..outer {
                for (gr, &l) in grads.iter_mut().zip(&lens) {
                    gr.extend_from_slice(&g.data()[off..off + l * inner]);
                    off += l * inner;
                }
            }
            grads
                .into_iter()
                .zip(shapes)
                .map(|(d, s)| Some(Tensor::new(s, d)))
                .collect()
        })
}

/// Stacks equally shaped vars along a new leading axis.
pub fn stack<'g>(parts: &[Var<'g>], axis: usize) -> Var<'g> {
    let expanded: Vec<Var<'g>> = parts
        .iter()
        .map(|p| {
            let mut s = p.shape();
            s.insert(axis, 1);
            p.reshape(&s)
        })
        .collect();
    concat(&expanded, axis)
}
