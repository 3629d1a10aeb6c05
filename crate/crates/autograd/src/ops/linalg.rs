use crate::graph::Var;
use crate::tensor::Tensor;

/// `C = alpha * op(A) * op(B) + beta * C` with row-major storage.
///
/// `op(A)` is `m x k`; when `ta` is set `A` is stored as `k x m`. Likewise for `B` (`k x n`).
#[allow(clippy::too_many_arguments)]
pub fn gemm(
    m: usize,
    k: usize,
    n: usize,
    alpha: f64,
    a: &[f64],
    ta: bool,
    b: &[f64],
    tb: bool,
    beta: f64,
    c: &mut [f64],
) {
    assert!(a.len() >= m * k && b.len() >= k * n && c.len() >= m * n);
    if m == 0 || n == 0 {
        return;
    }
    let (rsa, csa) = if ta { (1, m as isize) } else { (k as isize, 1) };
    let (rsb, csb) = if tb { (1, k as isize) } else { (n as isize, 1) };
    // SAFETY: bounds asserted above; strides describe the row-major layouts.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            alpha,
            a.as_ptr(),
            rsa,
            csa,
            b.as_ptr(),
            rsb,
            csb,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

impl<'g> Var<'g> {
    /// Affine map over the last axis: `x[..., in] -> x W^T + b` with `W: [out, in]`.
    pub fn linear_last(self, w: Var<'g>, b: Option<Var<'g>>) -> Var<'g> {
        let x = self.value();
        let wv = w.value();
        let shape = x.shape().to_vec();
        let cin = *shape.last().expect("linear on scalar");
        let (cout, wcin) = (wv.dim(0), wv.dim(1));
        assert_eq!(cin, wcin, "linear width mismatch: input {shape:?}, weight {:?}", wv.shape());
        let rows = x.len() / cin;
        let mut out = vec![0.0; rows * cout];
        gemm(rows, cin, cout, 1.0, x.data(), false, wv.data(), true, 0.0, &mut out);
        if let Some(b) = &b {
            let bv = b.value();
            for row in out.chunks_mut(cout) {
                for (o, bb) in row.iter_mut().zip(bv.data()) {
                    *o += bb;
                }
            }
        }
        let mut out_shape = shape.clone();
        *out_shape.last_mut().unwrap() = cout;
        let mut parents = vec![self, w];
        if let Some(b) = b {
            parents.push(b);
        }
        let has_bias = parents.len() == 3;
        self.graph()
            .apply(&parents, Tensor::new(out_shape, out), move |g| {
                let gd = g.data();
                let mut dx = vec![0.0; rows * cin];
                gemm(rows, cout, cin, 1.0, gd, false, wv.data(), false, 0.0, &mut dx);
                let mut dw = vec![0.0; cout * cin];
                gemm(cout, rows, cin, 1.0, gd, true, x.data(), false, 0.0, &mut dw);
                let mut res = vec![
                    Some(Tensor::new(shape, dx)),
                    Some(Tensor::new(vec![cout, cin], dw)),
                ];
                if has_bias {
                    let mut db = vec![0.0; cout];
                    for row in gd.chunks(cout) {
                        for (d, r) in db.iter_mut().zip(row) {
                            *d += r;
                        }
                    }
                    res.push(Some(Tensor::new(vec![cout], db)));
                }
                res
            })
    }

    /// Pointwise channel mixing on axis 1: `x[b, in, ...] -> W x[b, :, ...] + bias`.
    pub fn channel_linear(self, w: Var<'g>, b: Option<Var<'g>>) -> Var<'g> {
        let x = self.value();
        let wv = w.value();
        let shape = x.shape().to_vec();
        assert!(shape.len() >= 2, "channel_linear needs [B, C, ...], got {shape:?}");
        let batch = shape[0];
        let cin = shape[1];
        let rest: usize = shape[2..].iter().product();
        let cout = wv.dim(0);
        assert_eq!(wv.dim(1), cin, "channel_linear width mismatch {shape:?} vs {:?}", wv.shape());
        let mut out = vec![0.0; batch * cout * rest];
        for bi in 0..batch {
            gemm(
                cout,
                cin,
                rest,
                1.0,
                wv.data(),
                false,
                &x.data()[bi * cin * rest..],
                false,
                0.0,
                &mut out[bi * cout * rest..],
            );
        }
        if let Some(b) = &b {
            let bv = b.value();
            for bi in 0..batch {
                for c in 0..cout {
                    let bb = bv.data()[c];
                    for o in &mut out[(bi * cout + c) * rest..(bi * cout + c + 1) * rest] {
                        *o += bb;
                    }
                }
            }
        }
        let mut out_shape = shape.clone();
        out_shape[1] = cout;
        let mut parents = vec![self, w];
        if let Some(b) = b {
            parents.push(b);
        }
        let has_bias = parents.len() == 3;
        self.graph()
            .apply(&parents, Tensor::new(out_shape, out), move |g| {
                let gd = g.data();
                let mut dx = vec![0.0; batch * cin * rest];
                let mut dw = vec![0.0; cout * cin];
                for bi in 0..batch {
                    let gb = &gd[bi * cout * rest..(bi + 1) * cout * rest];
                    gemm(cin, cout, rest, 1.0, wv.data(), true, gb, false, 0.0, &mut dx[bi * cin * rest..]);
                    gemm(cout, rest, cin, 1.0, gb, false, &x.data()[bi * cin * rest..], true, 1.0, &mut dw);
                }
                let mut res = vec![
                    Some(Tensor::new(shape, dx)),
                    Some(Tensor::new(vec![cout, cin], dw)),
                ];
                if has_bias {
                    let mut db = vec![0.0; cout];
                    for bi in 0..batch {
                        for (c, d) in db.iter_mut().enumerate() {
                            *d += gd[(bi * cout + c) * rest..(bi * cout + c + 1) * rest]
                                .iter()
                                .sum::<f64>();
                        }
                    }
                    res.push(Some(Tensor::new(vec![cout], db)));
                }
                res
            })
    }

    /// Batched matrix product over the leading axis: `[G, M, K] x [G, K, N] -> [G, M, N]`,
    /// with optional transposition of either operand's trailing two axes.
    pub fn bmm(self, other: Var<'g>, ta: bool, tb: bool) -> Var<'g> {
        let a = self.value();
        let b = other.value();
        assert!(a.rank() == 3 && b.rank() == 3, "bmm expects rank-3 operands");
        let groups = a.dim(0);
        assert_eq!(b.dim(0), groups);
        let (m, k) = if ta { (a.dim(2), a.dim(1)) } else { (a.dim(1), a.dim(2)) };
        let (kb, n) = if tb { (b.dim(2), b.dim(1)) } else { (b.dim(1), b.dim(2)) };
        assert_eq!(k, kb, "bmm inner dimension mismatch");
        let mut out = vec![0.0; groups * m * n];
        for gi in 0..groups {
            gemm(
                m,
                k,
                n,
                1.0,
                &a.data()[gi * m * k..],
                ta,
                &b.data()[gi * k * n..],
                tb,
                0.0,
                &mut out[gi * m * n..],
            );
        }
        let (sa, sb) = (a.shape().to_vec(), b.shape().to_vec());
        self.graph()
            .apply(&[self, other], Tensor::new(vec![groups, m, n], out), move |g| {
                let gd = g.data();
                let mut da = vec![0.0; groups * m * k];
                let mut db = vec![0.0; groups * k * n];
                for gi in 0..groups {
                    let gg = &gd[gi * m * n..];
                    let ag = &a.data()[gi * m * k..];
                    let bg = &b.data()[gi * k * n..];
                    // dA = G op(B)^T, stored according to ta
                    if ta {
                        gemm(k, n, m, 1.0, bg, tb, gg, true, 0.0, &mut da[gi * m * k..]);
                    } else {
                        gemm(m, n, k, 1.0, gg, false, bg, !tb, 0.0, &mut da[gi * m * k..]);
                    }
                    // dB = op(A)^T G, stored according to tb
                    if tb {
                        gemm(n, m, k, 1.0, gg, true, ag, ta, 0.0, &mut db[gi * k * n..]);
                    } else {
                        gemm(k, m, n, 1.0, ag, !ta, gg, false, 0.0, &mut db[gi * k * n..]);
                    }
                }
                vec![Some(Tensor::new(sa, da)), Some(Tensor::new(sb, db))]
            })
    }
}
