use crate::graph::Var;
use crate::ops::linalg::gemm;
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Conv1dGeometry {
    pub stride: usize,
    pub padding: usize,
    pub dilation: usize,
}

impl Default for Conv1dGeometry {
    fn default() -> Self {
        Self {
            stride: 1,
            padding: 0,
            dilation: 1,
        }
    }
}

pub fn conv1d_out_len(len: usize, kernel: usize, geo: Conv1dGeometry) -> usize {
    let span = geo.dilation * (kernel - 1) + 1;
    assert!(len + 2 * geo.padding >= span, "conv input shorter than kernel span");
    (len + 2 * geo.padding - span) / geo.stride + 1
}

fn im2col_1d(x: &[f64], cin: usize, len: usize, k: usize, out_len: usize, geo: Conv1dGeometry, col: &mut [f64]) {
    for c in 0..cin {
        let xc = &x[c * len..(c + 1) * len];
        for j in 0..k {
            let row = &mut col[(c * k + j) * out_len..(c * k + j + 1) * out_len];
            let shift = (j * geo.dilation) as isize - geo.padding as isize;
            for (t, r) in row.iter_mut().enumerate() {
                let src = (t * geo.stride) as isize + shift;
                *r = if src >= 0 && (src as usize) < len { xc[src as usize] } else { 0.0 };
            }
        }
    }
}

fn col2im_1d(col: &[f64], cin: usize, len: usize, k: usize, out_len: usize, geo: Conv1dGeometry, dx: &mut [f64]) {
    for c in 0..cin {
        let dxc = &mut dx[c * len..(c + 1) * len];
        for j in 0..k {
            let row = &col[(c * k + j) * out_len..(c * k + j + 1) * out_len];
            let shift = (j * geo.dilation) as isize - geo.padding as isize;
            for (t, r) in row.iter().enumerate() {
                let src = (t * geo.stride) as isize + shift;
                if src >= 0 && (src as usize) < len {
                    dxc[src as usize] += r;
                }
            }
        }
    }
}

impl<'g> Var<'g> {
    /// 1-D convolution: `x [B, Cin, T]`, `w [Cout, Cin, k]` -> `[B, Cout, T_out]`.
    pub fn conv1d(self, w: Var<'g>, b: Option<Var<'g>>, geo: Conv1dGeometry) -> Var<'g> {
        let x = self.value();
        let wv = w.value();
        assert_eq!(x.rank(), 3, "conv1d input must be [B, C, T]");
        let (batch, cin, len) = (x.dim(0), x.dim(1), x.dim(2));
        let (cout, wcin, k) = (wv.dim(0), wv.dim(1), wv.dim(2));
        assert_eq!(cin, wcin, "conv1d channel mismatch");
        let out_len = conv1d_out_len(len, k, geo);
        let ck = cin * k;
        let mut cols = vec![0.0; batch * ck * out_len];
        let mut out = vec![0.0; batch * cout * out_len];
        for bi in 0..batch {
            let col = &mut cols[bi * ck * out_len..(bi + 1) * ck * out_len];
            im2col_1d(&x.data()[bi * cin * len..], cin, len, k, out_len, geo, col);
            gemm(cout, ck, out_len, 1.0, wv.data(), false, col, false, 0.0, &mut out[bi * cout * out_len..]);
        }
        if let Some(b) = &b {
            let bv = b.value();
            for (i, chunk) in out.chunks_mut(out_len).enumerate() {
                let bb = bv.data()[i % cout];
                chunk.iter_mut().for_each(|o| *o += bb);
            }
        }
        let mut parents = vec![self, w];
        if let Some(b) = b {
            parents.push(b);
        }
        let has_bias = parents.len() == 3;
        let wshape = wv.shape().to_vec();
        self.graph().apply(
            &parents,
            Tensor::new(vec![batch, cout, out_len], out),
            move |g| {
                let gd = g.data();
                let mut dx = vec![0.0; batch * cin * len];
                let mut dw = vec![0.0; cout * ck];
                let mut dcol = vec![0.0; ck * out_len];
                for bi in 0..batch {
                    let gb = &gd[bi * cout * out_len..(bi + 1) * cout * out_len];
                    let col = &cols[bi * ck * out_len..(bi + 1) * ck * out_len];
                    gemm(cout, out_len, ck, 1.0, gb, false, col, true, 1.0, &mut dw);
                    gemm(ck, cout, out_len, 1.0, wv.data(), true, gb, false, 0.0, &mut dcol);
                    col2im_1d(&dcol, cin, len, k, out_len, geo, &mut dx[bi * cin * len..(bi + 1) * cin * len]);
                }
                let mut res = vec![
                    Some(Tensor::new(vec![batch, cin, len], dx)),
                    Some(Tensor::new(wshape, dw)),
                ];
                if has_bias {
                    let mut db = vec![0.0; cout];
                    for (i, chunk) in gd.chunks(out_len).enumerate() {
                        db[i % cout] += chunk.iter().sum::<f64>();
                    }
                    res.push(Some(Tensor::new(vec![cout], db)));
                }
                res
            },
        )
    }

    /// Per-channel ("depthwise") 1-D convolution with same-length zero padding:
    /// `x [B, C, T]`, `w [C, k]` (k odd), `b [C]`.
    pub fn depthwise_conv1d(self, w: Var<'g>, b: Option<Var<'g>>) -> Var<'g> {
        let x = self.value();
        let wv = w.value();
        let (batch, ch, len) = (x.dim(0), x.dim(1), x.dim(2));
        let k = wv.dim(1);
        assert_eq!(wv.dim(0), ch);
        assert!(k % 2 == 1, "depthwise kernel must be odd");
        let pad = (k / 2) as isize;
        let bias = b.as_ref().map(|b| b.value());
        let mut out = vec![0.0; batch * ch * len];
        for bi in 0..batch {
            for c in 0..ch {
                let xc = &x.data()[(bi * ch + c) * len..(bi * ch + c + 1) * len];
                let wc = &wv.data()[c * k..(c + 1) * k];
                let bb = bias.as_ref().map_or(0.0, |b| b.data()[c]);
                let oc = &mut out[(bi * ch + c) * len..(bi * ch + c + 1) * len];
                for (t, o) in oc.iter_mut().enumerate() {
                    let mut acc = bb;
                    for (j, wj) in wc.iter().enumerate() {
                        let s = t as isize + j as isize - pad;
                        if s >= 0 && (s as usize) < len {
                            acc += wj * xc[s as usize];
                        }
                    }
                    *o = acc;
                }
            }
        }
        let mut parents = vec![self, w];
        if let Some(b) = b {
            parents.push(b);
        }
        let has_bias = parents.len() == 3;
        self.graph().apply(&parents, Tensor::new(vec![batch, ch, len], out), move |g| {
            let gd = g.data();
            let mut dx = vec![0.0; batch * ch * len];
            let mut dw = vec![0.0; ch * k];
            let mut db = vec![0.0; ch];
            for bi in 0..batch {
                for c in 0..ch {
                    let base = (bi * ch + c) * len;
                    let xc = &x.data()[base..base + len];
                    let gc = &gd[base..base + len];
                    for (t, gt) in gc.iter().enumerate() {
                        db[c] += gt;
                        for j in 0..k {
                            let s = t as isize + j as isize - pad;
                            if s >= 0 && (s as usize) < len {
                                dw[c * k + j] += gt * xc[s as usize];
                                dx[base + s as usize] += gt * wv.data()[c * k + j];
                            }
                        }
                    }
                }
            }
            let mut res = vec![
                Some(Tensor::new(vec![batch, ch, len], dx)),
                Some(Tensor::new(vec![ch, k], dw)),
            ];
            if has_bias {
                res.push(Some(Tensor::new(vec![ch], db)));
            }
            res
        })
    }

    /// 2-D convolution: `x [B, Cin, H, W]`, `w [Cout, Cin, kh, kw]`, symmetric zero padding.
    pub fn conv2d(self, w: Var<'g>, b: Option<Var<'g>>, stride: usize, padding: usize) -> Var<'g> {
        let x = self.value();
        let wv = w.value();
        assert_eq!(x.rank(), 4, "conv2d input must be [B, C, H, W]");
        let (batch, cin, h, wd) = (x.dim(0), x.dim(1), x.dim(2), x.dim(3));
        let (cout, wcin, kh, kw) = (wv.dim(0), wv.dim(1), wv.dim(2), wv.dim(3));
        assert_eq!(cin, wcin, "conv2d channel mismatch");
        let ho = (h + 2 * padding - kh) / stride + 1;
        let wo = (wd + 2 * padding - kw) / stride + 1;
        let ckk = cin * kh * kw;
        let plane = ho * wo;
        // (row offset into col, source index or usize::MAX for padding) per col entry
        let mut gather = vec![usize::MAX; ckk * plane];
        for c in 0..cin {
            for i in 0..kh {
                for j in 0..kw {
                    let r = (c * kh + i) * kw + j;
                    for oy in 0..ho {
                        let y = (oy * stride + i) as isize - padding as isize;
                        if y < 0 || y as usize >= h {
                            continue;
                        }
                        for ox in 0..wo {
                            let xx = (ox * stride + j) as isize - padding as isize;
                            if xx < 0 || xx as usize >= wd {
                                continue;
                            }
                            gather[r * plane + oy * wo + ox] = (c * h + y as usize) * wd + xx as usize;
                        }
                    }
                }
            }
        }
        let in_img = cin * h * wd;
        let mut out = vec![0.0; batch * cout * plane];
        let mut col = vec![0.0; ckk * plane];
        for bi in 0..batch {
            let xi = &x.data()[bi * in_img..(bi + 1) * in_img];
            for (cv, &gi) in col.iter_mut().zip(&gather) {
                *cv = if gi == usize::MAX { 0.0 } else { xi[gi] };
            }
            gemm(cout, ckk, plane, 1.0, wv.data(), false, &col, false, 0.0, &mut out[bi * cout * plane..]);
        }
        if let Some(b) = &b {
            let bv = b.value();
            for (i, chunk) in out.chunks_mut(plane).enumerate() {
                let bb = bv.data()[i % cout];
                chunk.iter_mut().for_each(|o| *o += bb);
            }
        }
        let mut parents = vec![self, w];
        if let Some(b) = b {
            parents.push(b);
        }
        let has_bias = parents.len() == 3;
        let xshape = x.shape().to_vec();
        let wshape = wv.shape().to_vec();
        self.graph().apply(
            &parents,
            Tensor::new(vec![batch, cout, ho, wo], out),
            move |g| {
                let gd = g.data();
                let mut dx = vec![0.0; batch * in_img];
                let mut dw = vec![0.0; cout * ckk];
                let mut col = vec![0.0; ckk * plane];
                let mut dcol = vec![0.0; ckk * plane];
                for bi in 0..batch {
                    let xi = &x.data()[bi * in_img..(bi + 1) * in_img];
                    for (cv, &gi) in col.iter_mut().zip(&gather) {
                        *cv = if gi == usize::MAX { 0.0 } else { xi[gi] };
                    }
                    let gb = &gd[bi * cout * plane..(bi + 1) * cout * plane];
                    gemm(cout, plane, ckk, 1.0, gb, false, &col, true, 1.0, &mut dw);
                    gemm(ckk, cout, plane, 1.0, wv.data(), true, gb, false, 0.0, &mut dcol);
                    let dxi = &mut dx[bi * in_img..(bi + 1) * in_img];
                    for (dv, &gi) in dcol.iter().zip(&gather) {
                        if gi != usize::MAX {
                            dxi[gi] += dv;
                        }
                    }
                }
                let mut res = vec![Some(Tensor::new(xshape, dx)), Some(Tensor::new(wshape, dw))];
                if has_bias {
                    let mut db = vec![0.0; cout];
                    for (i, chunk) in gd.chunks(plane).enumerate() {
                        db[i % cout] += chunk.iter().sum::<f64>();
                    }
                    res.push(Some(Tensor::new(vec![cout], db)));
                }
                res
            },
        )
    }
}
