//! Fused single-direction LSTM with hand-written backpropagation through time.

use crate::graph::Var;
use crate::ops::elementwise::sigmoid_scalar;
use crate::ops::linalg::gemm;
use crate::tensor::Tensor;

impl<'g> Var<'g> {
    /// Runs an LSTM over `x [S, L, I]` (S independent sequences of length L).
    ///
    /// Gate layout in `w_ih [4h, I]`, `w_hh [4h, h]`, `bias [4h]` is (input, forget, cell, output).
    /// With `reverse` the sequence is consumed from the last step to the first; the output
    /// stays indexed by the original step. Returns `[S, L, h]`.
    pub fn lstm(self, w_ih: Var<'g>, w_hh: Var<'g>, bias: Var<'g>, reverse: bool) -> Var<'g> {
        let x = self.value();
        let wih = w_ih.value();
        let whh = w_hh.value();
        let bv = bias.value();
        assert_eq!(x.rank(), 3, "lstm input must be [S, L, I]");
        let (seqs, steps, inp) = (x.dim(0), x.dim(1), x.dim(2));
        let g4 = wih.dim(0);
        let h = g4 / 4;
        assert_eq!(wih.dim(1), inp, "lstm input width mismatch");
        assert_eq!(whh.shape(), &[g4, h]);
        assert_eq!(bv.shape(), &[g4]);

        let rows = seqs * steps;
        let mut pre = vec![0.0; rows * g4];
        gemm(rows, inp, g4, 1.0, x.data(), false, wih.data(), true, 0.0, &mut pre);
        for row in pre.chunks_mut(g4) {
            for (p, b) in row.iter_mut().zip(bv.data()) {
                *p += b;
            }
        }

        let order: Vec<usize> = if reverse {
            (0..steps).rev().collect()
        } else {
            (0..steps).collect()
        };
        // gates[k] and cells[k] hold the activations of the k-th processed step.
        let mut gates = vec![0.0; steps * seqs * g4];
        let mut cells = vec![0.0; steps * seqs * h];
        let mut out = vec![0.0; seqs * steps * h];
        let mut h_prev = vec![0.0; seqs * h];
        let mut z = vec![0.0; seqs * g4];
        for (k, &l) in order.iter().enumerate() {
            for s in 0..seqs {
                z[s * g4..(s + 1) * g4].copy_from_slice(&pre[(s * steps + l) * g4..(s * steps + l + 1) * g4]);
            }
            if k > 0 {
                gemm(seqs, h, g4, 1.0, &h_prev, false, whh.data(), true, 1.0, &mut z);
            }
            let gk = &mut gates[k * seqs * g4..(k + 1) * seqs * g4];
            for s in 0..seqs {
                let zs = &z[s * g4..(s + 1) * g4];
                let gs = &mut gk[s * g4..(s + 1) * g4];
                for j in 0..h {
                    gs[j] = sigmoid_scalar(zs[j]);
                    gs[h + j] = sigmoid_scalar(zs[h + j]);
                    gs[2 * h + j] = zs[2 * h + j].tanh();
                    gs[3 * h + j] = sigmoid_scalar(zs[3 * h + j]);
                }
            }
            for s in 0..seqs {
                let gs = &gk[s * g4..(s + 1) * g4];
                for j in 0..h {
                    let c_prev = if k > 0 { cells[((k - 1) * seqs + s) * h + j] } else { 0.0 };
                    let c = gs[h + j] * c_prev + gs[j] * gs[2 * h + j];
                    cells[(k * seqs + s) * h + j] = c;
                    let hv = gs[3 * h + j] * c.tanh();
                    h_prev[s * h + j] = hv;
                    out[(s * steps + l) * h + j] = hv;
                }
            }
        }

        let out_t = Tensor::new(vec![seqs, steps, h], out);
        let out_c = out_t.clone();
        self.graph().apply(&[self, w_ih, w_hh, bias], out_t, move |g| {
            let gd = g.data();
            let od = out_c.data();
            let mut dpre = vec![0.0; rows * g4];
            let mut dwhh = vec![0.0; g4 * h];
            let mut dh_next = vec![0.0; seqs * h];
            let mut dc_next = vec![0.0; seqs * h];
            let mut dz = vec![0.0; seqs * g4];
            let mut hp = vec![0.0; seqs * h];
            for k in (0..steps).rev() {
                let l = order[k];
                let gk = &gates[k * seqs * g4..(k + 1) * seqs * g4];
                for s in 0..seqs {
                    let gs = &gk[s * g4..(s + 1) * g4];
                    for j in 0..h {
                        let c = cells[(k * seqs + s) * h + j];
                        let c_prev = if k > 0 { cells[((k - 1) * seqs + s) * h + j] } else { 0.0 };
                        let (i, f, gg, o) = (gs[j], gs[h + j], gs[2 * h + j], gs[3 * h + j]);
                        let dh = gd[(s * steps + l) * h + j] + dh_next[s * h + j];
                        let tc = c.tanh();
                        let d_o = dh * tc;
                        let dc = dc_next[s * h + j] + dh * o * (1.0 - tc * tc);
                        let dzs = &mut dz[s * g4..(s + 1) * g4];
                        dzs[j] = dc * gg * i * (1.0 - i);
                        dzs[h + j] = dc * c_prev * f * (1.0 - f);
                        dzs[2 * h + j] = dc * i * (1.0 - gg * gg);
                        dzs[3 * h + j] = d_o * o * (1.0 - o);
                        dc_next[s * h + j] = dc * f;
                    }
                }
                for s in 0..seqs {
                    dpre[(s * steps + l) * g4..(s * steps + l + 1) * g4].copy_from_slice(&dz[s * g4..(s + 1) * g4]);
                }
                if k > 0 {
                    let lp = order[k - 1];
                    for s in 0..seqs {
                        hp[s * h..(s + 1) * h].copy_from_slice(&od[(s * steps + lp) * h..(s * steps + lp + 1) * h]);
                    }
                    gemm(g4, seqs, h, 1.0, &dz, true, &hp, false, 1.0, &mut dwhh);
                    gemm(seqs, g4, h, 1.0, &dz, false, whh.data(), false, 0.0, &mut dh_next);
                }
            }
            let mut dx = vec![0.0; rows * inp];
            gemm(rows, g4, inp, 1.0, &dpre, false, wih.data(), false, 0.0, &mut dx);
            let mut dwih = vec![0.0; g4 * inp];
            gemm(g4, rows, inp, 1.0, &dpre, true, x.data(), false, 0.0, &mut dwih);
            let mut db = vec![0.0; g4];
            for row in dpre.chunks(g4) {
                for (d, r) in db.iter_mut().zip(row) {
                    *d += r;
                }
            }
            vec![
                Some(Tensor::new(vec![seqs, steps, inp], dx)),
                Some(Tensor::new(vec![g4, inp], dwih)),
                Some(Tensor::new(vec![g4, h], dwhh)),
                Some(Tensor::new(vec![g4], db)),
            ]
        })
    }
}
