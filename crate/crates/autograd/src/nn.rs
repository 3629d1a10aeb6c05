//! Parameterised layers. Each layer registers its tensors in a [`ParamStore`] at
//! construction and reads them back through a [`Session`] during the forward pass.

use rand::Rng;

use crate::graph::Var;
use crate::ops::{concat, Conv1dGeometry};
use crate::params::{ParamId, ParamStore, Session};
use crate::tensor::Tensor;

fn fan_in_bound(fan_in: usize) -> f64 {
    1.0 / (fan_in.max(1) as f64).sqrt()
}

/// Dense layer. `forward_last` maps the trailing axis, `forward_channels` maps axis 1.
#[derive(Clone, Debug)]
pub struct Linear {
    pub weight: ParamId,
    pub bias: Option<ParamId>,
    pub in_dim: usize,
    pub out_dim: usize,
}

impl Linear {
    pub fn new<R: Rng + ?Sized>(
        store: &mut ParamStore,
        name: &str,
        in_dim: usize,
        out_dim: usize,
        bias: bool,
        rng: &mut R,
    ) -> Self {
        let bound = fan_in_bound(in_dim);
        let weight = store.add(format!("{name}.weight"), Tensor::uniform(&[out_dim, in_dim], bound, rng));
        let bias = bias.then(|| store.add(format!("{name}.bias"), Tensor::uniform(&[out_dim], bound, rng)));
        Self {
            weight,
            bias,
            in_dim,
            out_dim,
        }
    }

    pub fn forward_last<'g>(&self, s: &Session<'g>, x: Var<'g>) -> Var<'g> {
        x.linear_last(s.param(self.weight), self.bias.map(|b| s.param(b)))
    }

    pub fn forward_channels<'g>(&self, s: &Session<'g>, x: Var<'g>) -> Var<'g> {
        x.channel_linear(s.param(self.weight), self.bias.map(|b| s.param(b)))
    }

    pub fn params(&self) -> Vec<ParamId> {
        std::iter::once(self.weight).chain(self.bias).collect()
    }
}

#[derive(Clone, Debug)]
pub struct Conv1d {
    pub weight: ParamId,
    pub bias: Option<ParamId>,
    pub geometry: Conv1dGeometry,
}

impl Conv1d {
    #[allow(clippy::too_many_arguments)]
    pub fn new<R: Rng + ?Sized>(
        store: &mut ParamStore,
        name: &str,
        cin: usize,
        cout: usize,
        kernel: usize,
        geometry: Conv1dGeometry,
        bias: bool,
        rng: &mut R,
    ) -> Self {
        let bound = fan_in_bound(cin * kernel);
        let weight = store.add(
            format!("{name}.weight"),
            Tensor::uniform(&[cout, cin, kernel], bound, rng),
        );
        let bias = bias.then(|| store.add(format!("{name}.bias"), Tensor::uniform(&[cout], bound, rng)));
        Self {
            weight,
            bias,
            geometry,
        }
    }

    /// "Same" geometry for an odd kernel with the given dilation.
    pub fn same(kernel: usize, dilation: usize) -> Conv1dGeometry {
        assert!(kernel % 2 == 1, "same padding needs an odd kernel");
        Conv1dGeometry {
            stride: 1,
            padding: dilation * (kernel - 1) / 2,
            dilation,
        }
    }

    pub fn forward<'g>(&self, s: &Session<'g>, x: Var<'g>) -> Var<'g> {
        x.conv1d(s.param(self.weight), self.bias.map(|b| s.param(b)), self.geometry)
    }

    pub fn params(&self) -> Vec<ParamId> {
        std::iter::once(self.weight).chain(self.bias).collect()
    }
}

#[derive(Clone, Debug)]
pub struct Conv2d {
    pub weight: ParamId,
    pub bias: ParamId,
    pub stride: usize,
    pub padding: usize,
}

impl Conv2d {
    #[allow(clippy::too_many_arguments)]
    pub fn new<R: Rng + ?Sized>(
        store: &mut ParamStore,
        name: &str,
        cin: usize,
        cout: usize,
        kernel: usize,
        stride: usize,
        padding: usize,
        rng: &mut R,
    ) -> Self {
        let bound = fan_in_bound(cin * kernel * kernel);
        let weight = store.add(
            format!("{name}.weight"),
            Tensor::uniform(&[cout, cin, kernel, kernel], bound, rng),
        );
        let bias = store.add(format!("{name}.bias"), Tensor::uniform(&[cout], bound, rng));
        Self {
            weight,
            bias,
            stride,
            padding,
        }
    }

    pub fn forward<'g>(&self, s: &Session<'g>, x: Var<'g>) -> Var<'g> {
        x.conv2d(s.param(self.weight), Some(s.param(self.bias)), self.stride, self.padding)
    }
}

/// Affine parameters shared by the normalization layers.
#[derive(Clone, Debug)]
pub struct Norm {
    pub gamma: ParamId,
    pub beta: ParamId,
}

impl Norm {
    pub fn new(store: &mut ParamStore, name: &str, channels: usize) -> Self {
        Self {
            gamma: store.add(format!("{name}.gamma"), Tensor::ones(&[channels])),
            beta: store.add(format!("{name}.beta"), Tensor::zeros(&[channels])),
        }
    }

    /// One-group normalization over all non-batch axes.
    pub fn global<'g>(&self, s: &Session<'g>, x: Var<'g>) -> Var<'g> {
        x.global_norm(s.param(self.gamma), s.param(self.beta))
    }

    /// Per-frame normalization over channels of `[B, C, T]`.
    pub fn layer<'g>(&self, s: &Session<'g>, x: Var<'g>) -> Var<'g> {
        x.channel_layer_norm(s.param(self.gamma), s.param(self.beta))
    }

    pub fn params(&self) -> Vec<ParamId> {
        vec![self.gamma, self.beta]
    }
}

#[derive(Clone, Debug)]
pub struct PRelu {
    pub alpha: ParamId,
}

impl PRelu {
    pub fn new(store: &mut ParamStore, name: &str) -> Self {
        Self {
            alpha: store.add(format!("{name}.alpha"), Tensor::full(&[1], 0.25)),
        }
    }

    pub fn forward<'g>(&self, s: &Session<'g>, x: Var<'g>) -> Var<'g> {
        x.prelu(s.param(self.alpha))
    }
}

#[derive(Clone, Debug)]
pub struct Lstm {
    pub w_ih: ParamId,
    pub w_hh: ParamId,
    pub bias: ParamId,
    pub hidden: usize,
}

impl Lstm {
    pub fn new<R: Rng + ?Sized>(store: &mut ParamStore, name: &str, input: usize, hidden: usize, rng: &mut R) -> Self {
        let bound = fan_in_bound(hidden);
        Self {
            w_ih: store.add(format!("{name}.w_ih"), Tensor::uniform(&[4 * hidden, input], bound, rng)),
            w_hh: store.add(format!("{name}.w_hh"), Tensor::uniform(&[4 * hidden, hidden], bound, rng)),
            bias: store.add(format!("{name}.bias"), Tensor::uniform(&[4 * hidden], bound, rng)),
            hidden,
        }
    }

    pub fn forward<'g>(&self, s: &Session<'g>, x: Var<'g>, reverse: bool) -> Var<'g> {
        x.lstm(s.param(self.w_ih), s.param(self.w_hh), s.param(self.bias), reverse)
    }
}

/// Bidirectional LSTM over `[S, L, I]`, output `[S, L, 2h]` (forward then backward halves).
#[derive(Clone, Debug)]
pub struct BiLstm {
    pub fwd: Lstm,
    pub bwd: Lstm,
}

impl BiLstm {
    pub fn new<R: Rng + ?Sized>(store: &mut ParamStore, name: &str, input: usize, hidden: usize, rng: &mut R) -> Self {
        Self {
            fwd: Lstm::new(store, &format!("{name}.fwd"), input, hidden, rng),
            bwd: Lstm::new(store, &format!("{name}.bwd"), input, hidden, rng),
        }
    }

    pub fn forward<'g>(&self, s: &Session<'g>, x: Var<'g>) -> Var<'g> {
        let f = self.fwd.forward(s, x, false);
        let b = self.bwd.forward(s, x, true);
        concat(&[f, b], 2)
    }

    pub fn out_dim(&self) -> usize {
        2 * self.fwd.hidden
    }
}
