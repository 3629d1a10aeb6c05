use crate::graph::Var;
use crate::tensor::Tensor;

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub(crate) fn sigmoid_scalar(x: f64) -> f64 {
    sigmoid(x)
}

impl<'g> Var<'g> {
    pub fn add(self, other: Var<'g>) -> Var<'g> {
        let v = self.value().zip_map(&other.value(), |a, b| a + b);
        self.graph()
            .apply(&[self, other], v, |g| vec![Some(g.clone()), Some(g.clone())])
    }

    pub fn sub(self, other: Var<'g>) -> Var<'g> {
        let v = self.value().zip_map(&other.value(), |a, b| a - b);
        self.graph()
            .apply(&[self, other], v, |g| vec![Some(g.clone()), Some(g.map(|x| -x))])
    }

    pub fn mul(self, other: Var<'g>) -> Var<'g> {
        let a = self.value();
        let b = other.value();
        let v = a.zip_map(&b, |x, y| x * y);
        self.graph().apply(&[self, other], v, move |g| {
            vec![Some(g.zip_map(&b, |g, y| g * y)), Some(g.zip_map(&a, |g, x| g * x))]
        })
    }

    pub fn scale(self, c: f64) -> Var<'g> {
        let v = self.value().map(|x| x * c);
        self.graph().apply(&[self], v, move |g| vec![Some(g.map(|x| x * c))])
    }

    pub fn add_scalar(self, c: f64) -> Var<'g> {
        let v = self.value().map(|x| x + c);
        self.graph().apply(&[self], v, |g| vec![Some(g.clone())])
    }

    pub fn neg(self) -> Var<'g> {
        self.scale(-1.0)
    }

    pub fn relu(self) -> Var<'g> {
        let x = self.value();
        let v = x.map(|x| x.max(0.0));
        self.graph().apply(&[self], v, move |g| {
            vec![Some(g.zip_map(&x, |g, x| if x > 0.0 { g } else { 0.0 }))]
        })
    }

    pub fn sigmoid(self) -> Var<'g> {
        let y = self.value().map(sigmoid);
        let yc = y.clone();
        self.graph().apply(&[self], y, move |g| {
            vec![Some(g.zip_map(&yc, |g, y| g * y * (1.0 - y)))]
        })
    }

    pub fn tanh(self) -> Var<'g> {
        let y = self.value().map(f64::tanh);
        let yc = y.clone();
        self.graph().apply(&[self], y, move |g| {
            vec![Some(g.zip_map(&yc, |g, y| g * (1.0 - y * y)))]
        })
    }

    pub fn square(self) -> Var<'g> {
        let x = self.value();
        let v = x.map(|x| x * x);
        self.graph()
            .apply(&[self], v, move |g| vec![Some(g.zip_map(&x, |g, x| 2.0 * g * x))])
    }

    /// PReLU with a single learnable slope (`alpha` is a one-element tensor).
    pub fn prelu(self, alpha: Var<'g>) -> Var<'g> {
        let x = self.value();
        let a = alpha.value().item();
        let v = x.map(|x| if x >= 0.0 { x } else { a * x });
        self.graph().apply(&[self, alpha], v, move |g| {
            let dx = g.zip_map(&x, |g, x| if x >= 0.0 { g } else { a * g });
            let da: f64 = g
                .data()
                .iter()
                .zip(x.data())
                .filter(|(_, &x)| x < 0.0)
                .map(|(g, x)| g * x)
                .sum();
            vec![Some(dx), Some(Tensor::new(vec![1], vec![da]))]
        })
    }
}

/// Sum of `weights[i] * terms[i]` for scalar terms.
pub fn weighted_sum<'g>(terms: &[Var<'g>], weights: &[f64]) -> Var<'g> {
    assert_eq!(terms.len(), weights.len());
    assert!(!terms.is_empty());
    let graph = terms[0].graph();
    let total: f64 = terms
        .iter()
        .zip(weights)
        .map(|(t, w)| w * t.value().item())
        .sum();
    let shapes: Vec<Vec<usize>> = terms.iter().map(|t| t.shape()).collect();
    let weights = weights.to_vec();
    graph.apply(terms, Tensor::scalar(total), move |g| {
        let g = g.item();
        shapes
            .iter()
            .zip(&weights)
            .map(|(s, w)| Some(Tensor::full(s, g * w)))
            .collect()
    })
}
