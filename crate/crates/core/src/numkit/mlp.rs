//! Dense feed-forward networks with hand-written backpropagation.
//!
//! Parameters live in one flat `Vec<f64>` so optimizers, Polyak averaging and
//! checkpointing can treat every network uniformly. Layer `l` stores its
//! weight matrix row-major with shape `(out, in)` followed by its bias.

use serde::{Deserialize, Serialize};

use super::rng::Rng;
use crate::error::{check_dim, FpoError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Tanh,
    Relu,
    Identity,
}

impl Activation {
    #[inline]
    fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Tanh => x.tanh(),
            Activation::Relu => x.max(0.0),
            Activation::Identity => x,
        }
    }

    /// Derivative expressed through the activation output `y`.
    #[inline]
    fn derivative_from_output(self, y: f64) -> f64 {
        match self {
            Activation::Tanh => 1.0 - y * y,
            Activation::Relu => {
                if y > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Identity => 1.0,
        }
    }

    pub fn code(self) -> u8 {
        match self {
            Activation::Tanh => 0,
            Activation::Relu => 1,
            Activation::Identity => 2,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        match code {
            0 => Some(Activation::Tanh),
            1 => Some(Activation::Relu),
            2 => Some(Activation::Identity),
            _ => None,
        }
    }
}

/// Multilayer perceptron. The activation applies to hidden layers only; the
/// output layer is always affine.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    sizes: Vec<usize>,
    activation: Activation,
    params: Vec<f64>,
}

/// Cached layer outputs from a forward pass, reusable across calls.
#[derive(Debug, Clone, Default)]
pub struct Trace {
    acts: Vec<Vec<f64>>,
}

impl Trace {
    pub fn output(&self) -> &[f64] {
        self.acts.last().map(Vec::as_slice).unwrap_or(&[])
    }
}

/// Gradients returned by [`Mlp::backward`].
#[derive(Debug, Clone, PartialEq)]
pub struct MlpGrads {
    pub params: Vec<f64>,
    pub input: Vec<f64>,
}

/// Dot product with four independent accumulators.
fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = [0.0; 4];
    let (ca, cb) = (a.chunks_exact(4), b.chunks_exact(4));
    let (ra, rb) = (ca.remainder(), cb.remainder());
    for (p, q) in ca.zip(cb) {
        acc[0] += p[0] * q[0];
        acc[1] += p[1] * q[1];
        acc[2] += p[2] * q[2];
        acc[3] += p[3] * q[3];
    }
    let tail: f64 = ra.iter().zip(rb).map(|(p, q)| p * q).sum();
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

pub fn param_count(sizes: &[usize]) -> usize {
    sizes.windows(2).map(|w| (w[0] + 1) * w[1]).sum()
}

impl Mlp {
    /// Glorot-uniform weights, zero biases.
    pub fn new(sizes: &[usize], activation: Activation, rng: &mut Rng) -> Result<Self> {
        let mut net = Self::zeros(sizes, activation)?;
        let mut offset = 0;
        for w in sizes.windows(2) {
            let (fan_in, fan_out) = (w[0], w[1]);
            let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
            for p in &mut net.params[offset..offset + fan_in * fan_out] {
                *p = rng.uniform(-bound, bound);
            }
            offset += (fan_in + 1) * fan_out;
        }
        Ok(net)
    }

    pub fn zeros(sizes: &[usize], activation: Activation) -> Result<Self> {
        if sizes.len() < 2 {
            return Err(FpoError::Empty("mlp needs at least input and output sizes"));
        }
        if sizes.contains(&0) {
            return Err(FpoError::invalid(
                "layer_sizes",
                format!("{sizes:?}"),
                "positive integers",
            ));
        }
        Ok(Self {
            sizes: sizes.to_vec(),
            activation,
            params: vec![0.0; param_count(sizes)],
        })
    }

    pub fn from_params(sizes: &[usize], activation: Activation, params: Vec<f64>) -> Result<Self> {
        let mut net = Self::zeros(sizes, activation)?;
        check_dim("mlp parameter vector", net.params.len(), params.len())?;
        net.params = params;
        Ok(net)
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn input_dim(&self) -> usize {
        self.sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.sizes.last().unwrap()
    }

    pub fn num_layers(&self) -> usize {
        self.sizes.len() - 1
    }

    pub fn num_params(&self) -> usize {
        self.params.len()
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    /// Offset of layer `l`'s weights inside the flat parameter vector.
    fn layer_offset(&self, l: usize) -> usize {
        param_count(&self.sizes[..=l])
    }

    /// Weights (row-major, `out x in`) and bias of layer `l`.
    pub fn layer(&self, l: usize) -> (&[f64], &[f64]) {
        let (n_in, n_out) = (self.sizes[l], self.sizes[l + 1]);
        let off = self.layer_offset(l);
        let (w, rest) = self.params[off..].split_at(n_in * n_out);
        (w, &rest[..n_out])
    }

    pub fn layer_mut(&mut self, l: usize) -> (&mut [f64], &mut [f64]) {
        let (n_in, n_out) = (self.sizes[l], self.sizes[l + 1]);
        let off = self.layer_offset(l);
        let (w, rest) = self.params[off..].split_at_mut(n_in * n_out);
        (w, &mut rest[..n_out])
    }

    pub fn forward(&self, input: &[f64]) -> Result<Vec<f64>> {
        check_dim("mlp input", self.input_dim(), input.len())?;
        let mut trace = Trace::default();
        self.forward_trace(input, &mut trace);
        Ok(trace.acts.pop().unwrap_or_default())
    }

    /// Forward pass recording every layer output. Panics on a wrong input
    /// size; use [`Mlp::forward`] for a checked call.
    pub fn forward_trace(&self, input: &[f64], trace: &mut Trace) {
        assert_eq!(input.len(), self.input_dim(), "mlp input dimension");
        let n_layers = self.num_layers();
        trace.acts.resize_with(n_layers + 1, Vec::new);
        trace.acts[0].clear();
        trace.acts[0].extend_from_slice(input);
        let mut off = 0;
        for l in 0..n_layers {
            let (n_in, n_out) = (self.sizes[l], self.sizes[l + 1]);
            let w = &self.params[off..off + n_in * n_out];
            let b = &self.params[off + n_in * n_out..off + (n_in + 1) * n_out];
            off += (n_in + 1) * n_out;
            let (head, tail) = trace.acts.split_at_mut(l + 1);
            let x = &head[l];
            let y = &mut tail[0];
            y.clear();
            let hidden = l + 1 < n_layers;
            for o in 0..n_out {
                let acc = b[o] + dot(&w[o * n_in..(o + 1) * n_in], x);
                y.push(if hidden { self.activation.apply(acc) } else { acc });
            }
        }
    }

    /// Accumulate `d<upstream, output>/d params` into `param_grad` and, if
    /// requested, write the input gradient into `input_grad`.
    pub fn backward_trace(
        &self,
        trace: &Trace,
        upstream: &[f64],
        param_grad: &mut [f64],
        input_grad: Option<&mut [f64]>,
    ) {
        assert_eq!(upstream.len(), self.output_dim(), "mlp upstream dimension");
        assert_eq!(param_grad.len(), self.params.len(), "mlp gradient buffer");
        let n_layers = self.num_layers();
        let mut delta = upstream.to_vec();
        let mut next = Vec::new();
        let want_input = input_grad.is_some();
        for l in (0..n_layers).rev() {
            let (n_in, n_out) = (self.sizes[l], self.sizes[l + 1]);
            let off = self.layer_offset(l);
            let x = &trace.acts[l];
            {
                let (gw, gb) = param_grad[off..off + (n_in + 1) * n_out].split_at_mut(n_in * n_out);
                for o in 0..n_out {
                    let d = delta[o];
                    if d == 0.0 {
                        continue;
                    }
                    gb[o] += d;
                    for (g, xi) in gw[o * n_in..(o + 1) * n_in].iter_mut().zip(x.iter()) {
                        *g += d * xi;
                    }
                }
            }
            if l == 0 && !want_input {
                break;
            }
            let w = &self.params[off..off + n_in * n_out];
            next.clear();
            next.resize(n_in, 0.0);
            for o in 0..n_out {
                let d = delta[o];
                if d == 0.0 {
                    continue;
                }
                for (acc, wi) in next.iter_mut().zip(w[o * n_in..(o + 1) * n_in].iter()) {
                    *acc += d * wi;
                }
            }
            if l > 0 {
                for (g, y) in next.iter_mut().zip(x.iter()) {
                    *g *= self.activation.derivative_from_output(*y);
                }
            }
            std::mem::swap(&mut delta, &mut next);
        }
        if let Some(out) = input_grad {
            out.copy_from_slice(&delta);
        }
    }

    /// Exact gradients of `<upstream, forward(input)>` with respect to the
    /// parameters and the input.
    pub fn backward(&self, input: &[f64], upstream: &[f64]) -> Result<MlpGrads> {
        check_dim("mlp input", self.input_dim(), input.len())?;
        check_dim("mlp upstream gradient", self.output_dim(), upstream.len())?;
        let mut trace = Trace::default();
        self.forward_trace(input, &mut trace);
        let mut params = vec![0.0; self.num_params()];
        let mut input_grad = vec![0.0; self.input_dim()];
        self.backward_trace(&trace, upstream, &mut params, Some(&mut input_grad));
        Ok(MlpGrads {
            params,
            input: input_grad,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numkit::gradcheck::central_difference;

    fn hand_net() -> Mlp {
        // 2-2-1: hidden = tanh(W1 u + b1), out = w2 . hidden + b2
        let params = vec![
            0.5, -0.3, // W1 row 0
            0.8, 0.2, // W1 row 1
            0.1, -0.4, // b1
            1.5, -2.0, // W2
            0.25, // b2
        ];
        Mlp::from_params(&[2, 2, 1], Activation::Tanh, params).unwrap()
    }

    #[test]
    fn param_count_formula() {
        let mut rng = Rng::new(0);
        let net = Mlp::new(&[3, 5, 4, 2], Activation::Tanh, &mut rng).unwrap();
        assert_eq!(net.num_params(), 4 * 5 + 6 * 4 + 5 * 2);
    }

    #[test]
    fn zero_weights_output_bias() {
        let mut net = Mlp::zeros(&[3, 4, 2], Activation::Tanh).unwrap();
        let (_, b) = net.layer_mut(1);
        b.copy_from_slice(&[0.7, -1.1]);
        assert_eq!(net.forward(&[9.0, -3.0, 1.0]).unwrap(), vec![0.7, -1.1]);
    }

    #[test]
    fn single_layer_is_affine() {
        let net =
            Mlp::from_params(&[2, 2], Activation::Tanh, vec![1.0, 2.0, 3.0, 4.0, 0.5, -0.5]).unwrap();
        let y = net.forward(&[1.0, -1.0]).unwrap();
        assert_eq!(y, vec![1.0 - 2.0 + 0.5, 3.0 - 4.0 - 0.5]);
    }

    #[test]
    fn hand_evaluated_tanh_net() {
        // input (1, 0): pre-activations 0.5 + 0.1 = 0.6 and 0.8 - 0.4 = 0.4
        let expected = 1.5 * 0.6f64.tanh() - 2.0 * 0.4f64.tanh() + 0.25;
        // tanh(0.6) = 0.5370495669980353, tanh(0.4) = 0.3799489622552249
        assert!((expected - (1.5 * 0.5370495669980353 - 2.0 * 0.3799489622552249 + 0.25)).abs() < 1e-14);
        let y = hand_net().forward(&[1.0, 0.0]).unwrap();
        assert!((y[0] - expected).abs() < 1e-15);
        assert!((y[0] - 0.29567642598660315).abs() < 1e-12);
    }

    #[test]
    fn dimension_mismatch_rejected() {
        let net = hand_net();
        assert!(matches!(
            net.forward(&[1.0]),
            Err(FpoError::DimensionMismatch { .. })
        ));
        assert!(net.backward(&[1.0, 0.0], &[1.0, 1.0]).is_err());
    }

    #[test]
    fn affine_backward() {
        let net =
            Mlp::from_params(&[2, 2], Activation::Identity, vec![1.0, 2.0, 3.0, 4.0, 0.0, 0.0])
                .unwrap();
        let g = net.backward(&[5.0, -1.0], &[2.0, 3.0]).unwrap();
        // weight grad = g u^T, bias grad = g
        assert_eq!(g.params, vec![10.0, -2.0, 15.0, -3.0, 2.0, 3.0]);
        assert_eq!(g.input, vec![2.0 * 1.0 + 3.0 * 3.0, 2.0 * 2.0 + 3.0 * 4.0]);
    }

    #[test]
    fn zero_upstream_zero_grads() {
        let mut rng = Rng::new(1);
        let net = Mlp::new(&[3, 4, 2], Activation::Tanh, &mut rng).unwrap();
        let g = net.backward(&[0.1, 0.2, 0.3], &[0.0, 0.0]).unwrap();
        assert!(g.params.iter().all(|&v| v == 0.0));
        assert!(g.input.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn backward_matches_finite_differences() {
        for (seed, act) in [(2, Activation::Tanh), (3, Activation::Relu), (4, Activation::Tanh)] {
            let mut rng = Rng::new(seed);
            let net = Mlp::new(&[3, 4, 2], act, &mut rng).unwrap();
            let input = rng.normal_vec(3);
            let upstream = rng.normal_vec(2);
            let g = net.backward(&input, &upstream).unwrap();
            let fd = central_difference(
                |p| {
                    let n = Mlp::from_params(net.sizes(), act, p.to_vec()).unwrap();
                    let y = n.forward(&input).unwrap();
                    Ok(y.iter().zip(&upstream).map(|(a, b)| a * b).sum())
                },
                net.params(),
                1e-5,
            )
            .unwrap();
            for (a, n) in g.params.iter().zip(&fd) {
                assert!((a - n).abs() / 1f64.max(a.abs()).max(n.abs()) < 1e-4);
            }
            let fd_in = central_difference(
                |u| {
                    let y = net.forward(u)?;
                    Ok(y.iter().zip(&upstream).map(|(a, b)| a * b).sum())
                },
                &input,
                1e-5,
            )
            .unwrap();
            for (a, n) in g.input.iter().zip(&fd_in) {
                assert!((a - n).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn forward_and_backward_are_pure() {
        let mut rng = Rng::new(5);
        let net = Mlp::new(&[2, 3, 1], Activation::Tanh, &mut rng).unwrap();
        let before = net.clone();
        let _ = net.forward(&[0.3, 0.4]).unwrap();
        let _ = net.backward(&[0.3, 0.4], &[1.0]).unwrap();
        assert_eq!(net, before);
    }
}
