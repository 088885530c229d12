//! Fully connected network with `tanh` hidden activations and a linear output
//! layer, with hand-written backpropagation.
//!
//! Parameters live in one flat vector, layer by layer: the `out x in`
//! row-major weight matrix followed by the `out` biases.

use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;

use crate::math;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    sizes: Vec<usize>,
    params: Vec<f64>,
}

/// Per-layer inputs recorded by [`Mlp::forward`] for the backward pass.
#[derive(Debug, Clone, Default)]
pub struct ForwardCache {
    /// `acts[i]` is the input to layer `i`; the last entry is the output.
    acts: Vec<Vec<f64>>,
}

impl ForwardCache {
    pub fn output(&self) -> &[f64] {
        self.acts.last().map_or(&[], Vec::as_slice)
    }
}

fn param_count(sizes: &[usize]) -> usize {
    sizes.windows(2).map(|w| w[0] * w[1] + w[1]).sum()
}

impl Mlp {
    /// All-zero network with the given layer sizes (input, hidden..., output).
    pub fn zeros(sizes: &[usize]) -> Self {
        assert!(sizes.len() >= 2, "an MLP needs at least an input and an output size");
        Self { sizes: sizes.to_vec(), params: vec![0.0; param_count(sizes)] }
    }

    /// Uniform fan-in initialisation `U(-1/sqrt(in), 1/sqrt(in))`, zero biases;
    /// the output layer's weights are further scaled by `output_scale`.
    pub fn init<R: Rng + ?Sized>(sizes: &[usize], output_scale: f64, rng: &mut R) -> Self {
        let mut net = Self::zeros(sizes);
        let layers = net.num_layers();
        for i in 0..layers {
            let (fan_in, _) = net.layer_shape(i);
            let bound = 1.0 / math::sqrt(fan_in as f64);
            let scale = if i + 1 == layers { output_scale } else { 1.0 };
            let (w, _) = net.layer_params_mut(i);
            for v in w {
                *v = (rng.random::<f64>() * 2.0 - 1.0) * bound * scale;
            }
        }
        net
    }

    /// Rebuilds a network from its sizes and flat parameters.
    pub fn from_parts(sizes: Vec<usize>, params: Vec<f64>) -> Result<Self> {
        if sizes.len() < 2 || sizes.contains(&0) {
            return Err(Error::Domain("MLP needs >= 2 nonzero layer sizes"));
        }
        let want = param_count(&sizes);
        if params.len() != want {
            return Err(Error::DimensionMismatch { expected: want, got: params.len() });
        }
        if params.iter().any(|p| !p.is_finite()) {
            return Err(Error::Domain("non-finite MLP parameter"));
        }
        Ok(Self { sizes, params })
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn input_dim(&self) -> usize {
        self.sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        self.sizes[self.sizes.len() - 1]
    }

    pub fn num_layers(&self) -> usize {
        self.sizes.len() - 1
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    /// `(inputs, outputs)` of layer `i`.
    pub fn layer_shape(&self, i: usize) -> (usize, usize) {
        (self.sizes[i], self.sizes[i + 1])
    }

    /// Flat index range of layer `i` (weights then biases).
    pub fn layer_range(&self, i: usize) -> core::ops::Range<usize> {
        let start = param_count(&self.sizes[..=i]);
        let (n_in, n_out) = self.layer_shape(i);
        start..start + n_in * n_out + n_out
    }

    fn layer_params(&self, i: usize) -> (&[f64], &[f64]) {
        let r = self.layer_range(i);
        let (n_in, n_out) = self.layer_shape(i);
        self.params[r].split_at(n_in * n_out)
    }

    fn layer_params_mut(&mut self, i: usize) -> (&mut [f64], &mut [f64]) {
        let r = self.layer_range(i);
        let (n_in, n_out) = self.layer_shape(i);
        self.params[r].split_at_mut(n_in * n_out)
    }

    pub fn forward(&self, x: &[f64], cache: &mut ForwardCache) -> Result<()> {
        if x.len() != self.input_dim() {
            return Err(Error::DimensionMismatch { expected: self.input_dim(), got: x.len() });
        }
        let layers = self.num_layers();
        cache.acts.resize_with(layers + 1, Vec::new);
        cache.acts[0].clear();
        cache.acts[0].extend_from_slice(x);
        for i in 0..layers {
            let (n_in, n_out) = self.layer_shape(i);
            let (w, b) = self.layer_params(i);
            let (done, rest) = cache.acts.split_at_mut(i + 1);
            let input = &done[i];
            let out = &mut rest[0];
            out.clear();
            for o in 0..n_out {
                let row = &w[o * n_in..(o + 1) * n_in];
                let z = b[o] + row.iter().zip(input).map(|(a, b)| a * b).sum::<f64>();
                out.push(if i + 1 < layers { math::tanh(z) } else { z });
            }
        }
        Ok(())
    }

    pub fn forward_vec(&self, x: &[f64]) -> Result<Vec<f64>> {
        let mut cache = ForwardCache::default();
        self.forward(x, &mut cache)?;
        Ok(cache.output().to_vec())
    }

    /// Accumulates `dL/dparams` into `grad` given `dL/doutput` for the forward
    /// pass recorded in `cache`.
    pub fn backward(&self, cache: &ForwardCache, d_out: &[f64], grad: &mut [f64]) {
        debug_assert_eq!(grad.len(), self.params.len());
        debug_assert_eq!(d_out.len(), self.output_dim());
        let mut delta = d_out.to_vec();
        let mut next = Vec::new();
        for i in (0..self.num_layers()).rev() {
            let (n_in, n_out) = self.layer_shape(i);
            let input = &cache.acts[i];
            let (w, _) = self.layer_params(i);
            let r = self.layer_range(i);
            let (gw, gb) = grad[r].split_at_mut(n_in * n_out);
            for o in 0..n_out {
                let d = delta[o];
                gb[o] += d;
                for (g, a) in gw[o * n_in..(o + 1) * n_in].iter_mut().zip(input) {
                    *g += d * a;
                }
            }
            if i == 0 {
                break;
            }
            next.clear();
            next.resize(n_in, 0.0);
            for o in 0..n_out {
                let d = delta[o];
                for (n, wv) in next.iter_mut().zip(&w[o * n_in..(o + 1) * n_in]) {
                    *n += d * wv;
                }
            }
            // input to layer i is tanh of layer i-1's pre-activation
            for (n, a) in next.iter_mut().zip(input) {
                *n *= 1.0 - a * a;
            }
            core::mem::swap(&mut delta, &mut next);
        }
    }
}

/// Numerically stable log-softmax.
pub fn log_softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + math::ln(logits.iter().map(|z| math::exp(z - max)).sum::<f64>());
    logits.iter().map(|z| z - lse).collect()
}

pub fn softmax(logits: &[f64]) -> Vec<f64> {
    log_softmax(logits).into_iter().map(math::exp).collect()
}
