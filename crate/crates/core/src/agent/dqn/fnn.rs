//! A small dense feed-forward network with a flat parameter vector.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Relu,
    Sigmoid,
    Linear,
}

impl Activation {
    pub fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Relu => z.max(0.0),
            Activation::Sigmoid => sigmoid(z),
            Activation::Linear => z,
        }
    }

    /// Derivative expressed through the pre-activation `z` and output `a`.
    fn derivative(self, z: f64, a: f64) -> f64 {
        match self {
            Activation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Sigmoid => a * (1.0 - a),
            Activation::Linear => 1.0,
        }
    }
}

impl fmt::Display for Activation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Activation::Relu => "relu",
            Activation::Sigmoid => "sigmoid",
            Activation::Linear => "linear",
        })
    }
}

impl FromStr for Activation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "relu" => Ok(Activation::Relu),
            "sigmoid" => Ok(Activation::Sigmoid),
            "linear" => Ok(Activation::Linear),
            other => Err(Error::Format(format!("unknown activation `{other}`"))),
        }
    }
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Fully connected network. Parameters are stored layer by layer, each as a
/// row-major `outputs x inputs` weight matrix followed by the bias vector.
#[derive(Debug, Clone, PartialEq)]
pub struct Fnn {
    sizes: Vec<usize>,
    activations: Vec<Activation>,
    params: Vec<f64>,
}

/// Intermediate values of one forward pass.
#[derive(Debug, Clone, Default)]
pub struct ForwardCache {
    /// Pre-activations per layer.
    z: Vec<Vec<f64>>,
    /// `a[0]` is the input, `a[l + 1]` the output of layer `l`.
    a: Vec<Vec<f64>>,
}

impl ForwardCache {
    pub fn output(&self) -> &[f64] {
        self.a.last().map_or(&[], Vec::as_slice)
    }
}

impl Fnn {
    /// Zero-initialised network. `activations` has one entry per layer.
    pub fn zeros(sizes: &[usize], activations: &[Activation]) -> Result<Self> {
        if sizes.len() < 2 || activations.len() != sizes.len() - 1 || sizes.contains(&0) {
            return Err(Error::invalid(format!(
                "network needs >= 2 non-zero layer sizes and one activation per layer, got {sizes:?} / {activations:?}"
            )));
        }
        let n = sizes.windows(2).map(|w| w[0] * w[1] + w[1]).sum();
        Ok(Self {
            sizes: sizes.to_vec(),
            activations: activations.to_vec(),
            params: vec![0.0; n],
        })
    }

    /// Uniform fan-in scaled initialisation, zero biases.
    pub fn random<R: Rng + ?Sized>(
        sizes: &[usize],
        activations: &[Activation],
        rng: &mut R,
    ) -> Result<Self> {
        let mut net = Self::zeros(sizes, activations)?;
        let mut off = 0;
        for l in 0..net.layers() {
            let (inp, out) = (sizes[l], sizes[l + 1]);
            let scale = match activations[l] {
                Activation::Relu => (6.0 / inp as f64).sqrt(),
                _ => (6.0 / (inp + out) as f64).sqrt(),
            };
            for w in &mut net.params[off..off + inp * out] {
                *w = rng.gen_range(-scale..scale);
            }
            off += inp * out + out;
        }
        Ok(net)
    }

    /// Rectifier on the first hidden layer, sigmoid on later hidden layers,
    /// linear output.
    pub fn q_network<R: Rng + ?Sized>(
        input: usize,
        hidden: &[usize],
        output: usize,
        rng: &mut R,
    ) -> Result<Self> {
        let mut sizes = vec![input];
        sizes.extend_from_slice(hidden);
        sizes.push(output);
        let acts: Vec<Activation> = (0..sizes.len() - 1)
            .map(|l| {
                if l == sizes.len() - 2 {
                    Activation::Linear
                } else if l == 0 {
                    Activation::Relu
                } else {
                    Activation::Sigmoid
                }
            })
            .collect();
        Self::random(&sizes, &acts, rng)
    }

    pub fn layers(&self) -> usize {
        self.activations.len()
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn activations(&self) -> &[Activation] {
        &self.activations
    }

    pub fn input_len(&self) -> usize {
        self.sizes[0]
    }

    pub fn output_len(&self) -> usize {
        self.sizes[self.sizes.len() - 1]
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn set_params(&mut self, p: &[f64]) -> Result<()> {
        if p.len() != self.params.len() {
            return Err(Error::Contract(format!(
                "expected {} parameters, got {}",
                self.params.len(),
                p.len()
            )));
        }
        self.params.copy_from_slice(p);
        Ok(())
    }

    pub fn forward_cached(&self, x: &[f64], cache: &mut ForwardCache) {
        debug_assert_eq!(x.len(), self.input_len());
        let layers = self.layers();
        cache.z.resize(layers, Vec::new());
        cache.a.resize(layers + 1, Vec::new());
        cache.a[0].clear();
        cache.a[0].extend_from_slice(x);
        let mut off = 0;
        for l in 0..layers {
            let (inp, out) = (self.sizes[l], self.sizes[l + 1]);
            let w = &self.params[off..off + inp * out];
            let b = &self.params[off + inp * out..off + inp * out + out];
            let (prev, rest) = cache.a.split_at_mut(l + 1);
            let input = &prev[l];
            let z = &mut cache.z[l];
            z.clear();
            for o in 0..out {
                let row = &w[o * inp..(o + 1) * inp];
                z.push(row.iter().zip(input).map(|(w, x)| w * x).sum::<f64>() + b[o]);
            }
            let act = self.activations[l];
            let a = &mut rest[0];
            a.clear();
            a.extend(z.iter().map(|&z| act.apply(z)));
            off += inp * out + out;
        }
    }

    pub fn forward(&self, x: &[f64]) -> Vec<f64> {
        let mut cache = ForwardCache::default();
        self.forward_cached(x, &mut cache);
        cache.a.pop().unwrap_or_default()
    }

    /// Adds `d_out * d(output[unit]) / d(params)` into `grad`, using the
    /// cache of a forward pass on the same parameters.
    pub fn backward(&self, cache: &ForwardCache, unit: usize, d_out: f64, grad: &mut [f64]) {
        debug_assert_eq!(grad.len(), self.params.len());
        let layers = self.layers();
        let mut delta = vec![0.0; self.output_len()];
        delta[unit] = d_out
            * self.activations[layers - 1]
                .derivative(cache.z[layers - 1][unit], cache.a[layers][unit]);
        let mut off_end = self.params.len();
        for l in (0..layers).rev() {
            let (inp, out) = (self.sizes[l], self.sizes[l + 1]);
            let off = off_end - (inp * out + out);
            let input = &cache.a[l];
            for o in 0..out {
                let d = delta[o];
                if d == 0.0 {
                    continue;
                }
                let gw = &mut grad[off + o * inp..off + (o + 1) * inp];
                for (g, &x) in gw.iter_mut().zip(input) {
                    *g += d * x;
                }
                grad[off + inp * out + o] += d;
            }
            if l > 0 {
                let w = &self.params[off..off + inp * out];
                let act = self.activations[l - 1];
                let mut prev = vec![0.0; inp];
                for o in 0..out {
                    let d = delta[o];
                    if d == 0.0 {
                        continue;
                    }
                    for (p, &wv) in prev.iter_mut().zip(&w[o * inp..(o + 1) * inp]) {
                        *p += wv * d;
                    }
                }
                for (i, p) in prev.iter_mut().enumerate() {
                    *p *= act.derivative(cache.z[l - 1][i], cache.a[l][i]);
                }
                delta = prev;
            }
            off_end = off;
        }
    }
}
