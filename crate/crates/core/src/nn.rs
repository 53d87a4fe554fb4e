//! The shared policy network: `softmax(W3 tanh(W2 tanh(W1 x + b1) + b2) + b3)`.
//!
//! All parameters live in one flat vector laid out as
//! `W1 | b1 | W2 | b2 | W3 | b3`, each weight matrix row-major with one row
//! per output unit. Gradients use the same layout.

use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

pub const HIDDEN: usize = 64;
/// `[inputs, hidden 1, hidden 2, actions]` of the shipped policy.
pub const DEFAULT_DIMS: [usize; 4] = [crate::obs::OBS_DIM, HIDDEN, HIDDEN, crate::sim::Action::COUNT];

#[derive(Clone, Debug, PartialEq)]
pub struct PolicyParams {
    dims: [usize; 4],
    data: Vec<f64>,
}

/// Offsets of the six tensors inside the flat vector.
#[derive(Clone, Copy, Debug)]
struct Offsets {
    w: [usize; 3],
    b: [usize; 3],
    end: usize,
}

fn offsets(dims: [usize; 4]) -> Offsets {
    let mut at = 0;
    let mut w = [0; 3];
    let mut b = [0; 3];
    for l in 0..3 {
        w[l] = at;
        at += dims[l] * dims[l + 1];
        b[l] = at;
        at += dims[l + 1];
    }
    Offsets { w, b, end: at }
}

pub fn param_count(dims: [usize; 4]) -> usize {
    offsets(dims).end
}

impl PolicyParams {
    pub fn zeros(dims: [usize; 4]) -> Self {
        PolicyParams {
            dims,
            data: vec![0.0; param_count(dims)],
        }
    }

    /// Weights uniform in `±sqrt(6 / (fan_in + fan_out))`, zero biases.
    pub fn glorot<R: Rng + ?Sized>(dims: [usize; 4], rng: &mut R) -> Self {
        let mut p = Self::zeros(dims);
        let off = offsets(dims);
        for l in 0..3 {
            let (fan_in, fan_out) = (dims[l], dims[l + 1]);
            let limit = libm::sqrt(6.0 / (fan_in + fan_out) as f64);
            for w in &mut p.data[off.w[l]..off.b[l]] {
                *w = rng.random_range(-limit..limit);
            }
        }
        p
    }

    pub fn from_vec(dims: [usize; 4], data: Vec<f64>) -> Result<Self> {
        let expected = param_count(dims);
        if data.len() != expected {
            return Err(Error::ShapeMismatch {
                expected,
                actual: data.len(),
            });
        }
        if data.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFiniteInput);
        }
        Ok(PolicyParams { dims, data })
    }

    pub fn dims(&self) -> [usize; 4] {
        self.dims
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn n_actions(&self) -> usize {
        self.dims[3]
    }

    /// Action probabilities for one observation.
    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        Ok(self.activations(x)?.probs)
    }

    fn activations(&self, x: &[f64]) -> Result<Activations> {
        if x.len() != self.dims[0] {
            return Err(Error::ShapeMismatch {
                expected: self.dims[0],
                actual: x.len(),
            });
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteInput);
        }
        let off = offsets(self.dims);
        let mut h1 = self.affine(0, &off, x);
        h1.iter_mut().for_each(|v| *v = libm::tanh(*v));
        let mut h2 = self.affine(1, &off, &h1);
        h2.iter_mut().for_each(|v| *v = libm::tanh(*v));
        let logits = self.affine(2, &off, &h2);
        Ok(Activations {
            h1,
            h2,
            probs: softmax(&logits),
        })
    }

    fn affine(&self, layer: usize, off: &Offsets, x: &[f64]) -> Vec<f64> {
        let (n_in, n_out) = (self.dims[layer], self.dims[layer + 1]);
        let w = &self.data[off.w[layer]..off.b[layer]];
        let b = &self.data[off.b[layer]..off.b[layer] + n_out];
        (0..n_out)
            .map(|o| {
                let row = &w[o * n_in..(o + 1) * n_in];
                b[o] + row.iter().zip(x).map(|(w, x)| w * x).sum::<f64>()
            })
            .collect()
    }

    /// Gradient of `log pi(action | x)` with respect to every parameter.
    pub fn logprob_backward(&self, x: &[f64], action: usize) -> Result<Vec<f64>> {
        let mut grad = vec![0.0; self.len()];
        self.accumulate_logprob_grad(x, action, 1.0, &mut grad)?;
        Ok(grad)
    }

    /// `grad += scale * d log pi(action | x) / d params`.
    pub fn accumulate_logprob_grad(&self, x: &[f64], action: usize, scale: f64, grad: &mut [f64]) -> Result<()> {
        if grad.len() != self.len() {
            return Err(Error::ShapeMismatch {
                expected: self.len(),
                actual: grad.len(),
            });
        }
        if action >= self.n_actions() {
            return Err(Error::ShapeMismatch {
                expected: self.n_actions(),
                actual: action + 1,
            });
        }
        let act = self.activations(x)?;
        let off = offsets(self.dims);

        // Output layer error of the log-softmax.
        let delta3: Vec<f64> = act
            .probs
            .iter()
            .enumerate()
            .map(|(i, p)| scale * (f64::from(u8::from(i == action)) - p))
            .collect();
        let delta2 = self.backprop_layer(2, &off, &delta3, &act.h2, grad);
        let delta2: Vec<f64> = delta2.iter().zip(&act.h2).map(|(g, h)| g * (1.0 - h * h)).collect();
        let delta1 = self.backprop_layer(1, &off, &delta2, &act.h1, grad);
        let delta1: Vec<f64> = delta1.iter().zip(&act.h1).map(|(g, h)| g * (1.0 - h * h)).collect();
        self.backprop_layer(0, &off, &delta1, x, grad);
        Ok(())
    }

    /// Adds the weight and bias gradients of `layer` and returns the error
    /// propagated to its input.
    fn backprop_layer(&self, layer: usize, off: &Offsets, delta: &[f64], input: &[f64], grad: &mut [f64]) -> Vec<f64> {
        let (n_in, n_out) = (self.dims[layer], self.dims[layer + 1]);
        let w = &self.data[off.w[layer]..off.b[layer]];
        let mut back = vec![0.0; n_in];
        for o in 0..n_out {
            let dl = delta[o];
            grad[off.b[layer] + o] += dl;
            if dl == 0.0 {
                continue;
            }
            let g_row = &mut grad[off.w[layer] + o * n_in..off.w[layer] + (o + 1) * n_in];
            for (g, x) in g_row.iter_mut().zip(input) {
                *g += dl * x;
            }
            for (b, w) in back.iter_mut().zip(&w[o * n_in..(o + 1) * n_in]) {
                *b += dl * w;
            }
        }
        back
    }
}

struct Activations {
    h1: Vec<f64>,
    h2: Vec<f64>,
    probs: Vec<f64>,
}

fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|z| libm::exp(z - max)).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}

/// RMSprop for gradient ascent.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RmsProp {
    pub learning_rate: f64,
    pub decay: f64,
    pub eps: f64,
    cache: Vec<f64>,
}

impl RmsProp {
    pub fn new(n_params: usize, learning_rate: f64) -> Self {
        RmsProp {
            learning_rate,
            decay: 0.99,
            eps: 1e-8,
            cache: vec![0.0; n_params],
        }
    }

    pub fn cache(&self) -> &[f64] {
        &self.cache
    }

    /// `cache = decay * cache + (1 - decay) * g^2`, then
    /// `param += lr * g / (sqrt(cache) + eps)`.
    pub fn step(&mut self, params: &mut PolicyParams, grad: &[f64]) -> Result<()> {
        if grad.len() != params.len() || self.cache.len() != params.len() {
            return Err(Error::ShapeMismatch {
                expected: params.len(),
                actual: grad.len(),
            });
        }
        for ((p, c), g) in params.data.iter_mut().zip(&mut self.cache).zip(grad) {
            *c = self.decay * *c + (1.0 - self.decay) * g * g;
            *p += self.learning_rate * g / (libm::sqrt(*c) + self.eps);
        }
        Ok(())
    }
}

/// Saved policy with its training metadata.
///
/// Binary layout, little endian:
///
/// | bytes | content |
/// |-------|---------|
/// | 8 | magic `MIXFLOW\0` |
/// | 4 | format version (1) |
/// | 16 | dims: inputs, hidden 1, hidden 2, actions (u32 each) |
/// | 8 | update index (u64) |
/// | 8 | batch mean outflow (f64) |
/// | 8 | parameter count (u64) |
/// | 8n | parameters (f64) in the flat layout |
#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub params: PolicyParams,
    pub update: u64,
    pub mean_outflow: f64,
}

const MAGIC: &[u8; 8] = b"MIXFLOW\0";
const VERSION: u32 = 1;

impl Checkpoint {
    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(60 + 8 * self.params.len());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        for d in self.params.dims {
            out.extend_from_slice(&(d as u32).to_le_bytes());
        }
        out.extend_from_slice(&self.update.to_le_bytes());
        out.extend_from_slice(&self.mean_outflow.to_le_bytes());
        out.extend_from_slice(&(self.params.len() as u64).to_le_bytes());
        for x in &self.params.data {
            out.extend_from_slice(&x.to_le_bytes());
        }
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, at: 0 };
        if r.take(8)? != MAGIC {
            return Err(Error::Checkpoint("bad magic"));
        }
        if r.u32()? != VERSION {
            return Err(Error::Checkpoint("unsupported version"));
        }
        let mut dims = [0usize; 4];
        for d in &mut dims {
            *d = r.u32()? as usize;
        }
        let update = r.u64()?;
        let mean_outflow = f64::from_le_bytes(r.array()?);
        let n = r.u64()? as usize;
        if n != param_count(dims) {
            return Err(Error::Checkpoint("parameter count does not match dims"));
        }
        let mut data = Vec::with_capacity(n);
        for _ in 0..n {
            data.push(f64::from_le_bytes(r.array()?));
        }
        if r.at != bytes.len() {
            return Err(Error::Checkpoint("trailing bytes"));
        }
        let params = PolicyParams::from_vec(dims, data).map_err(|_| Error::Checkpoint("non-finite parameter"))?;
        Ok(Checkpoint {
            params,
            update,
            mean_outflow,
        })
    }

    /// Errors unless the policy fits the shipped observation and action sizes.
    pub fn expect_dims(&self, dims: [usize; 4]) -> Result<()> {
        let actual = self.params.dims;
        if actual[0] != dims[0] || actual[3] != dims[3] {
            return Err(Error::LayoutMismatch { expected: dims, actual });
        }
        Ok(())
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    at: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.at.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or(Error::Checkpoint("truncated"))?;
        let s = &self.bytes[self.at..end];
        self.at = end;
        Ok(s)
    }

    fn array<const N: usize>(&mut self) -> Result<[u8; N]> {
        Ok(self.take(N)?.try_into().expect("length checked"))
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.array()?))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.array()?))
    }
}
