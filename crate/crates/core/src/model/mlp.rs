use super::{ModelError, Result};
use crate::numerics::Rng;

/// Fully-connected network with ReLU between layers and a linear output.
///
/// Parameters live in one flat buffer: for each layer, the `out × in`
/// row-major weight matrix followed by the `out` biases. Gradients use the
/// same layout, which keeps the optimizer and checkpoint code trivial.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    dims: Vec<usize>,
    params: Vec<f64>,
}

/// Activations recorded by [`Mlp::forward_traced`], consumed by
/// [`Mlp::backward`].
#[derive(Debug, Clone, PartialEq)]
pub struct MlpTrace {
    /// `inputs[l]` is the input to layer `l` (post-ReLU for `l > 0`).
    inputs: Vec<Vec<f64>>,
    /// Pre-activations of each layer; the last one is the network output.
    preacts: Vec<Vec<f64>>,
}

impl MlpTrace {
    pub fn output(&self) -> &[f64] {
        self.preacts.last().expect("at least one layer")
    }
}

pub fn param_count(dims: &[usize]) -> usize {
    dims.windows(2).map(|w| w[1] * w[0] + w[1]).sum()
}

impl Mlp {
    pub fn zeros(dims: &[usize]) -> Result<Self> {
        if dims.len() < 2 || dims.iter().any(|&d| d == 0) {
            return Err(ModelError::BadDims(dims.to_vec()));
        }
        Ok(Self {
            dims: dims.to_vec(),
            params: vec![0.0; param_count(dims)],
        })
    }

    /// Glorot-uniform weights in `±√(6/(fan_in+fan_out))`, zero biases.
    pub fn xavier(dims: &[usize], rng: &mut Rng) -> Result<Self> {
        let mut net = Self::zeros(dims)?;
        let mut offset = 0;
        for w in dims.windows(2) {
            let (fan_in, fan_out) = (w[0], w[1]);
            let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
            for p in &mut net.params[offset..offset + fan_in * fan_out] {
                *p = bound * (2.0 * rng.uniform() - 1.0);
            }
            offset += fan_in * fan_out + fan_out;
        }
        Ok(net)
    }

    pub fn from_params(dims: &[usize], params: Vec<f64>) -> Result<Self> {
        let net = Self::zeros(dims)?;
        if params.len() != net.params.len() {
            return Err(ModelError::ParamCount {
                expected: net.params.len(),
                got: params.len(),
            });
        }
        if params.iter().any(|p| !p.is_finite()) {
            return Err(ModelError::NonFinite);
        }
        Ok(Self {
            dims: dims.to_vec(),
            params,
        })
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn input_dim(&self) -> usize {
        self.dims[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.dims.last().expect("validated dims")
    }

    pub fn layers(&self) -> usize {
        self.dims.len() - 1
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn zero_grads(&self) -> Vec<f64> {
        vec![0.0; self.params.len()]
    }

    fn layer_offsets(&self) -> Vec<usize> {
        let mut offs = Vec::with_capacity(self.layers());
        let mut o = 0;
        for w in self.dims.windows(2) {
            offs.push(o);
            o += w[0] * w[1] + w[1];
        }
        offs
    }

    /// Weight matrix (`out × in`, row-major) and biases of layer `l`.
    pub fn layer(&self, l: usize) -> (&[f64], &[f64]) {
        let (i, o) = (self.dims[l], self.dims[l + 1]);
        let off = self.layer_offsets()[l];
        let (w, rest) = self.params[off..].split_at(i * o);
        (w, &rest[..o])
    }

    pub fn layer_mut(&mut self, l: usize) -> (&mut [f64], &mut [f64]) {
        let (i, o) = (self.dims[l], self.dims[l + 1]);
        let off = self.layer_offsets()[l];
        let (w, rest) = self.params[off..].split_at_mut(i * o);
        (w, &mut rest[..o])
    }

    fn check_input(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.input_dim() {
            return Err(ModelError::InputDim {
                expected: self.input_dim(),
                got: x.len(),
            });
        }
        Ok(())
    }

    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        Ok(self.forward_traced(x)?.preacts.pop().expect("one layer"))
    }

    pub fn forward_traced(&self, x: &[f64]) -> Result<MlpTrace> {
        self.check_input(x)?;
        let layers = self.layers();
        let mut inputs = Vec::with_capacity(layers);
        let mut preacts = Vec::with_capacity(layers);
        let mut cur = x.to_vec();
        for l in 0..layers {
            let (w, b) = self.layer(l);
            let n_in = self.dims[l];
            let z: Vec<f64> = b
                .iter()
                .enumerate()
                .map(|(o, bias)| bias + crate::numerics::dot(&w[o * n_in..(o + 1) * n_in], &cur))
                .collect();
            let next = if l + 1 < layers {
                z.iter().map(|v| v.max(0.0)).collect()
            } else {
                Vec::new()
            };
            inputs.push(std::mem::replace(&mut cur, next));
            preacts.push(z);
        }
        Ok(MlpTrace { inputs, preacts })
    }

    /// Accumulates `∂L/∂θ` into `grads` given `∂L/∂output`, and returns
    /// `∂L/∂input`. ReLU uses subgradient 0 at 0.
    pub fn backward(&self, trace: &MlpTrace, grad_out: &[f64], grads: &mut [f64]) -> Result<Vec<f64>> {
        let layers = self.layers();
        let consistent = trace.inputs.len() == layers
            && trace.preacts.len() == layers
            && trace
                .inputs
                .iter()
                .zip(&self.dims)
                .all(|(v, &d)| v.len() == d)
            && trace
                .preacts
                .iter()
                .zip(&self.dims[1..])
                .all(|(v, &d)| v.len() == d);
        if !consistent {
            return Err(ModelError::TraceMismatch);
        }
        if grads.len() != self.params.len() {
            return Err(ModelError::ParamCount {
                expected: self.params.len(),
                got: grads.len(),
            });
        }
        if grad_out.len() != self.output_dim() {
            return Err(ModelError::InputDim {
                expected: self.output_dim(),
                got: grad_out.len(),
            });
        }
        let offsets = self.layer_offsets();
        let mut delta = grad_out.to_vec();
        for l in (0..layers).rev() {
            let (n_in, n_out) = (self.dims[l], self.dims[l + 1]);
            if l + 1 < layers {
                for (d, z) in delta.iter_mut().zip(&trace.preacts[l]) {
                    if *z <= 0.0 {
                        *d = 0.0;
                    }
                }
            }
            let input = &trace.inputs[l];
            let off = offsets[l];
            let (gw, rest) = grads[off..].split_at_mut(n_in * n_out);
            let gb = &mut rest[..n_out];
            for o in 0..n_out {
                let d = delta[o];
                if d == 0.0 {
                    continue;
                }
                gb[o] += d;
                for (g, x) in gw[o * n_in..(o + 1) * n_in].iter_mut().zip(input) {
                    *g += d * x;
                }
            }
            let (w, _) = self.layer(l);
            let mut prev = vec![0.0; n_in];
            for o in 0..n_out {
                let d = delta[o];
                if d == 0.0 {
                    continue;
                }
                for (p, wv) in prev.iter_mut().zip(&w[o * n_in..(o + 1) * n_in]) {
                    *p += d * wv;
                }
            }
            delta = prev;
        }
        Ok(delta)
    }

    /// FNV-1a over the parameter bit patterns and dims.
    pub fn checksum(&self) -> u64 {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        let mut eat = |v: u64| {
            for b in v.to_le_bytes() {
                h ^= b as u64;
                h = h.wrapping_mul(0x0000_0100_0000_01b3);
            }
        };
        for &d in &self.dims {
            eat(d as u64);
        }
        for p in &self.params {
            eat(p.to_bits());
        }
        h
    }
}
