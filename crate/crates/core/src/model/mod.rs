//! Encoder `f`, projection head `g`, teacher classifier `t` and the linear
//! probe, all built from [`Mlp`] with exact reverse-mode gradients.

mod checkpoint;
mod mlp;

pub use checkpoint::{read_checkpoint, write_checkpoint, Checkpoint, NetRecord, NetRole, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use mlp::{param_count, Mlp, MlpTrace};

use crate::numerics::{self, NumericsError, Rng};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("invalid layer dims {0:?}")]
    BadDims(Vec<usize>),
    #[error("expected input of length {expected}, got {got}")]
    InputDim { expected: usize, got: usize },
    #[error("expected {expected} parameters, got {got}")]
    ParamCount { expected: usize, got: usize },
    #[error("non-finite parameter")]
    NonFinite,
    #[error("forward trace does not belong to this network")]
    TraceMismatch,
    #[error("projection output has zero norm")]
    DegenerateProjection,
    #[error("encoder output {encoder} does not match projection input {projection}")]
    Chain { encoder: usize, projection: usize },
    #[error("bad checkpoint magic {0:?}, expected \"GSCM\"")]
    BadMagic([u8; 4]),
    #[error("unsupported checkpoint version {0}")]
    UnsupportedVersion(u32),
    #[error("checkpoint truncated")]
    Truncated,
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Numerics(#[from] NumericsError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, ModelError>;

/// Layer widths of the encoder and projection head.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ModelDims {
    pub input: usize,
    pub hidden: usize,
    pub embed: usize,
    pub proj: usize,
}

impl ModelDims {
    pub fn for_input(input: usize) -> Self {
        Self {
            input,
            hidden: 64,
            embed: 32,
            proj: 16,
        }
    }
}

/// Pre-normalization projection `w` and its unit-norm direction `z`.
#[derive(Debug, Clone, PartialEq)]
pub struct Projected {
    pub w: Vec<f64>,
    pub z: Vec<f64>,
}

/// Backward pass of `z = w / ‖w‖`: `∂L/∂w = (I − zzᵀ) ∂L/∂z / ‖w‖`.
pub fn normalize_backward(w: &[f64], z: &[f64], grad_z: &[f64]) -> Vec<f64> {
    let n = numerics::norm(w);
    let along = numerics::dot(z, grad_z);
    grad_z
        .iter()
        .zip(z)
        .map(|(g, zi)| (g - along * zi) / n)
        .collect()
}

/// Everything recorded while pushing one view through `g ∘ f`.
#[derive(Debug, Clone)]
pub struct ViewTrace {
    encoder: MlpTrace,
    projection: MlpTrace,
    pub h: Vec<f64>,
    pub w: Vec<f64>,
    pub z: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelGrads {
    pub encoder: Vec<f64>,
    pub projection: Vec<f64>,
}

impl ModelGrads {
    pub fn scale(&mut self, s: f64) {
        for g in self.encoder.iter_mut().chain(self.projection.iter_mut()) {
            *g *= s;
        }
    }
}

/// Student network: encoder `D → hidden → E`, projection `E → E → P`
/// followed by L2 normalization.
#[derive(Debug, Clone, PartialEq)]
pub struct ContrastiveModel {
    pub encoder: Mlp,
    pub projection: Mlp,
}

impl ContrastiveModel {
    pub fn new(dims: ModelDims, rng: &mut Rng) -> Result<Self> {
        if dims.proj < 2 {
            return Err(ModelError::BadDims(vec![dims.embed, dims.embed, dims.proj]));
        }
        let encoder = Mlp::xavier(&[dims.input, dims.hidden, dims.embed], rng)?;
        let projection = Mlp::xavier(&[dims.embed, dims.embed, dims.proj], rng)?;
        Ok(Self { encoder, projection })
    }

    pub fn from_parts(encoder: Mlp, projection: Mlp) -> Result<Self> {
        if encoder.output_dim() != projection.input_dim() {
            return Err(ModelError::Chain {
                encoder: encoder.output_dim(),
                projection: projection.input_dim(),
            });
        }
        if projection.output_dim() < 2 {
            return Err(ModelError::BadDims(projection.dims().to_vec()));
        }
        Ok(Self { encoder, projection })
    }

    pub fn dims(&self) -> ModelDims {
        ModelDims {
            input: self.encoder.input_dim(),
            hidden: self.encoder.dims()[1],
            embed: self.encoder.output_dim(),
            proj: self.projection.output_dim(),
        }
    }

    /// `h = f(x̃)`.
    pub fn encode(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.encoder.forward(x)
    }

    /// `(w, z)` with `z = w / ‖w‖`.
    pub fn project(&self, h: &[f64]) -> Result<Projected> {
        let w = self.projection.forward(h)?;
        let z = numerics::l2_normalize(&w).map_err(|_| ModelError::DegenerateProjection)?;
        Ok(Projected { w, z })
    }

    pub fn forward_view(&self, x: &[f64]) -> Result<ViewTrace> {
        let encoder = self.encoder.forward_traced(x)?;
        let h = encoder.output().to_vec();
        let projection = self.projection.forward_traced(&h)?;
        let w = projection.output().to_vec();
        let z = numerics::l2_normalize(&w).map_err(|_| ModelError::DegenerateProjection)?;
        Ok(ViewTrace {
            encoder,
            projection,
            h,
            w,
            z,
        })
    }

    pub fn zero_grads(&self) -> ModelGrads {
        ModelGrads {
            encoder: self.encoder.zero_grads(),
            projection: self.projection.zero_grads(),
        }
    }

    /// Accumulates parameter gradients for one view given `∂L/∂z`.
    pub fn backward_view(&self, trace: &ViewTrace, grad_z: &[f64], grads: &mut ModelGrads) -> Result<()> {
        if grad_z.len() != trace.z.len() {
            return Err(ModelError::TraceMismatch);
        }
        let grad_w = normalize_backward(&trace.w, &trace.z, grad_z);
        let grad_h = self
            .projection
            .backward(&trace.projection, &grad_w, &mut grads.projection)?;
        self.encoder.backward(&trace.encoder, &grad_h, &mut grads.encoder)?;
        Ok(())
    }

    pub fn checksum(&self) -> u64 {
        self.encoder.checksum() ^ self.projection.checksum().rotate_left(1)
    }
}

/// Trained classifier `D → hidden → C` whose logits are softened by a
/// softmax at `temperature`.
#[derive(Debug, Clone, PartialEq)]
pub struct TeacherNet {
    pub net: Mlp,
    pub temperature: f64,
}

impl TeacherNet {
    pub fn new(input: usize, hidden: usize, classes: usize, rng: &mut Rng) -> Result<Self> {
        Ok(Self {
            net: Mlp::xavier(&[input, hidden, classes], rng)?,
            temperature: 1.0,
        })
    }

    pub fn classes(&self) -> usize {
        self.net.output_dim()
    }

    pub fn logits(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.net.forward(x)
    }

    pub fn predict(&self, x: &[f64]) -> Result<Vec<f64>> {
        Ok(numerics::softmax_with_temperature(&self.logits(x)?, self.temperature)?)
    }
}

/// Frozen source of teacher predictions `p^t`.
#[derive(Debug, Clone, PartialEq)]
pub enum Teacher {
    Network(TeacherNet),
    /// Synthetic teacher returning `(1−ε)·ỹ + ε/C` for a view with soft label
    /// `ỹ`; on an unmixed class-`c` view this is the label-smoothed one-hot.
    Oracle { classes: usize, epsilon: f64 },
}

impl Teacher {
    pub fn oracle(classes: usize) -> Self {
        Teacher::Oracle {
            classes,
            epsilon: 0.1,
        }
    }

    pub fn classes(&self) -> usize {
        match self {
            Teacher::Network(t) => t.classes(),
            Teacher::Oracle { classes, .. } => *classes,
        }
    }

    /// `p^t` for a view given its pixels and its (soft) label.
    pub fn predict(&self, image: &[f64], soft_label: &[f64]) -> Result<Vec<f64>> {
        match self {
            Teacher::Network(t) => t.predict(image),
            Teacher::Oracle { classes, epsilon } => {
                if soft_label.len() != *classes {
                    return Err(ModelError::InputDim {
                        expected: *classes,
                        got: soft_label.len(),
                    });
                }
                let c = *classes as f64;
                Ok(soft_label
                    .iter()
                    .map(|y| (1.0 - epsilon) * y + epsilon / c)
                    .collect())
            }
        }
    }
}

/// Linear classifier `E → C` on frozen encoder features.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearProbe {
    pub net: Mlp,
}

impl LinearProbe {
    pub fn zeros(embed: usize, classes: usize) -> Result<Self> {
        Ok(Self {
            net: Mlp::zeros(&[embed, classes])?,
        })
    }

    pub fn logits(&self, h: &[f64]) -> Result<Vec<f64>> {
        self.net.forward(h)
    }

    pub fn classify(&self, h: &[f64]) -> Result<usize> {
        Ok(argmax(&self.logits(h)?))
    }
}

/// First index of the maximum entry.
pub fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, x) in v.iter().enumerate() {
        if *x > v[best] {
            best = i;
        }
    }
    best
}
