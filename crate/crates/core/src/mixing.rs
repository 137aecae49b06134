//! MixUp / CutMix operators and assembly of the mixed multi-viewed batch
//! `{x̃_ℓ, ỹ_ℓ}` of `2N` views.

use crate::data::{augment, AugmentConfig, DataError, Image, LabeledExample};
use crate::numerics::Rng;
use rand_distr::{Beta, Distribution};
use std::fmt;
use std::str::FromStr;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum MixError {
    #[error("shape mismatch: {0:?} vs {1:?}")]
    Shape((usize, usize, usize), (usize, usize, usize)),
    #[error("label length mismatch: {0} vs {1}")]
    LabelLen(usize, usize),
    #[error("lambda {0} outside [0, 1]")]
    Lambda(f64),
    #[error("mixing needs at least two examples per batch, got {0}")]
    NoPartner(usize),
    #[error("empty batch")]
    EmptyBatch,
    #[error("invalid beta parameter {0}")]
    BetaParam(f64),
    #[error(transparent)]
    Augment(#[from] DataError),
}

pub type Result<T> = std::result::Result<T, MixError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum MixKind {
    #[default]
    None,
    MixUp,
    CutMix,
}

impl fmt::Display for MixKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            MixKind::None => "none",
            MixKind::MixUp => "mixup",
            MixKind::CutMix => "cutmix",
        })
    }
}

impl FromStr for MixKind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "none" => Ok(MixKind::None),
            "mixup" => Ok(MixKind::MixUp),
            "cutmix" => Ok(MixKind::CutMix),
            other => Err(format!("unknown mix kind {other:?} (none|mixup|cutmix)")),
        }
    }
}

/// Result of mixing two labeled images.
#[derive(Debug, Clone, PartialEq)]
pub struct Mix {
    pub image: Image,
    pub soft_label: Vec<f64>,
    /// Weight of the first input in the label (for CutMix: recomputed from
    /// the clipped box).
    pub lambda: f64,
    /// Number of pixel positions copied from the second input (CutMix only).
    pub pasted_area: Option<usize>,
}

fn check_pair(a: (&Image, &[f64]), b: (&Image, &[f64])) -> Result<()> {
    if a.0.shape() != b.0.shape() {
        return Err(MixError::Shape(a.0.shape(), b.0.shape()));
    }
    if a.1.len() != b.1.len() {
        return Err(MixError::LabelLen(a.1.len(), b.1.len()));
    }
    Ok(())
}

fn blend(ya: &[f64], yb: &[f64], lambda: f64) -> Vec<f64> {
    ya.iter()
        .zip(yb)
        .map(|(p, q)| lambda * p + (1.0 - lambda) * q)
        .collect()
}

/// `x̃ = λ·x_a + (1−λ)·x_b`, `ỹ = λ·y_a + (1−λ)·y_b`.
pub fn mixup(a: (&Image, &[f64]), b: (&Image, &[f64]), lambda: f64) -> Result<Mix> {
    check_pair(a, b)?;
    if !(0.0..=1.0).contains(&lambda) {
        return Err(MixError::Lambda(lambda));
    }
    let mut image = a.0.clone();
    for (p, q) in image.pixels_mut().iter_mut().zip(b.0.pixels()) {
        *p = lambda * *p + (1.0 - lambda) * q;
    }
    Ok(Mix {
        image,
        soft_label: blend(a.1, b.1, lambda),
        lambda,
        pasted_area: None,
    })
}

/// Half-open pixel rectangle `[top, bottom) × [left, right)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CutBox {
    pub top: usize,
    pub left: usize,
    pub bottom: usize,
    pub right: usize,
}

impl CutBox {
    pub fn area(&self) -> usize {
        (self.bottom - self.top) * (self.right - self.left)
    }

    pub fn contains(&self, row: usize, col: usize) -> bool {
        (self.top..self.bottom).contains(&row) && (self.left..self.right).contains(&col)
    }
}

/// Box for a CutMix draw centred at `(center_row, center_col)`: side lengths
/// `⌊H·√(1−λ)⌋`, `⌊W·√(1−λ)⌋`, halved with integer division and clipped to
/// the image.
pub fn cut_box(height: usize, width: usize, lambda_draw: f64, center_row: usize, center_col: usize) -> CutBox {
    let ratio = (1.0 - lambda_draw).max(0.0).sqrt();
    let half_h = ((height as f64 * ratio).floor() as usize) / 2;
    let half_w = ((width as f64 * ratio).floor() as usize) / 2;
    CutBox {
        top: center_row.saturating_sub(half_h),
        bottom: (center_row + half_h).min(height),
        left: center_col.saturating_sub(half_w),
        right: (center_col + half_w).min(width),
    }
}

/// Pastes `b` into `a` inside `bx`; λ is recomputed from the pasted area.
pub fn cutmix_with_box(a: (&Image, &[f64]), b: (&Image, &[f64]), bx: CutBox) -> Result<Mix> {
    check_pair(a, b)?;
    let (h, w, ch) = a.0.shape();
    let mut image = a.0.clone();
    for r in bx.top..bx.bottom {
        for c in bx.left..bx.right {
            for k in 0..ch {
                image.set(r, c, k, b.0.get(r, c, k));
            }
        }
    }
    let area = bx.area();
    let total = h * w;
    let lambda = 1.0 - area as f64 / total as f64;
    Ok(Mix {
        image,
        soft_label: blend(a.1, b.1, lambda),
        lambda,
        pasted_area: Some(area),
    })
}

/// CutMix with the box centre drawn uniformly over the image.
pub fn cutmix(a: (&Image, &[f64]), b: (&Image, &[f64]), lambda_draw: f64, rng: &mut Rng) -> Result<Mix> {
    check_pair(a, b)?;
    if !(0.0..=1.0).contains(&lambda_draw) {
        return Err(MixError::Lambda(lambda_draw));
    }
    let (h, w, _) = a.0.shape();
    let cy = rng.below(h);
    let cx = rng.below(w);
    cutmix_with_box(a, b, cut_box(h, w, lambda_draw, cy, cx))
}

/// Symmetric Beta(α, α) sampler for mixing weights.
#[derive(Debug, Clone)]
pub struct LambdaSampler {
    beta: Beta<f64>,
}

impl LambdaSampler {
    pub fn new(alpha: f64) -> Result<Self> {
        if !(alpha > 0.0) || !alpha.is_finite() {
            return Err(MixError::BetaParam(alpha));
        }
        let beta = Beta::new(alpha, alpha).map_err(|_| MixError::BetaParam(alpha))?;
        Ok(Self { beta })
    }

    pub fn sample(&self, rng: &mut Rng) -> f64 {
        self.beta.sample(rng).clamp(0.0, 1.0)
    }
}

/// One augmented (and possibly mixed) view with its provenance.
#[derive(Debug, Clone, PartialEq)]
pub struct MixedView {
    pub image: Image,
    pub soft_label: Vec<f64>,
    /// Batch position `k` of the example this view derives from.
    pub source_index: usize,
    pub partner_index: Option<usize>,
    pub lambda: f64,
    pub mix_kind: MixKind,
}

/// `2N` views; positions `2k` and `2k + 1` (zero-based) derive from example `k`.
#[derive(Debug, Clone, PartialEq)]
pub struct MultiViewBatch {
    pub views: Vec<MixedView>,
}

impl MultiViewBatch {
    pub fn len(&self) -> usize {
        self.views.len()
    }

    pub fn is_empty(&self) -> bool {
        self.views.is_empty()
    }

    pub fn source_count(&self) -> usize {
        self.views.len() / 2
    }

    pub fn labels(&self) -> Vec<Vec<f64>> {
        self.views.iter().map(|v| v.soft_label.clone()).collect()
    }
}

/// Builds the multi-viewed batch. Every `(example, view)` pair consumes its
/// own deterministic sub-stream, so the result depends only on the inputs
/// and on one draw from `rng`.
///
/// For mixed views the partner is drawn uniformly from the other `N − 1`
/// examples, independently per view, and receives its own augmentation
/// before mixing.
pub fn build_multiview_batch(
    batch: &[LabeledExample],
    aug: &AugmentConfig,
    mix: MixKind,
    beta_alpha: f64,
    rng: &mut Rng,
) -> Result<MultiViewBatch> {
    let n = batch.len();
    if n == 0 {
        return Err(MixError::EmptyBatch);
    }
    if mix != MixKind::None && n < 2 {
        return Err(MixError::NoPartner(n));
    }
    let sampler = match mix {
        MixKind::None => None,
        _ => Some(LambdaSampler::new(beta_alpha)?),
    };
    let base = Rng::new(rng.next_u64());
    let mut views = Vec::with_capacity(2 * n);
    for (k, ex) in batch.iter().enumerate() {
        for v in 0..2 {
            let mut stream = base.stream((2 * k + v) as u64);
            let image = augment(&ex.image, aug, &mut stream)?;
            let view = match &sampler {
                None => MixedView {
                    image,
                    soft_label: ex.label.clone(),
                    source_index: k,
                    partner_index: None,
                    lambda: 1.0,
                    mix_kind: MixKind::None,
                },
                Some(sampler) => {
                    let mut partner = stream.below(n - 1);
                    if partner >= k {
                        partner += 1;
                    }
                    let other = &batch[partner];
                    let other_image = augment(&other.image, aug, &mut stream)?;
                    let lambda = sampler.sample(&mut stream);
                    let a = (&image, ex.label.as_slice());
                    let b = (&other_image, other.label.as_slice());
                    let mixed = match mix {
                        MixKind::MixUp => mixup(a, b, lambda)?,
                        MixKind::CutMix => cutmix(a, b, lambda, &mut stream)?,
                        MixKind::None => unreachable!(),
                    };
                    MixedView {
                        image: mixed.image,
                        soft_label: mixed.soft_label,
                        source_index: k,
                        partner_index: Some(partner),
                        lambda: mixed.lambda,
                        mix_kind: mix,
                    }
                }
            };
            views.push(view);
        }
    }
    Ok(MultiViewBatch { views })
}
