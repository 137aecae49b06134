//! Labeled image-like examples, the synthetic template dataset, augmentation
//! and batch sampling.

mod augment;
mod format;

pub use augment::{augment, AugmentConfig};
pub use format::{load_dataset, read_dataset, save_dataset, write_dataset, DATASET_MAGIC, DATASET_VERSION};

use crate::numerics::Rng;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("bad magic bytes {0:?}, expected \"GSCL\"")]
    BadMagic([u8; 4]),
    #[error("unsupported format version {0}")]
    UnsupportedVersion(u32),
    #[error("file truncated")]
    Truncated,
    #[error("invalid dataset: {0}")]
    Invalid(String),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("requested {requested} examples from a dataset of {available}")]
    BatchTooLarge { requested: usize, available: usize },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, DataError>;

/// Row-major `height × width × channels` tensor, channel fastest.
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    height: usize,
    width: usize,
    channels: usize,
    pixels: Vec<f64>,
}

impl Image {
    pub fn new(height: usize, width: usize, channels: usize, pixels: Vec<f64>) -> Result<Self> {
        if pixels.len() != height * width * channels {
            return Err(DataError::Shape(format!(
                "{} pixels for {height}x{width}x{channels}",
                pixels.len()
            )));
        }
        Ok(Self {
            height,
            width,
            channels,
            pixels,
        })
    }

    pub fn zeros(height: usize, width: usize, channels: usize) -> Self {
        Self {
            height,
            width,
            channels,
            pixels: vec![0.0; height * width * channels],
        }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn shape(&self) -> (usize, usize, usize) {
        (self.height, self.width, self.channels)
    }

    /// Flattened length `H·W·Ch`.
    pub fn len(&self) -> usize {
        self.pixels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pixels.is_empty()
    }

    #[inline]
    pub fn index(&self, row: usize, col: usize, ch: usize) -> usize {
        (row * self.width + col) * self.channels + ch
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize, ch: usize) -> f64 {
        self.pixels[self.index(row, col, ch)]
    }

    #[inline]
    pub fn set(&mut self, row: usize, col: usize, ch: usize, v: f64) {
        let i = self.index(row, col, ch);
        self.pixels[i] = v;
    }

    pub fn pixels(&self) -> &[f64] {
        &self.pixels
    }

    pub fn pixels_mut(&mut self) -> &mut [f64] {
        &mut self.pixels
    }

    pub fn into_pixels(self) -> Vec<f64> {
        self.pixels
    }
}

/// One `(x, y)` pair with a one-hot label.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledExample {
    pub image: Image,
    pub label: Vec<f64>,
}

impl LabeledExample {
    pub fn new(image: Image, label: Vec<f64>) -> Result<Self> {
        class_of(&label).ok_or_else(|| DataError::Invalid("label is not one-hot".into()))?;
        if image.pixels().iter().any(|p| !(0.0..=1.0).contains(p)) {
            return Err(DataError::Invalid("pixel outside [0, 1]".into()));
        }
        Ok(Self { image, label })
    }

    pub fn class(&self) -> usize {
        class_of(&self.label).expect("validated on construction")
    }
}

/// Index of the hot entry, or `None` if `label` is not exactly one-hot.
pub fn class_of(label: &[f64]) -> Option<usize> {
    let mut hot = None;
    for (i, &v) in label.iter().enumerate() {
        if v == 1.0 {
            if hot.is_some() {
                return None;
            }
            hot = Some(i);
        } else if v != 0.0 {
            return None;
        }
    }
    hot
}

pub fn one_hot(class: usize, classes: usize) -> Vec<f64> {
    let mut v = vec![0.0; classes];
    v[class] = 1.0;
    v
}

/// Immutable collection of examples sharing one shape and class count.
///
/// `name` is display metadata only: it is not stored in the file format and
/// does not participate in equality.
#[derive(Debug, Clone)]
pub struct Dataset {
    height: usize,
    width: usize,
    channels: usize,
    classes: usize,
    name: String,
    examples: Vec<LabeledExample>,
}

impl PartialEq for Dataset {
    fn eq(&self, other: &Self) -> bool {
        self.height == other.height
            && self.width == other.width
            && self.channels == other.channels
            && self.classes == other.classes
            && self.examples == other.examples
    }
}

impl Dataset {
    pub fn new(
        name: impl Into<String>,
        (height, width, channels): (usize, usize, usize),
        classes: usize,
        examples: Vec<LabeledExample>,
    ) -> Result<Self> {
        let mut seen = vec![false; classes];
        for (i, ex) in examples.iter().enumerate() {
            if ex.image.shape() != (height, width, channels) {
                return Err(DataError::Invalid(format!("example {i} has shape {:?}", ex.image.shape())));
            }
            if ex.label.len() != classes {
                return Err(DataError::Invalid(format!("example {i} has {} label entries", ex.label.len())));
            }
            seen[ex.class()] = true;
        }
        if let Some(c) = seen.iter().position(|s| !s) {
            return Err(DataError::Invalid(format!("class {c} has no examples")));
        }
        Ok(Self {
            height,
            width,
            channels,
            classes,
            name: name.into(),
            examples,
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn with_name(mut self, name: impl Into<String>) -> Self {
        self.name = name.into();
        self
    }

    pub fn shape(&self) -> (usize, usize, usize) {
        (self.height, self.width, self.channels)
    }

    /// Flattened input dimension `D = H·W·Ch`.
    pub fn input_dim(&self) -> usize {
        self.height * self.width * self.channels
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn len(&self) -> usize {
        self.examples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }

    pub fn examples(&self) -> &[LabeledExample] {
        &self.examples
    }

    pub fn get(&self, i: usize) -> &LabeledExample {
        &self.examples[i]
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.classes];
        for ex in &self.examples {
            counts[ex.class()] += 1;
        }
        counts
    }
}

/// Parameters of [`generate_synthetic`].
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSpec {
    pub classes: usize,
    pub per_class: usize,
    pub height: usize,
    pub width: usize,
    pub channels: usize,
    pub noise_std: f64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            classes: 3,
            per_class: 200,
            height: 8,
            width: 8,
            channels: 1,
            noise_std: 0.05,
        }
    }
}

/// Number of distinct class templates available.
pub const TEMPLATE_COUNT: usize = 8;

const HI: f64 = 0.85;
const LO: f64 = 0.15;

fn band(v: usize) -> f64 {
    if (v / 2) % 2 == 0 {
        HI
    } else {
        LO
    }
}

/// Noise-free intensity of class template `class` at pixel `(row, col)`.
pub fn template_value(class: usize, row: usize, col: usize, height: usize, width: usize) -> f64 {
    let y = (row as f64 + 0.5) / height as f64 - 0.5;
    let x = (col as f64 + 0.5) / width as f64 - 0.5;
    let r2 = x * x + y * y;
    match class {
        0 => band(row),
        1 => band(col),
        2 => LO + (HI - LO) * (-r2 / 0.04).exp(),
        3 => {
            let edge = row == 0 || col == 0 || row + 1 == height || col + 1 == width;
            if edge {
                HI
            } else {
                LO
            }
        }
        4 => {
            if ((row / 2) + (col / 2)) % 2 == 0 {
                HI
            } else {
                LO
            }
        }
        5 => HI - (HI - LO) * (row as f64 / (height - 1) as f64),
        6 => band(row + col),
        7 => {
            let d = r2.sqrt();
            if (0.2..0.38).contains(&d) {
                HI
            } else {
                LO
            }
        }
        _ => unreachable!("template index checked by caller"),
    }
}

/// Noise-free template image for `class`.
pub fn template_image(class: usize, height: usize, width: usize, channels: usize) -> Image {
    let mut img = Image::zeros(height, width, channels);
    for r in 0..height {
        for c in 0..width {
            let v = template_value(class, r, c, height, width);
            for ch in 0..channels {
                img.set(r, c, ch, v);
            }
        }
    }
    img
}

/// Class-major synthetic dataset: each class is a fixed spatial template
/// plus i.i.d. Gaussian pixel noise clipped to `[0, 1]`.
pub fn generate_synthetic(spec: &SyntheticSpec, rng: &mut Rng) -> Result<Dataset> {
    if spec.classes < 2 {
        return Err(DataError::Invalid("need at least 2 classes".into()));
    }
    if spec.classes > TEMPLATE_COUNT {
        return Err(DataError::Invalid(format!(
            "{} classes requested, only {TEMPLATE_COUNT} templates available",
            spec.classes
        )));
    }
    if spec.height < 4 || spec.width < 4 || spec.channels == 0 {
        return Err(DataError::Invalid("images must be at least 4x4 with one channel".into()));
    }
    if spec.per_class == 0 {
        return Err(DataError::Invalid("per_class must be positive".into()));
    }
    if !(spec.noise_std >= 0.0) {
        return Err(DataError::Invalid("noise_std must be non-negative".into()));
    }
    let mut examples = Vec::with_capacity(spec.classes * spec.per_class);
    for class in 0..spec.classes {
        let template = template_image(class, spec.height, spec.width, spec.channels);
        for _ in 0..spec.per_class {
            let mut img = template.clone();
            if spec.noise_std > 0.0 {
                for p in img.pixels_mut() {
                    *p = (*p + spec.noise_std * rng.normal()).clamp(0.0, 1.0);
                }
            }
            examples.push(LabeledExample {
                image: img,
                label: one_hot(class, spec.classes),
            });
        }
    }
    Dataset::new(
        "synthetic",
        (spec.height, spec.width, spec.channels),
        spec.classes,
        examples,
    )
}

/// `n` distinct positions drawn without replacement.
pub fn sample_indices(len: usize, n: usize, rng: &mut Rng) -> Result<Vec<usize>> {
    if n > len {
        return Err(DataError::BatchTooLarge {
            requested: n,
            available: len,
        });
    }
    let mut idx: Vec<usize> = (0..len).collect();
    // partial Fisher–Yates
    for i in 0..n {
        let j = i + rng.below(len - i);
        idx.swap(i, j);
    }
    idx.truncate(n);
    Ok(idx)
}

/// `n` examples sampled without replacement.
pub fn sample_batch(ds: &Dataset, n: usize, rng: &mut Rng) -> Result<Vec<LabeledExample>> {
    Ok(sample_indices(ds.len(), n, rng)?
        .into_iter()
        .map(|i| ds.get(i).clone())
        .collect())
}

/// One epoch of batches from a seeded shuffle. Every position in `0..len`
/// appears exactly once; the last batch holds the remainder and may be
/// shorter than `batch_size`.
pub fn epoch_batches(len: usize, batch_size: usize, rng: &mut Rng) -> Vec<Vec<usize>> {
    assert!(batch_size > 0, "batch_size must be positive");
    let mut order: Vec<usize> = (0..len).collect();
    rng.shuffle(&mut order);
    order.chunks(batch_size).map(<[usize]>::to_vec).collect()
}
