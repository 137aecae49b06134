use super::{DataError, Image, Result};
use crate::numerics::Rng;

/// Stochastic view generator: zero-pad then random crop, horizontal flip,
/// additive Gaussian noise. Each stage can be switched off.
#[derive(Debug, Clone, PartialEq)]
pub struct AugmentConfig {
    pub crop: bool,
    pub crop_pad: usize,
    pub flip: bool,
    pub flip_prob: f64,
    pub noise: bool,
    pub noise_std: f64,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        Self {
            crop: true,
            crop_pad: 1,
            flip: true,
            flip_prob: 0.5,
            noise: true,
            noise_std: 0.02,
        }
    }
}

impl AugmentConfig {
    /// Every stage switched off; `augment` becomes the identity.
    pub fn disabled() -> Self {
        Self {
            crop: false,
            flip: false,
            noise: false,
            ..Self::default()
        }
    }

    pub fn validate(&self, height: usize, width: usize) -> Result<()> {
        if self.crop && 2 * self.crop_pad >= height.min(width) {
            return Err(DataError::Invalid(format!(
                "crop_pad {} must be < min(H, W)/2 for {height}x{width}",
                self.crop_pad
            )));
        }
        if !(0.0..=1.0).contains(&self.flip_prob) {
            return Err(DataError::Invalid("flip_prob must be in [0, 1]".into()));
        }
        if !(self.noise_std >= 0.0) {
            return Err(DataError::Invalid("noise_std must be non-negative".into()));
        }
        Ok(())
    }
}

/// Applies the enabled stages in order crop → flip → noise. Random draws are
/// only consumed by enabled stages.
pub fn augment(x: &Image, cfg: &AugmentConfig, rng: &mut Rng) -> Result<Image> {
    let (h, w, ch) = x.shape();
    cfg.validate(h, w)?;
    let mut out = x.clone();

    if cfg.crop && cfg.crop_pad > 0 {
        let p = cfg.crop_pad;
        // offset into the padded canvas; pixel (r, c) of the crop reads
        // source (r + dy - p, c + dx - p), zero outside
        let dy = rng.below(2 * p + 1);
        let dx = rng.below(2 * p + 1);
        for r in 0..h {
            for c in 0..w {
                let sr = (r + dy).checked_sub(p).filter(|&v| v < h);
                let sc = (c + dx).checked_sub(p).filter(|&v| v < w);
                for k in 0..ch {
                    let v = match (sr, sc) {
                        (Some(sr), Some(sc)) => x.get(sr, sc, k),
                        _ => 0.0,
                    };
                    out.set(r, c, k, v);
                }
            }
        }
    }

    if cfg.flip && rng.uniform() < cfg.flip_prob {
        let src = out.clone();
        for r in 0..h {
            for c in 0..w {
                for k in 0..ch {
                    out.set(r, c, k, src.get(r, w - 1 - c, k));
                }
            }
        }
    }

    if cfg.noise && cfg.noise_std > 0.0 {
        for p in out.pixels_mut() {
            *p = (*p + cfg.noise_std * rng.normal()).clamp(0.0, 1.0);
        }
    }

    Ok(out)
}
