use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::tensor::Tensor;

/// Label-preserving image transforms, applied in field order.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AugmentConfig {
    pub enabled: bool,
    /// Each flip fires with probability 0.5.
    pub hflip: bool,
    pub vflip: bool,
    /// Maximum shift as a fraction of each dimension; vacated pixels are zero.
    pub translate: f64,
    /// Area fraction kept by the random crop, which is zero-padded back to
    /// full size around the centre.
    pub crop_area: f64,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        AugmentConfig { enabled: true, hflip: true, vflip: true, translate: 0.1, crop_area: 0.875 }
    }
}

/// One concrete draw of the random transform.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct AugmentParams {
    pub hflip: bool,
    pub vflip: bool,
    /// `(rows, cols)`, positive moves content down / right.
    pub shift: (isize, isize),
    /// Top-left corner of the crop window.
    pub crop_offset: (usize, usize),
}

impl AugmentParams {
    pub const IDENTITY: AugmentParams = AugmentParams { hflip: false, vflip: false, shift: (0, 0), crop_offset: (0, 0) };

    pub fn sample(height: usize, width: usize, cfg: &AugmentConfig, rng: &mut impl Rng) -> Self {
        let hflip = cfg.hflip && rng.random_bool(0.5);
        let vflip = cfg.vflip && rng.random_bool(0.5);
        let mut shift = |n: usize| {
            let m = (cfg.translate * n as f64).round() as i64;
            if m > 0 { rng.random_range(-m..=m) as isize } else { 0 }
        };
        let shift = (shift(height), shift(width));
        let (ch, cw) = crop_dims(height, width, cfg);
        let crop_offset = (rng.random_range(0..=height - ch), rng.random_range(0..=width - cw));
        AugmentParams { hflip, vflip, shift, crop_offset }
    }

    /// Offset that keeps the crop centred, which leaves content in place.
    pub fn centered_crop(height: usize, width: usize, cfg: &AugmentConfig) -> (usize, usize) {
        let (ch, cw) = crop_dims(height, width, cfg);
        ((height - ch) / 2, (width - cw) / 2)
    }
}

/// Crop window size keeping `crop_area` of the image, same aspect ratio.
pub(crate) fn crop_dims(height: usize, width: usize, cfg: &AugmentConfig) -> (usize, usize) {
    let s = cfg.crop_area.clamp(0.0, 1.0).sqrt();
    let dim = |n: usize| ((n as f64 * s).round() as usize).clamp(1, n);
    (dim(height), dim(width))
}

/// Applies `p` to an `(H, W, C)` image.
pub fn apply(image: &Tensor<f32>, p: &AugmentParams, cfg: &AugmentConfig) -> Tensor<f32> {
    let &[h, w, c] = image.shape() else { panic!("augment expects (H, W, C), got {:?}", image.shape()) };
    let (ch, cw) = crop_dims(h, w, cfg);
    let (pad_t, pad_l) = ((h - ch) / 2, (w - cw) / 2);
    let src = image.data();
    let mut out = vec![0f32; src.len()];
    // Walk each output pixel back through crop, translation and flips.
    let source = |o: usize, pad: usize, crop: usize, off: usize, shift: isize, n: usize, flip: bool| -> Option<usize> {
        let local = o.checked_sub(pad).filter(|&l| l < crop)?;
        let shifted = (local + off) as isize - shift;
        let s = usize::try_from(shifted).ok().filter(|&s| s < n)?;
        Some(if flip { n - 1 - s } else { s })
    };
    for y in 0..h {
        let Some(sy) = source(y, pad_t, ch, p.crop_offset.0, p.shift.0, h, p.vflip) else { continue };
        for x in 0..w {
            let Some(sx) = source(x, pad_l, cw, p.crop_offset.1, p.shift.1, w, p.hflip) else { continue };
            let (o, i) = ((y * w + x) * c, (sy * w + sx) * c);
            out[o..o + c].copy_from_slice(&src[i..i + c]);
        }
    }
    Tensor::new(out, image.shape()).expect("same shape")
}

/// Samples and applies one random transform.
pub fn augment(image: &Tensor<f32>, cfg: &AugmentConfig, rng: &mut impl Rng) -> Tensor<f32> {
    let &[h, w, _] = image.shape() else { panic!("augment expects (H, W, C), got {:?}", image.shape()) };
    apply(image, &AugmentParams::sample(h, w, cfg, rng), cfg)
}
