use rand::Rng;
use serde::{Deserialize, Serialize};

use super::image::{Image, Planes, MIN_SIDE};
use crate::error::{Error, Result};

/// Training-time augmentation parameters.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AugmentConfig {
    pub flip_p: f64,
    pub rotate_p: f64,
    /// Crop area as a fraction of the (padded) image area.
    pub scale: (f64, f64),
    /// Crop width / height.
    pub ratio: (f64, f64),
}

impl Default for AugmentConfig {
    fn default() -> Self {
        AugmentConfig {
            flip_p: 0.5,
            rotate_p: 0.5,
            scale: (0.7, 1.0),
            ratio: (0.8, 1.25),
        }
    }
}

impl AugmentConfig {
    /// No flip, no rotation, whole-image crop.
    pub fn identity() -> Self {
        AugmentConfig {
            flip_p: 0.0,
            rotate_p: 0.0,
            scale: (1.0, 1.0),
            ratio: (1.0, 1.0),
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, p) in [("flip_p", self.flip_p), ("rotate_p", self.rotate_p)] {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::Config(format!("augment.{name} = {p} is not a probability")));
            }
        }
        let (s0, s1) = self.scale;
        if !(s0 > 0.0 && s0 <= s1 && s1 <= 1.0) {
            return Err(Error::Config(format!("augment.scale ({s0}, {s1}) must satisfy 0 < lo <= hi <= 1")));
        }
        let (r0, r1) = self.ratio;
        if !(r0 > 0.0 && r0 <= r1 && r1.is_finite()) {
            return Err(Error::Config(format!("augment.ratio ({r0}, {r1}) must satisfy 0 < lo <= hi")));
        }
        Ok(())
    }
}

pub fn hflip(img: &Image) -> Image {
    let (w, h) = (img.width(), img.height());
    let src = img.pixels();
    let mut px = Vec::with_capacity(src.len());
    for y in 0..h {
        for x in (0..w).rev() {
            px.extend_from_slice(&src[(y * w + x) * 3..][..3]);
        }
    }
    Image::new(w, h, px).expect("same dimensions")
}

/// Rotate counter-clockwise by `k · 90°`.
pub fn rot90(img: &Image, k: u32) -> Image {
    let (w, h) = (img.width(), img.height());
    let src = img.pixels();
    let k = k % 4;
    let (ow, oh) = if k.is_multiple_of(2) { (w, h) } else { (h, w) };
    let mut px = vec![0u8; src.len()];
    for oy in 0..oh {
        for ox in 0..ow {
            let (sx, sy) = match k {
                0 => (ox, oy),
                1 => (w - 1 - oy, ox),
                2 => (w - 1 - ox, h - 1 - oy),
                _ => (oy, h - 1 - ox),
            };
            px[(oy * ow + ox) * 3..][..3].copy_from_slice(&src[(sy * w + sx) * 3..][..3]);
        }
    }
    Image::new(ow, oh, px).expect("same pixel count")
}

/// Pad evenly (extra pixel at the end) so both sides are at least `min_w × min_h`.
fn pad_if_needed(p: Planes, min_w: usize, min_h: usize) -> Planes {
    if p.width >= min_w && p.height >= min_h {
        return p;
    }
    let dw = min_w.saturating_sub(p.width);
    let dh = min_h.saturating_sub(p.height);
    // reflect101 padding cannot exceed side − 1 per pass
    let mut p = p;
    let (mut l, mut r, mut t, mut b) = (dw / 2, dw - dw / 2, dh / 2, dh - dh / 2);
    while l + r + t + b > 0 {
        let cap_w = p.width - 1;
        let cap_h = p.height - 1;
        let (pl, pr, pt, pb) = (l.min(cap_w), r.min(cap_w), t.min(cap_h), b.min(cap_h));
        p = p.reflect_pad(pl, pr, pt, pb);
        l -= pl;
        r -= pr;
        t -= pt;
        b -= pb;
    }
    p
}

/// Crop box `(x0, y0, w, h)` in pixels.
fn random_resized_crop_box<R: Rng + ?Sized>(w: usize, h: usize, cfg: &AugmentConfig, rng: &mut R) -> (usize, usize, usize, usize) {
    let area = (w * h) as f64;
    for _ in 0..10 {
        let target = area * uniform(rng, cfg.scale);
        let ar = uniform(rng, cfg.ratio);
        let cw = (target * ar).sqrt().round() as usize;
        let ch = (target / ar).sqrt().round() as usize;
        if cw >= 1 && ch >= 1 && cw <= w && ch <= h {
            let x0 = rng.random_range(0..=w - cw);
            let y0 = rng.random_range(0..=h - ch);
            return (x0, y0, cw, ch);
        }
    }
    // fallback: largest centred crop whose ratio lies inside the allowed range
    let in_ratio = w as f64 / h as f64;
    let (cw, ch) = if in_ratio < cfg.ratio.0 {
        (w, ((w as f64 / cfg.ratio.0).round() as usize).min(h))
    } else if in_ratio > cfg.ratio.1 {
        (((h as f64 * cfg.ratio.1).round() as usize).min(w), h)
    } else {
        (w, h)
    };
    ((w - cw) / 2, (h - ch) / 2, cw, ch)
}

fn uniform<R: Rng + ?Sized>(rng: &mut R, (lo, hi): (f64, f64)) -> f64 {
    if lo == hi {
        lo
    } else {
        rng.random_range(lo..hi)
    }
}

/// Horizontal flip, random 90° rotation, reflect-pad up to the target size,
/// then a random resized crop to `target × target`.
pub fn augment<R: Rng + ?Sized>(img: &Image, target: usize, cfg: &AugmentConfig, rng: &mut R) -> Result<Image> {
    if target < MIN_SIDE {
        return Err(Error::invalid(format!("target resolution {target} is below {MIN_SIDE}")));
    }
    cfg.validate()?;
    let mut img = if rng.random_bool(cfg.flip_p) { hflip(img) } else { img.clone() };
    if rng.random_bool(cfg.rotate_p) {
        img = rot90(&img, rng.random_range(1..=3));
    }
    let p = pad_if_needed(img.to_planes(), target, target);
    let (x0, y0, cw, ch) = random_resized_crop_box(p.width, p.height, cfg, rng);
    p.resample(x0 as f64, y0 as f64, cw as f64, ch as f64, target, target)
        .quantize()
}

/// Deterministic eval transform: reflect-pad the short side to a square,
/// then bilinear resize to `r × r`.
pub fn resize_eval(img: &Image, r: usize) -> Result<Image> {
    if r < MIN_SIDE {
        return Err(Error::invalid(format!("eval resolution {r} is below {MIN_SIDE}")));
    }
    let side = img.width().max(img.height());
    let p = pad_if_needed(img.to_planes(), side, side);
    if p.width == r && p.height == r {
        return p.quantize();
    }
    p.resize(r, r).quantize()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn ramp(w: usize, h: usize) -> Image {
        let pixels = (0..w * h * 3).map(|i| (i * 31 % 251) as u8).collect();
        Image::new(w, h, pixels).unwrap()
    }

    #[test]
    fn rotations_compose() {
        let img = ramp(20, 17);
        assert_eq!(rot90(&rot90(&img, 1), 3), img);
        assert_eq!(rot90(&rot90(&img, 2), 2), img);
        assert_eq!(rot90(&img, 1).width(), 17);
        assert_eq!(hflip(&hflip(&img)), img);
    }

    #[test]
    fn rot90_moves_corner() {
        let img = ramp(20, 17);
        let r = rot90(&img, 1);
        // top-right corner of the source becomes top-left after a CCW turn
        assert_eq!(&r.pixels()[..3], &img.pixels()[19 * 3..20 * 3]);
    }

    #[test]
    fn identity_config_on_target_sized_image() {
        let img = ramp(32, 32);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert_eq!(augment(&img, 32, &AugmentConfig::identity(), &mut rng).unwrap(), img);
    }

    #[test]
    fn small_images_are_padded() {
        let img = ramp(16, 20);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let out = augment(&img, 64, &AugmentConfig::default(), &mut rng).unwrap();
        assert_eq!((out.width(), out.height()), (64, 64));
    }

    #[test]
    fn eval_transform_shape_and_idempotence() {
        let img = ramp(70, 100);
        let once = resize_eval(&img, 64).unwrap();
        assert_eq!((once.width(), once.height()), (64, 64));
        assert_eq!(resize_eval(&once, 64).unwrap(), once);
    }
}
