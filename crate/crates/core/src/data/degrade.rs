use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::image::{Image, Planes};
use crate::error::{Error, Result};

/// Severity of each synthetic distortion applied to a clean image.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Degradation {
    /// Gaussian blur sigma in pixels, `[0, 3]`.
    pub blur: f64,
    /// Additive Gaussian noise sigma on the `[0, 1]` scale, `[0, 0.2]`.
    pub noise: f64,
    /// Down-then-up resampling factor, `[1, 4]`.
    pub down: f64,
    /// Contrast compression toward mid-gray, `[0, 0.6]`.
    pub contrast: f64,
}

impl Degradation {
    pub const NONE: Degradation = Degradation {
        blur: 0.0,
        noise: 0.0,
        down: 1.0,
        contrast: 0.0,
    };

    pub fn validate(&self) -> Result<()> {
        let checks = [
            ("blur", self.blur, 0.0, 3.0),
            ("noise", self.noise, 0.0, 0.2),
            ("down", self.down, 1.0, 4.0),
            ("contrast", self.contrast, 0.0, 0.6),
        ];
        for (name, v, lo, hi) in checks {
            if !(lo..=hi).contains(&v) {
                return Err(Error::invalid(format!("{name} = {v} outside [{lo}, {hi}]")));
            }
        }
        Ok(())
    }

    /// Ground-truth quality: `exp(−(0.5·blur + 4·noise + 0.4·(down − 1) + 1.2·contrast))`.
    pub fn mos(&self) -> f64 {
        (-(0.5 * self.blur + 4.0 * self.noise + 0.4 * (self.down - 1.0) + 1.2 * self.contrast)).exp()
    }

    /// Each distortion is switched on with probability 1/2 and then drawn
    /// uniformly from its range, so clean and heavily damaged images both
    /// occur.
    pub fn sample<R: Rng + ?Sized>(rng: &mut R) -> Self {
        let mut pick = |lo: f64, hi: f64, off: f64| {
            if rng.random_bool(0.5) {
                rng.random_range(lo..=hi)
            } else {
                off
            }
        };
        Degradation {
            blur: pick(0.0, 3.0, 0.0),
            noise: pick(0.0, 0.2, 0.0),
            down: pick(1.0, 4.0, 1.0),
            contrast: pick(0.0, 0.6, 0.0),
        }
    }
}

/// Blur, then down/up resample, then contrast compression, then additive
/// noise. Returns the damaged image and its quality label.
pub fn degrade<R: Rng + ?Sized>(img: &Image, d: &Degradation, rng: &mut R) -> Result<(Image, f64)> {
    d.validate()?;
    let mut p = img.to_planes();
    if d.blur > 0.0 {
        p = gaussian_blur(&p, d.blur);
    }
    if d.down > 1.0 {
        let sw = ((p.width as f64 / d.down).round() as usize).max(1);
        let sh = ((p.height as f64 / d.down).round() as usize).max(1);
        p = p.resize(sw, sh).resize(img.width(), img.height());
    }
    if d.contrast > 0.0 {
        let k = 1.0 - d.contrast;
        for v in &mut p.data {
            *v = 0.5 + k * (*v - 0.5);
        }
    }
    if d.noise > 0.0 {
        for v in &mut p.data {
            let z: f64 = StandardNormal.sample(rng);
            *v += d.noise * z;
        }
    }
    Ok((p.quantize()?, d.mos()))
}

fn gaussian_kernel(sigma: f64) -> Vec<f64> {
    let radius = (3.0 * sigma).ceil().max(1.0) as isize;
    let mut k: Vec<f64> = (-radius..=radius)
        .map(|i| (-(i * i) as f64 / (2.0 * sigma * sigma)).exp())
        .collect();
    let s: f64 = k.iter().sum();
    k.iter_mut().for_each(|v| *v /= s);
    k
}

/// Separable Gaussian blur with clamped borders.
pub(crate) fn gaussian_blur(src: &Planes, sigma: f64) -> Planes {
    let k = gaussian_kernel(sigma);
    let r = (k.len() / 2) as isize;
    let (w, h) = (src.width, src.height);
    let mut tmp = Planes::new(w, h);
    let mut out = Planes::new(w, h);
    for c in 0..3 {
        let s = src.plane(c);
        let t = tmp.plane_mut(c);
        for y in 0..h {
            for x in 0..w {
                let mut acc = 0.0;
                for (j, kv) in k.iter().enumerate() {
                    let sx = (x as isize + j as isize - r).clamp(0, w as isize - 1) as usize;
                    acc += kv * s[y * w + sx];
                }
                t[y * w + x] = acc;
            }
        }
        let t = tmp.plane(c);
        let o = out.plane_mut(c);
        for y in 0..h {
            for x in 0..w {
                let mut acc = 0.0;
                for (j, kv) in k.iter().enumerate() {
                    let sy = (y as isize + j as isize - r).clamp(0, h as isize - 1) as usize;
                    acc += kv * t[sy * w + x];
                }
                o[y * w + x] = acc;
            }
        }
    }
    out
}
