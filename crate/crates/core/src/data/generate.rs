use std::fs;
use std::path::Path;

use rand::Rng;
use rand_distr::{Distribution, Normal};

use super::degrade::{degrade, Degradation};
use super::image::{Image, Planes};
use super::manifest::{Manifest, Sample};
use super::stream_rng;
use crate::error::{Error, Result};

const PURPOSE_GENERATE: u64 = 1;

pub const MIN_BASE_WIDTH: usize = 64;
pub const MAX_BASE_WIDTH: usize = 128;
/// Mean and spread of the W/H ratio of generated images.
pub const ASPECT_MEAN: f64 = 0.7;
pub const ASPECT_STD: f64 = 0.1;
pub const ASPECT_RANGE: (f64, f64) = (0.5, 1.0);

/// One generated sample before it is written anywhere.
#[derive(Clone, Debug, PartialEq)]
pub struct Generated {
    pub image: Image,
    pub degradation: Degradation,
    pub mos: f64,
}

/// Draw sample `index` of the stream identified by `seed`.
pub fn generate_sample(seed: u64, index: u64) -> Result<Generated> {
    let mut rng = stream_rng(seed, PURPOSE_GENERATE, index);
    let width = rng.random_range(MIN_BASE_WIDTH..=MAX_BASE_WIDTH);
    let aspect: f64 = Normal::new(ASPECT_MEAN, ASPECT_STD)
        .expect("valid normal")
        .sample(&mut rng)
        .clamp(ASPECT_RANGE.0, ASPECT_RANGE.1);
    let height = (width as f64 / aspect).round() as usize;
    let clean = pseudo_face(width, height, &mut rng).quantize()?;
    let degradation = Degradation::sample(&mut rng);
    let (image, mos) = degrade(&clean, &degradation, &mut rng)?;
    Ok(Generated {
        image,
        degradation,
        mos,
    })
}

/// Write `count` degraded pseudo-faces as `images/img_NNNNN.png` under
/// `out_dir`, plus `manifest.csv` and its metadata sidecar.
pub fn generate_dataset(count: usize, seed: u64, out_dir: impl AsRef<Path>) -> Result<Manifest> {
    if count == 0 {
        return Err(Error::invalid("count must be at least 1"));
    }
    let out_dir = out_dir.as_ref();
    let img_dir = out_dir.join("images");
    fs::create_dir_all(&img_dir).map_err(|e| Error::io(&img_dir, e))?;
    let mut samples = Vec::with_capacity(count);
    for i in 0..count {
        let g = generate_sample(seed, i as u64)?;
        let rel = format!("images/img_{i:05}.png");
        g.image.save_png(out_dir.join(&rel))?;
        samples.push(Sample {
            path: rel,
            mos: g.mos,
            width: g.image.width(),
            height: g.image.height(),
            degradation: g.degradation,
        });
    }
    let manifest = Manifest::new(samples, Some(seed), out_dir)?;
    manifest.save(out_dir.join("manifest.csv"))?;
    Ok(manifest)
}

fn smoothstep(edge: f64, d: f64) -> f64 {
    // 1 inside, 0 outside, linear over `edge` (in normalised radius units)
    ((1.0 - d) / edge + 0.5).clamp(0.0, 1.0)
}

struct Canvas {
    p: Planes,
}

impl Canvas {
    fn blend(&mut self, x: usize, y: usize, rgb: [f64; 3], a: f64) {
        if a <= 0.0 {
            return;
        }
        let w = self.p.width;
        for (c, v) in rgb.iter().enumerate() {
            let px = &mut self.p.plane_mut(c)[y * w + x];
            *px += a * (v - *px);
        }
    }

    /// Filled ellipse with an anti-aliased rim. `paint` may vary the colour by position.
    fn ellipse(&mut self, cx: f64, cy: f64, rx: f64, ry: f64, paint: impl Fn(f64, f64) -> [f64; 3]) {
        let edge = 1.5 / rx.min(ry).max(1.0);
        let (w, h) = (self.p.width, self.p.height);
        let y0 = (cy - ry - 2.0).floor().max(0.0) as usize;
        let y1 = ((cy + ry + 2.0).ceil() as usize).min(h);
        let x0 = (cx - rx - 2.0).floor().max(0.0) as usize;
        let x1 = ((cx + rx + 2.0).ceil() as usize).min(w);
        for y in y0..y1 {
            for x in x0..x1 {
                let (fx, fy) = (x as f64 + 0.5, y as f64 + 0.5);
                let d = (((fx - cx) / rx).powi(2) + ((fy - cy) / ry).powi(2)).sqrt();
                self.blend(x, y, paint(fx, fy), smoothstep(edge, d));
            }
        }
    }
}

fn colour<R: Rng + ?Sized>(rng: &mut R, lo: [f64; 3], hi: [f64; 3]) -> [f64; 3] {
    [
        rng.random_range(lo[0]..=hi[0]),
        rng.random_range(lo[1]..=hi[1]),
        rng.random_range(lo[2]..=hi[2]),
    ]
}

/// Layered ellipses over a gradient: background, hair, face, eyes, nose, mouth.
fn pseudo_face<R: Rng + ?Sized>(w: usize, h: usize, rng: &mut R) -> Planes {
    let mut cv = Canvas { p: Planes::new(w, h) };
    let top = colour(rng, [0.1; 3], [0.9; 3]);
    let bottom = colour(rng, [0.1; 3], [0.9; 3]);
    for y in 0..h {
        let t = y as f64 / (h - 1) as f64;
        let rgb = [0, 1, 2].map(|c| top[c] + t * (bottom[c] - top[c]));
        for x in 0..w {
            cv.blend(x, y, rgb, 1.0);
        }
    }
    let (wf, hf) = (w as f64, h as f64);
    let cx = wf * rng.random_range(0.45..0.55);
    let cy = hf * rng.random_range(0.5..0.58);
    let rx = wf * rng.random_range(0.28..0.38);
    let ry = hf * rng.random_range(0.3..0.38);

    let hair = colour(rng, [0.02, 0.02, 0.02], [0.55, 0.4, 0.3]);
    let period = rng.random_range(3.0..6.0);
    let tilt = rng.random_range(-0.6..0.6);
    cv.ellipse(cx, cy - 0.35 * ry, rx * 1.15, ry * 0.9, |x, y| {
        let s = 0.08 * ((x + tilt * y) * std::f64::consts::TAU / period).sin();
        hair.map(|v| (v + s).clamp(0.0, 1.0))
    });

    let skin = {
        let tone = rng.random_range(0.35..0.95);
        [tone, tone * rng.random_range(0.7..0.85), tone * rng.random_range(0.55..0.7)]
    };
    let shade = rng.random_range(0.05..0.15);
    cv.ellipse(cx, cy, rx, ry, |x, y| {
        let d = ((x - cx) / rx).powi(2) + ((y - cy) / ry).powi(2);
        skin.map(|v| v * (1.0 - shade * d))
    });

    let eye_y = cy - 0.15 * ry;
    let iris = colour(rng, [0.05, 0.05, 0.05], [0.4, 0.5, 0.6]);
    for side in [-1.0, 1.0] {
        let ex = cx + side * 0.38 * rx;
        cv.ellipse(ex, eye_y, 0.17 * rx, 0.08 * ry, |_, _| [0.95, 0.95, 0.93]);
        cv.ellipse(ex, eye_y, 0.07 * rx, 0.07 * ry, |_, _| iris);
        cv.ellipse(ex, eye_y - 0.16 * ry, 0.2 * rx, 0.025 * ry, |_, _| hair);
    }
    cv.ellipse(cx, cy + 0.15 * ry, 0.07 * rx, 0.12 * ry, |_, _| skin.map(|v| v * 0.8));
    let lips = colour(rng, [0.5, 0.1, 0.15], [0.85, 0.35, 0.4]);
    cv.ellipse(cx, cy + 0.5 * ry, 0.3 * rx, 0.07 * ry, |_, _| lips);
    cv.p
}
