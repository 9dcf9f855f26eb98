use std::path::Path;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Smallest side an [`Image`] may have.
pub const MIN_SIDE: usize = 16;

/// 8-bit RGB raster, interleaved, row-major.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Image {
    width: usize,
    height: usize,
    pixels: Vec<u8>,
}

impl Image {
    pub fn new(width: usize, height: usize, pixels: Vec<u8>) -> Result<Self> {
        if width < MIN_SIDE || height < MIN_SIDE {
            return Err(Error::invalid(format!(
                "image {width}x{height} is smaller than {MIN_SIDE}x{MIN_SIDE}"
            )));
        }
        if pixels.len() != width * height * 3 {
            return Err(Error::invalid(format!(
                "image {width}x{height} needs {} bytes, got {}",
                width * height * 3,
                pixels.len()
            )));
        }
        Ok(Image {
            width,
            height,
            pixels,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn pixels(&self) -> &[u8] {
        &self.pixels
    }

    pub fn load_png(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let img = image::open(path)
            .map_err(|e| Error::Image {
                path: path.to_path_buf(),
                message: e.to_string(),
            })?
            .into_rgb8();
        let (w, h) = img.dimensions();
        Image::new(w as usize, h as usize, img.into_raw())
    }

    pub fn save_png(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        image::save_buffer_with_format(
            path,
            &self.pixels,
            self.width as u32,
            self.height as u32,
            image::ColorType::Rgb8,
            image::ImageFormat::Png,
        )
        .map_err(|e| Error::Image {
            path: path.to_path_buf(),
            message: e.to_string(),
        })
    }

    pub(crate) fn to_planes(&self) -> Planes {
        let n = self.width * self.height;
        let mut data = vec![0.0; 3 * n];
        for (i, px) in self.pixels.chunks_exact(3).enumerate() {
            for c in 0..3 {
                data[c * n + i] = px[c] as f64 / 255.0;
            }
        }
        Planes {
            width: self.width,
            height: self.height,
            data,
        }
    }

    /// CHW values scaled to `[0, 1]`.
    pub fn to_chw(&self) -> Vec<f64> {
        self.to_planes().data
    }
}

/// Stack equally sized images into an `[N, 3, H, W]` tensor.
pub fn batch_tensor(images: &[&Image]) -> Result<Tensor> {
    let Some(first) = images.first() else {
        return Err(Error::invalid("cannot batch zero images"));
    };
    let (w, h) = (first.width, first.height);
    let mut data = Vec::with_capacity(images.len() * 3 * w * h);
    for img in images {
        if img.width != w || img.height != h {
            return Err(Error::invalid(format!(
                "batch mixes {w}x{h} and {}x{} images",
                img.width, img.height
            )));
        }
        data.extend(img.to_chw());
    }
    Tensor::new(vec![images.len(), 3, h, w], data)
}

/// Float working copy: three planes of `[0, 1]` values.
#[derive(Clone, Debug, PartialEq)]
pub(crate) struct Planes {
    pub width: usize,
    pub height: usize,
    pub data: Vec<f64>,
}

impl Planes {
    pub fn new(width: usize, height: usize) -> Self {
        Planes {
            width,
            height,
            data: vec![0.0; 3 * width * height],
        }
    }

    pub fn plane(&self, c: usize) -> &[f64] {
        let n = self.width * self.height;
        &self.data[c * n..(c + 1) * n]
    }

    pub fn plane_mut(&mut self, c: usize) -> &mut [f64] {
        let n = self.width * self.height;
        &mut self.data[c * n..(c + 1) * n]
    }

    /// Round to the nearest 8-bit level.
    pub fn quantize(&self) -> Result<Image> {
        let n = self.width * self.height;
        let mut pixels = vec![0u8; 3 * n];
        for i in 0..n {
            for c in 0..3 {
                let v = (self.data[c * n + i] * 255.0).round().clamp(0.0, 255.0);
                pixels[3 * i + c] = v as u8;
            }
        }
        Image::new(self.width, self.height, pixels)
    }

    /// Bilinear sample of the crop `[x0, x0 + cw) × [y0, y0 + ch)` onto an
    /// `out_w × out_h` grid, half-pixel centres, edge-clamped.
    pub fn resample(&self, x0: f64, y0: f64, cw: f64, ch: f64, out_w: usize, out_h: usize) -> Planes {
        let sx = cw / out_w as f64;
        let sy = ch / out_h as f64;
        let xs: Vec<(usize, usize, f64)> = (0..out_w)
            .map(|ox| taps(x0 + (ox as f64 + 0.5) * sx - 0.5, self.width))
            .collect();
        let ys: Vec<(usize, usize, f64)> = (0..out_h)
            .map(|oy| taps(y0 + (oy as f64 + 0.5) * sy - 0.5, self.height))
            .collect();
        let mut out = Planes::new(out_w, out_h);
        for c in 0..3 {
            let src = self.plane(c);
            let dst = out.plane_mut(c);
            for (oy, &(y_lo, y_hi, fy)) in ys.iter().enumerate() {
                let r0 = &src[y_lo * self.width..][..self.width];
                let r1 = &src[y_hi * self.width..][..self.width];
                for (ox, &(x_lo, x_hi, fx)) in xs.iter().enumerate() {
                    let top = r0[x_lo] + (r0[x_hi] - r0[x_lo]) * fx;
                    let bot = r1[x_lo] + (r1[x_hi] - r1[x_lo]) * fx;
                    dst[oy * out_w + ox] = top + (bot - top) * fy;
                }
            }
        }
        out
    }

    pub fn resize(&self, out_w: usize, out_h: usize) -> Planes {
        self.resample(0.0, 0.0, self.width as f64, self.height as f64, out_w, out_h)
    }

    /// Mirror-pad (edge pixel not repeated) by the given amounts.
    pub fn reflect_pad(&self, left: usize, right: usize, top: usize, bottom: usize) -> Planes {
        let w = self.width + left + right;
        let h = self.height + top + bottom;
        let mut out = Planes::new(w, h);
        for c in 0..3 {
            let src = self.plane(c);
            let dst = out.plane_mut(c);
            for y in 0..h {
                let sy = reflect(y as isize - top as isize, self.height);
                for x in 0..w {
                    let sx = reflect(x as isize - left as isize, self.width);
                    dst[y * w + x] = src[sy * self.width + sx];
                }
            }
        }
        out
    }
}

fn taps(pos: f64, len: usize) -> (usize, usize, f64) {
    let p = pos.clamp(0.0, (len - 1) as f64);
    let lo = p.floor() as usize;
    let hi = (lo + 1).min(len - 1);
    (lo, hi, p - lo as f64)
}

fn reflect(mut i: isize, len: usize) -> usize {
    let n = len as isize;
    if n == 1 {
        return 0;
    }
    loop {
        if i < 0 {
            i = -i;
        } else if i >= n {
            i = 2 * (n - 1) - i;
        } else {
            return i as usize;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ramp(w: usize, h: usize) -> Image {
        let pixels = (0..w * h * 3).map(|i| (i * 37 % 256) as u8).collect();
        Image::new(w, h, pixels).unwrap()
    }

    #[test]
    fn same_size_resize_is_identity() {
        let img = ramp(20, 17);
        let out = img.to_planes().resize(20, 17).quantize().unwrap();
        assert_eq!(out, img);
    }

    #[test]
    fn reflect_indices() {
        let idx: Vec<usize> = (-3..7).map(|i| reflect(i, 4)).collect();
        assert_eq!(idx, vec![3, 2, 1, 0, 1, 2, 3, 2, 1, 0]);
    }

    #[test]
    fn tiny_images_are_rejected() {
        assert!(Image::new(15, 20, vec![0; 15 * 20 * 3]).is_err());
        assert!(Image::new(16, 16, vec![0; 10]).is_err());
    }

    #[test]
    fn batch_tensor_layout() {
        let a = ramp(16, 16);
        let t = batch_tensor(&[&a, &a]).unwrap();
        assert_eq!(t.shape(), &[2, 3, 16, 16]);
        assert_eq!(t.data()[0], a.pixels()[0] as f64 / 255.0);
        assert_eq!(t.data()[256], a.pixels()[1] as f64 / 255.0);
    }
}
