//! Minimal RGB intensity image used across the crate.
//!
//! Pixels are `f32` in `[0, 1]`, stored row-major as `H x W x 3`. Images that
//! go through PNG are quantized to multiples of `1/255`, so an image produced by
//! [`Image::quantize`] survives a save/load cycle unchanged.

use std::path::Path;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    height: usize,
    width: usize,
    data: Vec<f32>,
}

impl Image {
    pub fn new(height: usize, width: usize) -> Self {
        Self::filled(height, width, [0.0; 3])
    }

    pub fn filled(height: usize, width: usize, rgb: [f32; 3]) -> Self {
        let mut data = Vec::with_capacity(height * width * 3);
        for _ in 0..height * width {
            data.extend_from_slice(&rgb);
        }
        Self {
            height,
            width,
            data,
        }
    }

    pub fn from_raw(height: usize, width: usize, data: Vec<f32>) -> Result<Self> {
        if data.len() != height * width * 3 {
            return Err(Error::ShapeMismatch {
                expected: format!("{}", height * width * 3),
                got: format!("{}", data.len()),
            });
        }
        Ok(Self {
            height,
            width,
            data,
        })
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn is_empty(&self) -> bool {
        self.height == 0 || self.width == 0
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> [f32; 3] {
        let i = (row * self.width + col) * 3;
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    #[inline]
    pub fn set(&mut self, row: usize, col: usize, rgb: [f32; 3]) {
        let i = (row * self.width + col) * 3;
        self.data[i..i + 3].copy_from_slice(&rgb);
    }

    /// Fills the half-open pixel rectangle `[row0, row1) x [col0, col1)`,
    /// clipped to the image.
    pub fn fill_rect(&mut self, row0: usize, col0: usize, row1: usize, col1: usize, rgb: [f32; 3]) {
        for r in row0..row1.min(self.height) {
            for c in col0..col1.min(self.width) {
                self.set(r, c, rgb);
            }
        }
    }

    /// Copies out the pixel rectangle `[row0, row0 + h) x [col0, col0 + w)`.
    pub fn crop(&self, row0: usize, col0: usize, h: usize, w: usize) -> Result<Self> {
        if row0 + h > self.height || col0 + w > self.width {
            return Err(Error::ShapeMismatch {
                expected: format!("crop within {}x{}", self.height, self.width),
                got: format!("rows {}..{}, cols {}..{}", row0, row0 + h, col0, col0 + w),
            });
        }
        let mut data = Vec::with_capacity(h * w * 3);
        for r in row0..row0 + h {
            let start = (r * self.width + col0) * 3;
            data.extend_from_slice(&self.data[start..start + w * 3]);
        }
        Ok(Self {
            height: h,
            width: w,
            data,
        })
    }

    pub fn flip_horizontal(&self) -> Self {
        let mut out = self.clone();
        for r in 0..self.height {
            for c in 0..self.width {
                out.set(r, self.width - 1 - c, self.get(r, c));
            }
        }
        out
    }

    /// Bilinear resize with pixel-center alignment.
    pub fn resize(&self, height: usize, width: usize) -> Self {
        if height == self.height && width == self.width {
            return self.clone();
        }
        let mut out = Self::new(height, width);
        let sy = self.height as f32 / height as f32;
        let sx = self.width as f32 / width as f32;
        for r in 0..height {
            let fy = ((r as f32 + 0.5) * sy - 0.5).clamp(0.0, (self.height - 1) as f32);
            let y0 = fy.floor() as usize;
            let y1 = (y0 + 1).min(self.height - 1);
            let wy = fy - y0 as f32;
            for c in 0..width {
                let fx = ((c as f32 + 0.5) * sx - 0.5).clamp(0.0, (self.width - 1) as f32);
                let x0 = fx.floor() as usize;
                let x1 = (x0 + 1).min(self.width - 1);
                let wx = fx - x0 as f32;
                let (a, b, cc, d) = (
                    self.get(y0, x0),
                    self.get(y0, x1),
                    self.get(y1, x0),
                    self.get(y1, x1),
                );
                let mut px = [0.0f32; 3];
                for ch in 0..3 {
                    let top = a[ch] * (1.0 - wx) + b[ch] * wx;
                    let bottom = cc[ch] * (1.0 - wx) + d[ch] * wx;
                    px[ch] = top * (1.0 - wy) + bottom * wy;
                }
                out.set(r, c, px);
            }
        }
        out
    }

    /// Rounds every value to the nearest multiple of 1/255 after clamping.
    pub fn quantize(&mut self) {
        for v in &mut self.data {
            *v = (v.clamp(0.0, 1.0) * 255.0).round() / 255.0;
        }
    }

    pub fn channel_mean(&self) -> [f64; 3] {
        let mut sum = [0.0f64; 3];
        for px in self.data.chunks_exact(3) {
            for ch in 0..3 {
                sum[ch] += px[ch] as f64;
            }
        }
        let n = (self.height * self.width).max(1) as f64;
        sum.map(|s| s / n)
    }

    pub fn to_rgb8(&self) -> image::RgbImage {
        let bytes = self
            .data
            .iter()
            .map(|v| (v.clamp(0.0, 1.0) * 255.0).round() as u8)
            .collect();
        image::RgbImage::from_raw(self.width as u32, self.height as u32, bytes)
            .expect("buffer length matches dimensions")
    }

    pub fn from_rgb8(img: &image::RgbImage) -> Self {
        Self {
            height: img.height() as usize,
            width: img.width() as usize,
            data: img.as_raw().iter().map(|&b| b as f32 / 255.0).collect(),
        }
    }

    pub fn save_png(&self, path: &Path) -> Result<()> {
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent)?;
        }
        self.to_rgb8().save_with_format(path, image::ImageFormat::Png)?;
        Ok(())
    }

    pub fn load_png(path: &Path) -> Result<Self> {
        if !path.exists() {
            return Err(Error::MissingFile(path.to_path_buf()));
        }
        let img = image::open(path)?.to_rgb8();
        Ok(Self::from_rgb8(&img))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ramp(h: usize, w: usize) -> Image {
        let mut img = Image::new(h, w);
        for r in 0..h {
            for c in 0..w {
                img.set(r, c, [r as f32 / h as f32, c as f32 / w as f32, 0.5]);
            }
        }
        img
    }

    #[test]
    fn crop_copies_the_requested_window() {
        let img = ramp(10, 12);
        let c = img.crop(2, 3, 4, 5).unwrap();
        assert_eq!((c.height(), c.width()), (4, 5));
        assert_eq!(c.get(0, 0), img.get(2, 3));
        assert_eq!(c.get(3, 4), img.get(5, 7));
        assert!(img.crop(8, 0, 4, 2).is_err());
    }

    #[test]
    fn flip_twice_is_identity() {
        let img = ramp(7, 9);
        assert_eq!(img.flip_horizontal().flip_horizontal(), img);
        assert_eq!(img.flip_horizontal().get(3, 0), img.get(3, 8));
    }

    #[test]
    fn resize_of_constant_image_is_constant() {
        let img = Image::filled(13, 7, [0.25, 0.5, 0.75]);
        let r = img.resize(32, 32);
        assert!(r.data().iter().all(|v| [0.25, 0.5, 0.75].contains(v)));
    }

    #[test]
    fn quantized_image_survives_png() {
        let mut img = ramp(6, 5);
        img.quantize();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("x.png");
        img.save_png(&p).unwrap();
        assert_eq!(Image::load_png(&p).unwrap(), img);
    }
}
