//! Single-channel floating point images in the unit luminance domain.

use serde::{Deserialize, Serialize};

/// Side length of the square input expected by the retinal models.
pub const RETINA_SIZE: usize = 50;

/// Row-major grayscale image, pixel values nominally in `[0, 1]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Image {
    height: usize,
    width: usize,
    data: Vec<f32>,
}

impl Image {
    pub fn new(height: usize, width: usize, data: Vec<f32>) -> Self {
        assert!(height >= 1 && width >= 1, "image must be at least 1x1");
        assert_eq!(data.len(), height * width, "pixel buffer size");
        Image {
            height,
            width,
            data,
        }
    }

    pub fn filled(height: usize, width: usize, value: f32) -> Self {
        Image::new(height, width, vec![value; height * width])
    }

    pub fn zeros(height: usize, width: usize) -> Self {
        Image::filled(height, width, 0.0)
    }

    pub fn from_fn(height: usize, width: usize, mut f: impl FnMut(usize, usize) -> f32) -> Self {
        let mut data = Vec::with_capacity(height * width);
        for y in 0..height {
            for x in 0..width {
                data.push(f(y, x));
            }
        }
        Image::new(height, width, data)
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn pixels(&self) -> &[f32] {
        &self.data
    }

    pub fn pixels_mut(&mut self) -> &mut [f32] {
        &mut self.data
    }

    pub fn into_pixels(self) -> Vec<f32> {
        self.data
    }

    #[inline]
    pub fn get(&self, y: usize, x: usize) -> f32 {
        self.data[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, y: usize, x: usize, v: f32) {
        self.data[y * self.width + x] = v;
    }

    pub fn clamp_unit(&mut self) {
        for v in &mut self.data {
            *v = v.clamp(0.0, 1.0);
        }
    }

    /// Copy of the rectangle `[y0, y0+h) x [x0, x0+w)`.
    pub fn crop(&self, y0: usize, x0: usize, h: usize, w: usize) -> Image {
        assert!(y0 + h <= self.height && x0 + w <= self.width, "crop out of bounds");
        let mut data = Vec::with_capacity(h * w);
        for y in y0..y0 + h {
            let start = y * self.width + x0;
            data.extend_from_slice(&self.data[start..start + w]);
        }
        Image::new(h, w, data)
    }

    /// Bilinear resize with half-pixel centers; edge samples clamp.
    /// Resizing to the same shape returns an identical copy.
    pub fn resize(&self, out_h: usize, out_w: usize) -> Image {
        if out_h == self.height && out_w == self.width {
            return self.clone();
        }
        let sy = self.height as f64 / out_h as f64;
        let sx = self.width as f64 / out_w as f64;
        let xs: Vec<(usize, usize, f64)> = (0..out_w)
            .map(|x| source_coord(x, sx, self.width))
            .collect();
        let mut data = Vec::with_capacity(out_h * out_w);
        for y in 0..out_h {
            let (y0, y1, fy) = source_coord(y, sy, self.height);
            for &(x0, x1, fx) in &xs {
                let top = lerp(self.get(y0, x0) as f64, self.get(y0, x1) as f64, fx);
                let bottom = lerp(self.get(y1, x0) as f64, self.get(y1, x1) as f64, fx);
                data.push(lerp(top, bottom, fy) as f32);
            }
        }
        Image::new(out_h, out_w, data)
    }

    /// Bilinear sample at fractional coordinates; outside the image reads 0.
    pub fn sample_zero_fill(&self, y: f64, x: f64) -> f64 {
        let y0 = y.floor();
        let x0 = x.floor();
        let fy = y - y0;
        let fx = x - x0;
        let px = |yy: f64, xx: f64| -> f64 {
            if yy < 0.0 || xx < 0.0 || yy >= self.height as f64 || xx >= self.width as f64 {
                0.0
            } else {
                self.get(yy as usize, xx as usize) as f64
            }
        };
        let top = lerp(px(y0, x0), px(y0, x0 + 1.0), fx);
        let bottom = lerp(px(y0 + 1.0, x0), px(y0 + 1.0, x0 + 1.0), fx);
        lerp(top, bottom, fy)
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().map(|&v| v as f64).sum()
    }

    pub fn mean(&self) -> f64 {
        self.sum() / self.data.len() as f64
    }
}

#[inline]
fn lerp(a: f64, b: f64, t: f64) -> f64 {
    a + (b - a) * t
}

#[inline]
fn source_coord(dst: usize, scale: f64, len: usize) -> (usize, usize, f64) {
    let src = ((dst as f64 + 0.5) * scale - 0.5).clamp(0.0, (len - 1) as f64);
    let i0 = src.floor() as usize;
    let i1 = (i0 + 1).min(len - 1);
    (i0, i1, src - i0 as f64)
}
