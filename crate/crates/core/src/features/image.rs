use std::path::Path;

use image::DynamicImage;

use super::FeatureError;

/// Row-major grayscale image with intensities in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct GrayImage {
    width: usize,
    height: usize,
    pixels: Vec<f32>,
}

/// Luma weights applied to RGB input.
pub const LUMA_WEIGHTS: [f32; 3] = [0.299, 0.587, 0.114];

impl GrayImage {
    pub fn new(width: usize, height: usize, pixels: Vec<f32>) -> Result<Self, FeatureError> {
        if width == 0 || height == 0 {
            return Err(FeatureError::InvalidImage("zero dimension".into()));
        }
        if pixels.len() != width * height {
            return Err(FeatureError::InvalidImage(format!(
                "expected {} pixels, got {}",
                width * height,
                pixels.len()
            )));
        }
        if let Some(p) = pixels.iter().find(|p| !(0.0..=1.0).contains(*p)) {
            return Err(FeatureError::InvalidImage(format!(
                "intensity {p} outside [0, 1]"
            )));
        }
        Ok(Self {
            width,
            height,
            pixels,
        })
    }

    /// Builds an image by evaluating `f(x, y)` at every pixel; values are clamped to `[0, 1]`.
    pub fn from_fn(width: usize, height: usize, f: impl Fn(usize, usize) -> f32) -> Self {
        assert!(width > 0 && height > 0, "image dimensions must be positive");
        let mut pixels = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                pixels.push(f(x, y).clamp(0.0, 1.0));
            }
        }
        Self {
            width,
            height,
            pixels,
        }
    }

    pub fn constant(width: usize, height: usize, value: f32) -> Self {
        Self::from_fn(width, height, |_, _| value)
    }

    /// Converts a decoded image, applying [`LUMA_WEIGHTS`] to color input.
    pub fn from_dynamic(img: &DynamicImage) -> Self {
        let rgb = img.to_rgb32f();
        let (w, h) = rgb.dimensions();
        let pixels = rgb
            .pixels()
            .map(|p| {
                let [r, g, b] = p.0;
                (LUMA_WEIGHTS[0] * r + LUMA_WEIGHTS[1] * g + LUMA_WEIGHTS[2] * b).clamp(0.0, 1.0)
            })
            .collect();
        Self {
            width: w as usize,
            height: h as usize,
            pixels,
        }
    }

    /// Decodes an encoded image container (PNG, JPEG, ...). Images whose longer
    /// side exceeds `max_side` are downscaled first.
    pub fn decode(bytes: &[u8], max_side: Option<u32>) -> Result<Self, FeatureError> {
        let img = image::load_from_memory(bytes)
            .map_err(|e| FeatureError::InvalidImage(e.to_string()))?;
        Ok(Self::from_dynamic(&limit_size(img, max_side)))
    }

    pub fn open(path: &Path, max_side: Option<u32>) -> Result<Self, FeatureError> {
        let bytes = std::fs::read(path)?;
        Self::decode(&bytes, max_side)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn pixels(&self) -> &[f32] {
        &self.pixels
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f32 {
        self.pixels[y * self.width + x]
    }

    /// Pixel lookup with coordinates clamped to the image (replicated border).
    #[inline]
    pub fn get_clamped(&self, x: isize, y: isize) -> f32 {
        let x = x.clamp(0, self.width as isize - 1) as usize;
        let y = y.clamp(0, self.height as isize - 1) as usize;
        self.get(x, y)
    }

    /// Bilinear sample at a real-valued position, clamped to the image.
    pub fn sample(&self, x: f64, y: f64) -> f64 {
        let xc = x.clamp(0.0, (self.width - 1) as f64);
        let yc = y.clamp(0.0, (self.height - 1) as f64);
        let x0 = xc.floor() as usize;
        let y0 = yc.floor() as usize;
        let x1 = (x0 + 1).min(self.width - 1);
        let y1 = (y0 + 1).min(self.height - 1);
        let fx = xc - x0 as f64;
        let fy = yc - y0 as f64;
        let top = self.get(x0, y0) as f64 * (1.0 - fx) + self.get(x1, y0) as f64 * fx;
        let bottom = self.get(x0, y1) as f64 * (1.0 - fx) + self.get(x1, y1) as f64 * fx;
        top * (1.0 - fy) + bottom * fy
    }

    /// Rotates the image 90° clockwise. A pixel at `(x, y)` moves to `(height - 1 - y, x)`.
    pub fn rotate90(&self) -> Self {
        let (w, h) = (self.width, self.height);
        Self::from_fn(h, w, |nx, ny| self.get(ny, h - 1 - nx))
    }
}

fn limit_size(img: DynamicImage, max_side: Option<u32>) -> DynamicImage {
    match max_side {
        Some(limit) if img.width().max(img.height()) > limit => {
            img.resize(limit, limit, image::imageops::FilterType::Triangle)
        }
        _ => img,
    }
}
