//! Gaussian smoothing and finite differences on f64 planes.

use super::GrayImage;

/// A dense f64 plane with the same layout as [`GrayImage`].
#[derive(Debug, Clone, PartialEq)]
pub struct Plane {
    pub width: usize,
    pub height: usize,
    pub data: Vec<f64>,
}

impl Plane {
    pub fn zeros(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            data: vec![0.0; width * height],
        }
    }

    pub fn from_image(img: &GrayImage) -> Self {
        Self {
            width: img.width(),
            height: img.height(),
            data: img.pixels().iter().map(|&p| p as f64).collect(),
        }
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.data[y * self.width + x]
    }

    #[inline]
    pub fn get_clamped(&self, x: isize, y: isize) -> f64 {
        let x = x.clamp(0, self.width as isize - 1) as usize;
        let y = y.clamp(0, self.height as isize - 1) as usize;
        self.get(x, y)
    }

    pub fn max(&self) -> f64 {
        self.data.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }
}

/// Normalized Gaussian taps for offsets `-r..=r`, `r = ceil(3σ)`.
pub fn gaussian_kernel(sigma: f64) -> Vec<f64> {
    assert!(sigma > 0.0, "sigma must be positive");
    let radius = (3.0 * sigma).ceil() as isize;
    let taps: Vec<f64> = (-radius..=radius)
        .map(|i| (-(i * i) as f64 / (2.0 * sigma * sigma)).exp())
        .collect();
    let sum: f64 = taps.iter().sum();
    taps.into_iter().map(|t| t / sum).collect()
}

/// Separable Gaussian blur with replicated borders (horizontal pass first).
pub fn gaussian_blur(src: &Plane, sigma: f64) -> Plane {
    let kernel = gaussian_kernel(sigma);
    let radius = (kernel.len() / 2) as isize;
    let (w, h) = (src.width, src.height);

    let mut tmp = Plane::zeros(w, h);
    for y in 0..h {
        for x in 0..w {
            let mut acc = 0.0;
            for (k, tap) in kernel.iter().enumerate() {
                acc += tap * src.get_clamped(x as isize + k as isize - radius, y as isize);
            }
            tmp.data[y * w + x] = acc;
        }
    }

    let mut out = Plane::zeros(w, h);
    for y in 0..h {
        for x in 0..w {
            let mut acc = 0.0;
            for (k, tap) in kernel.iter().enumerate() {
                acc += tap * tmp.get_clamped(x as isize, y as isize + k as isize - radius);
            }
            out.data[y * w + x] = acc;
        }
    }
    out
}

/// Central-difference gradients `(∂x, ∂y)` with replicated borders.
pub fn gradients(src: &Plane) -> (Plane, Plane) {
    let (w, h) = (src.width, src.height);
    let mut gx = Plane::zeros(w, h);
    let mut gy = Plane::zeros(w, h);
    for y in 0..h {
        for x in 0..w {
            let (xi, yi) = (x as isize, y as isize);
            gx.data[y * w + x] = 0.5 * (src.get_clamped(xi + 1, yi) - src.get_clamped(xi - 1, yi));
            gy.data[y * w + x] = 0.5 * (src.get_clamped(xi, yi + 1) - src.get_clamped(xi, yi - 1));
        }
    }
    (gx, gy)
}
