//! Small synthetic photographs: each object is a fixed arrangement of
//! rectangles and discs, and each view shifts and rescales it slightly.

use std::io::Cursor;
use std::path::Path;

use image::{GrayImage, ImageFormat, Luma};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

enum Shape {
    Rect { x0: f32, y0: f32, x1: f32, y1: f32, level: u8 },
    Disc { cx: f32, cy: f32, r: f32, level: u8 },
}

fn shapes(object_seed: u64) -> Vec<Shape> {
    let mut rng = ChaCha8Rng::seed_from_u64(object_seed);
    (0..rng.random_range(5..9))
        .map(|_| {
            let level = rng.random_range(0..=255u8);
            if rng.random_bool(0.5) {
                let (x0, y0) = (rng.random_range(0.05..0.7), rng.random_range(0.05..0.7));
                Shape::Rect {
                    x0,
                    y0,
                    x1: x0 + rng.random_range(0.1..0.3),
                    y1: y0 + rng.random_range(0.1..0.3),
                    level,
                }
            } else {
                Shape::Disc {
                    cx: rng.random_range(0.15..0.85),
                    cy: rng.random_range(0.15..0.85),
                    r: rng.random_range(0.04..0.15),
                    level,
                }
            }
        })
        .collect()
}

/// Renders view `view` of object `object_seed` at `size`×`size` pixels.
pub fn view(object_seed: u64, view: u32, size: u32) -> GrayImage {
    let shapes = shapes(object_seed);
    let mut rng = ChaCha8Rng::seed_from_u64(object_seed ^ (u64::from(view) << 32) ^ 0x5151);
    let shift = (rng.random_range(-0.06..0.06f32), rng.random_range(-0.06..0.06f32));
    let scale = rng.random_range(0.9..1.1f32);
    let background = rng.random_range(90..160u8);
    GrayImage::from_fn(size, size, |px, py| {
        let x = ((px as f32 + 0.5) / size as f32 - 0.5) / scale + 0.5 - shift.0;
        let y = ((py as f32 + 0.5) / size as f32 - 0.5) / scale + 0.5 - shift.1;
        let mut v = background;
        for s in &shapes {
            match *s {
                Shape::Rect { x0, y0, x1, y1, level } if x >= x0 && x < x1 && y >= y0 && y < y1 => v = level,
                Shape::Disc { cx, cy, r, level } if (x - cx).powi(2) + (y - cy).powi(2) < r * r => v = level,
                _ => {}
            }
        }
        Luma([v])
    })
}

pub fn png_bytes(img: &GrayImage) -> Vec<u8> {
    let mut out = Vec::new();
    img.write_to(&mut Cursor::new(&mut out), ImageFormat::Png)
        .expect("png encoding to memory");
    out
}

pub fn save_png(img: &GrayImage, path: &Path) -> std::io::Result<()> {
    std::fs::write(path, png_bytes(img))
}
