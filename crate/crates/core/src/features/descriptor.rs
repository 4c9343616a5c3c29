use std::f64::consts::TAU;

use super::{Descriptor, DetectorConfig, FeatureError, GrayImage, InterestPoint, DESCRIPTOR_DIM};

const CELLS: usize = 4;
const ORIENTATIONS: usize = 8;
const CLIP: f64 = 0.2;

/// Gradient-orientation histogram over a 4x4 grid of cells around `pt`.
///
/// The patch side is `16 · pt.scale / cfg.base_scale` pixels, axis-aligned
/// (no dominant-orientation normalization). Gradient magnitudes are
/// Gaussian-weighted and spread trilinearly over cells and orientation bins;
/// the vector is L2-normalized, clipped at 0.2 and normalized again. A patch
/// without gradient yields the all-zero descriptor.
///
/// The patch may overhang the image by at most one cell on each side, with
/// overhanging samples clamped to the border; otherwise the point is rejected.
pub fn describe(
    img: &GrayImage,
    pt: &InterestPoint,
    cfg: &DetectorConfig,
) -> Result<Descriptor, FeatureError> {
    let side = 16.0 * pt.scale / cfg.base_scale;
    let half = side / 2.0;
    let cell = side / CELLS as f64;
    let (max_x, max_y) = ((img.width() - 1) as f64, (img.height() - 1) as f64);
    if pt.x - half < -cell || pt.y - half < -cell || pt.x + half > max_x + cell || pt.y + half > max_y + cell
    {
        return Err(FeatureError::PatchOutOfBounds { x: pt.x, y: pt.y });
    }

    let samples = (side.round() as usize).max(16);
    let step = side / samples as f64;
    let sigma_w = half;
    let bin_width = TAU / ORIENTATIONS as f64;
    let mut hist = [0f64; DESCRIPTOR_DIM];

    for j in 0..samples {
        let v = (j as f64 + 0.5) * step - half;
        for i in 0..samples {
            let u = (i as f64 + 0.5) * step - half;
            let (sx, sy) = (pt.x + u, pt.y + v);
            let gx = (img.sample(sx + step, sy) - img.sample(sx - step, sy)) / (2.0 * step);
            let gy = (img.sample(sx, sy + step) - img.sample(sx, sy - step)) / (2.0 * step);
            let mag = (gx * gx + gy * gy).sqrt();
            if mag == 0.0 {
                continue;
            }
            let weight = (-(u * u + v * v) / (2.0 * sigma_w * sigma_w)).exp() * mag;
            let angle = gy.atan2(gx).rem_euclid(TAU);

            let cx = (u + half) / cell - 0.5;
            let cy = (v + half) / cell - 0.5;
            let co = angle / bin_width;
            let (cx0, cy0, co0) = (cx.floor(), cy.floor(), co.floor());
            let (fx, fy, fo) = (cx - cx0, cy - cy0, co - co0);

            for (oy, wy) in [(0, 1.0 - fy), (1, fy)] {
                let yb = cy0 as isize + oy;
                if !(0..CELLS as isize).contains(&yb) || wy == 0.0 {
                    continue;
                }
                for (ox, wx) in [(0, 1.0 - fx), (1, fx)] {
                    let xb = cx0 as isize + ox;
                    if !(0..CELLS as isize).contains(&xb) || wx == 0.0 {
                        continue;
                    }
                    for (oo, wo) in [(0, 1.0 - fo), (1, fo)] {
                        if wo == 0.0 {
                            continue;
                        }
                        let ob = (co0 as usize + oo) % ORIENTATIONS;
                        let idx = (yb as usize * CELLS + xb as usize) * ORIENTATIONS + ob;
                        hist[idx] += weight * wy * wx * wo;
                    }
                }
            }
        }
    }

    Ok(Descriptor::new(normalize(hist), pt.channel))
}

fn normalize(mut hist: [f64; DESCRIPTOR_DIM]) -> [f32; DESCRIPTOR_DIM] {
    let norm = |h: &[f64]| h.iter().map(|v| v * v).sum::<f64>().sqrt();
    let n = norm(&hist);
    if n <= 1e-12 {
        return [0.0; DESCRIPTOR_DIM];
    }
    for v in hist.iter_mut() {
        *v = (*v / n).min(CLIP);
    }
    let n = norm(&hist);
    let mut out = [0f32; DESCRIPTOR_DIM];
    for (o, v) in out.iter_mut().zip(hist) {
        *o = (v / n) as f32;
    }
    out
}
