use super::filter::{gaussian_blur, Plane};
use super::harris::{by_response, parabolic_offset};
use super::{check_size, Channel, DetectorConfig, FeatureError, GrayImage, InterestPoint};

/// Scale-normalized determinant of Hessian `σ⁴·(Lxx·Lyy - Lxy²)`, one plane per scale.
pub fn hessian_stack(img: &GrayImage, scales: &[f64]) -> Vec<Plane> {
    let base = Plane::from_image(img);
    scales
        .iter()
        .map(|&sigma| {
            let l = gaussian_blur(&base, sigma);
            let norm = sigma.powi(4);
            let mut out = Plane::zeros(l.width, l.height);
            for y in 0..l.height {
                for x in 0..l.width {
                    let (xi, yi) = (x as isize, y as isize);
                    let c = l.get(x, y);
                    let lxx = l.get_clamped(xi + 1, yi) - 2.0 * c + l.get_clamped(xi - 1, yi);
                    let lyy = l.get_clamped(xi, yi + 1) - 2.0 * c + l.get_clamped(xi, yi - 1);
                    let lxy = 0.25
                        * (l.get_clamped(xi + 1, yi + 1) - l.get_clamped(xi + 1, yi - 1)
                            - l.get_clamped(xi - 1, yi + 1)
                            + l.get_clamped(xi - 1, yi - 1));
                    out.data[y * l.width + x] = norm * (lxx * lyy - lxy * lxy);
                }
            }
            out
        })
        .collect()
}

/// Blob points: maxima of the determinant-of-Hessian response over space and
/// the interior scales of `cfg.scales`.
///
/// Each point's `scale` is `√2` times the interpolated Gaussian scale of the
/// peak, i.e. the characteristic radius of the blob.
pub fn detect_blobs(
    img: &GrayImage,
    cfg: &DetectorConfig,
) -> Result<Vec<InterestPoint>, FeatureError> {
    check_size(img)?;
    let scales = &cfg.scales;
    if scales.len() < 3 {
        return Ok(Vec::new());
    }
    let stack = hessian_stack(img, scales);
    let (w, h) = (img.width(), img.height());

    let mut points = Vec::new();
    for s in 1..scales.len() - 1 {
        let margin = (scales[s].ceil() as usize).max(1);
        if 2 * margin >= w || 2 * margin >= h {
            continue;
        }
        let plane = &stack[s];
        for y in margin..h - margin {
            for x in margin..w - margin {
                let v = plane.get(x, y);
                if v <= cfg.blob_threshold || !is_scale_space_max(&stack, s, x, y) {
                    continue;
                }
                let dx = parabolic_offset(plane.get(x - 1, y), v, plane.get(x + 1, y));
                let dy = parabolic_offset(plane.get(x, y - 1), v, plane.get(x, y + 1));
                let ds = parabolic_offset(stack[s - 1].get(x, y), v, stack[s + 1].get(x, y));
                let neighbor = if ds >= 0.0 { scales[s + 1] } else { scales[s - 1] };
                let log_sigma = scales[s].ln() + ds.abs() * (neighbor.ln() - scales[s].ln());
                points.push(InterestPoint {
                    x: x as f64 + dx,
                    y: y as f64 + dy,
                    scale: std::f64::consts::SQRT_2 * log_sigma.exp(),
                    response: v,
                    channel: Channel::Blob,
                });
            }
        }
    }
    points.sort_by(by_response);
    points.truncate(cfg.max_points);
    Ok(points)
}

/// Strictly greater than neighbors earlier in (scale, y, x) order and not
/// smaller than later ones, so a plateau yields a single point.
fn is_scale_space_max(stack: &[Plane], s: usize, x: usize, y: usize) -> bool {
    let v = stack[s].get(x, y);
    for ds in 0..3 {
        let plane = &stack[s + ds - 1];
        for dy in 0..3 {
            for dx in 0..3 {
                if (ds, dy, dx) == (1, 1, 1) {
                    continue;
                }
                let n = plane.get(x + dx - 1, y + dy - 1);
                let earlier = (ds, dy, dx) < (1, 1, 1);
                if n > v || (earlier && n == v) {
                    return false;
                }
            }
        }
    }
    true
}
