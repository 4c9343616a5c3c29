use std::cmp::Ordering;

use super::filter::{gaussian_blur, gradients, Plane};
use super::{check_size, Channel, DetectorConfig, FeatureError, GrayImage, InterestPoint};

/// Harris response `det(M) - κ·trace(M)²` of the Gaussian-windowed structure tensor.
pub fn harris_response(img: &GrayImage, cfg: &DetectorConfig) -> Plane {
    let (gx, gy) = gradients(&Plane::from_image(img));
    let n = gx.data.len();
    let mut xx = Plane::zeros(gx.width, gx.height);
    let mut yy = xx.clone();
    let mut xy = xx.clone();
    for i in 0..n {
        xx.data[i] = gx.data[i] * gx.data[i];
        yy.data[i] = gy.data[i] * gy.data[i];
        xy.data[i] = gx.data[i] * gy.data[i];
    }
    let sxx = gaussian_blur(&xx, cfg.harris_sigma);
    let syy = gaussian_blur(&yy, cfg.harris_sigma);
    let sxy = gaussian_blur(&xy, cfg.harris_sigma);

    let mut out = Plane::zeros(gx.width, gx.height);
    for i in 0..n {
        let det = sxx.data[i] * syy.data[i] - sxy.data[i] * sxy.data[i];
        let trace = sxx.data[i] + syy.data[i];
        out.data[i] = det - cfg.harris_kappa * trace * trace;
    }
    out
}

/// Harris corners: thresholded 3x3 maxima, greedy radius suppression, capped
/// at `max_points`, sorted by descending response.
pub fn detect_corners(
    img: &GrayImage,
    cfg: &DetectorConfig,
) -> Result<Vec<InterestPoint>, FeatureError> {
    check_size(img)?;
    let r = harris_response(img, cfg);
    let peak = r.max();
    if !(peak > 0.0) {
        return Ok(Vec::new());
    }
    let threshold = cfg.harris_threshold * peak;
    let (w, h) = (r.width, r.height);

    let mut candidates = Vec::new();
    for y in 0..h {
        for x in 0..w {
            let v = r.get(x, y);
            if v <= threshold || !is_local_max(&r, x, y) {
                continue;
            }
            let dx = if x > 0 && x + 1 < w {
                parabolic_offset(r.get(x - 1, y), v, r.get(x + 1, y))
            } else {
                0.0
            };
            let dy = if y > 0 && y + 1 < h {
                parabolic_offset(r.get(x, y - 1), v, r.get(x, y + 1))
            } else {
                0.0
            };
            candidates.push(InterestPoint {
                x: (x as f64 + dx).clamp(0.0, (w - 1) as f64),
                y: (y as f64 + dy).clamp(0.0, (h - 1) as f64),
                scale: cfg.base_scale,
                response: v,
                channel: Channel::Corner,
            });
        }
    }
    candidates.sort_by(by_response);

    let r2 = cfg.nms_radius * cfg.nms_radius;
    let mut kept: Vec<InterestPoint> = Vec::new();
    for c in candidates {
        if kept.len() >= cfg.max_points {
            break;
        }
        if kept
            .iter()
            .all(|k| (k.x - c.x).powi(2) + (k.y - c.y).powi(2) > r2)
        {
            kept.push(c);
        }
    }
    Ok(kept)
}

/// Descending response, then ascending `(y, x)`.
pub(super) fn by_response(a: &InterestPoint, b: &InterestPoint) -> Ordering {
    b.response
        .total_cmp(&a.response)
        .then(a.y.total_cmp(&b.y))
        .then(a.x.total_cmp(&b.x))
}

fn is_local_max(r: &Plane, x: usize, y: usize) -> bool {
    let v = r.get(x, y);
    for ny in y.saturating_sub(1)..=(y + 1).min(r.height - 1) {
        for nx in x.saturating_sub(1)..=(x + 1).min(r.width - 1) {
            if (nx, ny) != (x, y) && r.get(nx, ny) > v {
                return false;
            }
        }
    }
    true
}

/// Vertex offset of the parabola through three equally spaced samples, in `[-0.5, 0.5]`.
pub(super) fn parabolic_offset(left: f64, center: f64, right: f64) -> f64 {
    let denom = left - 2.0 * center + right;
    if denom >= 0.0 {
        return 0.0;
    }
    (0.5 * (left - right) / denom).clamp(-0.5, 0.5)
}
