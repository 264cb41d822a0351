use super::ProbabilityMap;

/// Two values closer than this count as a tie along the gradient.
const TIE_EPS: f64 = 1e-6;

/// Non-maximum suppression along the local gradient direction.
///
/// The orientation comes from 3x3 Sobel differences of `p` (zero outside
/// the raster); the two neighbours along it are sampled bilinearly. A pixel
/// keeps its value when it is not exceeded by either neighbour, so flat
/// ridges (equal values along the gradient) survive. Pixels with a zero
/// gradient are kept.
pub fn nms_thin(p: &ProbabilityMap) -> ProbabilityMap {
    let (w, h) = p.dims();
    let mut out = ProbabilityMap::zeros(w, h);
    let at = |x: i64, y: i64| f64::from(p.get_or_zero(x, y));
    for y in 0..h as i64 {
        for x in 0..w as i64 {
            let v = at(x, y);
            if v <= 0.0 {
                continue;
            }
            let gx = (at(x + 1, y - 1) + 2.0 * at(x + 1, y) + at(x + 1, y + 1))
                - (at(x - 1, y - 1) + 2.0 * at(x - 1, y) + at(x - 1, y + 1));
            let gy = (at(x - 1, y + 1) + 2.0 * at(x, y + 1) + at(x + 1, y + 1))
                - (at(x - 1, y - 1) + 2.0 * at(x, y - 1) + at(x + 1, y - 1));
            let mag = gx.hypot(gy);
            let keep = if mag < 1e-12 {
                true
            } else {
                let (dx, dy) = (gx / mag, gy / mag);
                let ahead = bilinear(p, x as f64 + dx, y as f64 + dy);
                let behind = bilinear(p, x as f64 - dx, y as f64 - dy);
                v + TIE_EPS >= ahead && v + TIE_EPS >= behind
            };
            if keep {
                out.set(x as usize, y as usize, v as f32);
            }
        }
    }
    out
}

fn bilinear(p: &ProbabilityMap, x: f64, y: f64) -> f64 {
    let x0 = x.floor();
    let y0 = y.floor();
    let fx = x - x0;
    let fy = y - y0;
    let (xi, yi) = (x0 as i64, y0 as i64);
    let v = |dx: i64, dy: i64| f64::from(p.get_or_zero(xi + dx, yi + dy));
    let top = v(0, 0) * (1.0 - fx) + v(1, 0) * fx;
    let bottom = v(0, 1) * (1.0 - fx) + v(1, 1) * fx;
    top * (1.0 - fy) + bottom * fy
}
