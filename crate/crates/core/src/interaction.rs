//! FN/FP residual extraction, segment selection, scribble simulation and
//! scribble-guided refinement.

use std::collections::BTreeSet;

use image::RgbImage;
use imageproc::drawing::BresenhamLineIter;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::unmatched_pixels;
use crate::raster::{
    dilate_disk, morph_thin, nms_thin, proximity_mask, trace_segments, BinaryMap, BoundarySegment,
    Pixel, ProbabilityMap, ThresholdConfig, ThresholdMode,
};

pub const DEFAULT_DISK_RADIUS: u32 = 12;
pub const DEFAULT_MIN_SEGMENT_LENGTH: usize = 30;
pub const ABLATION_MAX_SEGMENTS: usize = 12;

/// Hysteresis thresholds on the gradient magnitude of 8-bit luminance.
pub const CANNY_LOW: f32 = 20.0;
pub const CANNY_HIGH: f32 = 50.0;

/// The two-channel scribble raster.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FnFpMap {
    pub fn_channel: BinaryMap,
    pub fp_channel: BinaryMap,
}

impl FnFpMap {
    pub fn empty(width: usize, height: usize) -> Self {
        Self {
            fn_channel: BinaryMap::new(width, height),
            fp_channel: BinaryMap::new(width, height),
        }
    }

    pub fn new(fn_channel: BinaryMap, fp_channel: BinaryMap) -> Result<Self> {
        fn_channel.same_dims(fp_channel.dims())?;
        Ok(Self { fn_channel, fp_channel })
    }

    pub fn dims(&self) -> (usize, usize) {
        self.fn_channel.dims()
    }

    pub fn is_empty(&self) -> bool {
        self.fn_channel.is_empty() && self.fp_channel.is_empty()
    }

    pub fn covered(&self, x: usize, y: usize) -> bool {
        self.fn_channel.get(x, y) || self.fp_channel.get(x, y)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScribbleConfig {
    pub disk_radius: u32,
    /// Chebyshev bound on the per-pixel position jitter.
    pub max_position_perturbation: u32,
    /// Maximum endpoint extension or trim, as a fraction of segment length.
    pub length_perturbation_fraction: f64,
    pub rng_seed: u64,
}

impl Default for ScribbleConfig {
    fn default() -> Self {
        Self {
            disk_radius: DEFAULT_DISK_RADIUS,
            max_position_perturbation: 3,
            length_perturbation_fraction: 0.2,
            rng_seed: 0,
        }
    }
}

impl ScribbleConfig {
    /// Scribbles that trace their segments exactly.
    pub fn exact(disk_radius: u32) -> Self {
        Self {
            disk_radius,
            max_position_perturbation: 0,
            length_perturbation_fraction: 0.0,
            rng_seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.length_perturbation_fraction) {
            return Err(Error::InvalidValue(format!(
                "length perturbation fraction must be in [0, 1], got {}",
                self.length_perturbation_fraction
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SelectionConfig {
    /// Segments must be strictly longer than this.
    pub min_segment_length: usize,
    pub max_segments: Option<usize>,
}

impl Default for SelectionConfig {
    fn default() -> Self {
        Self {
            min_segment_length: DEFAULT_MIN_SEGMENT_LENGTH,
            max_segments: None,
        }
    }
}

impl SelectionConfig {
    pub fn ablation() -> Self {
        Self {
            max_segments: Some(ABLATION_MAX_SEGMENTS),
            ..Self::default()
        }
    }

    /// A minimum of 0 selects every segment.
    pub fn all() -> Self {
        Self {
            min_segment_length: 0,
            max_segments: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.max_segments == Some(0) {
            return Err(Error::InvalidValue("maximum segment count must be >= 1".into()));
        }
        Ok(())
    }
}

fn and_not(a: &BinaryMap, b: &BinaryMap) -> BinaryMap {
    let data = a.data().iter().zip(b.data()).map(|(&x, &y)| x && !y).collect();
    BinaryMap::from_vec(a.width(), a.height(), data).expect("same dimensions")
}

/// GT pixels (FN) and predicted pixels (FP) left unmatched by the
/// one-to-one boundary matching at `d_max`, traced into segments.
pub fn extract_residual_segments(
    pred: &BinaryMap,
    gt: &BinaryMap,
    d_max: f64,
    exact: bool,
) -> Result<(Vec<BoundarySegment>, Vec<BoundarySegment>)> {
    let (fn_map, fp_map) = unmatched_pixels(pred, gt, d_max, exact)?;
    Ok((trace_segments(&fn_map)?, trace_segments(&fp_map)?))
}

/// Canny edges of the image's luminance lying farther than `tolerance` from
/// every GT pixel.
pub fn stage1_fp_source(rgb: &RgbImage, gt: &BinaryMap, tolerance: f64) -> Result<Vec<BoundarySegment>> {
    gt.same_dims((rgb.width() as usize, rgb.height() as usize))?;
    let gray = image::imageops::grayscale(rgb);
    let edges = imageproc::edges::canny(&gray, CANNY_LOW, CANNY_HIGH);
    let data = edges.pixels().map(|p| p.0[0] > 0).collect();
    let edges = morph_thin(&BinaryMap::from_vec(gt.width(), gt.height(), data)?);
    trace_segments(&and_not(&edges, &proximity_mask(gt, tolerance)))
}

/// Random GT segments, each kept independently with probability `fraction`.
pub fn stage1_fn_source<R: Rng + ?Sized>(gt: &BinaryMap, fraction: f64, rng: &mut R) -> Result<Vec<BoundarySegment>> {
    if !(0.0..=1.0).contains(&fraction) {
        return Err(Error::InvalidValue(format!("fraction must be in [0, 1], got {fraction}")));
    }
    Ok(trace_segments(gt)?
        .into_iter()
        .filter(|_| rng.random_bool(fraction))
        .collect())
}

/// Segments strictly longer than the minimum, longest first (ties by first
/// pixel in row-major order), truncated to the maximum count.
pub fn select_segments(segs: &[BoundarySegment], cfg: &SelectionConfig) -> Vec<BoundarySegment> {
    let mut out: Vec<BoundarySegment> = segs
        .iter()
        .filter(|s| s.len() > cfg.min_segment_length)
        .cloned()
        .collect();
    out.sort_by(|a, b| b.len().cmp(&a.len()).then(a.first().cmp(&b.first())));
    if let Some(max) = cfg.max_segments {
        out.truncate(max);
    }
    out
}

/// Unit tangent at one end of a point list, pointing outward.
fn end_tangent(points: &[Pixel], at_end: bool) -> Option<(f64, f64)> {
    if points.len() < 2 {
        return None;
    }
    let reach = (points.len() - 1).min(3);
    let (tip, inner) = if at_end {
        (points[points.len() - 1], points[points.len() - 1 - reach])
    } else {
        (points[0], points[reach])
    };
    let (dx, dy) = (f64::from(tip.x - inner.x), f64::from(tip.y - inner.y));
    let n = dx.hypot(dy);
    (n > 0.0).then(|| (dx / n, dy / n))
}

fn extension<R: Rng + ?Sized>(
    points: &[Pixel],
    at_end: bool,
    tangent: Option<(f64, f64)>,
    steps: usize,
    rng: &mut R,
) -> Vec<Pixel> {
    let tip = if at_end { points[points.len() - 1] } else { points[0] };
    let (dx, dy) = tangent.unwrap_or_else(|| {
        let angle = rng.random_range(0.0..std::f64::consts::TAU);
        (angle.cos(), angle.sin())
    });
    let mut out = Vec::with_capacity(steps);
    for t in 1..=steps {
        let p = Pixel::new(
            tip.x + (t as f64 * dx).round() as i32,
            tip.y + (t as f64 * dy).round() as i32,
        );
        if out.last() != Some(&p) && p != tip {
            out.push(p);
        }
    }
    out
}

/// Randomly lengthens or shortens both ends of the segment, then jitters
/// every pixel independently. Pixels off the canvas are dropped.
pub fn perturb_segment<R: Rng + ?Sized>(
    seg: &BoundarySegment,
    cfg: &ScribbleConfig,
    canvas: (usize, usize),
    rng: &mut R,
) -> BTreeSet<Pixel> {
    let len = seg.len();
    let k = (cfg.length_perturbation_fraction * len as f64).ceil() as i64;
    let mut points: Vec<Pixel> = seg.points().to_vec();
    let tangents = [end_tangent(&points, false), end_tangent(&points, true)];
    for (at_end, tangent) in [false, true].into_iter().zip(tangents) {
        let delta = rng.random_range(-k..=k);
        if delta > 0 {
            let ext = extension(&points, at_end, tangent, delta as usize, rng);
            if at_end {
                points.extend(ext);
            } else {
                points.splice(0..0, ext.into_iter().rev());
            }
        } else if delta < 0 {
            let trim = (delta.unsigned_abs() as usize).min(points.len() - 1);
            if at_end {
                points.truncate(points.len() - trim);
            } else {
                points.drain(..trim);
            }
        }
    }
    let m = cfg.max_position_perturbation as i32;
    let (w, h) = (canvas.0 as i32, canvas.1 as i32);
    points
        .into_iter()
        .map(|p| Pixel::new(p.x + rng.random_range(-m..=m), p.y + rng.random_range(-m..=m)))
        .filter(|p| (0..w).contains(&p.x) && (0..h).contains(&p.y))
        .collect()
}

/// Perturbs every segment (FN first, then FP, in list order) with a
/// generator seeded from `cfg.rng_seed`, and dilates each channel by the disk.
pub fn simulate_scribbles(
    fn_segs: &[BoundarySegment],
    fp_segs: &[BoundarySegment],
    cfg: &ScribbleConfig,
    canvas: (usize, usize),
) -> FnFpMap {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.rng_seed);
    let mut channel = |segs: &[BoundarySegment]| {
        let points: BTreeSet<Pixel> = segs
            .iter()
            .flat_map(|s| perturb_segment(s, cfg, canvas, &mut rng))
            .collect();
        dilate_disk(&points, cfg.disk_radius, canvas.0, canvas.1)
    };
    let fn_channel = channel(fn_segs);
    let fp_channel = channel(fp_segs);
    FnFpMap { fn_channel, fp_channel }
}

/// Scribble-guided update of the previous output.
///
/// Outside both channels the previous value is kept. Inside the FP channel
/// only, the output is 0; inside the FN channel only, it is the maximum of
/// the previous and candidate values; where both channels overlap the
/// candidate value is taken.
pub fn refine(prev: &ProbabilityMap, candidate: &ProbabilityMap, fnfp: &FnFpMap) -> Result<ProbabilityMap> {
    prev.same_dims(candidate.dims())?;
    prev.same_dims(fnfp.dims())?;
    let (w, h) = prev.dims();
    let mut out = prev.clone();
    for y in 0..h {
        for x in 0..w {
            let value = match (fnfp.fn_channel.get(x, y), fnfp.fp_channel.get(x, y)) {
                (false, false) => continue,
                (true, false) => prev.get(x, y).max(candidate.get(x, y)),
                (false, true) => 0.0,
                (true, true) => candidate.get(x, y),
            };
            out.set(x, y, value);
        }
    }
    Ok(out)
}

/// NMS, thresholding and thinning of a raw prediction. In binary mode the
/// result holds 0/1; in non-binary mode surviving pixels keep their value.
pub fn postprocess(map: &ProbabilityMap, cfg: &ThresholdConfig) -> ProbabilityMap {
    let thin = nms_thin(map);
    let mask = morph_thin(&thin.threshold_binary(cfg.threshold));
    match cfg.mode {
        ThresholdMode::Binary => ProbabilityMap::from_binary(&mask),
        ThresholdMode::NonBinary => {
            let data = thin
                .data()
                .iter()
                .zip(mask.data())
                .map(|(&v, &on)| if on { v } else { 0.0 })
                .collect();
            ProbabilityMap::from_vec(map.width(), map.height(), data).expect("values come from a valid map")
        }
    }
}

/// Thin boundary mask of a post-processed output.
pub fn boundary_mask(output: &ProbabilityMap, cfg: &ThresholdConfig) -> BinaryMap {
    morph_thin(&output.threshold_binary(cfg.threshold))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Channel {
    Fn,
    Fp,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Stroke {
    pub channel: Channel,
    pub points: Vec<[i32; 2]>,
    pub radius: u32,
}

/// Scribble document: `{"strokes": [{"channel": "fn", "points": [[x, y], ...], "radius": 12}]}`.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScribbleDocument {
    pub strokes: Vec<Stroke>,
}

impl ScribbleDocument {
    pub fn parse(text: &str) -> std::result::Result<Self, String> {
        let doc: Self = serde_json::from_str(text).map_err(|e| e.to_string())?;
        if let Some(i) = doc.strokes.iter().position(|s| s.points.is_empty()) {
            return Err(format!("stroke {i} has no points"));
        }
        Ok(doc)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("document serializes")
    }

    /// Each stroke's polyline pixels dilated by its radius, clipped to the canvas.
    pub fn rasterize(&self, width: usize, height: usize) -> FnFpMap {
        let mut out = FnFpMap::empty(width, height);
        for stroke in &self.strokes {
            let pixels = polyline_pixels(&stroke.points);
            let disk = dilate_disk(&pixels, stroke.radius, width, height);
            let target = match stroke.channel {
                Channel::Fn => &mut out.fn_channel,
                Channel::Fp => &mut out.fp_channel,
            };
            *target = target.union(&disk).expect("same canvas");
        }
        out
    }
}

/// Bresenham pixels of a polyline, in order without consecutive repeats.
pub fn polyline_pixels(points: &[[i32; 2]]) -> Vec<Pixel> {
    let mut out: Vec<Pixel> = Vec::new();
    let mut push = |p: Pixel| {
        if out.last() != Some(&p) {
            out.push(p);
        }
    };
    if let [[x, y]] = points {
        push(Pixel::new(*x, *y));
    }
    for w in points.windows(2) {
        let start = (w[0][0] as f32, w[0][1] as f32);
        let end = (w[1][0] as f32, w[1][1] as f32);
        let mut line: Vec<(i32, i32)> = BresenhamLineIter::new(start, end).collect();
        if line.first() != Some(&(w[0][0], w[0][1])) {
            line.reverse();
        }
        for (x, y) in line {
            push(Pixel::new(x, y));
        }
        push(Pixel::new(w[1][0], w[1][1]));
    }
    out
}

/// Strokes reproducing a set of segments exactly (one stroke per segment).
pub fn strokes_for_segments(segs: &[BoundarySegment], channel: Channel, radius: u32) -> Vec<Stroke> {
    segs.iter()
        .map(|s| Stroke {
            channel,
            points: s.points().iter().map(|p| [p.x, p.y]).collect(),
            radius,
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::{prop_assert, prop_assert_eq, proptest};

    fn hline(y: i32, xs: std::ops::Range<i32>) -> BoundarySegment {
        BoundarySegment::new(xs.map(|x| Pixel::new(x, y)).collect()).unwrap()
    }

    fn map_of(w: usize, h: usize, segs: &[BoundarySegment]) -> BinaryMap {
        BinaryMap::from_pixels(w, h, segs.iter().flat_map(|s| s.points().iter().copied()))
    }

    #[test]
    fn defaults() {
        let s = ScribbleConfig::default();
        assert_eq!(s.disk_radius, 12);
        assert_eq!(s.max_position_perturbation, 3);
        assert_eq!(s.length_perturbation_fraction, 0.2);
        let sel = SelectionConfig::default();
        assert_eq!(sel.min_segment_length, 30);
        assert_eq!(sel.max_segments, None);
        assert_eq!(SelectionConfig::ablation().max_segments, Some(12));
    }

    #[test]
    fn residuals() {
        let gt = map_of(60, 20, &[hline(10, 10..50)]);
        let (f, p) = extract_residual_segments(&gt, &gt, 2.0, false).unwrap();
        assert!(f.is_empty() && p.is_empty());

        let (f, p) = extract_residual_segments(&BinaryMap::new(60, 20), &gt, 2.0, false).unwrap();
        assert_eq!(f.len(), 1);
        assert_eq!(f[0].len(), 40);
        assert!(p.is_empty());

        let shifted = map_of(60, 20, &[hline(11, 10..50)]);
        let (f, p) = extract_residual_segments(&shifted, &gt, 2.0, false).unwrap();
        assert!(f.is_empty() && p.is_empty());
        let (f, p) = extract_residual_segments(&shifted, &gt, 0.5, false).unwrap();
        assert_eq!((f.len(), p.len()), (1, 1));

        assert!(matches!(
            extract_residual_segments(&BinaryMap::new(5, 5), &gt, 1.0, false),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    fn step_image(w: u32, h: u32, edges: &[u32]) -> RgbImage {
        RgbImage::from_fn(w, h, |x, _| {
            let level = edges.iter().filter(|&&e| x >= e).count() as u8;
            image::Rgb([40 + 80 * level; 3])
        })
    }

    #[test]
    fn fp_source_uniform_and_on_gt() {
        let gt = map_of(64, 64, &[BoundarySegment::new((0..64).map(|y| Pixel::new(32, y)).collect()).unwrap()]);
        let uniform = RgbImage::from_pixel(64, 64, image::Rgb([90, 90, 90]));
        assert!(stage1_fp_source(&uniform, &gt, 2.0).unwrap().is_empty());
        assert!(stage1_fp_source(&step_image(64, 64, &[32]), &gt, 2.0).unwrap().is_empty());
    }

    #[test]
    fn fp_source_off_gt_edge_only() {
        let gt = map_of(64, 64, &[BoundarySegment::new((0..64).map(|y| Pixel::new(20, y)).collect()).unwrap()]);
        let segs = stage1_fp_source(&step_image(64, 64, &[20, 44]), &gt, 2.0).unwrap();
        assert!(!segs.is_empty());
        for p in segs.iter().flat_map(|s| s.points()) {
            assert!((42..=45).contains(&p.x), "{p:?}");
        }
        let total: usize = segs.iter().map(BoundarySegment::len).sum();
        assert!(total >= 60);
    }

    #[test]
    fn fn_source_fraction_extremes_and_determinism() {
        let segs: Vec<_> = (0..10).map(|i| hline(2 + 3 * i, 1..20)).collect();
        let gt = map_of(24, 34, &segs);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert!(stage1_fn_source(&gt, 0.0, &mut rng).unwrap().is_empty());
        assert_eq!(stage1_fn_source(&gt, 1.0, &mut rng).unwrap().len(), 10);
        let a = stage1_fn_source(&gt, 0.5, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        let b = stage1_fn_source(&gt, 0.5, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn selection() {
        let segs = vec![hline(0, 0..10), hline(1, 0..31), hline(2, 0..50)];
        let out = select_segments(&segs, &SelectionConfig::default());
        assert_eq!(out.iter().map(|s| s.len()).collect::<Vec<_>>(), vec![50, 31]);

        let exactly_30 = vec![hline(0, 0..30)];
        assert!(select_segments(&exactly_30, &SelectionConfig::default()).is_empty());

        let many: Vec<_> = (0..20).map(|i| hline(i, 0..(31 + i))).collect();
        let out = select_segments(&many, &SelectionConfig::ablation());
        assert_eq!(out.len(), 12);
        assert_eq!(out[0].len(), 50);
        assert_eq!(out[11].len(), 39);

        let ties = vec![hline(5, 0..40), hline(2, 0..40)];
        let out = select_segments(&ties, &SelectionConfig::default());
        assert_eq!(out[0].first(), Pixel::new(0, 2));
        assert!(select_segments(&[], &SelectionConfig::default()).is_empty());
    }

    #[test]
    fn perturb_identity_configuration() {
        let seg = hline(5, 3..20);
        let cfg = ScribbleConfig::exact(12);
        let out = perturb_segment(&seg, &cfg, (32, 32), &mut ChaCha8Rng::seed_from_u64(0));
        assert_eq!(out, seg.points().iter().copied().collect());
    }

    #[test]
    fn thirteen_pixel_scribble() {
        let seg = BoundarySegment::new(vec![Pixel::new(10, 10)]).unwrap();
        let out = simulate_scribbles(&[seg], &[], &ScribbleConfig::exact(2), (21, 21));
        assert_eq!(out.fn_channel.count_ones(), 13);
        assert!(out.fp_channel.is_empty());
        let empty = simulate_scribbles(&[], &[], &ScribbleConfig::default(), (21, 21));
        assert!(empty.is_empty());
    }

    proptest! {
        #[test]
        fn perturbation_bounded(seed in 0u64..500, m in 0u32..5, f in 0.0f64..1.0, len in 2i32..40) {
            let seg = hline(30, 10..10 + len);
            let cfg = ScribbleConfig { disk_radius: 0, max_position_perturbation: m, length_perturbation_fraction: f, rng_seed: seed };
            let out = perturb_segment(&seg, &cfg, (80, 60), &mut ChaCha8Rng::seed_from_u64(seed));
            let k = (f * len as f64).ceil() as i32;
            // Extended source pixels lie on row 30 within k pixels of the segment.
            for p in &out {
                prop_assert!((p.y - 30).abs() <= m as i32);
                prop_assert!(p.x >= 10 - k - m as i32 && p.x <= 10 + len - 1 + k + m as i32);
            }
            let again = perturb_segment(&seg, &cfg, (80, 60), &mut ChaCha8Rng::seed_from_u64(seed));
            prop_assert_eq!(out, again);
        }

        #[test]
        fn simulate_dilation_bound(seed in 0u64..200, r in 0u32..6) {
            let segs = vec![hline(20, 5..25), hline(40, 30..60)];
            let cfg = ScribbleConfig { disk_radius: r, rng_seed: seed, ..ScribbleConfig::default() };
            let a = simulate_scribbles(&segs, &segs[..1], &cfg, (64, 64));
            prop_assert_eq!(&a, &simulate_scribbles(&segs, &segs[..1], &cfg, (64, 64)));
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let sources: usize = segs.iter().map(|s| perturb_segment(s, &cfg, (64, 64), &mut rng).len()).sum();
            prop_assert!(a.fn_channel.count_ones() <= sources * ((2 * r + 1) * (2 * r + 1)) as usize);
        }

        #[test]
        fn refine_is_local(seed in 0u64..200) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut gen = |d: f64| {
                let data = (0..400).map(|_| if rng.random_bool(d) { rng.random::<f32>() } else { 0.0 }).collect();
                ProbabilityMap::from_vec(20, 20, data).unwrap()
            };
            let prev = gen(0.3);
            let cand = gen(0.3);
            let mut rng = ChaCha8Rng::seed_from_u64(seed + 1);
            let fnfp = FnFpMap::new(
                BinaryMap::from_vec(20, 20, (0..400).map(|_| rng.random_bool(0.2)).collect()).unwrap(),
                BinaryMap::from_vec(20, 20, (0..400).map(|_| rng.random_bool(0.2)).collect()).unwrap(),
            ).unwrap();
            let out = refine(&prev, &cand, &fnfp).unwrap();
            for y in 0..20 {
                for x in 0..20 {
                    if !fnfp.covered(x, y) {
                        prop_assert_eq!(out.get(x, y).to_bits(), prev.get(x, y).to_bits());
                    }
                }
            }
        }
    }

    #[test]
    fn refine_examples() {
        let cfg = ThresholdConfig::default();
        let prev_line = map_of(40, 40, &[hline(10, 5..35)]);
        let prev = ProbabilityMap::from_binary(&prev_line);
        assert_eq!(refine(&prev, &prev, &FnFpMap::empty(40, 40)).unwrap(), prev);

        // FP scribble over everything predicted.
        let fp = dilate_disk(&prev_line.on_pixels(), 2, 40, 40);
        let out = refine(&prev, &ProbabilityMap::zeros(40, 40), &FnFpMap::new(BinaryMap::new(40, 40), fp).unwrap())
            .unwrap();
        assert!(boundary_mask(&postprocess(&out, &cfg), &cfg).is_empty());

        // FN scribble over half of a candidate ridge at row 25.
        let cand = ProbabilityMap::from_binary(&map_of(40, 40, &[hline(25, 5..35)]));
        let scribble = dilate_disk(&hline(25, 5..15).points().to_vec(), 3, 40, 40);
        let out = refine(&prev, &cand, &FnFpMap::new(scribble.clone(), BinaryMap::new(40, 40)).unwrap()).unwrap();
        let mask = boundary_mask(&postprocess(&out, &cfg), &cfg);
        for x in 0..40 {
            assert_eq!(mask.get(x, 25), scribble.get(x, 25) && (5..35).contains(&x), "column {x}");
        }
        assert!(mask.get(20, 10));
    }

    #[test]
    fn oracle_monotonicity_with_exact_scribbles() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let cfg = ThresholdConfig::default();
        for _ in 0..50 {
            let (ya, yb) = (rng.random_range(5..30), rng.random_range(34..60));
            let gt = map_of(64, 64, &[hline(ya, 2..62), hline(yb, 10..40)]);
            let cut = rng.random_range(2..40);
            let kept = map_of(64, 64, &[hline(ya, cut..62), hline(yb, 10..40)]);
            let spurious = map_of(64, 64, &[hline(rng.random_range(0..64), rng.random_range(0..30)..rng.random_range(31..64))]);
            let pred = morph_thin(&kept.union(&spurious).unwrap());
            let f = |m: &BinaryMap| crate::metrics::match_boundaries(m, &gt, 0.0, true).unwrap().f_measure();
            let before = f(&pred);
            let (fns, fps) = extract_residual_segments(&pred, &gt, 0.0, false).unwrap();
            let fnfp = simulate_scribbles(&fns, &fps, &ScribbleConfig::exact(0), (64, 64));
            let out = refine(&ProbabilityMap::from_binary(&pred), &ProbabilityMap::from_binary(&gt), &fnfp).unwrap();
            let after = f(&boundary_mask(&postprocess(&out, &cfg), &cfg));
            assert!(after >= before);
            assert_eq!(after, 1.0);
        }
    }

    #[test]
    fn scribble_document_round_trip() {
        let text = r#"{"strokes":[{"channel":"fn","points":[[2,3],[10,3]],"radius":1},{"channel":"fp","points":[[5,5]],"radius":0}]}"#;
        let doc = ScribbleDocument::parse(text).unwrap();
        assert_eq!(doc.to_json(), text);
        let map = doc.rasterize(16, 16);
        let expected = dilate_disk(&(2..=10).map(|x| Pixel::new(x, 3)).collect::<Vec<_>>(), 1, 16, 16);
        assert_eq!(map.fn_channel, expected);
        assert_eq!(map.fp_channel.on_pixels(), vec![Pixel::new(5, 5)]);
        assert!(ScribbleDocument::parse(r#"{"strokes":[{"channel":"xx","points":[[1,1]],"radius":1}]}"#).is_err());
        assert!(ScribbleDocument::parse(r#"{"strokes":[{"channel":"fn","points":[],"radius":1}]}"#).is_err());
    }

    #[test]
    fn polyline_is_connected() {
        let px = polyline_pixels(&[[0, 0], [7, 3], [7, -4], [-2, -4]]);
        assert!(px.windows(2).all(|w| w[0].is_8_adjacent(w[1])));
        assert_eq!(px[0], Pixel::new(0, 0));
        assert_eq!(*px.last().unwrap(), Pixel::new(-2, -4));
    }

    #[test]
    fn segment_strokes_rasterize_like_simulation() {
        let segs = vec![hline(8, 3..20), BoundarySegment::new((3..15).map(|i| Pixel::new(i, i + 10)).collect()).unwrap()];
        let doc = ScribbleDocument {
            strokes: strokes_for_segments(&segs, Channel::Fn, 4),
        };
        let sim = simulate_scribbles(&segs, &[], &ScribbleConfig::exact(4), (40, 40));
        assert_eq!(doc.rasterize(40, 40), sim);
    }
}
