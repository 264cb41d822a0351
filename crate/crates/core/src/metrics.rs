//! Boundary evaluation: tolerance-based pixel correspondence, PR curves,
//! ODS / OIS / AP, and the scribble-area ratios avgFN / avgFP.

use std::collections::VecDeque;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::raster::{find_block, morph_thin, BinaryMap, BoundarySegment, Pixel, ProbabilityMap};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MatchConfig {
    /// Matching tolerance as a fraction of the image diagonal.
    pub d_max_fraction: f64,
    /// Number of thresholds, placed at `i / (n + 1)` for `i = 1..=n`.
    pub thresholds: usize,
    /// Use the exact maximum-cardinality solver instead of greedy matching.
    #[serde(default)]
    pub exact: bool,
}

impl Default for MatchConfig {
    fn default() -> Self {
        Self {
            d_max_fraction: 0.0075,
            thresholds: 99,
            exact: false,
        }
    }
}

impl MatchConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.d_max_fraction > 0.0) || !self.d_max_fraction.is_finite() {
            return Err(Error::InvalidValue(format!(
                "max distance fraction must be positive, got {}",
                self.d_max_fraction
            )));
        }
        if self.thresholds == 0 {
            return Err(Error::InvalidValue("at least one threshold is required".into()));
        }
        Ok(())
    }

    /// Pixel tolerance for a `width x height` image.
    pub fn d_max(&self, width: usize, height: usize) -> f64 {
        self.d_max_fraction * ((width * width + height * height) as f64).sqrt()
    }

    pub fn threshold_levels(&self) -> Vec<f32> {
        let n = self.thresholds;
        (1..=n).map(|i| (i as f64 / (n + 1) as f64) as f32).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct MatchCounts {
    pub tp: usize,
    pub fp_count: usize,
    pub fn_count: usize,
}

impl MatchCounts {
    /// Precision, 1 for an empty prediction.
    pub fn precision(&self) -> f64 {
        ratio_or_one(self.tp, self.tp + self.fp_count)
    }

    /// Recall, 1 for an empty ground truth.
    pub fn recall(&self) -> f64 {
        ratio_or_one(self.tp, self.tp + self.fn_count)
    }

    pub fn f_measure(&self) -> f64 {
        let (p, r) = (self.precision(), self.recall());
        if p + r == 0.0 {
            0.0
        } else {
            2.0 * p * r / (p + r)
        }
    }
}

impl std::ops::Add for MatchCounts {
    type Output = Self;
    fn add(self, o: Self) -> Self {
        Self {
            tp: self.tp + o.tp,
            fp_count: self.fp_count + o.fp_count,
            fn_count: self.fn_count + o.fn_count,
        }
    }
}

fn ratio_or_one(num: usize, den: usize) -> f64 {
    if den == 0 {
        1.0
    } else {
        num as f64 / den as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PrPoint {
    pub threshold: f32,
    pub tp: usize,
    pub fp_count: usize,
    pub fn_count: usize,
    pub precision: f64,
    pub recall: f64,
}

impl PrPoint {
    pub fn new(threshold: f32, counts: MatchCounts) -> Self {
        Self {
            threshold,
            tp: counts.tp,
            fp_count: counts.fp_count,
            fn_count: counts.fn_count,
            precision: counts.precision(),
            recall: counts.recall(),
        }
    }

    pub fn counts(&self) -> MatchCounts {
        MatchCounts {
            tp: self.tp,
            fp_count: self.fp_count,
            fn_count: self.fn_count,
        }
    }
}

fn check_thin(map: &BinaryMap) -> Result<()> {
    match find_block(map) {
        Some((x, y)) => Err(Error::NotThin { x, y }),
        None => Ok(()),
    }
}

/// Lattice offsets within `d_max`, nearest first.
fn sorted_offsets(d_max: f64) -> Vec<(i32, i32)> {
    let r = d_max.max(0.0).floor() as i32;
    let limit = d_max * d_max;
    let mut out: Vec<(i32, i32)> = (-r..=r)
        .flat_map(|dy| (-r..=r).map(move |dx| (dx, dy)))
        .filter(|&(dx, dy)| f64::from(dx * dx + dy * dy) <= limit)
        .collect();
    out.sort_by_key(|&(dx, dy)| (dx * dx + dy * dy, dy, dx));
    out
}

/// Bipartite candidate graph between predicted and GT pixels.
struct Candidates {
    pred: Vec<Pixel>,
    gt: Vec<Pixel>,
    gt_count: usize,
    /// (offset rank, GT index) of each predicted pixel's neighbours, nearest first.
    adj: Vec<Vec<(u32, usize)>>,
}

impl Candidates {
    fn build(pred: &BinaryMap, gt: &BinaryMap, d_max: f64) -> Self {
        let (w, _) = gt.dims();
        let mut gt_index = vec![usize::MAX; gt.data().len()];
        let gt_pixels = gt.on_pixels();
        for (i, p) in gt_pixels.iter().enumerate() {
            gt_index[p.y as usize * w + p.x as usize] = i;
        }
        let offsets = sorted_offsets(d_max);
        let pred_pixels = pred.on_pixels();
        let adj = pred_pixels
            .iter()
            .map(|p| {
                offsets
                    .iter()
                    .enumerate()
                    .map(|(rank, (dx, dy))| (rank as u32, Pixel::new(p.x + dx, p.y + dy)))
                    .filter(|&(_, q)| gt.at(q))
                    .map(|(rank, q)| (rank, gt_index[q.y as usize * w + q.x as usize]))
                    .collect()
            })
            .collect();
        Self {
            pred: pred_pixels,
            gt_count: gt_pixels.len(),
            gt: gt_pixels,
            adj,
        }
    }
}

const NONE: usize = usize::MAX;

/// Partner of every predicted pixel and of every GT pixel, `NONE` if free.
struct Matching {
    pred_match: Vec<usize>,
    gt_match: Vec<usize>,
}

impl Matching {
    fn size(&self) -> usize {
        self.gt_match.iter().filter(|&&m| m != NONE).count()
    }
}

/// Nearest-first greedy assignment followed by short augmenting paths.
fn greedy_matching(c: &Candidates) -> Matching {
    let mut pred_match = vec![NONE; c.pred.len()];
    let mut gt_match = vec![NONE; c.gt_count];
    // Distance buckets: all candidate pairs in order of offset rank.
    let mut pairs: Vec<(u32, usize, usize)> = c
        .adj
        .iter()
        .enumerate()
        .flat_map(|(i, nbrs)| nbrs.iter().map(move |&(rank, g)| (rank, i, g)))
        .collect();
    pairs.sort_unstable();
    for (_, i, g) in pairs {
        if pred_match[i] == NONE && gt_match[g] == NONE {
            pred_match[i] = g;
            gt_match[g] = i;
        }
    }
    const MAX_LAYERS: usize = 16;
    let mut stamp = vec![0usize; c.gt_count];
    let mut parent = vec![NONE; c.gt_count];
    let mut visit = 0;
    for i in 0..c.pred.len() {
        if pred_match[i] == NONE {
            visit += 1;
            augment_bfs(c, i, MAX_LAYERS, &mut pred_match, &mut gt_match, &mut stamp, &mut parent, visit);
        }
    }
    Matching { pred_match, gt_match }
}

/// Shortest alternating path from the free predicted pixel `start` to a free
/// GT pixel, explored breadth-first for at most `max_layers` layers.
#[allow(clippy::too_many_arguments)]
fn augment_bfs(
    c: &Candidates,
    start: usize,
    max_layers: usize,
    pred_match: &mut [usize],
    gt_match: &mut [usize],
    stamp: &mut [usize],
    parent: &mut [usize],
    visit: usize,
) -> bool {
    let mut layer = vec![start];
    for _ in 0..max_layers {
        let mut next = Vec::new();
        for &i in &layer {
            for &(_, g) in &c.adj[i] {
                if stamp[g] == visit {
                    continue;
                }
                stamp[g] = visit;
                parent[g] = i;
                let owner = gt_match[g];
                if owner == NONE {
                    let mut g = g;
                    loop {
                        let p = parent[g];
                        let previous = pred_match[p];
                        pred_match[p] = g;
                        gt_match[g] = p;
                        if p == start {
                            return true;
                        }
                        g = previous;
                    }
                }
                next.push(owner);
            }
        }
        if next.is_empty() {
            break;
        }
        layer = next;
    }
    false
}

/// Hopcroft-Karp maximum-cardinality matching.
fn exact_matching(c: &Candidates) -> Matching {
    let n = c.pred.len();
    let mut pred_match = vec![NONE; n];
    let mut gt_match = vec![NONE; c.gt_count];
    let mut dist = vec![usize::MAX; n];
    loop {
        // Layer the graph from free predicted pixels.
        let mut queue = VecDeque::new();
        for i in 0..n {
            if pred_match[i] == NONE {
                dist[i] = 0;
                queue.push_back(i);
            } else {
                dist[i] = usize::MAX;
            }
        }
        let mut found = false;
        while let Some(i) = queue.pop_front() {
            for &(_, g) in &c.adj[i] {
                let owner = gt_match[g];
                if owner == NONE {
                    found = true;
                } else if dist[owner] == usize::MAX {
                    dist[owner] = dist[i] + 1;
                    queue.push_back(owner);
                }
            }
        }
        if !found {
            return Matching { pred_match, gt_match };
        }
        let mut next_edge = vec![0usize; n];
        for i in 0..n {
            if pred_match[i] == NONE {
                layered_augment(c, i, &mut dist, &mut next_edge, &mut pred_match, &mut gt_match);
            }
        }
    }
}

fn layered_augment(
    c: &Candidates,
    start: usize,
    dist: &mut [usize],
    next_edge: &mut [usize],
    pred_match: &mut [usize],
    gt_match: &mut [usize],
) -> bool {
    // Iterative DFS along the BFS layers.
    let mut stack = vec![start];
    let mut via: Vec<usize> = Vec::new();
    while let Some(&i) = stack.last() {
        if next_edge[i] >= c.adj[i].len() {
            dist[i] = usize::MAX;
            stack.pop();
            via.pop();
            continue;
        }
        let g = c.adj[i][next_edge[i]].1;
        next_edge[i] += 1;
        let owner = gt_match[g];
        if owner == NONE {
            via.push(g);
            for (&p, &q) in stack.iter().zip(&via) {
                pred_match[p] = q;
                gt_match[q] = p;
            }
            return true;
        }
        if dist[owner] == dist[i] + 1 {
            via.push(g);
            stack.push(owner);
        }
    }
    false
}

fn run_matching(c: &Candidates, exact: bool) -> Matching {
    if exact {
        exact_matching(c)
    } else {
        greedy_matching(c)
    }
}

/// GT pixels (FN) and predicted pixels (FP) left without a partner by
/// [`match_boundaries`].
pub fn unmatched_pixels(pred: &BinaryMap, gt: &BinaryMap, d_max: f64, exact: bool) -> Result<(BinaryMap, BinaryMap)> {
    pred.same_dims(gt.dims())?;
    check_thin(pred)?;
    check_thin(gt)?;
    let c = Candidates::build(pred, gt, d_max);
    let m = run_matching(&c, exact);
    let (w, h) = gt.dims();
    let free = |pixels: &[Pixel], partners: &[usize]| {
        BinaryMap::from_pixels(
            w,
            h,
            pixels.iter().zip(partners).filter(|(_, &m)| m == NONE).map(|(&p, _)| p),
        )
    };
    Ok((free(&c.gt, &m.gt_match), free(&c.pred, &m.pred_match)))
}

/// One-to-one correspondence between predicted and GT pixels within `d_max`.
/// Greedy by default; `exact` gives the maximum-cardinality matching.
pub fn match_boundaries(pred: &BinaryMap, gt: &BinaryMap, d_max: f64, exact: bool) -> Result<MatchCounts> {
    pred.same_dims(gt.dims())?;
    check_thin(pred)?;
    check_thin(gt)?;
    let c = Candidates::build(pred, gt, d_max);
    let tp = run_matching(&c, exact).size();
    Ok(MatchCounts {
        tp,
        fp_count: c.pred.len() - tp,
        fn_count: c.gt_count - tp,
    })
}

/// One PR point per threshold of `cfg`; each thresholded map is re-thinned
/// before matching.
pub fn pr_curve(prob: &ProbabilityMap, gt: &BinaryMap, cfg: &MatchConfig) -> Result<Vec<PrPoint>> {
    cfg.validate()?;
    prob.same_dims(gt.dims())?;
    check_thin(gt)?;
    let d_max = cfg.d_max(prob.width(), prob.height());
    cfg.threshold_levels()
        .into_par_iter()
        .map(|t| {
            let pred = morph_thin(&prob.threshold_binary(t));
            match_boundaries(&pred, gt, d_max, cfg.exact).map(|c| PrPoint::new(t, c))
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub ods: f64,
    pub ods_threshold: f32,
    pub ois: f64,
    pub ap: f64,
}

fn sum_counts<'a>(points: impl Iterator<Item = &'a PrPoint>) -> MatchCounts {
    points.map(PrPoint::counts).fold(MatchCounts::default(), |a, b| a + b)
}

/// Dataset scores from per-image curves on a shared threshold grid.
///
/// ODS is the best F of the counts pooled at one shared threshold. OIS lets
/// every image pick its own threshold and reports the best pooled F over
/// those choices; since a shared threshold is one such choice, OIS >= ODS.
/// AP averages interpolated precision of the pooled curve over 101 recall
/// levels.
pub fn summarize(curves: &[Vec<PrPoint>]) -> Result<Summary> {
    let Some(first) = curves.first() else {
        return Err(Error::EmptyDataset);
    };
    let n = first.len();
    if n == 0 {
        return Err(Error::InvalidValue("empty PR curve".into()));
    }
    for c in curves {
        if c.len() != n || c.iter().zip(first).any(|(a, b)| a.threshold != b.threshold) {
            return Err(Error::InvalidValue("PR curves use different threshold grids".into()));
        }
    }
    let pooled: Vec<MatchCounts> = (0..n).map(|k| sum_counts(curves.iter().map(|c| &c[k]))).collect();
    let (best_k, ods) = pooled
        .iter()
        .map(MatchCounts::f_measure)
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |best, (k, f)| if f > best.1 { (k, f) } else { best });

    let ois = best_pooled_f(curves, ods);

    let pooled_pr: Vec<(f64, f64)> = pooled.iter().map(|c| (c.recall(), c.precision())).collect();
    let ap = (0..=100)
        .map(|i| {
            let r = f64::from(i) / 100.0;
            pooled_pr
                .iter()
                .filter(|(rec, _)| *rec >= r - 1e-12)
                .map(|&(_, p)| p)
                .fold(0.0, f64::max)
        })
        .sum::<f64>()
        / 101.0;

    Ok(Summary {
        ods,
        ods_threshold: first[best_k].threshold,
        ois,
        ap,
    })
}

/// Maximum over per-image threshold choices of the pooled F-measure
/// `2 tp / (2 tp + fp + fn)`, by Dinkelbach iteration from `start`.
fn best_pooled_f(curves: &[Vec<PrPoint>], start: f64) -> f64 {
    let pooled_f = |choice: &[usize]| {
        sum_counts(curves.iter().zip(choice).map(|(c, &k)| &c[k])).f_measure()
    };
    let mut lambda = start;
    for _ in 0..1000 {
        let choice: Vec<usize> = curves
            .iter()
            .map(|c| {
                let score = |p: &PrPoint| 2.0 * p.tp as f64 - lambda * (2 * p.tp + p.fp_count + p.fn_count) as f64;
                (0..c.len())
                    .fold((0, f64::NEG_INFINITY), |best, k| {
                        let s = score(&c[k]);
                        if s > best.1 {
                            (k, s)
                        } else {
                            best
                        }
                    })
                    .0
            })
            .collect();
        let f = pooled_f(&choice);
        if f <= lambda {
            return lambda;
        }
        lambda = f;
    }
    lambda
}

/// Scribble-source segments for one image together with its ground truth.
#[derive(Debug, Clone, Copy)]
pub struct ScribbleUsage<'a> {
    pub fn_segments: &'a [BoundarySegment],
    pub fp_segments: &'a [BoundarySegment],
    pub gt: &'a BinaryMap,
}

fn segment_pixel_count(segs: &[BoundarySegment], width: usize, height: usize) -> usize {
    BinaryMap::from_pixels(width, height, segs.iter().flat_map(|s| s.points().iter().copied())).count_ones()
}

/// Mean per-image ratios of FN segment pixels to GT pixels and of FP segment
/// pixels to non-GT pixels. Images without GT pixels are left out of the FN
/// mean with a warning.
pub fn avg_fn_fp(images: &[ScribbleUsage<'_>]) -> Result<(f64, f64)> {
    if images.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let mut fn_ratios = Vec::new();
    let mut fp_ratios = Vec::new();
    for (i, img) in images.iter().enumerate() {
        let (w, h) = img.gt.dims();
        let gt_pixels = img.gt.count_ones();
        let off_pixels = w * h - gt_pixels;
        if gt_pixels == 0 {
            log::warn!("image {i}: ground truth is empty; excluded from avg_fn");
        } else {
            fn_ratios.push(segment_pixel_count(img.fn_segments, w, h) as f64 / gt_pixels as f64);
        }
        if off_pixels > 0 {
            fp_ratios.push(segment_pixel_count(img.fp_segments, w, h) as f64 / off_pixels as f64);
        }
    }
    let mean = |v: &[f64]| {
        if v.is_empty() {
            0.0
        } else {
            v.iter().sum::<f64>() / v.len() as f64
        }
    };
    Ok((mean(&fn_ratios), mean(&fp_ratios)))
}

/// Per-image record in an evaluation report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageEval {
    pub id: String,
    pub best_threshold: f32,
    pub best_f: f64,
    pub curve: Vec<PrPoint>,
}

impl ImageEval {
    pub fn new(id: String, curve: Vec<PrPoint>) -> Self {
        let best = curve
            .iter()
            .fold(None::<&PrPoint>, |best, p| match best {
                Some(b) if b.counts().f_measure() >= p.counts().f_measure() => Some(b),
                _ => Some(p),
            })
            .copied();
        Self {
            id,
            best_threshold: best.map_or(0.0, |p| p.threshold),
            best_f: best.map_or(0.0, |p| p.counts().f_measure()),
            curve,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub ods: f64,
    pub ods_threshold: f32,
    pub ois: f64,
    pub ap: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub avg_fn: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub avg_fp: Option<f64>,
    pub d_max_fraction: f64,
    pub images: Vec<ImageEval>,
}

impl EvalReport {
    pub fn from_images(images: Vec<ImageEval>, cfg: &MatchConfig) -> Result<Self> {
        let curves: Vec<Vec<PrPoint>> = images.iter().map(|i| i.curve.clone()).collect();
        let s = summarize(&curves)?;
        Ok(Self {
            ods: s.ods,
            ods_threshold: s.ods_threshold,
            ois: s.ois,
            ap: s.ap,
            avg_fn: None,
            avg_fp: None,
            d_max_fraction: cfg.d_max_fraction,
            images,
        })
    }
}
