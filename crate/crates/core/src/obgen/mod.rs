//! Exact occlusion-boundary maps from mesh scenes.
//!
//! Every 4-adjacent pixel pair is classified from the surfaces its two rays
//! hit. A pair whose hits are too far apart to be the same continuous
//! surface marks an occlusion event; the boundary pixel is placed on the
//! occluder (nearer) side, giving one-pixel-wide curves.
//!
//! The classification compares the 3D gap between the hits with the
//! footprint of one pixel on the nearer surface:
//!
//! 1. gap <= `gap_factor` * footprint: continuous;
//! 2. the two triangles are linked by a short edge-adjacency walk whose
//!    centroid path is at most twice the gap: continuous (steep surface);
//! 3. different instances and gap <= `contact_tolerance` * footprint: contact;
//! 4. otherwise an inter-object occlusion (different instances) or a
//!    self-occlusion (same instance).

mod export;

use std::collections::HashMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{render_gbuffer, Bvh, GBuffer, Hit, PinholeCamera, SceneMesh};
use crate::raster::{morph_thin, BinaryMap};

pub use export::{export_benchmark, BenchmarkSample, SampleRgb};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VerdictKind {
    Continuous,
    InterObjectOcclusion,
    SelfOcclusion,
    Contact,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OccluderSide {
    FirstPixel,
    SecondPixel,
    None,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct OcclusionVerdict {
    pub kind: VerdictKind,
    pub occluder_side: OccluderSide,
}

impl OcclusionVerdict {
    const CONTINUOUS: Self = Self {
        kind: VerdictKind::Continuous,
        occluder_side: OccluderSide::None,
    };

    pub fn label(&self) -> Option<BoundaryLabel> {
        match self.kind {
            VerdictKind::InterObjectOcclusion => Some(BoundaryLabel::InterObject),
            VerdictKind::SelfOcclusion => Some(BoundaryLabel::SelfOcclusion),
            VerdictKind::Continuous | VerdictKind::Contact => None,
        }
    }
}

/// Tuning constants of the occlusion criterion.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GenConfig {
    pub gap_factor: f64,
    pub adjacency_walk_limit: usize,
    pub contact_tolerance: f64,
    pub supersample: u8,
}

impl Default for GenConfig {
    fn default() -> Self {
        Self {
            gap_factor: 3.0,
            adjacency_walk_limit: 8,
            contact_tolerance: 0.5,
            supersample: 1,
        }
    }
}

impl GenConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.gap_factor > 1.0) {
            return Err(Error::InvalidValue(format!(
                "gap factor must exceed 1, got {}",
                self.gap_factor
            )));
        }
        if !(self.contact_tolerance >= 0.0) {
            return Err(Error::InvalidValue("contact tolerance must be >= 0".into()));
        }
        if !matches!(self.supersample, 1 | 2) {
            return Err(Error::InvalidValue(format!(
                "supersample must be 1 or 2, got {}",
                self.supersample
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundaryLabel {
    InterObject,
    SelfOcclusion,
}

impl BoundaryLabel {
    /// Gray level used in label images.
    pub fn gray(self) -> u8 {
        match self {
            BoundaryLabel::InterObject => 255,
            BoundaryLabel::SelfOcclusion => 128,
        }
    }
}

/// A thin boundary map with a label on every boundary pixel.
#[derive(Debug, Clone, PartialEq)]
pub struct ObMap {
    boundary: BinaryMap,
    labels: Vec<Option<BoundaryLabel>>,
}

impl ObMap {
    pub fn empty(width: usize, height: usize) -> Self {
        Self {
            boundary: BinaryMap::new(width, height),
            labels: vec![None; width * height],
        }
    }

    pub fn boundary(&self) -> &BinaryMap {
        &self.boundary
    }

    pub fn label(&self, x: usize, y: usize) -> Option<BoundaryLabel> {
        self.labels[y * self.boundary.width() + x]
    }

    /// Boundary pixels carrying `label`.
    pub fn with_label(&self, label: BoundaryLabel) -> BinaryMap {
        let (w, h) = self.boundary.dims();
        let data = self.labels.iter().map(|l| *l == Some(label)).collect();
        BinaryMap::from_vec(w, h, data).expect("labels match boundary dimensions")
    }

    /// 0 off-boundary, 255 inter-object, 128 self-occlusion.
    pub fn label_image(&self) -> image::GrayImage {
        let (w, h) = self.boundary.dims();
        image::GrayImage::from_fn(w as u32, h as u32, |x, y| {
            image::Luma([self
                .label(x as usize, y as usize)
                .map_or(0, BoundaryLabel::gray)])
        })
    }

    fn from_marks(width: usize, height: usize, marks: &[Option<BoundaryLabel>]) -> Self {
        let raw = BinaryMap::from_vec(width, height, marks.iter().map(Option::is_some).collect())
            .expect("mark raster has canvas size");
        let boundary = morph_thin(&raw);
        let labels = boundary
            .data()
            .iter()
            .zip(marks)
            .map(|(&on, &l)| if on { l } else { None })
            .collect();
        Self { boundary, labels }
    }
}

/// Expected 3D spacing of adjacent pixel rays on the surface of `hit`.
pub fn footprint(hit: &Hit, pixel_angle: f64) -> f64 {
    let cos_incidence = hit.normal.dot(&hit.ray_direction).abs();
    hit.depth * pixel_angle / cos_incidence.max(0.2)
}

/// Classifies the surfaces seen by two neighbouring pixels.
pub fn occlusion_test(
    mesh: &SceneMesh,
    first: &Hit,
    second: &Hit,
    footprint: f64,
    cfg: &GenConfig,
) -> OcclusionVerdict {
    let gap = (first.point - second.point).norm();
    if gap <= cfg.gap_factor * footprint {
        return OcclusionVerdict::CONTINUOUS;
    }
    if walk_connects(
        mesh,
        first.triangle_index,
        second.triangle_index,
        cfg.adjacency_walk_limit,
        2.0 * gap,
    ) {
        return OcclusionVerdict::CONTINUOUS;
    }
    let different = first.instance_id != second.instance_id;
    if different && gap <= cfg.contact_tolerance * footprint {
        return OcclusionVerdict {
            kind: VerdictKind::Contact,
            occluder_side: OccluderSide::None,
        };
    }
    let first_in_front = (first.depth, first.triangle_index, first.point.as_slice())
        .partial_cmp(&(second.depth, second.triangle_index, second.point.as_slice()))
        .is_some_and(|o| o.is_lt());
    OcclusionVerdict {
        kind: if different {
            VerdictKind::InterObjectOcclusion
        } else {
            VerdictKind::SelfOcclusion
        },
        occluder_side: if first_in_front {
            OccluderSide::FirstPixel
        } else {
            OccluderSide::SecondPixel
        },
    }
}

/// Whether `to` is reachable from `from` in at most `max_steps` edge-adjacency
/// steps with summed centroid distance at most `max_length`.
fn walk_connects(mesh: &SceneMesh, from: usize, to: usize, max_steps: usize, max_length: f64) -> bool {
    if from == to {
        return true;
    }
    let mut best: HashMap<usize, f64> = HashMap::from([(from, 0.0)]);
    let mut frontier = vec![(from, 0.0f64)];
    for _ in 0..max_steps {
        let mut next = Vec::new();
        for (tri, cost) in frontier {
            let c = mesh.centroid(tri);
            for &n in mesh.neighbors(tri) {
                let total = cost + (mesh.centroid(n) - c).norm();
                if total > max_length {
                    continue;
                }
                if n == to {
                    return true;
                }
                if best.get(&n).is_none_or(|&b| total < b) {
                    best.insert(n, total);
                    next.push((n, total));
                }
            }
        }
        if next.is_empty() {
            break;
        }
        frontier = next;
    }
    false
}

fn on_frame_border(x: usize, y: usize, width: usize, height: usize) -> bool {
    x == 0 || y == 0 || x + 1 == width || y + 1 == height
}

/// Raw (pre-thinning) occluder-side marks for every pixel pair.
///
/// Rows are processed in parallel: a row owns its horizontal pairs and the
/// vertical pairs to the row below. Inter-object labels take precedence
/// over self-occlusion when a pixel is marked twice.
pub fn mark_occlusions(
    mesh: &SceneMesh,
    gbuffer: &GBuffer,
    cam: &PinholeCamera,
    cfg: &GenConfig,
) -> Vec<Option<BoundaryLabel>> {
    let (w, h) = (gbuffer.width(), gbuffer.height());
    let (angle_x, angle_y) = cam.pixel_angle();
    let row_marks: Vec<Vec<(usize, BoundaryLabel)>> = (0..h)
        .into_par_iter()
        .map(|y| {
            let mut marks = Vec::new();
            for x in 0..w {
                let pairs = [
                    (x + 1 < w).then_some((x + 1, y, angle_x)),
                    (y + 1 < h).then_some((x, y + 1, angle_y)),
                ];
                for (qx, qy, angle) in pairs.into_iter().flatten() {
                    if let Some((px, label)) =
                        classify_pair(mesh, gbuffer, (x, y), (qx, qy), angle, cfg)
                    {
                        if !on_frame_border(px.0, px.1, w, h) {
                            marks.push((px.1 * w + px.0, label));
                        }
                    }
                }
            }
            marks
        })
        .collect();

    let mut out = vec![None; w * h];
    for (idx, label) in row_marks.into_iter().flatten() {
        out[idx] = match (out[idx], label) {
            (Some(BoundaryLabel::InterObject), _) => Some(BoundaryLabel::InterObject),
            _ => Some(label),
        };
    }
    out
}

/// The pixel to mark for one pair, if any.
pub fn classify_pair(
    mesh: &SceneMesh,
    gbuffer: &GBuffer,
    p: (usize, usize),
    q: (usize, usize),
    pixel_angle: f64,
    cfg: &GenConfig,
) -> Option<((usize, usize), BoundaryLabel)> {
    match (gbuffer.get(p.0, p.1), gbuffer.get(q.0, q.1)) {
        (None, None) => None,
        (Some(_), None) => Some((p, BoundaryLabel::InterObject)),
        (None, Some(_)) => Some((q, BoundaryLabel::InterObject)),
        (Some(hp), Some(hq)) => {
            let nearer = if hp.depth <= hq.depth { hp } else { hq };
            let verdict = occlusion_test(mesh, hp, hq, footprint(nearer, pixel_angle), cfg);
            let label = verdict.label()?;
            match verdict.occluder_side {
                OccluderSide::FirstPixel => Some((p, label)),
                OccluderSide::SecondPixel => Some((q, label)),
                OccluderSide::None => None,
            }
        }
    }
}

/// Renders the scene and derives its full-image occlusion-boundary map.
pub fn generate_ob(mesh: &SceneMesh, cam: &PinholeCamera, cfg: &GenConfig) -> Result<(ObMap, GBuffer)> {
    cfg.validate()?;
    let bvh = Bvh::build(mesh);
    let gbuffer = render_gbuffer(mesh, &bvh, cam, cfg.supersample);
    let marks = mark_occlusions(mesh, &gbuffer, cam, cfg);
    let ob = ObMap::from_marks(gbuffer.width(), gbuffer.height(), &marks);
    Ok((ob, gbuffer))
}
