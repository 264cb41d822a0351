//! Analytic fixture scenes and a flat-shaded preview renderer.
//!
//! These scenes have boundaries that can be derived by hand (projected
//! rectangles, coplanar contacts, folds), which makes them useful as
//! oracles for the generator, and the random box scenes provide varied
//! ground truth for the interaction and evaluation loops.

use image::{Rgb, RgbImage};
use nalgebra::Rotation3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::geometry::{GBuffer, Intrinsics, PinholeCamera, Pose, SceneMesh, Vec3};

/// Incremental mesh construction.
#[derive(Debug, Default, Clone)]
pub struct MeshBuilder {
    vertices: Vec<Vec3>,
    triangles: Vec<[usize; 3]>,
    ids: Vec<u32>,
}

impl MeshBuilder {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn vertex(&mut self, v: Vec3) -> usize {
        self.vertices.push(v);
        self.vertices.len() - 1
    }

    pub fn triangle(&mut self, tri: [usize; 3], id: u32) {
        self.triangles.push(tri);
        self.ids.push(id);
    }

    /// Quad from four corners in order, split along the `a`-`c` diagonal.
    pub fn quad(&mut self, corners: [Vec3; 4], id: u32) {
        let [a, b, c, d] = corners.map(|v| self.vertex(v));
        self.triangle([a, b, c], id);
        self.triangle([a, c, d], id);
    }

    /// Axis-aligned rectangle at depth `z`.
    pub fn rect(&mut self, x: (f64, f64), y: (f64, f64), z: f64, id: u32) {
        self.quad(
            [
                Vec3::new(x.0, y.0, z),
                Vec3::new(x.1, y.0, z),
                Vec3::new(x.1, y.1, z),
                Vec3::new(x.0, y.1, z),
            ],
            id,
        );
    }

    /// A connected sheet swept along x through the (y, z) profile polyline,
    /// with `subdivisions` strips per profile segment sharing vertices.
    pub fn swept_profile(&mut self, x: (f64, f64), profile: &[(f64, f64)], subdivisions: usize, id: u32) {
        let mut samples = vec![profile[0]];
        for w in profile.windows(2) {
            for k in 1..=subdivisions {
                let s = k as f64 / subdivisions as f64;
                samples.push((
                    w[0].0 + s * (w[1].0 - w[0].0),
                    w[0].1 + s * (w[1].1 - w[0].1),
                ));
            }
        }
        let rows: Vec<[usize; 2]> = samples
            .iter()
            .map(|&(y, z)| [self.vertex(Vec3::new(x.0, y, z)), self.vertex(Vec3::new(x.1, y, z))])
            .collect();
        for w in rows.windows(2) {
            let ([a, b], [d, c]) = (w[0], w[1]);
            self.triangle([a, b, c], id);
            self.triangle([a, c, d], id);
        }
    }

    /// Closed box with the given centre, half extents and rotation about y.
    pub fn cuboid(&mut self, center: Vec3, half: Vec3, yaw: f64, id: u32) {
        let rot = Rotation3::from_axis_angle(&Vec3::y_axis(), yaw);
        let corner = |sx: f64, sy: f64, sz: f64| {
            center + rot * Vec3::new(sx * half.x, sy * half.y, sz * half.z)
        };
        let v: Vec<usize> = [
            (-1., -1., -1.),
            (1., -1., -1.),
            (1., 1., -1.),
            (-1., 1., -1.),
            (-1., -1., 1.),
            (1., -1., 1.),
            (1., 1., 1.),
            (-1., 1., 1.),
        ]
        .iter()
        .map(|&(x, y, z)| self.vertex(corner(x, y, z)))
        .collect();
        for [a, b, c, d] in [
            [0, 1, 2, 3],
            [5, 4, 7, 6],
            [4, 0, 3, 7],
            [1, 5, 6, 2],
            [4, 5, 1, 0],
            [3, 2, 6, 7],
        ] {
            self.triangle([v[a], v[b], v[c]], id);
            self.triangle([v[a], v[c], v[d]], id);
        }
    }

    pub fn build(self) -> SceneMesh {
        SceneMesh::new(self.vertices, self.triangles, self.ids)
            .expect("builder produces valid indices")
            .0
    }
}

/// Identity-pose camera with focal length `focal` and centred principal point.
pub fn frontal_camera(size: u32, focal: f64) -> PinholeCamera {
    let c = f64::from(size) / 2.0;
    PinholeCamera::new(
        Intrinsics {
            fx: focal,
            fy: focal,
            cx: c,
            cy: c,
            width: size,
            height: size,
        },
        Pose::identity(),
    )
    .expect("valid frontal camera")
}

/// One fronto-parallel square `[-0.5, 0.5]²` at depth 2.
pub fn single_quad() -> SceneMesh {
    let mut b = MeshBuilder::new();
    b.rect((-0.5, 0.5), (-0.5, 0.5), 2.0, 0);
    b.build()
}

/// Two coplanar squares of different instances sharing the edge `x = 0`
/// (separate vertices), at depth 2.
pub fn abutting_quads() -> SceneMesh {
    let mut b = MeshBuilder::new();
    b.rect((-0.5, 0.0), (-0.5, 0.5), 2.0, 0);
    b.rect((0.0, 0.5), (-0.5, 0.5), 2.0, 1);
    b.build()
}

/// A near square (instance 0, depth 1) partially in front of a far square
/// (instance 1, depth 2).
pub fn overlapping_quads() -> SceneMesh {
    let mut b = MeshBuilder::new();
    b.rect((-0.3, 0.1), (-0.3, 0.1), 1.0, 0);
    b.rect((-0.2, 0.6), (-0.2, 0.6), 2.0, 1);
    b.build()
}

/// Profile (y, z) of the folded sheet: a flap at depth 1 whose lower edge
/// folds back to a sheet at depth 2 that rises behind the flap.
pub const FOLDED_PROFILE: [(f64, f64); 4] = [(-0.3, 1.0), (0.3, 1.0), (0.2, 2.0), (-0.8, 2.0)];

/// A single-instance folded sheet, finely subdivided so the front flap and
/// the back sheet are many adjacency steps apart.
pub fn folded_sheet() -> SceneMesh {
    let mut b = MeshBuilder::new();
    b.swept_profile((-0.3, 0.3), &FOLDED_PROFILE, 6, 0);
    b.build()
}

/// Random cuboids in front of a back wall. Each cuboid and the wall are
/// separate instances.
pub fn random_boxes(seed: u64, count: usize) -> SceneMesh {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut b = MeshBuilder::new();
    b.rect((-20.0, 20.0), (-20.0, 20.0), 12.0, 0);
    for id in 1..=count as u32 {
        let z = rng.random_range(4.0..9.0);
        let spread = 0.28 * z;
        let center = Vec3::new(
            rng.random_range(-spread..spread),
            rng.random_range(-spread..spread),
            z,
        );
        let half = Vec3::new(
            rng.random_range(0.4..1.2),
            rng.random_range(0.4..1.2),
            rng.random_range(0.3..0.9),
        );
        b.cuboid(center, half, rng.random_range(-0.8..0.8), id);
    }
    b.build()
}

/// Flat-shaded preview: a per-instance colour modulated by the cosine
/// between the normal and the viewing ray. Background is dark gray.
pub fn shade(gbuffer: &GBuffer) -> RgbImage {
    RgbImage::from_fn(gbuffer.width() as u32, gbuffer.height() as u32, |x, y| {
        match gbuffer.get(x as usize, y as usize) {
            None => Rgb([20, 20, 20]),
            Some(hit) => {
                let base = instance_color(hit.instance_id);
                let light = 0.35 + 0.65 * hit.normal.dot(&hit.ray_direction).abs();
                Rgb(base.map(|c| (f64::from(c) * light).round() as u8))
            }
        }
    })
}

fn instance_color(id: u32) -> [u8; 3] {
    let h = id.wrapping_mul(2_654_435_761);
    [
        80 + (h & 0x7f) as u8,
        80 + ((h >> 8) & 0x7f) as u8,
        80 + ((h >> 16) & 0x7f) as u8,
    ]
}
