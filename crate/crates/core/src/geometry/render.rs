use rayon::prelude::*;

use super::{Bvh, PinholeCamera, SceneMesh, Vec3};

/// Per-pixel surface record.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Hit {
    pub triangle_index: usize,
    pub instance_id: u32,
    pub point: Vec3,
    /// Camera-frame z of `point`.
    pub depth: f64,
    /// Unit geometric normal in world coordinates, facing the camera.
    pub normal: Vec3,
    /// Unit direction of the ray that produced the hit.
    pub ray_direction: Vec3,
}

/// Per-pixel optional hits for one camera.
#[derive(Debug, Clone, PartialEq)]
pub struct GBuffer {
    width: usize,
    height: usize,
    hits: Vec<Option<Hit>>,
}

impl GBuffer {
    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn get(&self, x: usize, y: usize) -> Option<&Hit> {
        self.hits[y * self.width + x].as_ref()
    }

    pub fn hits(&self) -> &[Option<Hit>] {
        &self.hits
    }

    /// Depth raster with 0 where nothing was hit.
    pub fn depth_values(&self) -> Vec<f32> {
        self.hits
            .iter()
            .map(|h| h.map_or(0.0, |h| h.depth as f32))
            .collect()
    }
}

/// Sub-pixel sample positions for each supersampling factor.
fn sample_offsets(supersample: u8) -> &'static [(f64, f64)] {
    match supersample {
        2 => &[(0.25, 0.25), (0.75, 0.25), (0.25, 0.75), (0.75, 0.75)],
        _ => &[(0.5, 0.5)],
    }
}

/// Casts rays for every pixel. With `supersample == 1` the pixel-centre ray
/// is used; with 2, four stratified rays are cast and the hit nearest to the
/// camera (lowest depth, then lowest triangle index) represents the pixel.
pub fn render_gbuffer(mesh: &SceneMesh, bvh: &Bvh, cam: &PinholeCamera, supersample: u8) -> GBuffer {
    let (width, height) = (cam.width(), cam.height());
    let offsets = sample_offsets(supersample);
    let hits = (0..height)
        .into_par_iter()
        .flat_map_iter(|y| {
            (0..width).map(move |x| {
                offsets
                    .iter()
                    .filter_map(|&jitter| {
                        let ray = cam.pixel_ray(x as u32, y as u32, jitter);
                        bvh.cast(mesh, &ray).map(|h| Hit {
                            triangle_index: h.triangle,
                            instance_id: h.instance_id,
                            point: h.point,
                            depth: cam.to_camera(&h.point).z,
                            normal: h.normal,
                            ray_direction: ray.direction,
                        })
                    })
                    .filter(|h| h.depth > 0.0)
                    .min_by(|a, b| {
                        a.depth
                            .total_cmp(&b.depth)
                            .then(a.triangle_index.cmp(&b.triangle_index))
                    })
            })
        })
        .collect();
    GBuffer {
        width,
        height,
        hits,
    }
}
