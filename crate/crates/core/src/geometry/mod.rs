//! Triangle-mesh scenes, the pinhole camera, BVH ray casting and G-buffer
//! rendering.

mod bvh;
mod camera;
mod mesh;
mod render;
pub mod scene;

pub use bvh::{cast_ray_brute, intersect_triangle, Bvh, RayHit, TIE_FRACTION};
pub use camera::{Intrinsics, PinholeCamera, Pose, Ray};
pub use mesh::{MeshReport, SceneMesh, Vec3};
pub use render::{render_gbuffer, GBuffer, Hit};
pub use scene::{load_scene, LoadedScene, SceneDescription};

/// Nearest hit along `ray` using the acceleration structure.
pub fn cast_ray(mesh: &SceneMesh, accel: &Bvh, ray: &Ray) -> Option<RayHit> {
    accel.cast(mesh, ray)
}
