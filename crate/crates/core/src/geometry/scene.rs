//! Scene description documents.
//!
//! A scene is a TOML document:
//!
//! ```toml
//! mesh = "room.obj"          # relative to the scene file
//! supersample = 1            # 1 or 2
//!
//! [camera]
//! fx = 500.0
//! fy = 500.0
//! cx = 256.0
//! cy = 256.0
//! width = 512
//! height = 512
//! rotation = [1, 0, 0, 0, 1, 0, 0, 0, 1]   # row-major world->camera
//! translation = [0, 0, 0]
//! ```

use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::Matrix3;
use serde::{Deserialize, Serialize};

use super::{Intrinsics, MeshReport, PinholeCamera, Pose, SceneMesh, Vec3};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneDescription {
    pub mesh: PathBuf,
    #[serde(default = "default_supersample")]
    pub supersample: u8,
    pub camera: CameraDescription,
}

fn default_supersample() -> u8 {
    1
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CameraDescription {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: u32,
    pub height: u32,
    #[serde(default = "identity_rotation")]
    pub rotation: [f64; 9],
    #[serde(default)]
    pub translation: [f64; 3],
}

fn identity_rotation() -> [f64; 9] {
    [1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0]
}

impl CameraDescription {
    pub fn to_camera(&self) -> Result<PinholeCamera> {
        PinholeCamera::new(
            Intrinsics {
                fx: self.fx,
                fy: self.fy,
                cx: self.cx,
                cy: self.cy,
                width: self.width,
                height: self.height,
            },
            Pose {
                rotation: Matrix3::from_row_slice(&self.rotation),
                translation: Vec3::from_column_slice(&self.translation),
            },
        )
    }
}

/// A scene ready for rendering.
#[derive(Debug, Clone)]
pub struct LoadedScene {
    pub mesh: SceneMesh,
    pub camera: PinholeCamera,
    pub supersample: u8,
    pub report: MeshReport,
}

pub fn parse_scene(text: &str, path: &Path) -> Result<SceneDescription> {
    let desc: SceneDescription = toml::from_str(text).map_err(|e| Error::parse(path, e.message()))?;
    if !matches!(desc.supersample, 1 | 2) {
        return Err(Error::parse(path, format!("supersample must be 1 or 2, got {}", desc.supersample)));
    }
    Ok(desc)
}

/// Loads a scene document and the mesh it references.
pub fn load_scene(path: &Path) -> Result<LoadedScene> {
    if !path.exists() {
        return Err(Error::MissingFile(path.to_path_buf()));
    }
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let desc = parse_scene(&text, path)?;
    let mesh_path = path.parent().unwrap_or(Path::new(".")).join(&desc.mesh);
    if !mesh_path.exists() {
        return Err(Error::MissingFile(mesh_path));
    }
    let obj = fs::read_to_string(&mesh_path).map_err(|e| Error::io(&mesh_path, e))?;
    let (mesh, report) = SceneMesh::from_obj(&obj, &mesh_path)?;
    if report.degenerate_dropped > 0 {
        log::warn!(
            "{}: dropped {} degenerate triangles",
            mesh_path.display(),
            report.degenerate_dropped
        );
    }
    let camera = desc.camera.to_camera()?;
    Ok(LoadedScene {
        mesh,
        camera,
        supersample: desc.supersample,
        report,
    })
}
