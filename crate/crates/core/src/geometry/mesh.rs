use std::collections::HashMap;
use std::path::Path;

use nalgebra::Vector3;

use crate::error::{Error, Result};

pub type Vec3 = Vector3<f64>;

/// Indexed triangle mesh with per-triangle instance labels and edge adjacency.
#[derive(Debug, Clone, Default)]
pub struct SceneMesh {
    vertices: Vec<Vec3>,
    triangles: Vec<[usize; 3]>,
    instance_ids: Vec<u32>,
    adjacency: Vec<Vec<usize>>,
    instance_names: Vec<String>,
}

/// Non-fatal findings while building a mesh.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct MeshReport {
    pub degenerate_dropped: usize,
}

impl SceneMesh {
    /// Builds a mesh, dropping zero-area triangles (counted in the report).
    pub fn new(
        vertices: Vec<Vec3>,
        triangles: Vec<[usize; 3]>,
        instance_ids: Vec<u32>,
    ) -> Result<(Self, MeshReport)> {
        if triangles.len() != instance_ids.len() {
            return Err(Error::InvalidValue(format!(
                "{} triangles but {} instance ids",
                triangles.len(),
                instance_ids.len()
            )));
        }
        if let Some(v) = vertices.iter().find(|v| !v.iter().all(|c| c.is_finite())) {
            return Err(Error::InvalidValue(format!("non-finite vertex {v:?}")));
        }
        for tri in &triangles {
            if let Some(&i) = tri.iter().find(|&&i| i >= vertices.len()) {
                return Err(Error::InvalidValue(format!(
                    "vertex index {i} out of range ({} vertices)",
                    vertices.len()
                )));
            }
        }
        let scale = bounding_diagonal(&vertices).max(f64::MIN_POSITIVE);
        let min_area = 1e-12 * scale * scale;
        let mut report = MeshReport::default();
        let mut kept_tris = Vec::with_capacity(triangles.len());
        let mut kept_ids = Vec::with_capacity(triangles.len());
        for (tri, id) in triangles.into_iter().zip(instance_ids) {
            let [a, b, c] = tri.map(|i| vertices[i]);
            if 0.5 * (b - a).cross(&(c - a)).norm() <= min_area {
                report.degenerate_dropped += 1;
                continue;
            }
            kept_tris.push(tri);
            kept_ids.push(id);
        }
        let adjacency = edge_adjacency(&kept_tris);
        Ok((
            Self {
                vertices,
                triangles: kept_tris,
                instance_ids: kept_ids,
                adjacency,
                instance_names: Vec::new(),
            },
            report,
        ))
    }

    pub fn vertices(&self) -> &[Vec3] {
        &self.vertices
    }

    pub fn triangles(&self) -> &[[usize; 3]] {
        &self.triangles
    }

    pub fn instance_ids(&self) -> &[u32] {
        &self.instance_ids
    }

    pub fn instance_id(&self, triangle: usize) -> u32 {
        self.instance_ids[triangle]
    }

    /// Group names indexed by instance id, when the mesh came from a file.
    pub fn instance_names(&self) -> &[String] {
        &self.instance_names
    }

    /// Triangles sharing an edge with `triangle`.
    pub fn neighbors(&self, triangle: usize) -> &[usize] {
        &self.adjacency[triangle]
    }

    pub fn len(&self) -> usize {
        self.triangles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.triangles.is_empty()
    }

    pub fn corners(&self, triangle: usize) -> [Vec3; 3] {
        self.triangles[triangle].map(|i| self.vertices[i])
    }

    pub fn centroid(&self, triangle: usize) -> Vec3 {
        let [a, b, c] = self.corners(triangle);
        (a + b + c) / 3.0
    }

    /// Diagonal of the vertex bounding box.
    pub fn diameter(&self) -> f64 {
        bounding_diagonal(&self.vertices)
    }

    /// Applies `f` to every vertex, keeping topology and labels.
    pub fn map_vertices(&self, f: impl Fn(&Vec3) -> Vec3) -> Self {
        Self {
            vertices: self.vertices.iter().map(f).collect(),
            ..self.clone()
        }
    }

    /// Wavefront OBJ text that [`SceneMesh::from_obj`] reads back to the same
    /// mesh, with one `o` record per run of equal instance ids.
    pub fn to_obj(&self) -> String {
        let mut out = String::new();
        for v in &self.vertices {
            out.push_str(&format!("v {} {} {}\n", v.x, v.y, v.z));
        }
        let mut current = None;
        for (t, tri) in self.triangles.iter().enumerate() {
            let id = self.instance_ids[t];
            if current != Some(id) {
                out.push_str(&format!("o instance{id}\n"));
                current = Some(id);
            }
            out.push_str(&format!("f {} {} {}\n", tri[0] + 1, tri[1] + 1, tri[2] + 1));
        }
        out
    }

    /// Parses a Wavefront OBJ document. `o`/`g` records open object groups;
    /// instance ids are assigned consecutively from 0 in order of each
    /// group's first face. Polygons are fan-triangulated.
    pub fn from_obj(text: &str, path: &Path) -> Result<(Self, MeshReport)> {
        let mut vertices = Vec::new();
        let mut triangles = Vec::new();
        let mut ids = Vec::new();
        let mut names: Vec<String> = Vec::new();
        let mut group_ids: HashMap<String, u32> = HashMap::new();
        let mut current_group = String::from("default");

        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            let mut fields = line.split_whitespace();
            let err = |msg: &str| Error::parse(path, format!("line {}: {msg}", lineno + 1));
            match fields.next() {
                Some("v") => {
                    let coords: Vec<f64> = fields
                        .take(3)
                        .map(str::parse)
                        .collect::<std::result::Result<_, _>>()
                        .map_err(|_| err("malformed vertex"))?;
                    if coords.len() != 3 {
                        return Err(err("vertex needs 3 coordinates"));
                    }
                    vertices.push(Vec3::new(coords[0], coords[1], coords[2]));
                }
                Some("f") => {
                    let mut poly = Vec::new();
                    for token in fields {
                        let index: i64 = token
                            .split('/')
                            .next()
                            .unwrap_or("")
                            .parse()
                            .map_err(|_| err("malformed face index"))?;
                        let resolved = match index {
                            i if i > 0 => i - 1,
                            i if i < 0 => vertices.len() as i64 + i,
                            _ => return Err(err("face index 0 is invalid")),
                        };
                        if resolved < 0 || resolved as usize >= vertices.len() {
                            return Err(err("face index out of range"));
                        }
                        poly.push(resolved as usize);
                    }
                    if poly.len() < 3 {
                        return Err(err("face needs at least 3 vertices"));
                    }
                    let next_id = group_ids.len() as u32;
                    let id = *group_ids.entry(current_group.clone()).or_insert_with(|| {
                        names.push(current_group.clone());
                        next_id
                    });
                    for k in 1..poly.len() - 1 {
                        triangles.push([poly[0], poly[k], poly[k + 1]]);
                        ids.push(id);
                    }
                }
                Some("o") | Some("g") => {
                    let name = fields.collect::<Vec<_>>().join(" ");
                    current_group = if name.is_empty() { "default".into() } else { name };
                }
                _ => {}
            }
        }
        let (mut mesh, report) = Self::new(vertices, triangles, ids)?;
        mesh.instance_names = names;
        Ok((mesh, report))
    }
}

fn bounding_diagonal(vertices: &[Vec3]) -> f64 {
    let Some(first) = vertices.first() else {
        return 0.0;
    };
    let (lo, hi) = vertices
        .iter()
        .fold((*first, *first), |(lo, hi), v| (lo.inf(v), hi.sup(v)));
    (hi - lo).norm()
}

fn edge_adjacency(triangles: &[[usize; 3]]) -> Vec<Vec<usize>> {
    let mut by_edge: HashMap<(usize, usize), Vec<usize>> = HashMap::new();
    for (t, tri) in triangles.iter().enumerate() {
        for k in 0..3 {
            let (a, b) = (tri[k], tri[(k + 1) % 3]);
            by_edge.entry((a.min(b), a.max(b))).or_default().push(t);
        }
    }
    let mut adjacency = vec![Vec::new(); triangles.len()];
    for tris in by_edge.values() {
        for &a in tris {
            for &b in tris {
                if a != b && !adjacency[a].contains(&b) {
                    adjacency[a].push(b);
                }
            }
        }
    }
    for list in &mut adjacency {
        list.sort_unstable();
    }
    adjacency
}
