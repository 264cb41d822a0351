use super::{Ray, SceneMesh, Vec3};

/// Hits closer than `TIE_FRACTION * scene diameter` to the nearest one are
/// treated as ties and resolved by the lower triangle index.
pub const TIE_FRACTION: f64 = 1e-9;

const LEAF_SIZE: usize = 4;

/// Result of casting a ray into a mesh.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RayHit {
    pub triangle: usize,
    pub instance_id: u32,
    /// Ray parameter (distance along the unit direction).
    pub t: f64,
    pub point: Vec3,
    /// Unit geometric normal, oriented towards the ray origin.
    pub normal: Vec3,
}

/// Watertight ray/triangle intersection (shear-and-scale form). Returns the
/// positive ray parameter of the hit. Points on a shared edge are reported
/// by both triangles, never by neither.
pub fn intersect_triangle(ray: &Ray, [a, b, c]: [Vec3; 3]) -> Option<f64> {
    let d = ray.direction;
    let kz = d.iamax();
    let mut kx = (kz + 1) % 3;
    let mut ky = (kx + 1) % 3;
    if d[kz] < 0.0 {
        std::mem::swap(&mut kx, &mut ky);
    }
    let sx = d[kx] / d[kz];
    let sy = d[ky] / d[kz];
    let sz = 1.0 / d[kz];

    let pa = a - ray.origin;
    let pb = b - ray.origin;
    let pc = c - ray.origin;
    let (ax, ay) = (pa[kx] - sx * pa[kz], pa[ky] - sy * pa[kz]);
    let (bx, by) = (pb[kx] - sx * pb[kz], pb[ky] - sy * pb[kz]);
    let (cx, cy) = (pc[kx] - sx * pc[kz], pc[ky] - sy * pc[kz]);

    let u = cx * by - cy * bx;
    let v = ax * cy - ay * cx;
    let w = bx * ay - by * ax;
    if (u < 0.0 || v < 0.0 || w < 0.0) && (u > 0.0 || v > 0.0 || w > 0.0) {
        return None;
    }
    let det = u + v + w;
    if det == 0.0 {
        return None;
    }
    let t_scaled = u * (sz * pa[kz]) + v * (sz * pb[kz]) + w * (sz * pc[kz]);
    let t = t_scaled / det;
    (t > 0.0 && t.is_finite()).then_some(t)
}

fn make_hit(mesh: &SceneMesh, ray: &Ray, triangle: usize, t: f64) -> RayHit {
    let [a, b, c] = mesh.corners(triangle);
    let mut normal = (b - a).cross(&(c - a)).normalize();
    if normal.dot(&ray.direction) > 0.0 {
        normal = -normal;
    }
    RayHit {
        triangle,
        instance_id: mesh.instance_id(triangle),
        t,
        point: ray.at(t),
        normal,
    }
}

/// Tracks the nearest hit and every candidate within the tie window.
struct Nearest {
    tie: f64,
    best: f64,
    candidates: Vec<(f64, usize)>,
}

impl Nearest {
    fn new(tie: f64) -> Self {
        Self {
            tie,
            best: f64::INFINITY,
            candidates: Vec::new(),
        }
    }

    fn bound(&self) -> f64 {
        self.best + self.tie
    }

    fn offer(&mut self, t: f64, triangle: usize) {
        if t < self.bound() || t <= self.best {
            self.candidates.push((t, triangle));
            self.best = self.best.min(t);
        }
    }

    fn resolve(self) -> Option<(usize, f64)> {
        let bound = self.best + self.tie;
        let best = self.best;
        self.candidates
            .into_iter()
            .filter(|&(t, _)| t < bound || t == best)
            .min_by_key(|&(_, tri)| tri)
            .map(|(t, tri)| (tri, t))
    }
}

/// Reference intersection against every triangle.
pub fn cast_ray_brute(mesh: &SceneMesh, ray: &Ray) -> Option<RayHit> {
    let mut nearest = Nearest::new(TIE_FRACTION * mesh.diameter());
    for tri in 0..mesh.len() {
        if let Some(t) = intersect_triangle(ray, mesh.corners(tri)) {
            nearest.offer(t, tri);
        }
    }
    nearest.resolve().map(|(tri, t)| make_hit(mesh, ray, tri, t))
}

#[derive(Debug, Clone, Copy)]
struct Aabb {
    lo: Vec3,
    hi: Vec3,
}

impl Aabb {
    fn empty() -> Self {
        Self {
            lo: Vec3::repeat(f64::INFINITY),
            hi: Vec3::repeat(f64::NEG_INFINITY),
        }
    }

    fn grow(&mut self, p: &Vec3) {
        self.lo = self.lo.inf(p);
        self.hi = self.hi.sup(p);
    }

    fn padded(mut self, pad: f64) -> Self {
        self.lo -= Vec3::repeat(pad);
        self.hi += Vec3::repeat(pad);
        self
    }

    /// Entry parameter of the ray into the box, if it enters before `limit`.
    fn entry(&self, ray: &Ray, inv: &Vec3, limit: f64) -> Option<f64> {
        let mut t_near = 0.0f64;
        let mut t_far = limit;
        for k in 0..3 {
            let t0 = (self.lo[k] - ray.origin[k]) * inv[k];
            let t1 = (self.hi[k] - ray.origin[k]) * inv[k];
            // f64::min/max ignore NaN (origin on a slab plane with zero direction).
            let (lo, hi) = (t0.min(t1), t0.max(t1) * (1.0 + 4.0 * f64::EPSILON));
            t_near = t_near.max(lo);
            t_far = t_far.min(hi);
            if t_near > t_far {
                return None;
            }
        }
        Some(t_near)
    }
}

#[derive(Debug, Clone)]
enum Node {
    Leaf { bounds: Aabb, start: usize, count: usize },
    Inner { bounds: Aabb, left: usize, right: usize },
}

impl Node {
    fn bounds(&self) -> &Aabb {
        match self {
            Node::Leaf { bounds, .. } | Node::Inner { bounds, .. } => bounds,
        }
    }
}

/// Bounding-volume hierarchy over a mesh's triangles (median split on the
/// widest centroid axis).
#[derive(Debug, Clone)]
pub struct Bvh {
    nodes: Vec<Node>,
    order: Vec<usize>,
    tie: f64,
}

impl Bvh {
    pub fn build(mesh: &SceneMesh) -> Self {
        let diameter = mesh.diameter();
        let pad = 1e-7 * (diameter + 1.0);
        let centroids: Vec<Vec3> = (0..mesh.len()).map(|t| mesh.centroid(t)).collect();
        let mut order: Vec<usize> = (0..mesh.len()).collect();
        let mut nodes = Vec::new();
        if !order.is_empty() {
            let len = order.len();
            build_node(mesh, &centroids, &mut order, 0, len, pad, &mut nodes);
        }
        Self {
            nodes,
            order,
            tie: TIE_FRACTION * diameter,
        }
    }

    /// Nearest hit; identical to [`cast_ray_brute`] for every ray.
    pub fn cast(&self, mesh: &SceneMesh, ray: &Ray) -> Option<RayHit> {
        if self.nodes.is_empty() {
            return None;
        }
        let inv = ray.direction.map(|d| 1.0 / d);
        let mut nearest = Nearest::new(self.tie);
        let mut stack = vec![0usize];
        while let Some(idx) = stack.pop() {
            let node = &self.nodes[idx];
            if node.bounds().entry(ray, &inv, nearest.bound()).is_none() {
                continue;
            }
            match *node {
                Node::Leaf { start, count, .. } => {
                    for &tri in &self.order[start..start + count] {
                        if let Some(t) = intersect_triangle(ray, mesh.corners(tri)) {
                            nearest.offer(t, tri);
                        }
                    }
                }
                Node::Inner { left, right, .. } => {
                    let dl = self.nodes[left].bounds().entry(ray, &inv, f64::INFINITY);
                    let dr = self.nodes[right].bounds().entry(ray, &inv, f64::INFINITY);
                    // Push the farther child first so the nearer one is visited first.
                    match (dl, dr) {
                        (Some(a), Some(b)) if a <= b => stack.extend([right, left]),
                        (Some(_), Some(_)) => stack.extend([left, right]),
                        (Some(_), None) => stack.push(left),
                        (None, Some(_)) => stack.push(right),
                        (None, None) => {}
                    }
                }
            }
        }
        nearest.resolve().map(|(tri, t)| make_hit(mesh, ray, tri, t))
    }
}

fn build_node(
    mesh: &SceneMesh,
    centroids: &[Vec3],
    order: &mut [usize],
    start: usize,
    end: usize,
    pad: f64,
    nodes: &mut Vec<Node>,
) -> usize {
    let mut bounds = Aabb::empty();
    let mut centroid_bounds = Aabb::empty();
    for &tri in &order[start..end] {
        for v in mesh.corners(tri) {
            bounds.grow(&v);
        }
        centroid_bounds.grow(&centroids[tri]);
    }
    let bounds = bounds.padded(pad);
    let index = nodes.len();
    let count = end - start;
    if count <= LEAF_SIZE {
        nodes.push(Node::Leaf { bounds, start, count });
        return index;
    }
    let axis = (centroid_bounds.hi - centroid_bounds.lo).imax();
    let mid = start + count / 2;
    order[start..end].select_nth_unstable_by(count / 2, |&a, &b| {
        centroids[a][axis]
            .total_cmp(&centroids[b][axis])
            .then(a.cmp(&b))
    });
    nodes.push(Node::Leaf { bounds, start, count });
    let left = build_node(mesh, centroids, order, start, mid, pad, nodes);
    let right = build_node(mesh, centroids, order, mid, end, pad, nodes);
    nodes[index] = Node::Inner { bounds, left, right };
    index
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn quad(z: f64, half: f64, id: u32, base: usize) -> (Vec<Vec3>, Vec<[usize; 3]>, Vec<u32>) {
        let v = vec![
            Vec3::new(-half, -half, z),
            Vec3::new(half, -half, z),
            Vec3::new(half, half, z),
            Vec3::new(-half, half, z),
        ];
        (v, vec![[base, base + 1, base + 2], [base, base + 2, base + 3]], vec![id, id])
    }

    #[test]
    fn centroid_hit() {
        let verts = vec![
            Vec3::new(-1.0, -1.0, 2.0),
            Vec3::new(1.0, -1.0, 2.0),
            Vec3::new(0.0, 1.0, 2.0),
        ];
        let (mesh, _) = SceneMesh::new(verts, vec![[0, 1, 2]], vec![0]).unwrap();
        let centroid = mesh.centroid(0);
        let ray = Ray::new(Vec3::zeros(), centroid);
        let hit = cast_ray_brute(&mesh, &ray).unwrap();
        assert_relative_eq!(hit.point, centroid, epsilon = 1e-6);
        assert_relative_eq!(hit.normal, Vec3::new(0.0, 0.0, -1.0), epsilon = 1e-12);
        assert_eq!(Bvh::build(&mesh).cast(&mesh, &ray), Some(hit));
    }

    #[test]
    fn parallel_ray_misses() {
        let (v, t, i) = quad(1.0, 1.0, 0, 0);
        let (mesh, _) = SceneMesh::new(v, t, i).unwrap();
        let ray = Ray::new(Vec3::new(0.0, 0.0, 0.5), Vec3::new(1.0, 0.0, 0.0));
        assert!(cast_ray_brute(&mesh, &ray).is_none());
        assert!(Bvh::build(&mesh).cast(&mesh, &ray).is_none());
    }

    #[test]
    fn nearest_of_two_quads() {
        let (mut v, mut t, mut i) = quad(2.0, 1.0, 1, 0);
        let (v2, t2, i2) = quad(1.0, 1.0, 0, 4);
        v.extend(v2);
        t.extend(t2);
        i.extend(i2);
        let (mesh, _) = SceneMesh::new(v, t, i).unwrap();
        let ray = Ray::new(Vec3::zeros(), Vec3::new(0.1, 0.05, 1.0));
        let hit = Bvh::build(&mesh).cast(&mesh, &ray).unwrap();
        assert_relative_eq!(hit.point.z, 1.0, epsilon = 1e-12);
        assert_eq!(hit.instance_id, 0);
    }

    #[test]
    fn shared_edge_reports_lower_index_once() {
        let (v, t, i) = quad(1.0, 1.0, 0, 0);
        let (mesh, _) = SceneMesh::new(v, t, i).unwrap();
        // The diagonal (-1,-1)-(1,1) is shared by both triangles.
        let ray = Ray::new(Vec3::zeros(), Vec3::new(0.25, 0.25, 1.0));
        assert!(intersect_triangle(&ray, mesh.corners(0)).is_some());
        assert!(intersect_triangle(&ray, mesh.corners(1)).is_some());
        assert_eq!(cast_ray_brute(&mesh, &ray).unwrap().triangle, 0);
        assert_eq!(Bvh::build(&mesh).cast(&mesh, &ray).unwrap().triangle, 0);
    }

    #[test]
    fn back_faces_are_hit_with_flipped_normal() {
        let verts = vec![
            Vec3::new(-1.0, -1.0, 2.0),
            Vec3::new(0.0, 1.0, 2.0),
            Vec3::new(1.0, -1.0, 2.0),
        ];
        let (mesh, _) = SceneMesh::new(verts, vec![[0, 1, 2]], vec![0]).unwrap();
        let hit = cast_ray_brute(&mesh, &Ray::new(Vec3::zeros(), Vec3::z())).unwrap();
        assert!(hit.normal.z < 0.0);
    }

    #[test]
    fn bvh_matches_brute_force_on_random_scenes() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..5 {
            let mut verts = Vec::new();
            let mut tris = Vec::new();
            for k in 0..50 {
                let c = Vec3::new(rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0), rng.random_range(1.0..5.0));
                for _ in 0..3 {
                    verts.push(c + Vec3::new(rng.random_range(-0.6..0.6), rng.random_range(-0.6..0.6), rng.random_range(-0.6..0.6)));
                }
                tris.push([3 * k, 3 * k + 1, 3 * k + 2]);
            }
            let ids = vec![0; tris.len()];
            let (mesh, _) = SceneMesh::new(verts, tris, ids).unwrap();
            let bvh = Bvh::build(&mesh);
            for _ in 0..200 {
                let dir = Vec3::new(rng.random_range(-0.6..0.6), rng.random_range(-0.6..0.6), 1.0);
                let ray = Ray::new(Vec3::zeros(), dir);
                assert_eq!(bvh.cast(&mesh, &ray), cast_ray_brute(&mesh, &ray));
            }
        }
    }
}
