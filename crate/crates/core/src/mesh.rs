//! Genus-one simplicial surfaces and vertex maps.
//!
//! A [`SimplicialSurface`] is immutable once built. Construction validates that
//! the faces form a closed, consistently oriented, connected 2-manifold with
//! Euler characteristic zero and no degenerate triangles. Face areas and the
//! cotangents of the three corner angles are cached, since every energy and
//! Laplacian assembly divides by them.
//!
//! Geometry normally comes from the vertex positions. A surface can also carry
//! an intrinsic metric given by edge lengths (see
//! [`SimplicialSurface::flat_torus_grid`]); positions are then only used for
//! display.

use std::collections::HashMap;
use std::f64::consts::TAU;
use std::path::Path;
use std::sync::{Arc, OnceLock};

use log::warn;
use nalgebra::Vector3;

use crate::error::{Error, Result};
use crate::obj;
use crate::sparse::LaplacianPattern;
use crate::torus::TorusShape;

pub type Vec3 = Vector3<f64>;

/// Faces whose area falls below this fraction of the mean area are rejected.
pub const DEGENERATE_AREA_RATIO: f64 = 1e-14;

/// Largest corner cotangent tolerated before a conditioning warning is logged.
const COT_WARNING: f64 = 1e4;

/// Cached per-face geometry: area and the cotangent of each corner angle.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FaceGeometry {
    pub area: f64,
    /// `cot[c]` is the cotangent of the angle at corner `c`, i.e. the angle
    /// opposite the edge between corners `c + 1` and `c + 2`.
    pub cot: [f64; 3],
}

/// Area of the triangle `(a, b, c)` in space.
pub fn triangle_area(a: &Vec3, b: &Vec3, c: &Vec3) -> f64 {
    0.5 * (b - a).cross(&(c - a)).norm()
}

/// Corner cotangents computed as dot / |cross| of the two edges leaving each
/// corner. Returns `None` for a degenerate triangle.
pub fn corner_cotangents(p: [&Vec3; 3]) -> Option<[f64; 3]> {
    let mut cot = [0.0; 3];
    for c in 0..3 {
        let e1 = p[(c + 1) % 3] - p[c];
        let e2 = p[(c + 2) % 3] - p[c];
        let cross = e1.cross(&e2).norm();
        if cross == 0.0 || !cross.is_finite() {
            return None;
        }
        cot[c] = e1.dot(&e2) / cross;
    }
    Some(cot)
}

fn embedded_geometry(p: [&Vec3; 3]) -> FaceGeometry {
    let area = triangle_area(p[0], p[1], p[2]);
    let cot = corner_cotangents(p).unwrap_or([f64::INFINITY; 3]);
    FaceGeometry { area, cot }
}

/// Geometry of a triangle known only through its edge lengths;
/// `len[c]` is the length of the edge opposite corner `c`.
fn intrinsic_geometry(len: [f64; 3]) -> FaceGeometry {
    let [a, b, c] = len;
    let s = 0.5 * (a + b + c);
    let area = (s * (s - a) * (s - b) * (s - c)).max(0.0).sqrt();
    let sq = [a * a, b * b, c * c];
    let mut cot = [f64::INFINITY; 3];
    if area > 0.0 {
        for k in 0..3 {
            cot[k] = (sq[(k + 1) % 3] + sq[(k + 2) % 3] - sq[k]) / (4.0 * area);
        }
    }
    FaceGeometry { area, cot }
}

#[derive(Clone, Copy, Debug)]
struct HalfEdge {
    face: usize,
    /// Corner of `face` at which the half-edge starts.
    corner: usize,
}

/// A closed, oriented, genus-one triangle mesh.
#[derive(Clone, Debug)]
pub struct SimplicialSurface {
    vertices: Vec<Vec3>,
    faces: Vec<[usize; 3]>,
    geometry: Vec<FaceGeometry>,
    total_area: f64,
    /// Unordered edges stored as `[i, j]` with `i < j`, in first-seen order.
    edges: Vec<[usize; 2]>,
    edge_index: HashMap<(usize, usize), usize>,
    halfedges: HashMap<(usize, usize), HalfEdge>,
    /// `face_edges[f][c]` is the edge opposite corner `c` of face `f`.
    face_edges: Vec<[usize; 3]>,
    intrinsic: bool,
    pattern: OnceLock<Arc<LaplacianPattern>>,
    /// One outgoing neighbor per vertex, the start of its ring walk.
    out_neighbor: Vec<usize>,
}

impl SimplicialSurface {
    /// Build and validate a surface from positions and oriented faces.
    ///
    /// If the faces are consistently oriented but inward (negative signed
    /// volume), all of them are flipped and a warning is logged.
    pub fn new(vertices: Vec<Vec3>, faces: Vec<[usize; 3]>) -> Result<Self> {
        let mut surface = Self::build_topology(vertices, faces, None)?;
        if surface.signed_volume() < 0.0 {
            warn!("faces are oriented inward; flipping all faces");
            let flipped: Vec<[usize; 3]> = surface.faces.iter().map(|f| [f[0], f[2], f[1]]).collect();
            surface = Self::build_topology(surface.vertices, flipped, None)?;
        }
        Ok(surface)
    }

    /// Build a surface whose metric is given by per-face edge lengths instead
    /// of vertex positions. `lengths[f][c]` is the length of the edge opposite
    /// corner `c` of face `f`.
    pub fn with_intrinsic_lengths(
        vertices: Vec<Vec3>,
        faces: Vec<[usize; 3]>,
        lengths: Vec<[f64; 3]>,
    ) -> Result<Self> {
        if lengths.len() != faces.len() {
            return Err(Error::Config(format!(
                "{} edge-length triples for {} faces",
                lengths.len(),
                faces.len()
            )));
        }
        Self::build_topology(vertices, faces, Some(lengths))
    }

    fn build_topology(
        vertices: Vec<Vec3>,
        faces: Vec<[usize; 3]>,
        lengths: Option<Vec<[f64; 3]>>,
    ) -> Result<Self> {
        let n = vertices.len();
        if faces.is_empty() {
            return Err(Error::NonManifold("no faces".into()));
        }
        for f in &faces {
            for &v in f {
                if v >= n {
                    return Err(Error::IndexOutOfRange { index: v, count: n });
                }
            }
            if f[0] == f[1] || f[1] == f[2] || f[0] == f[2] {
                return Err(Error::NonManifold(format!("face {f:?} repeats a vertex")));
            }
        }

        let mut halfedges = HashMap::with_capacity(3 * faces.len());
        let mut out_neighbor = vec![usize::MAX; n];
        for (fi, f) in faces.iter().enumerate() {
            for c in 0..3 {
                let key = (f[c], f[(c + 1) % 3]);
                if out_neighbor[key.0] == usize::MAX {
                    out_neighbor[key.0] = key.1;
                }
                if halfedges.insert(key, HalfEdge { face: fi, corner: c }).is_some() {
                    return Err(Error::NonManifold(format!(
                        "directed edge {key:?} appears more than once"
                    )));
                }
            }
        }
        for &(a, b) in halfedges.keys() {
            if !halfedges.contains_key(&(b, a)) {
                return Err(Error::NonManifold(format!("edge ({a}, {b}) has only one face")));
            }
        }

        let mut edges = Vec::with_capacity(halfedges.len() / 2);
        let mut edge_index = HashMap::with_capacity(halfedges.len() / 2);
        let mut face_edges = Vec::with_capacity(faces.len());
        let mut degree = vec![0usize; n];
        for f in &faces {
            let mut fe = [0usize; 3];
            for c in 0..3 {
                let (a, b) = (f[(c + 1) % 3], f[(c + 2) % 3]);
                let key = (a.min(b), a.max(b));
                let e = *edge_index.entry(key).or_insert_with(|| {
                    edges.push([key.0, key.1]);
                    degree[key.0] += 1;
                    degree[key.1] += 1;
                    edges.len() - 1
                });
                fe[c] = e;
            }
            face_edges.push(fe);
        }
        if let Some(v) = degree.iter().position(|&d| d == 0) {
            return Err(Error::NonManifold(format!("vertex {v} belongs to no face")));
        }

        let intrinsic = lengths.is_some();
        let geometry: Vec<FaceGeometry> = match &lengths {
            Some(len) => len.iter().map(|&l| intrinsic_geometry(l)).collect(),
            None => faces
                .iter()
                .map(|f| embedded_geometry([&vertices[f[0]], &vertices[f[1]], &vertices[f[2]]]))
                .collect(),
        };
        let total_area: f64 = geometry.iter().map(|g| g.area).sum();

        let surface = SimplicialSurface {
            vertices,
            faces,
            geometry,
            total_area,
            edges,
            edge_index,
            halfedges,
            face_edges,
            intrinsic,
            pattern: OnceLock::new(),
            out_neighbor,
        };

        // Each vertex star must be a single disk.
        for (v, &deg) in degree.iter().enumerate() {
            let ring = surface.one_ring_from(v, surface.any_neighbor(v));
            if ring.len() != deg {
                return Err(Error::NonManifold(format!("vertex {v} is a pinch point")));
            }
        }

        let components = surface.count_components();
        if components != 1 {
            return Err(Error::Disconnected(components));
        }

        let euler = surface.euler_characteristic();
        if euler != 0 {
            return Err(Error::Genus { euler });
        }

        let mean = surface.total_area / surface.faces.len() as f64;
        for (fi, g) in surface.geometry.iter().enumerate() {
            if !(g.area >= DEGENERATE_AREA_RATIO * mean) {
                return Err(Error::DegenerateFace { face: fi, area: g.area });
            }
        }
        let worst = surface.max_abs_cotangent();
        if worst > COT_WARNING {
            warn!("poorly conditioned source mesh: max |cot| = {worst:.3e}");
        }
        Ok(surface)
    }

    fn any_neighbor(&self, v: usize) -> usize {
        self.out_neighbor[v]
    }

    fn count_components(&self) -> usize {
        let n = self.vertices.len();
        let mut parent: Vec<usize> = (0..n).collect();
        fn find(p: &mut [usize], mut x: usize) -> usize {
            while p[x] != x {
                p[x] = p[p[x]];
                x = p[x];
            }
            x
        }
        for &[a, b] in &self.edges {
            let (ra, rb) = (find(&mut parent, a), find(&mut parent, b));
            if ra != rb {
                parent[ra] = rb;
            }
        }
        (0..n).filter(|&v| find(&mut parent, v) == v).count()
    }

    pub fn load_obj(path: impl AsRef<Path>) -> Result<Self> {
        let data = obj::read_obj(path)?;
        Self::new(data.vertices, data.faces)
    }

    pub fn parse_obj(text: &str) -> Result<Self> {
        let data = obj::parse_obj(text)?;
        Self::new(data.vertices, data.faces)
    }

    /// Regular `(theta, phi)` grid triangulated on the torus `shape`, together
    /// with the identity embedding as a vertex map.
    ///
    /// Vertex `(i, j)` (theta index `i`, phi index `j`) has index `j * n_theta + i`.
    pub fn torus_grid(shape: &TorusShape, n_theta: usize, n_phi: usize) -> Result<(Self, VertexMap)> {
        let (vertices, faces) = torus_grid_arrays(shape, n_theta, n_phi)?;
        let surface = Self::new(vertices.clone(), faces)?;
        Ok((surface, VertexMap::new(vertices)))
    }

    /// A flat torus: the same connectivity as [`Self::torus_grid`] but with
    /// the metric of a `width x height` rectangle with opposite sides
    /// identified. Positions are placed on the torus `R = 2, r = 1` for display.
    pub fn flat_torus_grid(n_theta: usize, n_phi: usize, width: f64, height: f64) -> Result<Self> {
        if !(width > 0.0 && height > 0.0) {
            return Err(Error::Config("flat grid needs positive width and height".into()));
        }
        let (vertices, faces) = torus_grid_arrays(&TorusShape::default(), n_theta, n_phi)?;
        let dx = width / n_theta as f64;
        let dy = height / n_phi as f64;
        let diag = dx.hypot(dy);
        // Faces alternate lower (a, b, c) and upper (a, c, d) triangles.
        let lengths = (0..faces.len())
            .map(|k| if k % 2 == 0 { [dy, diag, dx] } else { [dx, dy, diag] })
            .collect();
        Self::with_intrinsic_lengths(vertices, faces, lengths)
    }

    pub fn vertex_count(&self) -> usize {
        self.vertices.len()
    }

    pub fn face_count(&self) -> usize {
        self.faces.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn vertices(&self) -> &[Vec3] {
        &self.vertices
    }

    pub fn faces(&self) -> &[[usize; 3]] {
        &self.faces
    }

    pub fn edges(&self) -> &[[usize; 2]] {
        &self.edges
    }

    pub fn face_edges(&self) -> &[[usize; 3]] {
        &self.face_edges
    }

    pub fn geometry(&self) -> &[FaceGeometry] {
        &self.geometry
    }

    /// True when the metric comes from edge lengths rather than positions.
    pub fn is_intrinsic(&self) -> bool {
        self.intrinsic
    }

    pub fn euler_characteristic(&self) -> i64 {
        self.vertices.len() as i64 - self.edges.len() as i64 + self.faces.len() as i64
    }

    /// Area of face `face`, or `None` for an out-of-range index.
    pub fn face_area(&self, face: usize) -> Option<f64> {
        self.geometry.get(face).map(|g| g.area)
    }

    /// Sum of face areas, accumulated in face order.
    pub fn total_area(&self) -> f64 {
        self.total_area
    }

    pub fn edge_id(&self, a: usize, b: usize) -> Option<usize> {
        self.edge_index.get(&(a.min(b), a.max(b))).copied()
    }

    /// Face containing the directed edge `a -> b` and the corner where it starts.
    pub fn halfedge_face(&self, a: usize, b: usize) -> Option<(usize, usize)> {
        self.halfedges.get(&(a, b)).map(|h| (h.face, h.corner))
    }

    /// Vertex opposite the directed edge `a -> b` in the face containing it.
    pub fn opposite(&self, a: usize, b: usize) -> Option<usize> {
        self.halfedges
            .get(&(a, b))
            .map(|h| self.faces[h.face][(h.corner + 2) % 3])
    }

    /// Neighbors of `v` in counterclockwise order (seen from outside),
    /// starting at `start`.
    pub fn one_ring_from(&self, v: usize, start: usize) -> Vec<usize> {
        let mut ring = vec![start];
        let mut cur = start;
        while let Some(next) = self.opposite(v, cur) {
            if next == start || ring.len() > self.edges.len() {
                break;
            }
            ring.push(next);
            cur = next;
        }
        ring
    }

    pub fn one_ring(&self, v: usize) -> Vec<usize> {
        self.one_ring_from(v, self.any_neighbor(v))
    }

    /// Sum of `v_i . (v_j x v_k)` over faces (six times the enclosed volume).
    pub fn signed_volume(&self) -> f64 {
        self.faces
            .iter()
            .map(|f| {
                let [a, b, c] = [&self.vertices[f[0]], &self.vertices[f[1]], &self.vertices[f[2]]];
                a.dot(&b.cross(c))
            })
            .sum()
    }

    /// Largest corner cotangent magnitude; large values signal near-degenerate
    /// angles for which the cotangent weights become unbounded.
    pub fn max_abs_cotangent(&self) -> f64 {
        self.geometry
            .iter()
            .flat_map(|g| g.cot.iter().map(|c| c.abs()))
            .fold(0.0, f64::max)
    }

    /// Standard cotangent weights `(cot a + cot b) / 2` per edge.
    pub fn cotangent_weights(&self) -> Vec<f64> {
        let mut w = vec![0.0; self.edges.len()];
        for (g, fe) in self.geometry.iter().zip(&self.face_edges) {
            for c in 0..3 {
                w[fe[c]] += 0.5 * g.cot[c];
            }
        }
        w
    }

    /// Sparsity pattern shared by all Laplacians on this surface.
    pub fn laplacian_pattern(&self) -> Arc<LaplacianPattern> {
        self.pattern
            .get_or_init(|| Arc::new(LaplacianPattern::new(self.vertices.len(), &self.edges)))
            .clone()
    }

    pub fn write_obj(&self, path: impl AsRef<Path>, map: Option<&VertexMap>) -> Result<()> {
        let coords = map.map(|m| m.coords.as_slice()).unwrap_or(&self.vertices);
        obj::write_obj(path, coords, &self.faces, None)
    }
}

fn torus_grid_arrays(
    shape: &TorusShape,
    n_theta: usize,
    n_phi: usize,
) -> Result<(Vec<Vec3>, Vec<[usize; 3]>)> {
    if n_theta < 3 || n_phi < 3 {
        return Err(Error::Config(format!(
            "torus grid needs at least 3 x 3 samples, got {n_theta} x {n_phi}"
        )));
    }
    let mut vertices = Vec::with_capacity(n_theta * n_phi);
    for j in 0..n_phi {
        let phi = TAU * j as f64 / n_phi as f64;
        for i in 0..n_theta {
            let theta = TAU * i as f64 / n_theta as f64;
            vertices.push(shape.embed(theta, phi));
        }
    }
    let idx = |i: usize, j: usize| (j % n_phi) * n_theta + (i % n_theta);
    let mut faces = Vec::with_capacity(2 * n_theta * n_phi);
    for j in 0..n_phi {
        for i in 0..n_theta {
            let (a, b, c, d) = (idx(i, j), idx(i + 1, j), idx(i + 1, j + 1), idx(i, j + 1));
            faces.push([a, b, c]);
            faces.push([a, c, d]);
        }
    }
    Ok((vertices, faces))
}

/// Standard generators of a torus grid: the theta-loop at `phi = 0` and the
/// phi-loop at `theta = 0`, crossing once at vertex 0.
pub fn torus_grid_loops(n_theta: usize, n_phi: usize) -> (Vec<usize>, Vec<usize>) {
    let gamma1 = (0..n_theta).collect();
    let gamma2 = (0..n_phi).map(|j| j * n_theta).collect();
    (gamma1, gamma2)
}

/// Adds a seeded uniform displacement in `[-amount, amount]³` to each point.
pub fn jitter(points: &[Vec3], amount: f64, seed: u64) -> Vec<Vec3> {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    points
        .iter()
        .map(|p| {
            let d = Vec3::new(rng.gen_range(-1.0..=1.0), rng.gen_range(-1.0..=1.0), rng.gen_range(-1.0..=1.0));
            p + d * amount
        })
        .collect()
}

/// Image of every vertex under a simplicial map, one row per vertex.
#[derive(Clone, Debug, PartialEq)]
pub struct VertexMap {
    pub coords: Vec<Vec3>,
}

impl VertexMap {
    pub fn new(coords: Vec<Vec3>) -> Self {
        VertexMap { coords }
    }

    pub fn len(&self) -> usize {
        self.coords.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }

    pub fn check_rows(&self, surface: &SimplicialSurface) -> Result<()> {
        if self.coords.len() != surface.vertex_count() {
            return Err(Error::RowCount {
                rows: self.coords.len(),
                vertices: surface.vertex_count(),
            });
        }
        Ok(())
    }

    /// Largest distance of any row from the torus.
    pub fn max_torus_distance(&self, shape: &TorusShape) -> f64 {
        self.coords
            .iter()
            .map(|p| shape.distance(p))
            .fold(0.0, f64::max)
    }

    /// Fails with the offending vertex if any row is off the torus by more
    /// than `1e-9 * r`.
    pub fn validate_on_torus(&self, shape: &TorusShape) -> Result<()> {
        for (i, p) in self.coords.iter().enumerate() {
            shape.check_on_manifold(p).map_err(|e| e.at_vertex(i))?;
        }
        Ok(())
    }

    pub fn scaled(&self, s: f64) -> Self {
        VertexMap::new(self.coords.iter().map(|p| p * s).collect())
    }

    pub fn load_obj(path: impl AsRef<Path>) -> Result<Self> {
        Ok(VertexMap::new(obj::read_obj(path)?.vertices))
    }
}
