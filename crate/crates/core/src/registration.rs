//! Registration of two genus-one surfaces through their torus maps:
//! angle extraction, a common torus, landmark-constrained minimization,
//! correspondence transfer, morphing and texture coordinates.

use std::collections::HashMap;
use std::f64::consts::TAU;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::energy::LandmarkSet;
use crate::error::{Error, Result};
use crate::mesh::{SimplicialSurface, Vec3, VertexMap};
use crate::obj;
use crate::optim::{solve, IterationTrace, OptimizerConfig, RegistrationObjective};
use crate::torus::{angles_theta, TorusShape};

fn wrap_angle(a: f64) -> f64 {
    let w = a.rem_euclid(TAU);
    // rem_euclid can round up to TAU itself.
    if w >= TAU {
        0.0
    } else {
        w
    }
}

/// Angles `(θ, φ) ∈ [0, 2π)²` of each row of an on-manifold map.
pub fn torus_coordinates(f: &VertexMap, shape: &TorusShape) -> Result<Vec<[f64; 2]>> {
    f.coords
        .iter()
        .enumerate()
        .map(|(i, p)| {
            shape.check_on_manifold(p).map_err(|e| e.at_vertex(i))?;
            angles_theta(p).map_err(|e| e.at_vertex(i))?;
            let rho = (p.x * p.x + p.y * p.y).sqrt() - shape.major;
            Ok([wrap_angle(p.y.atan2(p.x)), wrap_angle(p.z.atan2(rho))])
        })
        .collect()
}

pub fn embed_coordinates(coords: &[[f64; 2]], shape: &TorusShape) -> VertexMap {
    VertexMap::new(coords.iter().map(|c| shape.embed(c[0], c[1])).collect())
}

/// Re-embeds both maps on the torus with averaged radii.
pub fn unify_tori(
    f: &VertexMap,
    shape_f: &TorusShape,
    g: &VertexMap,
    shape_g: &TorusShape,
) -> Result<(VertexMap, VertexMap, TorusShape)> {
    let shape = TorusShape::new(0.5 * (shape_f.major + shape_g.major), 0.5 * (shape_f.minor + shape_g.minor))?;
    let cf = torus_coordinates(f, shape_f)?;
    let cg = torus_coordinates(g, shape_g)?;
    Ok((embed_coordinates(&cf, &shape), embed_coordinates(&cg, &shape), shape))
}

/// Minimizes `E(f) + λ ‖f_P − g_Q‖²` from `f0` with the target map `g` frozen.
pub fn register(
    surface: &SimplicialSurface,
    f0: &VertexMap,
    g: &VertexMap,
    landmarks: &LandmarkSet,
    shape: &TorusShape,
    config: &OptimizerConfig,
) -> Result<(VertexMap, IterationTrace)> {
    landmarks.validate(surface.vertex_count(), g.len())?;
    let obj = RegistrationObjective { surface, g_at_q: landmarks.targets(&g.coords), landmarks };
    solve(&obj, f0, shape, config)
}

/// Landmark residual `‖f_P − g_Q‖_F`.
pub fn landmark_residual(f: &VertexMap, g: &VertexMap, landmarks: &LandmarkSet) -> f64 {
    landmarks.residual_sq(&f.coords, &landmarks.targets(&g.coords)).sqrt()
}

/// Point location in the angle domain of a torus map, with periodic wrap.
pub struct AngleLocator {
    faces: Vec<[usize; 3]>,
    /// Corner angles unwrapped next to corner 0.
    corners: Vec<[[f64; 2]; 3]>,
    k: usize,
    buckets: Vec<Vec<usize>>,
}

fn unwrap_near(a: f64, reference: f64) -> f64 {
    a + TAU * ((reference - a) / TAU).round()
}

fn barycentric(p: [f64; 2], t: &[[f64; 2]; 3]) -> Option<[f64; 3]> {
    let d = (t[1][0] - t[0][0]) * (t[2][1] - t[0][1]) - (t[2][0] - t[0][0]) * (t[1][1] - t[0][1]);
    if d == 0.0 || !d.is_finite() {
        return None;
    }
    let l1 = ((p[0] - t[0][0]) * (t[2][1] - t[0][1]) - (t[2][0] - t[0][0]) * (p[1] - t[0][1])) / d;
    let l2 = ((t[1][0] - t[0][0]) * (p[1] - t[0][1]) - (p[0] - t[0][0]) * (t[1][1] - t[0][1])) / d;
    Some([1.0 - l1 - l2, l1, l2])
}

impl AngleLocator {
    pub fn new(faces: &[[usize; 3]], coords: &[[f64; 2]]) -> Self {
        let k = ((faces.len() as f64).sqrt().ceil() as usize).max(1);
        let cell = TAU / k as f64;
        let mut buckets = vec![Vec::new(); k * k];
        let mut corners = Vec::with_capacity(faces.len());
        for (fi, t) in faces.iter().enumerate() {
            let c0 = coords[t[0]];
            let c: [[f64; 2]; 3] = std::array::from_fn(|j| {
                let q = coords[t[j]];
                [unwrap_near(q[0], c0[0]), unwrap_near(q[1], c0[1])]
            });
            let lo = |a: usize| c.iter().map(|p| p[a]).fold(f64::INFINITY, f64::min);
            let hi = |a: usize| c.iter().map(|p| p[a]).fold(f64::NEG_INFINITY, f64::max);
            let (i0, i1) = ((lo(0) / cell).floor() as i64, (hi(0) / cell).floor() as i64);
            let (j0, j1) = ((lo(1) / cell).floor() as i64, (hi(1) / cell).floor() as i64);
            // Faces spanning more than the whole domain are corrupt; cap the span.
            for i in i0..=i1.min(i0 + k as i64 - 1) {
                for j in j0..=j1.min(j0 + k as i64 - 1) {
                    let b = i.rem_euclid(k as i64) as usize * k + j.rem_euclid(k as i64) as usize;
                    if buckets[b].last() != Some(&fi) {
                        buckets[b].push(fi);
                    }
                }
            }
            corners.push(c);
        }
        AngleLocator { faces: faces.to_vec(), corners, k, buckets }
    }

    /// Face and barycentric weights of the face containing `p`; if none
    /// contains it, the candidate whose smallest weight is largest.
    pub fn locate(&self, p: [f64; 2]) -> Option<(usize, [f64; 3])> {
        let cell = TAU / self.k as f64;
        let p = [wrap_angle(p[0]), wrap_angle(p[1])];
        let b = ((p[0] / cell) as usize).min(self.k - 1) * self.k + ((p[1] / cell) as usize).min(self.k - 1);
        let mut best: Option<(usize, [f64; 3])> = None;
        let score = |w: &[f64; 3]| w[0].min(w[1]).min(w[2]);
        for &fi in &self.buckets[b] {
            let c = &self.corners[fi];
            let q = [unwrap_near(p[0], c[0][0]), unwrap_near(p[1], c[0][1])];
            let Some(w) = barycentric(q, c) else { continue };
            if score(&w) >= 0.0 {
                return Some((fi, w));
            }
            if best.is_none_or(|(_, bw)| score(&w) > score(&bw)) {
                best = Some((fi, w));
            }
        }
        best
    }

    pub fn face(&self, fi: usize) -> [usize; 3] {
        self.faces[fi]
    }
}

/// Correspondence `Φ: M → N`: each `f(v)` is located on the torus image of
/// `N` and the vertices of `N` are interpolated barycentrically.
pub fn transfer(
    f: &VertexMap,
    g: &VertexMap,
    target: &SimplicialSurface,
    shape: &TorusShape,
) -> Result<VertexMap> {
    let cf = torus_coordinates(f, shape)?;
    let cg = torus_coordinates(g, shape)?;
    let loc = AngleLocator::new(target.faces(), &cg);
    let nv = target.vertices();
    cf.iter()
        .enumerate()
        .map(|(i, &p)| {
            let (fi, w) = loc
                .locate(p)
                .ok_or_else(|| Error::Solver(format!("vertex {i} could not be located on the target map")))?;
            let t = loc.face(fi);
            Ok(nv[t[0]] * w[0] + nv[t[1]] * w[1] + nv[t[2]] * w[2])
        })
        .collect::<Result<Vec<_>>>()
        .map(VertexMap::new)
}

pub const DEFAULT_MORPH_TIMES: [f64; 4] = [0.0, 1.0 / 3.0, 2.0 / 3.0, 1.0];

#[derive(Clone, Debug, PartialEq)]
pub struct MorphSnapshot {
    pub t: f64,
    pub coords: Vec<Vec3>,
}

/// `H(v, t) = (1 − t) v + t Φ(v)` at each requested `t`.
pub fn morph(source: &[Vec3], phi: &VertexMap, ts: &[f64]) -> Result<Vec<MorphSnapshot>> {
    if source.len() != phi.len() {
        return Err(Error::RowCount { rows: phi.len(), vertices: source.len() });
    }
    Ok(ts
        .iter()
        .map(|&t| MorphSnapshot {
            t,
            coords: source.iter().zip(&phi.coords).map(|(v, p)| v * (1.0 - t) + p * t).collect(),
        })
        .collect())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct UvTransform {
    pub scale: f64,
    pub translate: [f64; 2],
}

impl Default for UvTransform {
    fn default() -> Self {
        UvTransform { scale: 1.0, translate: [0.0, 0.0] }
    }
}

/// Per-corner texture coordinates with seam vertices duplicated.
#[derive(Clone, Debug, PartialEq)]
pub struct TextureUv {
    pub uvs: Vec<[f64; 2]>,
    pub face_uv: Vec<[usize; 3]>,
}

/// From periodic per-vertex coordinates in `[0, 1)²`: every face is
/// unwrapped next to its first corner and shifted so its lowest corner
/// lies in `[0, 1)`; each distinct (vertex, shift) becomes one UV entry.
pub fn texture_uv(faces: &[[usize; 3]], uv: &[[f64; 2]], transform: &UvTransform) -> TextureUv {
    let mut index: HashMap<(usize, i64, i64), usize> = HashMap::new();
    let mut uvs = Vec::new();
    let mut face_uv = Vec::with_capacity(faces.len());
    for t in faces {
        let base = uv[t[0]];
        let mut shift = [[0i64; 2]; 3];
        for c in 0..3 {
            for a in 0..2 {
                shift[c][a] = (base[a] - uv[t[c]][a]).round() as i64;
            }
        }
        for a in 0..2 {
            let lo = (0..3).map(|c| uv[t[c]][a] + shift[c][a] as f64).fold(f64::INFINITY, f64::min);
            let s = lo.floor() as i64;
            for sh in &mut shift {
                sh[a] -= s;
            }
        }
        let mut ids = [0; 3];
        for c in 0..3 {
            let key = (t[c], shift[c][0], shift[c][1]);
            ids[c] = *index.entry(key).or_insert_with(|| {
                let p = uv[t[c]];
                uvs.push([
                    transform.scale * (p[0] + shift[c][0] as f64) + transform.translate[0],
                    transform.scale * (p[1] + shift[c][1] as f64) + transform.translate[1],
                ]);
                uvs.len() - 1
            });
        }
        face_uv.push(ids);
    }
    TextureUv { uvs, face_uv }
}

/// `(θ, φ) / 2π`.
pub fn angle_uv(coords: &[[f64; 2]]) -> Vec<[f64; 2]> {
    coords.iter().map(|c| [c[0] / TAU, c[1] / TAU]).collect()
}

pub fn write_textured_obj(path: impl AsRef<Path>, vertices: &[Vec3], faces: &[[usize; 3]], tex: &TextureUv) -> Result<()> {
    obj::write_obj(path, vertices, faces, Some((&tex.uvs, &tex.face_uv)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::obj::parse_obj;
    use crate::optim::{Method, StretchObjective};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::FRAC_PI_2;

    fn shape() -> TorusShape {
        TorusShape::default()
    }

    #[test]
    fn coordinate_examples() {
        let s = shape();
        let c = torus_coordinates(&VertexMap::new(vec![Vec3::new(3.0, 0.0, 0.0), Vec3::new(0.0, 3.0, 0.0)]), &s).unwrap();
        assert_eq!(c[0], [0.0, 0.0]);
        assert!((c[1][0] - FRAC_PI_2).abs() < 1e-15 && c[1][1] == 0.0);
        let bottom = torus_coordinates(&VertexMap::new(vec![Vec3::new(2.0, 0.0, -1.0)]), &s).unwrap();
        assert!((bottom[0][1] - 1.5 * std::f64::consts::PI).abs() < 1e-15);
    }

    #[test]
    fn coordinate_round_trip() {
        let s = TorusShape::new(3.0, 1.2).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..1000 {
            let (t, p) = (rng.gen_range(0.0..TAU), rng.gen_range(0.0..TAU));
            let x = s.embed(t, p);
            let c = torus_coordinates(&VertexMap::new(vec![x]), &s).unwrap()[0];
            assert!((s.embed(c[0], c[1]) - x).norm() < 1e-10);
            let da = |a: f64, b: f64| (a - b + TAU / 2.0).rem_euclid(TAU) - TAU / 2.0;
            assert!(da(c[0], t).abs() < 1e-10 && da(c[1], p).abs() < 1e-10);
        }
    }

    #[test]
    fn off_manifold_rejected() {
        let r = torus_coordinates(&VertexMap::new(vec![Vec3::new(3.1, 0.0, 0.0)]), &shape());
        assert!(matches!(r, Err(Error::NotOnManifold { .. })));
    }

    #[test]
    fn unify_examples() {
        let (_, f) = SimplicialSurface::torus_grid(&shape(), 6, 6).unwrap();
        let (f2, g2, s) = unify_tori(&f, &shape(), &f, &shape()).unwrap();
        assert_eq!(s, shape());
        assert!(f2.coords.iter().zip(&f.coords).all(|(a, b)| (a - b).norm() < 1e-10));
        let other = TorusShape::new(4.0, 0.5).unwrap();
        let (_, g) = SimplicialSurface::torus_grid(&other, 6, 6).unwrap();
        let (f3, g3, s) = unify_tori(&f, &shape(), &g, &other).unwrap();
        assert_eq!((s.major, s.minor), (3.0, 0.75));
        assert!(f3.max_torus_distance(&s) < 1e-12 && g3.max_torus_distance(&s) < 1e-12);
        assert_eq!(g2, f2);
    }

    fn jittered(f: &VertexMap, s: &TorusShape, amount: f64, seed: u64) -> VertexMap {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let q: Vec<Vec3> = f.coords.iter().map(|p| p + Vec3::from_fn(|_, _| rng.gen_range(-1.0..1.0)) * amount).collect();
        VertexMap::new(s.project_rows(&q).unwrap())
    }

    #[test]
    fn zero_landmarks_match_plain_solve() {
        let s = shape();
        let (m, f) = SimplicialSurface::torus_grid(&s, 8, 8).unwrap();
        let f0 = jittered(&f, &s, 0.05, 1);
        let cfg = OptimizerConfig { max_iters: 10, ..OptimizerConfig::with_method(Method::Rcg) };
        let (a, ta) = register(&m, &f0, &f, &LandmarkSet::empty(), &s, &cfg).unwrap();
        let (b, tb) = solve(&StretchObjective { surface: &m }, &f0, &s, &cfg).unwrap();
        assert_eq!(a, b);
        assert_eq!(ta.energies(), tb.energies());
        let lm = LandmarkSet::new(vec![(1, 1), (9, 9)], 0.0).unwrap();
        let (c, _) = register(&m, &f0, &f, &lm, &s, &cfg).unwrap();
        assert_eq!(c, b);
    }

    #[test]
    fn aligned_landmarks_leave_initial_energy() {
        let s = shape();
        let (m, f) = SimplicialSurface::torus_grid(&s, 8, 8).unwrap();
        let f0 = jittered(&f, &s, 0.05, 3);
        let lm = LandmarkSet::new(vec![(0, 0), (5, 5)], 0.2).unwrap();
        let cfg = OptimizerConfig { max_iters: 1, ..Default::default() };
        let (_, tr) = register(&m, &f0, &f0, &lm, &s, &cfg).unwrap();
        let e0 = crate::energy::objective(&m, &f0.coords).unwrap().e;
        assert_eq!(tr.records[0].e, e0);
        assert_eq!(tr.records[0].residual, Some(0.0));
    }

    #[test]
    fn out_of_range_landmarks() {
        let s = shape();
        let (m, f) = SimplicialSurface::torus_grid(&s, 4, 4).unwrap();
        let lm = LandmarkSet::new(vec![(0, 99)], 0.2).unwrap();
        let r = register(&m, &f, &f, &lm, &s, &OptimizerConfig::default());
        assert!(matches!(r, Err(Error::Landmarks(_))));
    }

    #[test]
    fn identity_transfer_is_identity() {
        let s = shape();
        let (m, f) = SimplicialSurface::torus_grid(&s, 8, 8).unwrap();
        let phi = transfer(&f, &f, &m, &s).unwrap();
        for (a, b) in phi.coords.iter().zip(m.vertices()) {
            assert!((a - b).norm() < 1e-10);
        }
    }

    #[test]
    fn transfer_interpolates_inside_faces() {
        let s = shape();
        let (n, g) = SimplicialSurface::torus_grid(&s, 8, 8).unwrap();
        // Points at face centroids in angle space land at the centroid of the face's vertices.
        let c = torus_coordinates(&g, &s).unwrap();
        let loc = AngleLocator::new(n.faces(), &c);
        for (fi, t) in n.faces().iter().enumerate().step_by(7) {
            let u: Vec<[f64; 2]> = t.iter().map(|&v| c[v]).collect();
            let p0 = u[0];
            let cen = [
                (p0[0] + unwrap_near(u[1][0], p0[0]) + unwrap_near(u[2][0], p0[0])) / 3.0,
                (p0[1] + unwrap_near(u[1][1], p0[1]) + unwrap_near(u[2][1], p0[1])) / 3.0,
            ];
            let (found, w) = loc.locate(cen).unwrap();
            assert_eq!(found, fi);
            assert!(w.iter().all(|x| (x - 1.0 / 3.0).abs() < 1e-12));
        }
    }

    #[test]
    fn morph_endpoints_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let v: Vec<Vec3> = (0..50).map(|_| Vec3::from_fn(|_, _| rng.gen_range(-3.0..3.0))).collect();
        let phi = VertexMap::new((0..50).map(|_| Vec3::from_fn(|_, _| rng.gen_range(-3.0..3.0))).collect());
        let snaps = morph(&v, &phi, &[0.0, 0.5, 1.0]).unwrap();
        assert_eq!(snaps[0].coords, v);
        assert_eq!(snaps[2].coords, phi.coords);
        for ((m, a), b) in snaps[1].coords.iter().zip(&v).zip(&phi.coords) {
            for k in 0..3 {
                assert_eq!(m[k], 0.5 * a[k] + 0.5 * b[k]);
            }
        }
    }

    #[test]
    fn uv_examples() {
        let faces = [[0, 1, 2]];
        let t = texture_uv(&faces, &[[0.0, 0.0], [0.1, 0.0], [0.0, 0.1]], &UvTransform::default());
        assert_eq!(t.uvs[0], [0.0, 0.0]);
        let tr = UvTransform { scale: 2.0, translate: [0.1, 0.1] };
        let t = texture_uv(&faces, &[[0.2, 0.3], [0.25, 0.3], [0.2, 0.35]], &tr);
        assert_eq!(t.uvs[0], [2.0 * 0.2 + 0.1, 2.0 * 0.3 + 0.1]);
    }

    #[test]
    fn seam_faces_unwrap_after_reimport() {
        let s = shape();
        let (m, f) = SimplicialSurface::torus_grid(&s, 12, 10).unwrap();
        let uv = angle_uv(&torus_coordinates(&f, &s).unwrap());
        let tex = texture_uv(m.faces(), &uv, &UvTransform::default());
        assert!(tex.uvs.len() > m.vertex_count());
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("tex.obj");
        write_textured_obj(&path, m.vertices(), m.faces(), &tex).unwrap();
        let data = parse_obj(&std::fs::read_to_string(&path).unwrap()).unwrap();
        let ft = data.face_tex.unwrap();
        for t in ft {
            for a in 0..2 {
                let vals: Vec<f64> = t.iter().map(|&k| data.tex_coords[k][a]).collect();
                let span = vals.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
                    - vals.iter().cloned().fold(f64::INFINITY, f64::min);
                assert!(span <= 0.5, "span {span}");
            }
        }
    }
}
