//! Initial torus map: a periodic planar map on the fundamental domain,
//! improved by stretch-energy fixed-point iteration, then wrapped onto the torus.

use std::f64::consts::TAU;

use log::{debug, warn};
use nalgebra::{Matrix2, Vector2};

use crate::error::{Error, Result};
use crate::homology::FundamentalDomain;
use crate::mesh::{corner_cotangents, SimplicialSurface, Vec3, VertexMap};
use crate::sparse::SparseLaplacian;
use crate::torus::TorusShape;

pub const DEFAULT_SEM_ITERS: usize = 50;
pub const DEFAULT_SEM_TOL: f64 = 1e-6;

/// Lattice coordinates per vertex in `[0, 1)²`, with the integer shift that
/// unwraps each face corner into one connected planar triangle.
#[derive(Clone, Debug, PartialEq)]
pub struct PeriodicPlanarMap {
    pub uv: Vec<[f64; 2]>,
    pub shifts: Vec<[[i64; 2]; 3]>,
    pub w1: [f64; 2],
    pub w2: [f64; 2],
}

fn basis(w1: [f64; 2], w2: [f64; 2]) -> Matrix2<f64> {
    Matrix2::new(w1[0], w2[0], w1[1], w2[1])
}

impl PeriodicPlanarMap {
    fn basis(&self) -> Matrix2<f64> {
        basis(self.w1, self.w2)
    }

    /// Face corners in lattice coordinates.
    pub fn unwrapped(&self, surface: &SimplicialSurface, face: usize) -> [[f64; 2]; 3] {
        let t = surface.faces()[face];
        let k = self.shifts[face];
        std::array::from_fn(|c| [self.uv[t[c]][0] + k[c][0] as f64, self.uv[t[c]][1] + k[c][1] as f64])
    }

    /// Face corners in the plane of the fundamental domain.
    pub fn planar(&self, surface: &SimplicialSurface, face: usize) -> [Vec3; 3] {
        let b = self.basis();
        self.unwrapped(surface, face).map(|p| {
            let q = b * Vector2::new(p[0], p[1]);
            Vec3::new(q.x, q.y, 0.0)
        })
    }

    fn signed_area(p: &[Vec3; 3]) -> f64 {
        0.5 * (p[1] - p[0]).cross(&(p[2] - p[0])).z
    }

    /// Planar area over source area, per face.
    pub fn planar_area_ratios(&self, surface: &SimplicialSurface) -> Vec<f64> {
        (0..surface.face_count())
            .map(|f| Self::signed_area(&self.planar(surface, f)) / surface.geometry()[f].area)
            .collect()
    }

    /// `Σ_τ A(τ)² / |τ|` over planar triangles.
    pub fn planar_energy(&self, surface: &SimplicialSurface) -> f64 {
        self.planar_area_ratios(surface)
            .iter()
            .zip(surface.geometry())
            .map(|(r, g)| r * r * g.area)
            .sum()
    }

    pub fn folded_faces(&self, surface: &SimplicialSurface) -> usize {
        (0..surface.face_count())
            .filter(|&f| !(Self::signed_area(&self.planar(surface, f)) > 0.0))
            .count()
    }

    /// Rebuild from planar positions and planar face translations.
    fn from_planar(
        surface: &SimplicialSurface,
        p: &[[f64; 2]],
        shifts: &[[[i64; 2]; 3]],
        w1: [f64; 2],
        w2: [f64; 2],
    ) -> Result<Self> {
        let inv = basis(w1, w2).try_inverse().ok_or(Error::SingularLattice)?;
        let mut uv = Vec::with_capacity(p.len());
        let mut base = Vec::with_capacity(p.len());
        for q in p {
            let l = inv * Vector2::new(q[0], q[1]);
            let m = [l.x.floor(), l.y.floor()];
            uv.push([l.x - m[0], l.y - m[1]]);
            base.push([m[0] as i64, m[1] as i64]);
        }
        let shifts = surface
            .faces()
            .iter()
            .zip(shifts)
            .map(|(t, k)| std::array::from_fn(|c| [k[c][0] + base[t[c]][0], k[c][1] + base[t[c]][1]]))
            .collect();
        Ok(PeriodicPlanarMap { uv, shifts, w1, w2 })
    }
}

/// Change basis so the lattice becomes `Z²`, reduce coordinates mod 1 and
/// record per-corner shifts.
pub fn normalize_domain(surface: &SimplicialSurface, domain: &FundamentalDomain) -> Result<PeriodicPlanarMap> {
    let b = basis(domain.w1, domain.w2);
    if !(b.determinant().abs() > 1e-14) {
        return Err(Error::SingularLattice);
    }
    let inv = b.try_inverse().ok_or(Error::SingularLattice)?;
    let lattice: Vec<Vector2<f64>> = domain
        .coords
        .iter()
        .map(|g| inv * Vector2::new(g[0], g[1]))
        .collect();
    let n = surface.vertex_count();
    let mut uv = vec![[f64::NAN; 2]; n];
    for (cv, &v) in domain.correspondence.iter().enumerate() {
        if uv[v][0].is_nan() {
            let l = lattice[cv];
            uv[v] = [l.x - l.x.floor(), l.y - l.y.floor()];
            // Guard against frac() rounding up to exactly 1.
            for x in &mut uv[v] {
                if *x >= 1.0 {
                    *x = 0.0;
                }
            }
        }
    }
    let shifts = domain
        .faces
        .iter()
        .map(|t| {
            std::array::from_fn(|c| {
                let v = domain.correspondence[t[c]];
                let l = lattice[t[c]];
                [(l.x - uv[v][0]).round() as i64, (l.y - uv[v][1]).round() as i64]
            })
        })
        .collect();
    Ok(PeriodicPlanarMap { uv, shifts, w1: domain.w1, w2: domain.w2 })
}

/// Iteration record of the planar fixed-point solve.
#[derive(Clone, Debug, Default)]
pub struct SemReport {
    /// Planar stretch energy of the input and of each accepted iterate.
    pub energies: Vec<f64>,
    pub converged: bool,
}

/// Fixed-point iteration `L_S(g_k) g_{k+1} = b(g_k)` on the periodic planar
/// map, where `b` carries the lattice translations across the cut. Steps
/// that raise the energy or fold a face are rejected and end the iteration.
pub fn sem_fixed_point(
    surface: &SimplicialSurface,
    map: &PeriodicPlanarMap,
    max_iters: usize,
    tol: f64,
) -> Result<(PeriodicPlanarMap, SemReport)> {
    let mut current = map.clone();
    let mut energy = current.planar_energy(surface);
    let mut report = SemReport { energies: vec![energy], converged: false };
    let b = current.basis();
    for it in 0..max_iters {
        let next = match sem_step(surface, &current, &b) {
            Ok(m) => m,
            Err(e) => {
                warn!("fixed-point step {it} failed: {e}; keeping the last iterate");
                break;
            }
        };
        if next.folded_faces(surface) > 0 {
            warn!("fixed-point step {it} folds faces; keeping the last iterate");
            break;
        }
        let e_next = next.planar_energy(surface);
        if !(e_next <= energy) {
            debug!("fixed-point step {it} raises the energy; stopping");
            report.converged = true;
            break;
        }
        let rel = (energy - e_next) / energy;
        current = next;
        energy = e_next;
        report.energies.push(energy);
        if rel < tol {
            report.converged = true;
            break;
        }
    }
    Ok((current, report))
}

fn sem_step(surface: &SimplicialSurface, map: &PeriodicPlanarMap, b: &Matrix2<f64>) -> Result<PeriodicPlanarMap> {
    let n = surface.vertex_count();
    let mut weights = vec![0.0; surface.edge_count()];
    let mut rhs = [vec![0.0; n], vec![0.0; n]];
    let tr = |k: [i64; 2]| b * Vector2::new(k[0] as f64, k[1] as f64);
    for (fi, t) in surface.faces().iter().enumerate() {
        let p = map.planar(surface, fi);
        let area = PeriodicPlanarMap::signed_area(&p);
        let cot = corner_cotangents([&p[0], &p[1], &p[2]]).ok_or(Error::DegenerateImageFace { face: fi })?;
        let ratio = area / (2.0 * surface.geometry()[fi].area);
        let k = map.shifts[fi];
        for c in 0..3 {
            let (i, j) = ((c + 1) % 3, (c + 2) % 3);
            let w = cot[c] * ratio;
            weights[surface.face_edges()[fi][c]] += w;
            // Stationarity of ½ Σ w |(x_i + t_i) − (x_j + t_j)|² in x_i.
            let d = tr(k[i]) - tr(k[j]);
            for col in 0..2 {
                rhs[col][t[i]] -= w * d[col];
                rhs[col][t[j]] += w * d[col];
            }
        }
    }
    let lap = SparseLaplacian::from_edge_weights(surface, &weights);
    let solver = lap.grounded(0)?;
    let x = solver.solve(&rhs[0])?;
    let y = solver.solve(&rhs[1])?;
    // Keep vertex 0 where it was; the energy is translation invariant.
    let p0 = b * Vector2::new(map.uv[0][0], map.uv[0][1]);
    let planar: Vec<[f64; 2]> = x.iter().zip(&y).map(|(a, c)| [a + p0.x, c + p0.y]).collect();
    PeriodicPlanarMap::from_planar(surface, &planar, &map.shifts, map.w1, map.w2)
}

/// `(θ, φ) = 2π (u, v)` on the torus.
pub fn wrap_to_torus(map: &PeriodicPlanarMap, shape: &TorusShape) -> VertexMap {
    VertexMap::new(map.uv.iter().map(|p| shape.embed(TAU * p[0], TAU * p[1])).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::energy::objective;
    use crate::homology::{fundamental_domain, LoopBasis};
    use crate::mesh::torus_grid_loops;
    use crate::quality::sd_over_mean;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn flat(n: usize, w: f64, h: f64) -> (SimplicialSurface, PeriodicPlanarMap) {
        let s = SimplicialSurface::flat_torus_grid(n, n, w, h).unwrap();
        let (g1, g2) = torus_grid_loops(n, n);
        let loops = LoopBasis::new(&s, g1, g2).unwrap();
        let d = fundamental_domain(&s, &loops).unwrap();
        let m = normalize_domain(&s, &d).unwrap();
        (s, m)
    }

    #[test]
    fn lattice_change_halves_second_coordinate() {
        let (s, m) = flat(8, 1.0, 2.0);
        assert!((m.w2[1] - 2.0).abs() < 1e-8);
        for p in &m.uv {
            assert!((0.0..1.0).contains(&p[0]) && (0.0..1.0).contains(&p[1]));
        }
        // Grid spacing 1/8 in both lattice directions.
        let mut vs: Vec<f64> = m.uv.iter().map(|p| p[1]).collect();
        vs.sort_by(f64::total_cmp);
        vs.dedup_by(|a, b| (*a - *b).abs() < 1e-9);
        assert_eq!(vs.len(), 8);
        assert!(m.planar_area_ratios(&s).iter().all(|r| *r > 0.0));
    }

    #[test]
    fn zero_iterations_returns_input() {
        let (s, m) = flat(8, 1.0, 1.0);
        let (out, rep) = sem_fixed_point(&s, &m, 0, DEFAULT_SEM_TOL).unwrap();
        assert_eq!(out, m);
        assert_eq!(rep.energies.len(), 1);
    }

    #[test]
    fn uniform_grid_is_a_fixed_point() {
        let (s, m) = flat(8, 1.0, 1.0);
        let (_, rep) = sem_fixed_point(&s, &m, DEFAULT_SEM_ITERS, DEFAULT_SEM_TOL).unwrap();
        assert!(rep.converged);
        assert!(rep.energies.len() <= 3, "{:?}", rep.energies);
        let first = rep.energies[0];
        assert!((first - rep.energies.last().unwrap()).abs() / first < DEFAULT_SEM_TOL);
    }

    #[test]
    fn jittered_grid_improves() {
        let (s, mut m) = flat(12, 1.0, 1.0);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for p in &mut m.uv {
            p[0] += rng.gen_range(-0.1..0.1) / 12.0;
            p[1] += rng.gen_range(-0.1..0.1) / 12.0;
        }
        let before = sd_over_mean(&m.planar_area_ratios(&s));
        let (out, rep) = sem_fixed_point(&s, &m, DEFAULT_SEM_ITERS, DEFAULT_SEM_TOL).unwrap();
        let after = sd_over_mean(&out.planar_area_ratios(&s));
        assert!(after < before, "{before} -> {after}");
        for w in rep.energies.windows(2) {
            assert!(w[1] <= w[0]);
        }
    }

    #[test]
    fn wrap_examples() {
        let shape = TorusShape::default();
        let m = PeriodicPlanarMap { uv: vec![[0.0, 0.0], [0.5, 0.5]], shifts: vec![], w1: [1.0, 0.0], w2: [0.0, 1.0] };
        let f = wrap_to_torus(&m, &shape);
        assert_eq!(f.coords[0], Vec3::new(3.0, 0.0, 0.0));
        assert!((f.coords[1] - Vec3::new(-1.0, 0.0, 0.0)).norm() < 1e-15);
        assert!(f.max_torus_distance(&shape) < 1e-12);
    }

    #[test]
    fn flat_domain_wraps_to_identity_embedding() {
        let n = 16;
        let (_, m) = flat(n, 1.0, 1.0);
        let shape = TorusShape::default();
        let f = wrap_to_torus(&m, &shape);
        let (rev, _) = SimplicialSurface::torus_grid(&shape, n, n).unwrap();
        let e = objective(&rev, &f.coords).unwrap().e;
        assert!(e.abs() < 1e-8, "E = {e}");
    }
}
