//! Distortion metrics, fold detection and a local unfolding pass.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::energy::{objective, EnergyReport};
use crate::error::Result;
use crate::mesh::{triangle_area, SimplicialSurface, Vec3, VertexMap};
use crate::torus::TorusShape;

/// `|f(τ)| / |τ|` per face. Degenerate image faces give 0.
pub fn area_ratios(surface: &SimplicialSurface, f: &[Vec3]) -> Vec<f64> {
    surface
        .faces()
        .iter()
        .zip(surface.geometry())
        .map(|(t, g)| triangle_area(&f[t[0]], &f[t[1]], &f[t[2]]) / g.area)
        .collect()
}

/// Population standard deviation over mean. Empty input gives 0.
pub fn sd_over_mean(ratios: &[f64]) -> f64 {
    if ratios.is_empty() {
        return 0.0;
    }
    let n = ratios.len() as f64;
    let mean = ratios.iter().sum::<f64>() / n;
    let var = ratios.iter().map(|r| (r - mean) * (r - mean)).sum::<f64>() / n;
    var.sqrt() / mean
}

fn is_folded(shape: &TorusShape, p: [&Vec3; 3]) -> bool {
    let n_img = (p[1] - p[0]).cross(&(p[2] - p[0]));
    let mut n_tor = Vec3::zeros();
    for q in p {
        match shape.normal(q) {
            Ok(n) => n_tor += n,
            // No defined normal: cannot certify orientation.
            Err(_) => return true,
        }
    }
    n_img.dot(&n_tor) < 0.0
}

/// Faces whose image normal points against the mean torus normal at their
/// image vertices, in increasing order.
pub fn folded_faces(surface: &SimplicialSurface, f: &[Vec3], shape: &TorusShape) -> Vec<usize> {
    surface
        .faces()
        .iter()
        .enumerate()
        .filter(|(_, t)| is_folded(shape, [&f[t[0]], &f[t[1]], &f[t[2]]]))
        .map(|(i, _)| i)
        .collect()
}

pub fn count_folds(surface: &SimplicialSurface, f: &[Vec3], shape: &TorusShape) -> usize {
    folded_faces(surface, f, shape).len()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QualityReport {
    pub sd_over_mean: f64,
    pub folds: usize,
    #[serde(rename = "E")]
    pub e: f64,
    #[serde(rename = "E_S")]
    pub e_s: f64,
    pub area: f64,
    #[serde(skip)]
    pub ratios: Vec<f64>,
}

impl QualityReport {
    pub fn compute(surface: &SimplicialSurface, f: &VertexMap, shape: &TorusShape) -> Result<Self> {
        f.check_rows(surface)?;
        let EnergyReport { e_s, area, e, .. } = objective(surface, &f.coords)?;
        let ratios = area_ratios(surface, &f.coords);
        Ok(QualityReport {
            sd_over_mean: sd_over_mean(&ratios),
            folds: count_folds(surface, &f.coords, shape),
            e,
            e_s,
            area,
            ratios,
        })
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct CorrectionReport {
    pub folds_before: usize,
    pub folds_after: usize,
    pub rounds: usize,
}

const DAMPING: f64 = 0.5;

/// Moves the vertices of folded faces halfway toward the projected centroid
/// of their 1-ring images, re-projecting onto the torus. A round that would
/// raise the fold count is discarded and the moving set widened by one ring.
pub fn correct_bijectivity(
    surface: &SimplicialSurface,
    f: &VertexMap,
    shape: &TorusShape,
    max_rounds: usize,
) -> (VertexMap, CorrectionReport) {
    let mut cur = f.clone();
    let mut folds = folded_faces(surface, &cur.coords, shape);
    let mut report = CorrectionReport { folds_before: folds.len(), folds_after: folds.len(), rounds: 0 };
    let rings: Vec<Vec<usize>> = (0..surface.vertex_count()).map(|v| surface.one_ring(v)).collect();
    let mut widen = 0;
    while !folds.is_empty() && report.rounds < max_rounds {
        report.rounds += 1;
        let mut moving: BTreeSet<usize> = folds.iter().flat_map(|&fi| surface.faces()[fi]).collect();
        for _ in 0..widen {
            let extra: Vec<usize> = moving.iter().flat_map(|&v| rings[v].iter().copied()).collect();
            moving.extend(extra);
        }
        let mut next = cur.coords.clone();
        for &v in &moving {
            let ring = &rings[v];
            let c = ring.iter().fold(Vec3::zeros(), |a, &w| a + cur.coords[w]) / ring.len() as f64;
            let x = cur.coords[v];
            let Ok(target) = shape.project_point(&c) else { continue };
            if let Ok(p) = shape.project_point(&(x + (target - x) * DAMPING)) {
                next[v] = p;
            }
        }
        let next_folds = folded_faces(surface, &next, shape);
        if next_folds.len() <= folds.len() {
            cur.coords = next;
            folds = next_folds;
        } else {
            widen += 1;
        }
    }
    report.folds_after = folds.len();
    (cur, report)
}
