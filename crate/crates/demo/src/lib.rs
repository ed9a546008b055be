//! Browser bindings: parameterize a synthetic torus, score a map, and
//! morph a mesh toward its torus image. Arrays cross the boundary flat
//! (`x0, y0, z0, x1, ...`); structured results come back as JSON strings.

use serde::Serialize;
use toroidal_core::homology::LoopBasis;
use toroidal_core::mesh::{jitter, torus_grid_loops};
use toroidal_core::optim::{Method, OptimizerConfig};
use toroidal_core::pipeline::{parameterize, ParameterizeOptions};
use toroidal_core::quality::QualityReport;
use toroidal_core::registration::morph;
use toroidal_core::{SimplicialSurface, TorusShape, Vec3, VertexMap};
use wasm_bindgen::prelude::*;

const MAX_GRID: usize = 64;

#[derive(Serialize)]
pub struct ParameterizeResult {
    pub vertices: Vec<f64>,
    pub faces: Vec<u32>,
    pub initial_map: Vec<f64>,
    pub map: Vec<f64>,
    pub area_ratios: Vec<f64>,
    pub energies: Vec<f64>,
    pub status: String,
    pub quality: QualityReport,
}

fn flatten(v: &[Vec3]) -> Vec<f64> {
    v.iter().flat_map(|p| [p.x, p.y, p.z]).collect()
}

fn unflatten(v: &[f64]) -> Result<Vec<Vec3>, String> {
    if !v.len().is_multiple_of(3) {
        return Err(format!("coordinate array length {} is not a multiple of 3", v.len()));
    }
    Ok(v.chunks_exact(3).map(|c| Vec3::new(c[0], c[1], c[2])).collect())
}

fn faces_from(v: &[u32]) -> Result<Vec<[usize; 3]>, String> {
    if !v.len().is_multiple_of(3) {
        return Err(format!("face array length {} is not a multiple of 3", v.len()));
    }
    Ok(v.chunks_exact(3).map(|c| [c[0] as usize, c[1] as usize, c[2] as usize]).collect())
}

pub fn run_parameterize(
    n_theta: usize,
    n_phi: usize,
    jitter_fraction: f64,
    method: &str,
    max_iters: usize,
    seed: u32,
) -> Result<ParameterizeResult, String> {
    if n_theta.max(n_phi) > MAX_GRID {
        return Err(format!("grid larger than {MAX_GRID} per side"));
    }
    let shape = TorusShape::default();
    let method: Method = method.parse().map_err(|e: toroidal_core::Error| e.to_string())?;
    let (grid, _) = SimplicialSurface::torus_grid(&shape, n_theta, n_phi).map_err(|e| e.to_string())?;
    let moved = jitter(grid.vertices(), jitter_fraction * shape.minor, seed as u64);
    let surface = SimplicialSurface::new(moved, grid.faces().to_vec()).map_err(|e| e.to_string())?;
    let (g1, g2) = torus_grid_loops(n_theta, n_phi);
    let loops = LoopBasis::new(&surface, g1, g2).map_err(|e| e.to_string())?;
    let opts = ParameterizeOptions {
        shape,
        methods: vec![method],
        optimizer: OptimizerConfig { max_iters, ..OptimizerConfig::with_method(method) },
        ..Default::default()
    };
    let p = parameterize(&surface, Some(loops), &opts).map_err(|e| e.to_string())?;
    let run = p.runs.into_iter().next().ok_or("no optimizer run")?;
    Ok(ParameterizeResult {
        vertices: flatten(surface.vertices()),
        faces: surface.faces().iter().flat_map(|t| t.map(|i| i as u32)).collect(),
        initial_map: flatten(&p.initial.coords),
        map: flatten(&run.map.coords),
        area_ratios: run.quality.ratios.clone(),
        energies: run.trace.energies(),
        status: serde_json::to_value(&run.trace.status)
            .ok()
            .and_then(|v| v["kind"].as_str().map(String::from))
            .unwrap_or_default(),
        quality: run.quality,
    })
}

pub fn run_quality(vertices: &[f64], faces: &[u32], map: &[f64], major: f64, minor: f64) -> Result<QualityReport, String> {
    let surface = SimplicialSurface::new(unflatten(vertices)?, faces_from(faces)?).map_err(|e| e.to_string())?;
    let shape = TorusShape::new(major, minor).map_err(|e| e.to_string())?;
    let f = VertexMap::new(unflatten(map)?);
    f.check_rows(&surface).map_err(|e| e.to_string())?;
    QualityReport::compute(&surface, &f, &shape).map_err(|e| e.to_string())
}

pub fn run_morph(vertices: &[f64], map: &[f64], t: f64) -> Result<Vec<f64>, String> {
    let phi = VertexMap::new(unflatten(map)?);
    let snaps = morph(&unflatten(vertices)?, &phi, &[t]).map_err(|e| e.to_string())?;
    Ok(flatten(&snaps[0].coords))
}

fn js_err(e: String) -> JsValue {
    JsValue::from_str(&e)
}

/// Parameterize a jittered `n_theta x n_phi` torus grid. Returns JSON with
/// the mesh, the initial and optimized maps, per-face area ratios, the
/// energy trace and the quality report.
#[wasm_bindgen(js_name = parameterizeTorus)]
pub fn parameterize_torus(
    n_theta: usize,
    n_phi: usize,
    jitter_fraction: f64,
    method: &str,
    max_iters: usize,
    seed: u32,
) -> Result<String, JsValue> {
    let r = run_parameterize(n_theta, n_phi, jitter_fraction, method, max_iters, seed).map_err(js_err)?;
    serde_json::to_string(&r).map_err(|e| js_err(e.to_string()))
}

/// Quality report JSON of a map onto the torus with radii `major`, `minor`.
#[wasm_bindgen(js_name = qualityReport)]
pub fn quality_report(vertices: &[f64], faces: &[u32], map: &[f64], major: f64, minor: f64) -> Result<String, JsValue> {
    let r = run_quality(vertices, faces, map, major, minor).map_err(js_err)?;
    serde_json::to_string(&r).map_err(|e| js_err(e.to_string()))
}

/// `(1 - t) v + t f(v)` for every vertex.
#[wasm_bindgen(js_name = morphFrame)]
pub fn morph_frame(vertices: &[f64], map: &[f64], t: f64) -> Result<Vec<f64>, JsValue> {
    run_morph(vertices, map, t).map_err(js_err)
}
