//! End-to-end drivers: parameterize one surface, or register two.

use log::warn;

use crate::energy::LandmarkSet;
use crate::error::{Error, Result};
use crate::homology::{fallback_loops, fundamental_domain, FundamentalDomain, LoopBasis};
use crate::initmap::{normalize_domain, sem_fixed_point, wrap_to_torus, PeriodicPlanarMap, SemReport};
use crate::initmap::{DEFAULT_SEM_ITERS, DEFAULT_SEM_TOL};
use crate::mesh::{jitter, SimplicialSurface, VertexMap};
use crate::optim::{solve, IterationTrace, Method, OptimizerConfig, StretchObjective};
use crate::quality::{correct_bijectivity, CorrectionReport, QualityReport};
use crate::registration::{landmark_residual, morph, register, transfer, unify_tori, MorphSnapshot};
use crate::torus::TorusShape;

pub const DEFAULT_CORRECTION_ROUNDS: usize = 50;

#[derive(Clone, Debug)]
pub struct ParameterizeOptions {
    pub shape: TorusShape,
    pub methods: Vec<Method>,
    /// Shared settings; `method` is replaced per run.
    pub optimizer: OptimizerConfig,
    pub sem_iters: usize,
    pub sem_tol: f64,
    pub correct_bijectivity: bool,
    pub correction_rounds: usize,
}

impl Default for ParameterizeOptions {
    fn default() -> Self {
        ParameterizeOptions {
            shape: TorusShape::default(),
            methods: vec![Method::Pcg],
            optimizer: OptimizerConfig::default(),
            sem_iters: DEFAULT_SEM_ITERS,
            sem_tol: DEFAULT_SEM_TOL,
            correct_bijectivity: false,
            correction_rounds: DEFAULT_CORRECTION_ROUNDS,
        }
    }
}

#[derive(Clone, Debug)]
pub struct MethodRun {
    pub method: Method,
    pub map: VertexMap,
    pub trace: IterationTrace,
    pub quality: QualityReport,
    /// Quality before correction, when correction ran.
    pub quality_before_correction: Option<QualityReport>,
    pub correction: Option<CorrectionReport>,
}

#[derive(Clone, Debug)]
pub struct Parameterization {
    pub loops: LoopBasis,
    pub fallback_loops: bool,
    pub domain: FundamentalDomain,
    pub planar: PeriodicPlanarMap,
    pub sem: SemReport,
    pub initial: VertexMap,
    pub runs: Vec<MethodRun>,
}

/// Loops, fundamental domain, initial torus map, then each requested
/// optimizer from that same start.
pub fn parameterize(
    surface: &SimplicialSurface,
    loops: Option<LoopBasis>,
    opts: &ParameterizeOptions,
) -> Result<Parameterization> {
    if opts.methods.is_empty() {
        return Err(Error::Config("no optimization method requested".into()));
    }
    let fallback = loops.is_none();
    let loops = match loops {
        Some(l) => l,
        None => {
            warn!("no loops given; using tree-cotree loops, whose homotopy classes determine the fundamental domain");
            fallback_loops(surface)?
        }
    };
    let domain = fundamental_domain(surface, &loops)?;
    let planar = normalize_domain(surface, &domain)?;
    let (planar, sem) = sem_fixed_point(surface, &planar, opts.sem_iters, opts.sem_tol)?;
    let initial = wrap_to_torus(&planar, &opts.shape);
    let obj = StretchObjective { surface };
    let mut runs = Vec::with_capacity(opts.methods.len());
    for &method in &opts.methods {
        let cfg = OptimizerConfig { method, ..opts.optimizer.clone() };
        let (map, trace) = solve(&obj, &initial, &opts.shape, &cfg)?;
        let quality = QualityReport::compute(surface, &map, &opts.shape)?;
        let run = if opts.correct_bijectivity && quality.folds > 0 {
            let (fixed, rep) = correct_bijectivity(surface, &map, &opts.shape, opts.correction_rounds);
            let after = QualityReport::compute(surface, &fixed, &opts.shape)?;
            MethodRun {
                method,
                map: fixed,
                trace,
                quality: after,
                quality_before_correction: Some(quality),
                correction: Some(rep),
            }
        } else {
            MethodRun { method, map, trace, quality, quality_before_correction: None, correction: None }
        };
        runs.push(run);
    }
    Ok(Parameterization { loops, fallback_loops: fallback, domain, planar, sem, initial, runs })
}

#[derive(Clone, Debug)]
pub struct Registration {
    pub shape: TorusShape,
    /// Source map before and after registration, on the common torus.
    pub f_initial: VertexMap,
    pub f: VertexMap,
    /// Frozen target map on the common torus.
    pub g: VertexMap,
    pub trace: IterationTrace,
    pub residual_initial: f64,
    pub residual_final: f64,
    /// Correspondence from the source vertices onto the target surface.
    pub phi: VertexMap,
    pub snapshots: Vec<MorphSnapshot>,
}

/// Registers a source map `f0` (of `m`) against a target map `g0` (of `n`):
/// common torus, landmark-constrained minimization, transfer and morph.
#[allow(clippy::too_many_arguments)]
pub fn register_maps(
    m: &SimplicialSurface,
    f0: &VertexMap,
    shape_f: &TorusShape,
    n: &SimplicialSurface,
    g0: &VertexMap,
    shape_g: &TorusShape,
    landmarks: &LandmarkSet,
    config: &OptimizerConfig,
    ts: &[f64],
) -> Result<Registration> {
    landmarks.validate(m.vertex_count(), n.vertex_count())?;
    let (f_initial, g, shape) = unify_tori(f0, shape_f, g0, shape_g)?;
    let (f, trace) = register(m, &f_initial, &g, landmarks, &shape, config)?;
    let phi = transfer(&f, &g, n, &shape)?;
    let snapshots = morph(m.vertices(), &phi, ts)?;
    Ok(Registration {
        residual_initial: landmark_residual(&f_initial, &g, landmarks),
        residual_final: landmark_residual(&f, &g, landmarks),
        shape,
        f_initial,
        f,
        g,
        trace,
        phi,
        snapshots,
    })
}

/// Torus-of-revolution grid with its identity map displaced by up to
/// `fraction · r` per coordinate and projected back onto the torus.
pub fn jittered_identity(
    shape: &TorusShape,
    n_theta: usize,
    n_phi: usize,
    fraction: f64,
    seed: u64,
) -> Result<(SimplicialSurface, VertexMap, VertexMap)> {
    let (s, f) = SimplicialSurface::torus_grid(shape, n_theta, n_phi)?;
    let moved = shape.project_rows(&jitter(&f.coords, fraction * shape.minor, seed))?;
    Ok((s, f, VertexMap::new(moved)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::torus_grid_loops;

    #[test]
    fn generated_torus_pipeline() {
        let shape = TorusShape::default();
        let (s, _) = SimplicialSurface::torus_grid(&shape, 12, 12).unwrap();
        let (g1, g2) = torus_grid_loops(12, 12);
        let loops = LoopBasis::new(&s, g1, g2).unwrap();
        let p = parameterize(&s, Some(loops), &ParameterizeOptions::default()).unwrap();
        let run = &p.runs[0];
        assert_eq!(run.quality.folds, 0);
        assert!(run.quality.sd_over_mean < 0.05, "{}", run.quality.sd_over_mean);
        assert!(!p.fallback_loops);
    }

    #[test]
    fn fallback_loops_used_when_missing() {
        let shape = TorusShape::default();
        let (s, _) = SimplicialSurface::torus_grid(&shape, 8, 8).unwrap();
        let opts = ParameterizeOptions {
            optimizer: OptimizerConfig { max_iters: 5, ..Default::default() },
            ..Default::default()
        };
        let p = parameterize(&s, None, &opts).unwrap();
        assert!(p.fallback_loops);
        assert!(p.runs[0].map.max_torus_distance(&shape) < 1e-9);
    }

    #[test]
    fn identical_maps_register_to_identity() {
        let shape = TorusShape::default();
        let (s, f) = SimplicialSurface::torus_grid(&shape, 8, 8).unwrap();
        let lm = LandmarkSet::new((0..5).map(|k| (k * 11, k * 11)).collect(), 0.2).unwrap();
        let r = register_maps(&s, &f, &shape, &s, &f, &shape, &lm, &OptimizerConfig::default(), &[0.0, 1.0]).unwrap();
        assert!(r.residual_final < 1e-8);
        for (a, b) in r.phi.coords.iter().zip(s.vertices()) {
            assert!((a - b).norm() < 1e-8);
        }
    }
}
