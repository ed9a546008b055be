use std::time::Instant;

use log::{info, warn};
use serde_json::{json, Value};
use toroidal_core::energy::LandmarkSet;
use toroidal_core::homology::LoopBasis;
use toroidal_core::mesh::{jitter, torus_grid_loops};
use toroidal_core::pipeline::{parameterize, register_maps, ParameterizeOptions};
use toroidal_core::quality::QualityReport;
use toroidal_core::registration::{angle_uv, texture_uv, torus_coordinates, UvTransform, DEFAULT_MORPH_TIMES};
use toroidal_core::{obj, Error, Result, SimplicialSurface, TorusShape, VertexMap};

use crate::args::{GenerateArgs, MethodArg, MetricsArgs, ParameterizeArgs, RegisterArgs, SourceArgs, TextureArgs};
use crate::output::{manifest, OutputDir};

const PARAMETERIZE_ITERS: usize = 100;
const REGISTER_ITERS: usize = 1000;

fn ms(t: Instant) -> f64 {
    t.elapsed().as_secs_f64() * 1e3
}

fn generated_surface(shape: &TorusShape, dims: &[usize], jitter_fraction: f64, seed: u64) -> Result<SimplicialSurface> {
    let (s, _) = SimplicialSurface::torus_grid(shape, dims[0], dims[1])?;
    if jitter_fraction == 0.0 {
        return Ok(s);
    }
    SimplicialSurface::new(jitter(s.vertices(), jitter_fraction * shape.minor, seed), s.faces().to_vec())
}

struct Source {
    surface: SimplicialSurface,
    loops: Option<LoopBasis>,
    /// How the loops were obtained: "file", "grid" or "tree_cotree".
    loop_origin: &'static str,
}

fn load_source(
    src: &SourceArgs,
    loops: Option<&std::path::Path>,
    shape: &TorusShape,
    seed: u64,
) -> Result<Source> {
    let (surface, grid) = match (&src.mesh, &src.generate_torus) {
        (Some(path), _) => (SimplicialSurface::load_obj(path)?, None),
        (None, Some(dims)) => (generated_surface(shape, dims, src.jitter, seed)?, Some(dims.clone())),
        (None, None) => return Err(Error::Config("either --mesh or --generate-torus is required".into())),
    };
    let (loops, loop_origin) = match (loops, grid) {
        (Some(p), _) => (Some(LoopBasis::read_json(p, &surface)?), "file"),
        (None, Some(d)) => {
            let (g1, g2) = torus_grid_loops(d[0], d[1]);
            (Some(LoopBasis::new(&surface, g1, g2)?), "grid")
        }
        (None, None) => (None, "tree_cotree"),
    };
    Ok(Source { surface, loops, loop_origin })
}

fn source_inputs(src: &SourceArgs, loops: Option<&std::path::Path>, origin: &str) -> Value {
    json!({
        "mesh": src.mesh,
        "generate_torus": src.generate_torus,
        "jitter": src.jitter,
        "loops": loops,
        "loop_origin": origin,
    })
}

pub fn parameterize_cmd(args: &ParameterizeArgs) -> Result<()> {
    let start = Instant::now();
    let shape = args.shape.shape()?;
    let methods = args.optim.method.methods();
    let src = load_source(&args.source, args.loops.as_deref(), &shape, args.optim.seed)?;
    let load_ms = ms(start);
    let opts = ParameterizeOptions {
        shape,
        methods: methods.clone(),
        optimizer: args.optim.config(methods[0], PARAMETERIZE_ITERS),
        correct_bijectivity: args.correct_bijectivity,
        ..ParameterizeOptions::default()
    };
    opts.optimizer.validate()?;
    let t = Instant::now();
    let p = parameterize(&src.surface, src.loops, &opts)?;
    let solve_ms = ms(t);
    if p.fallback_loops {
        warn!("the fundamental domain was built from tree-cotree loops; pass --loops to control their homotopy classes");
    }

    let mut out = OutputDir::create(&args.out)?;
    let faces = src.surface.faces();
    if args.source.mesh.is_none() {
        out.obj("source.obj", src.surface.vertices(), faces)?;
    }
    out.json("loops.json", &p.loops)?;
    p.domain.write(out.path("domain.obj"), out.path("domain.json"))?;
    out.record("domain.obj");
    out.record("domain.json");
    out.obj("initial_map.obj", &p.initial.coords, faces)?;

    let mut runs = Vec::new();
    for run in &p.runs {
        let name = run.method.name();
        let map = out.obj(&format!("map_{name}.obj"), &run.map.coords, faces)?;
        let trace = out.text(&format!("trace_{name}.csv"), &run.trace.to_csv(true))?;
        let report = out.json(&format!("report_{name}.json"), &run.quality)?;
        info!(
            "{name}: E {:.6e}, SD/Mean {:.6e}, folds {}",
            run.quality.e, run.quality.sd_over_mean, run.quality.folds
        );
        runs.push(json!({
            "method": run.method,
            "status": run.trace.status,
            "iterations": run.trace.records.len() - 1,
            "E_initial": run.trace.records[0].e,
            "E_final": run.trace.final_energy(),
            "report": run.quality,
            "report_before_correction": run.quality_before_correction,
            "correction": run.correction,
            "map": map,
            "trace": trace,
            "report_file": report,
        }));
    }
    let d = &p.domain.diagnostics;
    let body = json!({
        "domain": {
            "w1": p.domain.w1,
            "w2": p.domain.w2,
            "poisson_residual": d.poisson_residual,
            "period_condition": d.period_condition,
            "cut_euler": d.cut_euler,
            "flipped_faces": d.flipped_faces,
        },
        "initial_map": { "sem_energies": p.sem.energies, "sem_converged": p.sem.converged },
        "runs": runs,
    });
    let config = json!({
        "shape": args.shape,
        "method": args.optim.method,
        "optimizer": opts.optimizer,
        "sem_iters": opts.sem_iters,
        "sem_tol": opts.sem_tol,
        "correct_bijectivity": args.correct_bijectivity,
        "correction_rounds": opts.correction_rounds,
    });
    let timings = json!({ "load": load_ms, "pipeline": solve_ms, "total": ms(start) });
    let m = manifest(
        "parameterize",
        source_inputs(&args.source, args.loops.as_deref(), src.loop_origin),
        config,
        out.files(),
        body,
        timings,
    );
    out.json("manifest.json", &m)?;
    Ok(())
}

pub fn register_cmd(args: &RegisterArgs) -> Result<()> {
    let start = Instant::now();
    let shape = args.shape.shape()?;
    let method = match args.optim.method {
        MethodArg::All => return Err(Error::Config("register runs a single method; 'all' is not allowed".into())),
        m => m.methods()[0],
    };
    let seed = args.optim.seed;
    let m_src = load_source(&args.source, args.loops.as_deref(), &shape, seed)?;
    let n_src = match (&args.target, &args.source.generate_torus) {
        (Some(path), _) => {
            let surface = SimplicialSurface::load_obj(path)?;
            let loops = args.target_loops.as_deref().map(|p| LoopBasis::read_json(p, &surface)).transpose()?;
            Source { surface, loops, loop_origin: if args.target_loops.is_some() { "file" } else { "tree_cotree" } }
        }
        (None, Some(dims)) => {
            let v = jitter(m_src.surface.vertices(), args.target_jitter * shape.minor, seed.wrapping_add(1));
            let surface = SimplicialSurface::new(v, m_src.surface.faces().to_vec())?;
            let (g1, g2) = torus_grid_loops(dims[0], dims[1]);
            let loops = Some(LoopBasis::new(&surface, g1, g2)?);
            Source { surface, loops, loop_origin: "grid" }
        }
        (None, None) => return Err(Error::Config("--target is required unless --generate-torus is used".into())),
    };
    let landmarks = match &args.landmarks {
        Some(p) => LandmarkSet::read_json(p)?,
        None => LandmarkSet::empty(),
    };
    landmarks.validate(m_src.surface.vertex_count(), n_src.surface.vertex_count())?;
    let config = args.optim.config(method, REGISTER_ITERS);
    config.validate()?;
    let load_ms = ms(start);

    let t = Instant::now();
    let opts = ParameterizeOptions { shape, methods: vec![method], optimizer: config.clone(), ..Default::default() };
    let pm = parameterize(&m_src.surface, m_src.loops.clone(), &opts)?;
    let pn = parameterize(&n_src.surface, n_src.loops.clone(), &opts)?;
    let param_ms = ms(t);
    let t = Instant::now();
    let reg = register_maps(
        &m_src.surface,
        &pm.runs[0].map,
        &shape,
        &n_src.surface,
        &pn.runs[0].map,
        &shape,
        &landmarks,
        &config,
        &DEFAULT_MORPH_TIMES,
    )?;
    let reg_ms = ms(t);

    let mut out = OutputDir::create(&args.out)?;
    let (fm, fn_) = (m_src.surface.faces(), n_src.surface.faces());
    if args.source.mesh.is_none() {
        out.obj("source.obj", m_src.surface.vertices(), fm)?;
    }
    if args.target.is_none() {
        out.obj("target.obj", n_src.surface.vertices(), fn_)?;
    }
    out.obj("source_map.obj", &reg.f_initial.coords, fm)?;
    out.obj("target_map.obj", &reg.g.coords, fn_)?;
    out.obj("registered_map.obj", &reg.f.coords, fm)?;
    out.obj("phi.obj", &reg.phi.coords, fm)?;
    let mut morphs = Vec::new();
    for (k, snap) in reg.snapshots.iter().enumerate() {
        let name = out.obj(&format!("morph_{k}.obj"), &snap.coords, fm)?;
        morphs.push(json!({ "t": snap.t, "file": name }));
    }
    out.text("trace.csv", &reg.trace.to_csv(true))?;
    let reduction = reg.residual_initial / reg.residual_final;
    let report = json!({
        "residual_initial": reg.residual_initial,
        "residual_final": reg.residual_final,
        "reduction_factor": if reduction.is_finite() { Some(reduction) } else { None },
        "E_R_initial": reg.trace.records[0].e,
        "E_R_final": reg.trace.final_energy(),
        "status": reg.trace.status,
        "shape": reg.shape,
    });
    out.json("report.json", &report)?;
    info!("landmark residual {:.6e} -> {:.6e}", reg.residual_initial, reg.residual_final);

    let inputs = json!({
        "source": source_inputs(&args.source, args.loops.as_deref(), m_src.loop_origin),
        "target": { "mesh": args.target, "loops": args.target_loops, "loop_origin": n_src.loop_origin, "target_jitter": args.target_jitter },
        "landmarks": args.landmarks,
    });
    let cfg = json!({ "shape": args.shape, "optimizer": config, "lambda": landmarks.lambda, "pairs": landmarks.pairs.len(), "morph_times": DEFAULT_MORPH_TIMES });
    let body = json!({ "registration": report, "morph": morphs });
    let timings = json!({ "load": load_ms, "parameterize": param_ms, "register": reg_ms, "total": ms(start) });
    let m = manifest("register", inputs, cfg, out.files(), body, timings);
    out.json("manifest.json", &m)?;
    Ok(())
}

fn load_map(mesh: &std::path::Path, map: &std::path::Path) -> Result<(SimplicialSurface, VertexMap)> {
    let surface = SimplicialSurface::load_obj(mesh)?;
    let f = VertexMap::load_obj(map)?;
    f.check_rows(&surface)?;
    Ok((surface, f))
}

pub fn metrics_cmd(args: &MetricsArgs) -> Result<()> {
    let shape = args.shape.shape()?;
    let (surface, f) = load_map(&args.mesh, &args.map)?;
    f.validate_on_torus(&shape)?;
    let report = QualityReport::compute(&surface, &f, &shape)?;
    let text = serde_json::to_string_pretty(&report)?;
    println!("{text}");
    if let Some(dir) = &args.out {
        OutputDir::create(dir)?.json("report.json", &report)?;
    }
    Ok(())
}

pub fn texture_cmd(args: &TextureArgs) -> Result<()> {
    let shape = args.shape.shape()?;
    let (surface, f) = load_map(&args.mesh, &args.map)?;
    let uv = angle_uv(&torus_coordinates(&f, &shape)?);
    let transform = UvTransform { scale: args.scale, translate: [args.translate[0], args.translate[1]] };
    let tex = texture_uv(surface.faces(), &uv, &transform);
    let mut out = OutputDir::create(&args.out)?;
    out.text(
        "textured.obj",
        &obj::obj_string(surface.vertices(), surface.faces(), Some((&tex.uvs, &tex.face_uv))),
    )?;
    Ok(())
}

pub fn generate_cmd(args: &GenerateArgs) -> Result<()> {
    let shape = args.shape.shape()?;
    let dims = &args.generate_torus;
    let surface = generated_surface(&shape, dims, args.jitter, args.seed)?;
    let (g1, g2) = torus_grid_loops(dims[0], dims[1]);
    let loops = LoopBasis::new(&surface, g1, g2)?;
    let mut out = OutputDir::create(&args.out)?;
    out.obj("mesh.obj", surface.vertices(), surface.faces())?;
    out.json("loops.json", &loops)?;
    Ok(())
}
