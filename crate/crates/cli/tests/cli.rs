use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn toroidal(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_toroidal")).args(args).current_dir(dir).output().unwrap()
}

fn ok(out: &Output) {
    assert!(out.status.success(), "{:?}: {}", out.status, String::from_utf8_lossy(&out.stderr));
}

fn read_json(path: impl AsRef<Path>) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

fn error_kind(out: &Output) -> String {
    let v: Value = serde_json::from_slice(&out.stderr).unwrap();
    v["error"]["kind"].as_str().unwrap().to_string()
}

fn generate(dir: &Path, n: &str, jitter: &str) {
    ok(&toroidal(&["generate", "--generate-torus", n, n, "--jitter", jitter, "--out", "gen"], dir));
}

#[test]
fn missing_mesh_is_an_input_error() {
    let tmp = tempfile::tempdir().unwrap();
    let out = toroidal(&["parameterize", "--mesh", "nope.obj"], tmp.path());
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(error_kind(&out), "io");
}

#[test]
fn all_methods_share_one_manifest() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    ok(&toroidal(&["parameterize", "--generate-torus", "8", "8", "--method", "all", "--max-iters", "10"], d));
    let m = read_json(d.join("out/manifest.json"));
    let runs = m["runs"].as_array().unwrap();
    let names: Vec<&str> = runs.iter().map(|r| r["method"].as_str().unwrap()).collect();
    assert_eq!(names, ["pgm", "pcg", "rgd", "rcg"]);
    for name in names {
        let csv = fs::read_to_string(d.join(format!("out/trace_{name}.csv"))).unwrap();
        assert!(csv.starts_with("iter,E,grad_norm,alpha,beta,time_ms\n"));
    }
    let outputs: Vec<&str> = m["outputs"].as_array().unwrap().iter().map(|v| v.as_str().unwrap()).collect();
    assert!(outputs.contains(&"manifest.json") && outputs.contains(&"domain.obj"));
    assert!(m.get("timings_ms").is_some());
}

#[test]
fn metrics_reproduce_the_run_report() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    ok(&toroidal(&["parameterize", "--generate-torus", "8", "8", "--max-iters", "20"], d));
    let out = toroidal(&["metrics", "--mesh", "out/source.obj", "--map", "out/map_pcg.obj"], d);
    ok(&out);
    let printed: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(printed, read_json(d.join("out/report_pcg.json")));
    let m = read_json(d.join("out/manifest.json"));
    assert_eq!(printed, m["runs"][0]["report"]);
}

#[test]
fn metrics_of_the_identity() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    generate(d, "12", "0");
    let out = toroidal(&["metrics", "--mesh", "gen/mesh.obj", "--map", "gen/mesh.obj", "--out", "m"], d);
    ok(&out);
    let r = read_json(d.join("m/report.json"));
    assert!(r["sd_over_mean"].as_f64().unwrap() < 1e-12);
    assert_eq!(r["folds"], 0);
    assert!(r["E"].as_f64().unwrap().abs() < 1e-10);
}

#[test]
fn off_torus_map_is_rejected() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    generate(d, "8", "0.1");
    let out = toroidal(&["metrics", "--mesh", "gen/mesh.obj", "--map", "gen/mesh.obj"], d);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(error_kind(&out), "not_on_manifold");
}

#[test]
fn registering_a_mesh_onto_itself() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    generate(d, "8", "0");
    fs::write(d.join("lm.json"), r#"{"pairs": [[0, 0], [9, 9], [20, 20], [37, 37], [50, 50]], "lambda": 0.2}"#).unwrap();
    #[rustfmt::skip]
    let out = toroidal(&[
        "register", "--mesh", "gen/mesh.obj", "--target", "gen/mesh.obj",
        "--loops", "gen/loops.json", "--target-loops", "gen/loops.json",
        "--landmarks", "lm.json", "--max-iters", "30",
    ], d);
    ok(&out);
    let r = read_json(d.join("out/report.json"));
    // Identical inputs give identical maps; the optimizer may still trade a
    // little landmark drift for stretch energy.
    assert_eq!(r["residual_initial"].as_f64().unwrap(), 0.0);
    assert!(r["E_R_final"].as_f64().unwrap() <= r["E_R_initial"].as_f64().unwrap());
    assert!(r["residual_final"].as_f64().unwrap() < 1e-2, "{r}");
    for k in 0..4 {
        assert!(d.join(format!("out/morph_{k}.obj")).exists());
    }
    assert!(d.join("out/phi.obj").exists());
}

#[test]
fn register_rejects_all_methods() {
    let tmp = tempfile::tempdir().unwrap();
    let out = toroidal(&["register", "--generate-torus", "6", "6", "--method", "all"], tmp.path());
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(error_kind(&out), "config");
}

#[test]
fn texture_writes_coordinates() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    generate(d, "8", "0");
    #[rustfmt::skip]
    let out = toroidal(&[
        "texture", "--mesh", "gen/mesh.obj", "--map", "gen/mesh.obj",
        "--scale", "2", "--translate", "0.1", "0", "--out", "tex",
    ], d);
    ok(&out);
    let text = fs::read_to_string(d.join("tex/textured.obj")).unwrap();
    assert_eq!(text.lines().filter(|l| l.starts_with("v ")).count(), 64);
    assert!(text.lines().filter(|l| l.starts_with("vt ")).count() >= 64);
    assert!(text.lines().any(|l| l.starts_with("f ") && l.contains('/')));
}

#[test]
fn generate_writes_mesh_and_loops() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    generate(d, "10", "0");
    let loops = read_json(d.join("gen/loops.json"));
    assert_eq!(loops["gamma1"].as_array().unwrap().len(), 10);
    let text = fs::read_to_string(d.join("gen/mesh.obj")).unwrap();
    assert_eq!(text.lines().filter(|l| l.starts_with("f ")).count(), 200);
}
