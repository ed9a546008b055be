use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::Value;
use toroidal_core::{obj, Error, Result, Vec3};

pub const MANIFEST_SCHEMA: u32 = 1;
pub const TRACE_SCHEMA: u32 = 1;
pub const REPORT_SCHEMA: u32 = 1;

/// Writes artifacts into one directory and remembers their names.
pub struct OutputDir {
    dir: PathBuf,
    files: Vec<String>,
}

impl OutputDir {
    pub fn create(dir: &Path) -> Result<Self> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        Ok(OutputDir { dir: dir.to_path_buf(), files: Vec::new() })
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    pub fn text(&mut self, name: &str, content: &str) -> Result<String> {
        let path = self.path(name);
        fs::write(&path, content).map_err(|e| Error::io(&path, e))?;
        self.files.push(name.to_string());
        Ok(name.to_string())
    }

    pub fn json(&mut self, name: &str, value: &impl Serialize) -> Result<String> {
        let mut s = serde_json::to_string_pretty(value)?;
        s.push('\n');
        self.text(name, &s)
    }

    pub fn obj(&mut self, name: &str, vertices: &[Vec3], faces: &[[usize; 3]]) -> Result<String> {
        self.text(name, &obj::obj_string(vertices, faces, None))
    }

    /// Lists a file written by other code.
    pub fn record(&mut self, name: &str) {
        self.files.push(name.to_string());
    }

    pub fn files(&self) -> &[String] {
        &self.files
    }
}

/// Manifest common header; `body` fields are merged in after it.
pub fn manifest(command: &str, inputs: Value, config: Value, outputs: &[String], body: Value, timings: Value) -> Value {
    let mut m = serde_json::json!({
        "schema": {
            "manifest": MANIFEST_SCHEMA,
            "trace_csv": TRACE_SCHEMA,
            "report_json": REPORT_SCHEMA,
        },
        "tool": { "name": "toroidal", "version": env!("CARGO_PKG_VERSION") },
        "command": command,
        "inputs": inputs,
        "config": config,
    });
    let obj = m.as_object_mut().expect("object literal");
    if let Value::Object(extra) = body {
        obj.extend(extra);
    }
    let mut files = outputs.to_vec();
    files.push("manifest.json".into());
    obj.insert("outputs".into(), Value::from(files));
    obj.insert("timings_ms".into(), timings);
    m
}
