//! Minimal Wavefront OBJ reading and writing.
//!
//! Only `v`, `vt` and `f` records are understood. Indices are 1-based on disk
//! and 0-based in memory; negative (relative) indices are resolved against the
//! records seen so far.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::mesh::Vec3;

/// Raw OBJ content before any topological validation.
#[derive(Clone, Debug, Default)]
pub struct ObjData {
    pub vertices: Vec<Vec3>,
    pub tex_coords: Vec<[f64; 2]>,
    pub faces: Vec<[usize; 3]>,
    /// Texture-coordinate indices per face, present only if every face has them.
    pub face_tex: Option<Vec<[usize; 3]>>,
}

/// Format a float with 17 significant digits, the text representation used
/// for every emitted artifact.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

pub fn read_obj(path: impl AsRef<Path>) -> Result<ObjData> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_obj(&text)
}

fn parse_index(token: &str, count: usize, line: usize) -> Result<usize> {
    let raw: i64 = token.parse().map_err(|_| Error::Parse {
        line,
        message: format!("bad index '{token}'"),
    })?;
    let resolved = if raw > 0 {
        raw - 1
    } else if raw < 0 {
        count as i64 + raw
    } else {
        -1
    };
    if resolved < 0 {
        return Err(Error::Parse {
            line,
            message: format!("index '{token}' does not resolve to a record"),
        });
    }
    Ok(resolved as usize)
}

fn parse_floats<'a>(
    fields: impl Iterator<Item = &'a str>,
    want: usize,
    line: usize,
) -> Result<Vec<f64>> {
    let values = fields
        .take(want)
        .map(|t| {
            t.parse::<f64>().map_err(|_| Error::Parse {
                line,
                message: format!("bad number '{t}'"),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    if values.len() < want {
        return Err(Error::Parse {
            line,
            message: format!("expected {want} numbers"),
        });
    }
    Ok(values)
}

pub fn parse_obj(text: &str) -> Result<ObjData> {
    let mut data = ObjData::default();
    let mut face_tex = Vec::new();
    let mut all_faces_textured = true;

    for (lineno, raw) in text.lines().enumerate() {
        let line = lineno + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let mut fields = content.split_whitespace();
        let tag = fields.next().unwrap_or("");
        match tag {
            "v" => {
                let xyz = parse_floats(fields, 3, line)?;
                data.vertices.push(Vec3::new(xyz[0], xyz[1], xyz[2]));
            }
            "vt" => {
                let uv = parse_floats(fields, 2, line)?;
                data.tex_coords.push([uv[0], uv[1]]);
            }
            "f" => {
                let corners: Vec<&str> = fields.collect();
                if corners.len() != 3 {
                    return Err(Error::NonTriangleFace {
                        face: data.faces.len(),
                        count: corners.len(),
                    });
                }
                let mut face = [0usize; 3];
                let mut tex = [0usize; 3];
                let mut textured = true;
                for (k, corner) in corners.iter().enumerate() {
                    let mut parts = corner.split('/');
                    let v = parts.next().unwrap_or("");
                    face[k] = parse_index(v, data.vertices.len(), line)?;
                    match parts.next() {
                        Some(t) if !t.is_empty() => {
                            tex[k] = parse_index(t, data.tex_coords.len(), line)?;
                        }
                        _ => textured = false,
                    }
                }
                all_faces_textured &= textured;
                data.faces.push(face);
                face_tex.push(tex);
            }
            _ => {}
        }
    }

    if all_faces_textured && !data.faces.is_empty() {
        data.face_tex = Some(face_tex);
    }
    Ok(data)
}

/// Texture coordinates and, per face, the index of each corner's coordinate.
pub type TexCoords<'a> = (&'a [[f64; 2]], &'a [[usize; 3]]);

/// Serialize a triangle mesh, optionally with per-corner texture coordinates.
pub fn obj_string(
    vertices: &[Vec3],
    faces: &[[usize; 3]],
    tex: Option<TexCoords>,
) -> String {
    let mut out = String::with_capacity(64 * (vertices.len() + faces.len()));
    for v in vertices {
        let _ = writeln!(out, "v {} {} {}", fmt_f64(v.x), fmt_f64(v.y), fmt_f64(v.z));
    }
    match tex {
        Some((uvs, face_uv)) => {
            for uv in uvs {
                let _ = writeln!(out, "vt {} {}", fmt_f64(uv[0]), fmt_f64(uv[1]));
            }
            for (f, t) in faces.iter().zip(face_uv) {
                let _ = writeln!(
                    out,
                    "f {}/{} {}/{} {}/{}",
                    f[0] + 1,
                    t[0] + 1,
                    f[1] + 1,
                    t[1] + 1,
                    f[2] + 1,
                    t[2] + 1
                );
            }
        }
        None => {
            for f in faces {
                let _ = writeln!(out, "f {} {} {}", f[0] + 1, f[1] + 1, f[2] + 1);
            }
        }
    }
    out
}

pub fn write_obj(
    path: impl AsRef<Path>,
    vertices: &[Vec3],
    faces: &[[usize; 3]],
    tex: Option<TexCoords>,
) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, obj_string(vertices, faces, tex)).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_slash_forms_and_ignores_normals() {
        let text = "v 0 0 0\nv 1 0 0\nv 0 1 0\nvt 0 0\nvt 1 0\nvt 0 1\nvn 0 0 1\nf 1/1/1 2/2/1 3/3/1\n";
        let data = parse_obj(text).unwrap();
        assert_eq!(data.faces, vec![[0, 1, 2]]);
        assert_eq!(data.face_tex, Some(vec![[0, 1, 2]]));
    }

    #[test]
    fn negative_indices_are_relative() {
        let data = parse_obj("v 0 0 0\nv 1 0 0\nv 0 1 0\nf -3 -2 -1\n").unwrap();
        assert_eq!(data.faces, vec![[0, 1, 2]]);
    }

    #[test]
    fn quads_are_rejected() {
        let err = parse_obj("v 0 0 0\nv 1 0 0\nv 1 1 0\nv 0 1 0\nf 1 2 3 4\n").unwrap_err();
        assert!(matches!(err, Error::NonTriangleFace { count: 4, .. }));
    }

    #[test]
    fn bad_number_reports_line() {
        let err = parse_obj("v 0 0 0\nv 1 x 0\n").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }));
    }

    #[test]
    fn written_floats_round_trip_exactly() {
        let v = vec![Vec3::new(0.1, -1.0 / 3.0, std::f64::consts::PI)];
        let text = obj_string(&v, &[], None);
        let back = parse_obj(&text).unwrap();
        assert_eq!(back.vertices[0], v[0]);
    }
}
