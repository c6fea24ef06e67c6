//! Wavefront OBJ subset: `v`, `vt`, `vn` and `f` records.
//!
//! Faces accept the `v`, `v/vt`, `v/vt/vn` and `v//vn` forms with positive or
//! negative (relative) indices. Polygons are fan-triangulated around their
//! first vertex. `mtllib`, `usemtl`, `o`, `g` and `s` are skipped and counted.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::math::{Real, Vec3};
use crate::scene::{Triangle, VertexAttributes, MIN_TRIANGLE_AREA};

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct ObjReport {
    pub faces: usize,
    /// Zero-area triangles dropped after triangulation.
    pub degenerate_dropped: usize,
    /// Lines skipped because the directive is unsupported.
    pub ignored_lines: usize,
}

#[derive(Clone, Debug)]
pub struct ObjMesh<R> {
    pub triangles: Vec<Triangle<R>>,
    pub report: ObjReport,
}

#[derive(Clone, Copy)]
struct FaceVertex {
    v: usize,
    vt: Option<usize>,
    vn: Option<usize>,
}

pub fn load_obj<R: Real>(path: impl AsRef<Path>, material: usize) -> Result<ObjMesh<R>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_obj(&text, &path.display().to_string(), material)
}

pub fn parse_obj<R: Real>(text: &str, source: &str, material: usize) -> Result<ObjMesh<R>> {
    let mut positions: Vec<[f64; 3]> = Vec::new();
    let mut uvs: Vec<[f64; 2]> = Vec::new();
    let mut normals: Vec<[f64; 3]> = Vec::new();
    let mut triangles = Vec::new();
    let mut report = ObjReport::default();

    for (lineno, raw) in text.lines().enumerate() {
        let line = lineno + 1;
        let err = |msg: String| Error::Obj {
            path: source.to_string(),
            line,
            msg,
        };
        let content = raw.split('#').next().unwrap_or("").trim();
        let mut tokens = content.split_whitespace();
        let Some(tag) = tokens.next() else { continue };
        let rest: Vec<&str> = tokens.collect();
        match tag {
            "v" | "vn" => {
                if rest.len() < 3 {
                    return Err(err(format!("`{tag}` needs 3 coordinates")));
                }
                let mut xyz = [0.0; 3];
                for (k, tok) in rest[..3].iter().enumerate() {
                    xyz[k] = tok
                        .parse::<f64>()
                        .map_err(|_| err(format!("bad number `{tok}`")))?;
                }
                if tag == "v" {
                    positions.push(xyz);
                } else {
                    normals.push(xyz);
                }
            }
            "vt" => {
                if rest.is_empty() {
                    return Err(err("`vt` needs at least 1 coordinate".into()));
                }
                let mut uv = [0.0; 2];
                for (k, tok) in rest.iter().take(2).enumerate() {
                    uv[k] = tok
                        .parse::<f64>()
                        .map_err(|_| err(format!("bad number `{tok}`")))?;
                }
                uvs.push(uv);
            }
            "f" => {
                if rest.len() < 3 {
                    return Err(err(format!("face needs at least 3 vertices, got {}", rest.len())));
                }
                let counts = (positions.len(), uvs.len(), normals.len());
                let verts = rest
                    .iter()
                    .map(|tok| parse_face_vertex(tok, counts))
                    .collect::<std::result::Result<Vec<_>, String>>()
                    .map_err(err)?;
                report.faces += 1;
                for k in 1..verts.len() - 1 {
                    let corners = [verts[0], verts[k], verts[k + 1]];
                    let p = corners.map(|c| Vec3::from_array(positions[c.v].map(R::of)));
                    let mut tri = Triangle {
                        vertices: p,
                        material,
                        attributes: VertexAttributes::default(),
                    };
                    if tri.area() <= MIN_TRIANGLE_AREA {
                        report.degenerate_dropped += 1;
                        continue;
                    }
                    if corners.iter().all(|c| c.vt.is_some()) {
                        tri.attributes.uv = Some(corners.map(|c| uvs[c.vt.unwrap()]));
                    }
                    if corners.iter().all(|c| c.vn.is_some()) {
                        tri.attributes.normals = Some(corners.map(|c| normals[c.vn.unwrap()]));
                    }
                    triangles.push(tri);
                }
            }
            _ => report.ignored_lines += 1,
        }
    }
    Ok(ObjMesh { triangles, report })
}

fn resolve(tok: &str, count: usize, what: &str) -> std::result::Result<usize, String> {
    let i: i64 = tok.parse().map_err(|_| format!("bad {what} index `{tok}`"))?;
    let idx = match i {
        0 => return Err(format!("{what} index 0 is invalid")),
        i if i > 0 => i as usize - 1,
        i => {
            let back = i.unsigned_abs() as usize;
            if back > count {
                return Err(format!("relative {what} index {i} out of range"));
            }
            count - back
        }
    };
    if idx >= count {
        return Err(format!("{what} index {i} out of range (have {count})"));
    }
    Ok(idx)
}

fn parse_face_vertex(tok: &str, (nv, nt, nn): (usize, usize, usize)) -> std::result::Result<FaceVertex, String> {
    let mut parts = tok.split('/');
    let v = resolve(parts.next().unwrap_or(""), nv, "vertex")?;
    let vt = match parts.next() {
        None | Some("") => None,
        Some(t) => Some(resolve(t, nt, "texture")?),
    };
    let vn = match parts.next() {
        None | Some("") => None,
        Some(n) => Some(resolve(n, nn, "normal")?),
    };
    if parts.next().is_some() {
        return Err(format!("malformed face vertex `{tok}`"));
    }
    Ok(FaceVertex { v, vt, vn })
}

/// Emits one `v` triple and one face per triangle. Values use the shortest
/// representation that parses back to the same float.
pub fn write_obj<R: Real>(triangles: &[Triangle<R>]) -> String {
    let mut out = String::new();
    for tri in triangles {
        for v in &tri.vertices {
            let _ = writeln!(out, "v {} {} {}", v.x, v.y, v.z);
        }
    }
    for i in 0..triangles.len() {
        let _ = writeln!(out, "f {} {} {}", 3 * i + 1, 3 * i + 2, 3 * i + 3);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    const CUBE: &str = "\
# unit cube
v 0 0 0
v 1 0 0
v 1 1 0
v 0 1 0
v 0 0 1
v 1 0 1
v 1 1 1
v 0 1 1
f 1 2 3 4
f 5 8 7 6
f 1 5 6 2
f 2 6 7 3
f 3 7 8 4
f 5 1 4 8
";

    #[test]
    fn single_triangle() {
        let m: ObjMesh<f32> = parse_obj("v 0 0 0\nv 1 0 0\nv 0 1 0\nf 1 2 3\n", "t", 0).unwrap();
        assert_eq!(m.triangles.len(), 1);
        assert_eq!(m.triangles[0].vertices[1], Vec3::new(1.0, 0.0, 0.0));
    }

    #[test]
    fn cube_fan_triangulates_to_twelve() {
        let m: ObjMesh<f64> = parse_obj(CUBE, "cube", 0).unwrap();
        assert_eq!(m.triangles.len(), 12);
        assert_eq!(m.report.faces, 6);
    }

    #[test]
    fn face_forms_and_negative_indices() {
        let src = "\
v 0 0 0
v 1 0 0
v 0 1 0
vt 0 0
vt 1 0
vt 0 1
vn 0 0 1
f -3/-3/-1 -2/-2/-1 -1/-1/-1
f 1//1 2//1 3//1
f 1/1 2/2 3/3
mtllib scene.mtl
usemtl green
";
        let m: ObjMesh<f32> = parse_obj(src, "forms", 2).unwrap();
        assert_eq!(m.triangles.len(), 3);
        assert_eq!(m.triangles[0].attributes.uv, Some([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]]));
        assert!(m.triangles[0].attributes.normals.is_some());
        assert!(m.triangles[1].attributes.uv.is_none());
        assert!(m.triangles[2].attributes.normals.is_none());
        assert_eq!(m.triangles[2].material, 2);
        assert_eq!(m.report.ignored_lines, 2);
    }

    #[test]
    fn malformed_face_reports_line() {
        let err = parse_obj::<f32>("v 0 0 0\nv 1 0 0\n\nf 1 2\n", "bad.obj", 0).unwrap_err();
        match err {
            Error::Obj { line, .. } => assert_eq!(line, 4),
            other => panic!("{other:?}"),
        }
        let err = parse_obj::<f32>("v 0 0 0\nf 1 2 9\n", "bad.obj", 0).unwrap_err();
        assert!(matches!(err, Error::Obj { line: 2, .. }));
        let err = parse_obj::<f32>("v 0 0 0\nv 1 0 0\nv 0 1 0\nf 1 2 x\n", "bad.obj", 0).unwrap_err();
        assert!(matches!(err, Error::Obj { line: 4, .. }));
    }

    #[test]
    fn degenerate_faces_are_dropped_and_counted() {
        let m: ObjMesh<f32> =
            parse_obj("v 0 0 0\nv 1 0 0\nv 2 0 0\nv 0 1 0\nf 1 2 3\nf 1 2 4\n", "d", 0).unwrap();
        assert_eq!(m.triangles.len(), 1);
        assert_eq!(m.report.degenerate_dropped, 1);
    }

    #[test]
    fn missing_file_is_an_error() {
        assert!(load_obj::<f32>("/definitely/not/here.obj", 0).is_err());
    }

    #[test]
    fn write_then_reload_is_vertex_identical() {
        let m: ObjMesh<f32> = parse_obj(CUBE, "cube", 0).unwrap();
        let again: ObjMesh<f32> = parse_obj(&write_obj(&m.triangles), "again", 0).unwrap();
        assert_eq!(m.triangles.len(), again.triangles.len());
        for (a, b) in m.triangles.iter().zip(&again.triangles) {
            assert_eq!(a.vertices, b.vertices);
        }
    }
}
