//! Wavefront OBJ subset: `v`, triangulated `f`, and `g face N` group
//! markers. Everything else is ignored.

use std::collections::BTreeMap;

use nalgebra::Point3;

use super::{Error, TriMesh};

pub fn parse_obj(text: &str) -> Result<TriMesh, Error> {
    let mut vertices: Vec<Point3<f64>> = Vec::new();
    let mut triangles: Vec<[usize; 3]> = Vec::new();
    let mut groups: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    let mut current_group: Option<usize> = None;

    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        let mut tokens = line.split_whitespace();
        match tokens.next() {
            Some("v") => {
                let mut coord = [0.0f64; 3];
                for c in &mut coord {
                    *c = tokens
                        .next()
                        .and_then(|t| t.parse().ok())
                        .ok_or_else(|| {
                            Error::MalformedFace(format!("line {}: bad vertex", lineno + 1))
                        })?;
                }
                vertices.push(Point3::new(coord[0], coord[1], coord[2]));
            }
            Some("f") => {
                let refs: Vec<&str> = tokens.collect();
                if refs.len() != 3 {
                    return Err(Error::MalformedFace(format!(
                        "line {}: face has {} vertices, expected 3",
                        lineno + 1,
                        refs.len()
                    )));
                }
                let mut tri = [0usize; 3];
                for (slot, r) in tri.iter_mut().zip(&refs) {
                    // "f 1", "f 1/2", "f 1//3" all reference vertex 1.
                    let vtx = r.split('/').next().unwrap_or_default();
                    let idx: i64 = vtx.parse().map_err(|_| {
                        Error::MalformedFace(format!("line {}: bad face index {r:?}", lineno + 1))
                    })?;
                    let resolved = if idx > 0 {
                        (idx - 1) as usize
                    } else if idx < 0 {
                        // Negative OBJ indices count back from the latest vertex.
                        let back = vertices.len() as i64 + idx;
                        if back < 0 {
                            return Err(Error::IndexOutOfRange {
                                index: idx,
                                count: vertices.len(),
                            });
                        }
                        back as usize
                    } else {
                        return Err(Error::IndexOutOfRange {
                            index: 0,
                            count: vertices.len(),
                        });
                    };
                    if resolved >= vertices.len() {
                        return Err(Error::IndexOutOfRange {
                            index: idx,
                            count: vertices.len(),
                        });
                    }
                    *slot = resolved;
                }
                if let Some(g) = current_group {
                    groups.entry(g).or_default().push(triangles.len());
                }
                triangles.push(tri);
            }
            Some("g") => {
                // Only "g face N" markers carry meaning here.
                let rest: Vec<&str> = tokens.collect();
                current_group = match rest.as_slice() {
                    ["face", n] => n.parse().ok(),
                    _ => None,
                };
            }
            _ => {}
        }
    }
    TriMesh::new(vertices, triangles, groups)
}

/// Deterministic OBJ output; inverse of `parse_obj` up to float formatting
/// (shortest round-trip representation).
pub fn write_obj(mesh: &TriMesh) -> String {
    let mut tri_group: Vec<Option<usize>> = vec![None; mesh.num_triangles()];
    for (&g, tris) in mesh.groups() {
        for &t in tris {
            tri_group[t] = Some(g);
        }
    }
    let mut out = String::new();
    for v in mesh.vertices() {
        out.push_str(&format!("v {} {} {}\n", v.x, v.y, v.z));
    }
    let mut active: Option<Option<usize>> = None;
    for (i, tri) in mesh.triangles().iter().enumerate() {
        if active != Some(tri_group[i]) {
            match tri_group[i] {
                Some(g) => out.push_str(&format!("g face {g}\n")),
                None => out.push_str("g\n"),
            }
            active = Some(tri_group[i]);
        }
        out.push_str(&format!("f {} {} {}\n", tri[0] + 1, tri[1] + 1, tri[2] + 1));
    }
    out
}
