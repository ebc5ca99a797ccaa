//! Wavefront OBJ subset: `v x y z` and `f i j k` (1-based) lines only.
//!
//! Lattices reuse the same subset with four indices per `f` line, one line
//! per tetrahedron.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use super::{LatticeMesh, SurfaceMesh, Vec3};
use crate::{Error, Result};

struct RawObj {
    vertices: Vec<Vec3>,
    faces: Vec<Vec<usize>>,
}

fn parse(text: &str, arity: usize) -> Result<RawObj> {
    let mut vertices = Vec::new();
    let mut faces = Vec::new();
    let mut face_lines = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let line_no = n + 1;
        let mut tokens = line.split_whitespace();
        match tokens.next() {
            Some("v") => {
                let mut p = [0.0; 3];
                for c in p.iter_mut() {
                    let tok = tokens.next().ok_or_else(|| Error::Parse {
                        line: line_no,
                        message: "vertex needs three coordinates".into(),
                    })?;
                    *c = tok.parse().map_err(|_| Error::Parse {
                        line: line_no,
                        message: format!("bad coordinate `{tok}`"),
                    })?;
                }
                vertices.push(p);
            }
            Some("f") => {
                let mut face = Vec::with_capacity(arity);
                for tok in tokens {
                    let head = tok.split('/').next().unwrap_or(tok);
                    let idx: usize = head.parse().map_err(|_| Error::Parse {
                        line: line_no,
                        message: format!("bad face index `{tok}`"),
                    })?;
                    if idx == 0 {
                        return Err(Error::Parse {
                            line: line_no,
                            message: "face indices are 1-based".into(),
                        });
                    }
                    face.push(idx);
                }
                if face.len() != arity {
                    return Err(Error::Parse {
                        line: line_no,
                        message: format!("expected {arity} indices, found {}", face.len()),
                    });
                }
                faces.push(face);
                face_lines.push(line_no);
            }
            _ => {}
        }
    }
    let count = vertices.len();
    for (face, &line) in faces.iter_mut().zip(&face_lines) {
        for idx in face.iter_mut() {
            if *idx > count {
                return Err(Error::IndexOutOfRange {
                    line,
                    index: *idx,
                    count,
                });
            }
            *idx -= 1;
        }
    }
    Ok(RawObj { vertices, faces })
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

pub fn parse_surface(text: &str) -> Result<SurfaceMesh> {
    let raw = parse(text, 3)?;
    let tris = raw.faces.iter().map(|f| [f[0], f[1], f[2]]).collect();
    SurfaceMesh::new(raw.vertices, tris)
}

pub fn parse_lattice(text: &str) -> Result<LatticeMesh> {
    let raw = parse(text, 4)?;
    let tets = raw.faces.iter().map(|f| [f[0], f[1], f[2], f[3]]).collect();
    LatticeMesh::new(raw.vertices, tets)
}

pub fn load_surface(path: impl AsRef<Path>) -> Result<SurfaceMesh> {
    parse_surface(&read(path.as_ref())?)
}

pub fn load_lattice(path: impl AsRef<Path>) -> Result<LatticeMesh> {
    parse_lattice(&read(path.as_ref())?)
}

// `{}` on f64 prints the shortest representation that parses back to the same
// value, so the text round trip is exact.
fn format(vertices: &[Vec3], faces: impl Iterator<Item = Vec<usize>>) -> String {
    let mut out = String::new();
    for v in vertices {
        let _ = writeln!(out, "v {} {} {}", v[0], v[1], v[2]);
    }
    for f in faces {
        out.push('f');
        for i in f {
            let _ = write!(out, " {}", i + 1);
        }
        out.push('\n');
    }
    out
}

pub fn save_surface(mesh: &SurfaceMesh, path: impl AsRef<Path>) -> Result<()> {
    let text = format(mesh.vertices(), mesh.triangles().iter().map(|t| t.to_vec()));
    fs::write(path.as_ref(), text).map_err(|e| Error::io(path.as_ref(), e))
}

pub fn save_lattice(mesh: &LatticeMesh, path: impl AsRef<Path>) -> Result<()> {
    let text = format(mesh.vertices(), mesh.tetrahedra().iter().map(|t| t.to_vec()));
    fs::write(path.as_ref(), text).map_err(|e| Error::io(path.as_ref(), e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_triangle() {
        let mesh = parse_surface("# tri\nv 0 0 0\nv 1 0 0\nv 0 1 0\nvn 0 0 1\nf 1 2 3\n").unwrap();
        assert_eq!(mesh.vertex_count(), 3);
        assert_eq!(mesh.edges().len(), 3);
    }

    #[test]
    fn face_index_beyond_vertices() {
        let err = parse_surface("v 0 0 0\nv 1 0 0\nv 0 1 0\nf 1 2 7\n").unwrap_err();
        assert!(matches!(
            err,
            Error::IndexOutOfRange {
                line: 4,
                index: 7,
                count: 3
            }
        ));
    }

    #[test]
    fn disconnected_surface() {
        let text = "v 0 0 0\nv 1 0 0\nv 0 1 0\nv 4 0 0\nv 5 0 0\nv 4 1 0\nf 1 2 3\nf 4 5 6\n";
        assert!(matches!(parse_surface(text), Err(Error::Disconnected { .. })));
    }

    #[test]
    fn slash_face_tokens_keep_position_index() {
        let mesh = parse_surface("v 0 0 0\nv 1 0 0\nv 0 1 0\nf 1/1/1 2/2/2 3/3/3\n").unwrap();
        assert_eq!(mesh.triangles(), &[[0, 1, 2]]);
    }

    #[test]
    fn garbage_coordinate_is_a_parse_error() {
        assert!(matches!(parse_surface("v 0 x 0\n"), Err(Error::Parse { line: 1, .. })));
    }

    #[test]
    fn surface_round_trip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("s.obj");
        let mesh = SurfaceMesh::new(
            vec![[0.1, 0.2, 0.3], [1.0 / 3.0, -2.5e-7, 0.0], [0.0, 1.0, 1e10]],
            vec![[0, 1, 2]],
        )
        .unwrap();
        save_surface(&mesh, &path).unwrap();
        let back = load_surface(&path).unwrap();
        assert_eq!(back.vertices(), mesh.vertices());
        assert_eq!(back.triangles(), mesh.triangles());
    }

    #[test]
    fn lattice_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("l.obj");
        let v = vec![[0.0; 3], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];
        let mesh = LatticeMesh::new(v, vec![[0, 1, 2, 3]]).unwrap();
        save_lattice(&mesh, &path).unwrap();
        let back = load_lattice(&path).unwrap();
        assert_eq!(back.vertices(), mesh.vertices());
        assert_eq!(back.tetrahedra(), mesh.tetrahedra());
        assert_eq!(back.edges().len(), 6);
    }
}
