use std::fmt::Write as _;
use std::path::Path;

use super::TriangleMesh;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MeshFormat {
    Off,
    Obj,
}

impl MeshFormat {
    pub fn from_path(path: &Path) -> Result<Self> {
        match path
            .extension()
            .and_then(|e| e.to_str())
            .map(|e| e.to_ascii_lowercase())
            .as_deref()
        {
            Some("off") => Ok(MeshFormat::Off),
            Some("obj") => Ok(MeshFormat::Obj),
            _ => Err(Error::Parse {
                line: 0,
                message: format!("unknown mesh extension for {}", path.display()),
            }),
        }
    }
}

/// Reads and validates an OFF or OBJ triangle mesh (format chosen by extension).
pub fn load_mesh(path: impl AsRef<Path>) -> Result<TriangleMesh> {
    let path = path.as_ref();
    let format = MeshFormat::from_path(path)?;
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    match format {
        MeshFormat::Off => parse_off(&text),
        MeshFormat::Obj => parse_obj(&text),
    }
}

pub fn save_mesh(mesh: &TriangleMesh, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let text = match MeshFormat::from_path(path)? {
        MeshFormat::Off => write_off(mesh),
        MeshFormat::Obj => write_obj(mesh),
    };
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn parse_err(line: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        line,
        message: message.into(),
    }
}

fn parse_f64(tok: Option<&str>, line: usize) -> Result<f64> {
    let tok = tok.ok_or_else(|| parse_err(line, "missing coordinate"))?;
    tok.parse::<f64>()
        .map_err(|_| parse_err(line, format!("invalid number '{tok}'")))
}

fn parse_usize(tok: Option<&str>, line: usize, what: &str) -> Result<usize> {
    let tok = tok.ok_or_else(|| parse_err(line, format!("missing {what}")))?;
    tok.parse::<usize>()
        .map_err(|_| parse_err(line, format!("invalid {what} '{tok}'")))
}

pub fn parse_off(text: &str) -> Result<TriangleMesh> {
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.split('#').next().unwrap_or("").trim()))
        .filter(|(_, l)| !l.is_empty());

    let (hline, header) = lines.next().ok_or_else(|| parse_err(1, "empty file"))?;
    let mut head = header.split_whitespace();
    if head.next() != Some("OFF") {
        return Err(parse_err(hline, "missing OFF header"));
    }
    // counts may follow the keyword on the same line
    let rest: Vec<&str> = head.collect();
    let (cline, counts): (usize, Vec<&str>) = if rest.is_empty() {
        let (n, l) = lines.next().ok_or_else(|| parse_err(hline + 1, "missing counts"))?;
        (n, l.split_whitespace().collect())
    } else {
        (hline, rest)
    };
    let mut it = counts.into_iter();
    let nv = parse_usize(it.next(), cline, "vertex count")?;
    let nf = parse_usize(it.next(), cline, "face count")?;

    let mut vertices = Vec::with_capacity(nv);
    for _ in 0..nv {
        let (n, l) = lines
            .next()
            .ok_or_else(|| parse_err(0, "unexpected end of file in vertex block"))?;
        let mut t = l.split_whitespace();
        vertices.push([
            parse_f64(t.next(), n)?,
            parse_f64(t.next(), n)?,
            parse_f64(t.next(), n)?,
        ]);
    }
    let mut faces = Vec::with_capacity(nf);
    for f in 0..nf {
        let (n, l) = lines
            .next()
            .ok_or_else(|| parse_err(0, "unexpected end of file in face block"))?;
        let mut t = l.split_whitespace();
        let arity = parse_usize(t.next(), n, "face arity")?;
        if arity != 3 {
            return Err(Error::NonTriangleFace { face: f, arity });
        }
        faces.push([
            parse_usize(t.next(), n, "vertex index")?,
            parse_usize(t.next(), n, "vertex index")?,
            parse_usize(t.next(), n, "vertex index")?,
        ]);
    }
    TriangleMesh::new(vertices, faces)
}

pub fn parse_obj(text: &str) -> Result<TriangleMesh> {
    let mut vertices = Vec::new();
    let mut faces = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let n = i + 1;
        let l = raw.split('#').next().unwrap_or("").trim();
        let mut t = l.split_whitespace();
        match t.next() {
            Some("v") => vertices.push([
                parse_f64(t.next(), n)?,
                parse_f64(t.next(), n)?,
                parse_f64(t.next(), n)?,
            ]),
            Some("f") => {
                let refs: Vec<&str> = t.collect();
                if refs.len() != 3 {
                    return Err(Error::NonTriangleFace {
                        face: faces.len(),
                        arity: refs.len(),
                    });
                }
                let mut face = [0usize; 3];
                for (k, r) in refs.iter().enumerate() {
                    let idx = r.split('/').next().unwrap_or("");
                    let v: i64 = idx
                        .parse()
                        .map_err(|_| parse_err(n, format!("invalid face index '{r}'")))?;
                    face[k] = if v > 0 {
                        (v - 1) as usize
                    } else if v < 0 && (-v) as usize <= vertices.len() {
                        vertices.len() - (-v) as usize
                    } else {
                        return Err(parse_err(n, format!("invalid face index '{r}'")));
                    };
                }
                faces.push(face);
            }
            _ => {}
        }
    }
    TriangleMesh::new(vertices, faces)
}

pub fn write_off(mesh: &TriangleMesh) -> String {
    let mut s = String::new();
    s.push_str("OFF\n");
    let _ = writeln!(s, "{} {} {}", mesh.num_vertices(), mesh.num_faces(), mesh.num_edges());
    for p in mesh.vertices() {
        let _ = writeln!(s, "{} {} {}", p[0], p[1], p[2]);
    }
    for f in mesh.faces() {
        let _ = writeln!(s, "3 {} {} {}", f[0], f[1], f[2]);
    }
    s
}

pub fn write_obj(mesh: &TriangleMesh) -> String {
    let mut s = String::new();
    for p in mesh.vertices() {
        let _ = writeln!(s, "v {} {} {}", p[0], p[1], p[2]);
    }
    for f in mesh.faces() {
        let _ = writeln!(s, "f {} {} {}", f[0] + 1, f[1] + 1, f[2] + 1);
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::tests::icosahedron;

    #[test]
    fn off_single_triangle() {
        let m = parse_off("OFF\n3 1 3\n0 0 0\n1 0 0\n0 1 0\n3 0 1 2\n").unwrap();
        assert_eq!(m.num_boundary_edges(), 3);
        assert_eq!(m.euler_characteristic(), 1);
    }

    #[test]
    fn off_with_comments_and_inline_counts() {
        let m = parse_off("# header\nOFF 3 1 0\n0 0 0 # a\n\n1 0 0\n0 1 0\n3 0 1 2\n").unwrap();
        assert_eq!(m.num_faces(), 1);
    }

    #[test]
    fn off_quad_rejected() {
        let err = parse_off("OFF\n4 1 4\n0 0 0\n1 0 0\n1 1 0\n0 1 0\n4 0 1 2 3\n").unwrap_err();
        assert!(matches!(err, Error::NonTriangleFace { face: 0, arity: 4 }));
        assert!(err.to_string().contains("non-triangle face at index 0"));
    }

    #[test]
    fn off_truncated_rejected() {
        assert!(matches!(
            parse_off("OFF\n3 1 0\n0 0 0\n1 0 0\n"),
            Err(Error::Parse { .. })
        ));
        assert!(matches!(parse_off("PLY\n"), Err(Error::Parse { line: 1, .. })));
    }

    #[test]
    fn obj_parsing() {
        let m = parse_obj("v 0 0 0\nv 1 0 0\nvn 0 0 1\nv 0 1 0\nf 1//1 2//1 3//1\n").unwrap();
        assert_eq!(m.faces(), &[[0, 1, 2]]);
        let m = parse_obj("v 0 0 0\nv 1 0 0\nv 0 1 0\nf -3 -2 -1\n").unwrap();
        assert_eq!(m.faces(), &[[0, 1, 2]]);
        assert!(matches!(
            parse_obj("v 0 0 0\nv 1 0 0\nv 1 1 0\nv 0 1 0\nf 1 2 3 4\n"),
            Err(Error::NonTriangleFace { face: 0, arity: 4 })
        ));
    }

    #[test]
    fn round_trip_exact() {
        let ico = icosahedron();
        let off = parse_off(&write_off(&ico)).unwrap();
        let obj = parse_obj(&write_obj(&ico)).unwrap();
        for m in [off, obj] {
            assert_eq!(m.faces(), ico.faces());
            assert_eq!(m.vertices(), ico.vertices());
        }
    }

    #[test]
    fn load_from_disk() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ico.off");
        save_mesh(&icosahedron(), &path).unwrap();
        let m = load_mesh(&path).unwrap();
        assert_eq!(m.num_faces(), 20);
        assert!(matches!(
            load_mesh(dir.path().join("missing.off")),
            Err(Error::Io { .. })
        ));
    }
}
