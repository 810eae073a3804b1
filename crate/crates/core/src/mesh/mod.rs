//! Triangle meshes, file I/O and metric-derived quantities.
//!
//! A [`TriangleMesh`] is validated on construction: faces are triangles with
//! distinct in-range indices, every edge has one or two incident faces, the
//! orientation is consistent, every vertex has a single fan of faces, and the
//! surface is connected. Connectivity is precomputed and the mesh is
//! immutable afterwards.

mod geometry;
mod io;

pub use geometry::{
    corner_angles, euclidean_edge_metric, face_areas, gaussian_curvature, heron_area,
    one_ring_area, triangle_angles, CornerAngles, CurvatureField, EdgeMetric,
};
pub use io::{load_mesh, parse_obj, parse_off, save_mesh, write_obj, write_off, MeshFormat};

use std::collections::HashMap;

use crate::error::{Error, Result};

/// One side of an edge: the incident face and the face corner opposite the edge.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EdgeSide {
    pub face: usize,
    pub corner: usize,
}

/// Validated, connected, consistently oriented manifold triangle mesh.
#[derive(Debug, Clone)]
pub struct TriangleMesh {
    vertices: Vec<[f64; 3]>,
    faces: Vec<[usize; 3]>,
    edges: Vec<[usize; 2]>,
    edge_lookup: HashMap<(usize, usize), usize>,
    // edge opposite each face corner
    face_edges: Vec<[usize; 3]>,
    edge_sides: Vec<(EdgeSide, Option<EdgeSide>)>,
    vertex_corners: Vec<Vec<(usize, usize)>>,
    boundary_vertex: Vec<bool>,
    boundary_loops: usize,
}

impl TriangleMesh {
    /// Builds a mesh and validates every topological invariant.
    pub fn new(vertices: Vec<[f64; 3]>, faces: Vec<[usize; 3]>) -> Result<Self> {
        if faces.is_empty() {
            return Err(Error::EmptyMesh);
        }
        let n = vertices.len();
        for (f, face) in faces.iter().enumerate() {
            for &v in face {
                if v >= n {
                    return Err(Error::InvalidVertexIndex {
                        face: f,
                        vertex: v,
                        count: n,
                    });
                }
            }
            if face[0] == face[1] || face[1] == face[2] || face[0] == face[2] {
                return Err(Error::RepeatedFaceVertex { face: f });
            }
        }

        let mut directed: HashMap<(usize, usize), usize> = HashMap::with_capacity(faces.len() * 3);
        let mut edge_lookup: HashMap<(usize, usize), usize> = HashMap::with_capacity(faces.len() * 2);
        let mut edges = Vec::new();
        let mut edge_sides: Vec<(EdgeSide, Option<EdgeSide>)> = Vec::new();
        let mut face_edges = vec![[0usize; 3]; faces.len()];
        let mut vertex_corners = vec![Vec::new(); n];

        for (f, face) in faces.iter().enumerate() {
            for c in 0..3 {
                vertex_corners[face[c]].push((f, c));
                let a = face[(c + 1) % 3];
                let b = face[(c + 2) % 3];
                let key = (a.min(b), a.max(b));
                let side = EdgeSide { face: f, corner: c };
                let e = match edge_lookup.get(&key) {
                    Some(&e) => {
                        if edge_sides[e].1.is_some() {
                            return Err(Error::NonManifoldEdge { a: key.0, b: key.1 });
                        }
                        edge_sides[e].1 = Some(side);
                        e
                    }
                    None => {
                        let e = edges.len();
                        edges.push([key.0, key.1]);
                        edge_sides.push((side, None));
                        edge_lookup.insert(key, e);
                        e
                    }
                };
                if directed.insert((a, b), f).is_some() {
                    return Err(Error::InconsistentOrientation { a, b });
                }
                face_edges[f][c] = e;
            }
        }

        let mut boundary_vertex = vec![false; n];
        for (e, sides) in edge_sides.iter().enumerate() {
            if sides.1.is_none() {
                boundary_vertex[edges[e][0]] = true;
                boundary_vertex[edges[e][1]] = true;
            }
        }

        let mesh = TriangleMesh {
            vertices,
            faces,
            edges,
            edge_lookup,
            face_edges,
            edge_sides,
            vertex_corners,
            boundary_vertex,
            boundary_loops: 0,
        };
        mesh.check_vertex_fans()?;
        mesh.check_connected()?;
        let loops = mesh.count_boundary_loops();
        Ok(TriangleMesh {
            boundary_loops: loops,
            ..mesh
        })
    }

    fn check_vertex_fans(&self) -> Result<()> {
        for (v, corners) in self.vertex_corners.iter().enumerate() {
            // The link of v (opposite edges of its corners) must be one path or cycle.
            let mut parent: HashMap<usize, usize> = HashMap::with_capacity(corners.len() * 2);
            fn find(parent: &mut HashMap<usize, usize>, x: usize) -> usize {
                let p = *parent.entry(x).or_insert(x);
                if p == x {
                    return x;
                }
                let r = find(parent, p);
                parent.insert(x, r);
                r
            }
            for &(f, c) in corners {
                let a = self.faces[f][(c + 1) % 3];
                let b = self.faces[f][(c + 2) % 3];
                let ra = find(&mut parent, a);
                let rb = find(&mut parent, b);
                if ra != rb {
                    parent.insert(ra, rb);
                }
            }
            let keys: Vec<usize> = parent.keys().copied().collect();
            let mut roots: Vec<usize> = keys.into_iter().map(|k| find(&mut parent, k)).collect();
            roots.sort_unstable();
            roots.dedup();
            if roots.len() > 1 {
                return Err(Error::NonManifoldVertex { vertex: v });
            }
        }
        Ok(())
    }

    fn check_connected(&self) -> Result<()> {
        let n = self.vertices.len();
        let mut seen = vec![false; n];
        let mut components = 0;
        let mut stack = Vec::new();
        for start in 0..n {
            if seen[start] {
                continue;
            }
            components += 1;
            seen[start] = true;
            stack.push(start);
            while let Some(v) = stack.pop() {
                for &(f, _) in &self.vertex_corners[v] {
                    for &w in &self.faces[f] {
                        if !seen[w] {
                            seen[w] = true;
                            stack.push(w);
                        }
                    }
                }
            }
        }
        if components != 1 {
            return Err(Error::Disconnected { components });
        }
        Ok(())
    }

    fn count_boundary_loops(&self) -> usize {
        // Each boundary vertex of a manifold mesh has exactly one outgoing boundary edge.
        let mut next: HashMap<usize, usize> = HashMap::new();
        for sides in &self.edge_sides {
            if sides.1.is_none() {
                let EdgeSide { face, corner } = sides.0;
                let a = self.faces[face][(corner + 1) % 3];
                let b = self.faces[face][(corner + 2) % 3];
                next.insert(a, b);
            }
        }
        let mut visited: HashMap<usize, bool> = HashMap::with_capacity(next.len());
        let mut starts: Vec<usize> = next.keys().copied().collect();
        starts.sort_unstable();
        let mut loops = 0;
        for s in starts {
            if visited.contains_key(&s) {
                continue;
            }
            loops += 1;
            let mut v = s;
            while visited.insert(v, true).is_none() {
                v = next[&v];
            }
        }
        loops
    }

    pub fn vertices(&self) -> &[[f64; 3]] {
        &self.vertices
    }

    pub fn faces(&self) -> &[[usize; 3]] {
        &self.faces
    }

    /// Undirected edges as sorted vertex pairs.
    pub fn edges(&self) -> &[[usize; 2]] {
        &self.edges
    }

    pub fn num_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn num_faces(&self) -> usize {
        self.faces.len()
    }

    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }

    /// Edge index between two vertices, if they are adjacent.
    pub fn edge_between(&self, a: usize, b: usize) -> Option<usize> {
        self.edge_lookup.get(&(a.min(b), a.max(b))).copied()
    }

    /// Edge opposite `corner` of face `f`.
    pub fn face_edge(&self, f: usize, corner: usize) -> usize {
        self.face_edges[f][corner]
    }

    /// Edges opposite corners 0, 1 and 2 of face `f`.
    pub fn face_edges(&self, f: usize) -> [usize; 3] {
        self.face_edges[f]
    }

    /// Faces incident to an edge, with the corner of each face opposite the edge.
    pub fn edge_sides(&self, e: usize) -> (EdgeSide, Option<EdgeSide>) {
        self.edge_sides[e]
    }

    pub fn is_boundary_edge(&self, e: usize) -> bool {
        self.edge_sides[e].1.is_none()
    }

    pub fn is_boundary_vertex(&self, v: usize) -> bool {
        self.boundary_vertex[v]
    }

    pub fn boundary_vertices(&self) -> Vec<usize> {
        (0..self.num_vertices()).filter(|&v| self.boundary_vertex[v]).collect()
    }

    pub fn num_boundary_edges(&self) -> usize {
        self.edge_sides.iter().filter(|s| s.1.is_none()).count()
    }

    pub fn num_boundary_loops(&self) -> usize {
        self.boundary_loops
    }

    /// Corners `(face, corner)` at vertex `v`.
    pub fn vertex_corners(&self, v: usize) -> &[(usize, usize)] {
        &self.vertex_corners[v]
    }

    /// Faces sharing an edge with face `f`.
    pub fn face_neighbors(&self, f: usize) -> impl Iterator<Item = usize> + '_ {
        self.face_edges[f].iter().filter_map(move |&e| {
            let (a, b) = self.edge_sides[e];
            if a.face != f {
                Some(a.face)
            } else {
                b.map(|s| s.face)
            }
        })
    }

    /// Euler characteristic V - E + F.
    pub fn euler_characteristic(&self) -> i64 {
        self.num_vertices() as i64 - self.num_edges() as i64 + self.num_faces() as i64
    }

    /// Connected surface with exactly one boundary loop and chi = 1.
    pub fn is_topological_disk(&self) -> bool {
        self.euler_characteristic() == 1 && self.boundary_loops == 1
    }

    pub fn bounding_box_diagonal(&self) -> f64 {
        let mut lo = [f64::INFINITY; 3];
        let mut hi = [f64::NEG_INFINITY; 3];
        for p in &self.vertices {
            for k in 0..3 {
                lo[k] = lo[k].min(p[k]);
                hi[k] = hi[k].max(p[k]);
            }
        }
        ((hi[0] - lo[0]).powi(2) + (hi[1] - lo[1]).powi(2) + (hi[2] - lo[2]).powi(2)).sqrt()
    }

    /// Same connectivity with new vertex positions; revalidated.
    pub fn with_vertices(&self, vertices: Vec<[f64; 3]>) -> Result<Self> {
        if vertices.len() != self.vertices.len() {
            return Err(Error::DimensionMismatch {
                left: vertices.len(),
                right: self.vertices.len(),
            });
        }
        let mut mesh = self.clone();
        mesh.vertices = vertices;
        Ok(mesh)
    }
}
