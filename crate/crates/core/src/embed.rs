//! Breadth-first isometric layout of a flat metric in the plane, plus SVG and
//! OBJ export of the result.

use std::collections::VecDeque;
use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::mesh::{corner_angles, gaussian_curvature, EdgeMetric, TriangleMesh};
use crate::ricci::layout_triangle;

/// Interior curvature above this cannot be laid out without tearing.
pub const FLATNESS_TOLERANCE: f64 = 1e-4;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SeedFace {
    /// Face with the largest minimum corner angle.
    Auto,
    Face(usize),
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlanarEmbedding {
    pub positions: Vec<[f64; 2]>,
    pub seed_face: usize,
    /// Largest relative length mismatch on edges closed between already-placed vertices.
    pub consistency_residual: f64,
}

impl PlanarEmbedding {
    /// Signed area of a face in the plane (positive for counterclockwise).
    pub fn signed_area(&self, mesh: &TriangleMesh, f: usize) -> f64 {
        let [a, b, c] = mesh.faces()[f].map(|v| self.positions[v]);
        0.5 * ((b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0]))
    }

    /// Largest `|planar - metric| / metric` over all edges.
    pub fn length_distortion(&self, mesh: &TriangleMesh, metric: &EdgeMetric) -> f64 {
        mesh.edges()
            .iter()
            .enumerate()
            .map(|(e, &[i, j])| {
                let d = dist(self.positions[i], self.positions[j]);
                (d - metric.length(e)).abs() / metric.length(e)
            })
            .fold(0.0, f64::max)
    }

    pub fn to_obj(&self, mesh: &TriangleMesh) -> String {
        let mut s = String::new();
        for p in &self.positions {
            let _ = writeln!(s, "v {} {} 0", p[0], p[1]);
        }
        for f in mesh.faces() {
            let _ = writeln!(s, "f {} {} {}", f[0] + 1, f[1] + 1, f[2] + 1);
        }
        s
    }

    /// SVG drawing of the flattened faces, optionally with the vertex circles.
    pub fn to_svg(&self, mesh: &TriangleMesh, circles: Option<&[f64]>) -> String {
        let (mut lo, mut hi) = ([f64::INFINITY; 2], [f64::NEG_INFINITY; 2]);
        for p in &self.positions {
            for k in 0..2 {
                lo[k] = lo[k].min(p[k]);
                hi[k] = hi[k].max(p[k]);
            }
        }
        let span = (hi[0] - lo[0]).max(hi[1] - lo[1]).max(f64::MIN_POSITIVE);
        let size = 800.0;
        let margin = 20.0;
        let scale = (size - 2.0 * margin) / span;
        // flip y so counterclockwise stays counterclockwise on screen
        let map = |p: [f64; 2]| {
            (
                margin + (p[0] - lo[0]) * scale,
                size - margin - (p[1] - lo[1]) * scale,
            )
        };
        let mut s = String::new();
        let _ = writeln!(
            s,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{size}" height="{size}" viewBox="0 0 {size} {size}">"#
        );
        let _ = writeln!(
            s,
            r##"<g fill="#f4f1e8" stroke="#333" stroke-width="0.5">"##
        );
        for f in mesh.faces() {
            let pts: Vec<String> = f
                .iter()
                .map(|&v| {
                    let (x, y) = map(self.positions[v]);
                    format!("{x:.3},{y:.3}")
                })
                .collect();
            let _ = writeln!(s, r#"<polygon points="{}"/>"#, pts.join(" "));
        }
        let _ = writeln!(s, "</g>");
        if let Some(radii) = circles {
            let _ = writeln!(
                s,
                r##"<g fill="none" stroke="#c0392b" stroke-width="0.4">"##
            );
            for (p, r) in self.positions.iter().zip(radii) {
                let (x, y) = map(*p);
                let _ = writeln!(
                    s,
                    r#"<circle cx="{x:.3}" cy="{y:.3}" r="{:.3}"/>"#,
                    r * scale
                );
            }
            let _ = writeln!(s, "</g>");
        }
        let _ = writeln!(s, "</svg>");
        s
    }
}

fn dist(a: [f64; 2], b: [f64; 2]) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt()
}

fn auto_seed(mesh: &TriangleMesh, metric: &EdgeMetric) -> Result<usize> {
    let angles = corner_angles(mesh, metric)?;
    let mut best = (0, f64::NEG_INFINITY);
    for f in 0..mesh.num_faces() {
        let m = angles.face(f).into_iter().fold(f64::INFINITY, f64::min);
        if m > best.1 {
            best = (f, m);
        }
    }
    Ok(best.0)
}

/// Lays out a flat disk metric in the plane face by face.
///
/// The seed face goes down with its first vertex at the origin and its first
/// edge along the x axis. Faces are then visited breadth-first; each new vertex
/// sits at the intersection of two circles around already-placed vertices,
/// on the side that keeps the face counterclockwise.
pub fn embed_plane(mesh: &TriangleMesh, metric: &EdgeMetric, seed: SeedFace) -> Result<PlanarEmbedding> {
    if !mesh.is_topological_disk() {
        return Err(Error::NotDisk {
            euler: mesh.euler_characteristic(),
            loops: mesh.num_boundary_loops(),
        });
    }
    let curvature = gaussian_curvature(mesh, &corner_angles(mesh, metric)?);
    for v in 0..mesh.num_vertices() {
        if !mesh.is_boundary_vertex(v) && curvature.get(v).abs() >= FLATNESS_TOLERANCE {
            return Err(Error::NotFlat {
                vertex: v,
                curvature: curvature.get(v),
            });
        }
    }
    let seed_face = match seed {
        SeedFace::Auto => auto_seed(mesh, metric)?,
        SeedFace::Face(f) if f < mesh.num_faces() => f,
        SeedFace::Face(f) => return Err(Error::InvalidFace { face: f }),
    };

    let n = mesh.num_vertices();
    let mut pos: Vec<Option<[f64; 2]>> = vec![None; n];
    let face = mesh.faces()[seed_face];
    let p = layout_triangle(metric.face_lengths(mesh, seed_face))
        .ok_or(Error::DegenerateLayout { face: seed_face })?;
    for c in 0..3 {
        pos[face[c]] = Some(p[c]);
    }

    let mut placed = vec![false; mesh.num_faces()];
    let mut queued = vec![false; mesh.num_faces()];
    placed[seed_face] = true;
    queued[seed_face] = true;
    let mut queue = VecDeque::new();
    for g in mesh.face_neighbors(seed_face) {
        queued[g] = true;
        queue.push_back(g);
    }

    let mut residual: f64 = 0.0;
    while let Some(f) = queue.pop_front() {
        let face = mesh.faces()[f];
        let l = metric.face_lengths(mesh, f);
        match face.iter().position(|&v| pos[v].is_none()) {
            Some(c) => {
                // corners a -> b -> c run counterclockwise
                let a = (c + 1) % 3;
                let b = (c + 2) % 3;
                let pa = pos[face[a]].expect("placed");
                let pb = pos[face[b]].expect("placed");
                let (r_a, r_b) = (l[b], l[a]);
                let d = dist(pa, pb);
                let x = (d * d + r_a * r_a - r_b * r_b) / (2.0 * d);
                let mut y2 = r_a * r_a - x * x;
                if y2 < 0.0 {
                    if (-y2).sqrt() > 1e-6 * r_a.max(r_b) {
                        return Err(Error::EmptyIntersection {
                            face: f,
                            vertex: face[c],
                        });
                    }
                    y2 = 0.0;
                }
                let y = y2.sqrt();
                let e = [(pb[0] - pa[0]) / d, (pb[1] - pa[1]) / d];
                let nrm = [-e[1], e[0]];
                pos[face[c]] = Some([
                    pa[0] + x * e[0] + y * nrm[0],
                    pa[1] + x * e[1] + y * nrm[1],
                ]);
            }
            None => {
                for c in 0..3 {
                    let pa = pos[face[(c + 1) % 3]].expect("placed");
                    let pb = pos[face[(c + 2) % 3]].expect("placed");
                    residual = residual.max((dist(pa, pb) - l[c]).abs() / l[c]);
                }
            }
        }
        placed[f] = true;
        for g in mesh.face_neighbors(f) {
            if !queued[g] {
                queued[g] = true;
                queue.push_back(g);
            }
        }
    }
    debug_assert!(placed.iter().all(|&p| p));

    Ok(PlanarEmbedding {
        positions: pos.into_iter().map(|p| p.expect("connected mesh")).collect(),
        seed_face,
        consistency_residual: residual,
    })
}
