use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use super::TriangleMesh;
use crate::error::{Error, Result};

/// Per-edge lengths, indexed like [`TriangleMesh::edges`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EdgeMetric {
    lengths: Vec<f64>,
}

impl EdgeMetric {
    /// Wraps raw lengths. Positivity is checked, the triangle inequality is not
    /// (see [`EdgeMetric::check_triangle_inequality`]).
    pub fn new(lengths: Vec<f64>) -> Result<Self> {
        for (e, &l) in lengths.iter().enumerate() {
            if !(l > 0.0) || !l.is_finite() {
                return Err(Error::NegativeSquaredLength {
                    edge: e,
                    squared: l * l.abs(),
                });
            }
        }
        Ok(EdgeMetric { lengths })
    }

    pub fn lengths(&self) -> &[f64] {
        &self.lengths
    }

    pub fn length(&self, e: usize) -> f64 {
        self.lengths[e]
    }

    pub fn len(&self) -> usize {
        self.lengths.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lengths.is_empty()
    }

    /// Lengths of the edges opposite corners 0, 1, 2 of face `f`.
    pub fn face_lengths(&self, mesh: &TriangleMesh, f: usize) -> [f64; 3] {
        let [a, b, c] = mesh.face_edges(f);
        [self.lengths[a], self.lengths[b], self.lengths[c]]
    }

    pub fn scaled(&self, factor: f64) -> Result<Self> {
        EdgeMetric::new(self.lengths.iter().map(|l| l * factor).collect())
    }

    pub fn check_triangle_inequality(&self, mesh: &TriangleMesh) -> Result<()> {
        for f in 0..mesh.num_faces() {
            let [a, b, c] = self.face_lengths(mesh, f);
            if !(a < b + c && b < a + c && c < a + b) {
                return Err(Error::TriangleInequality { face: f });
            }
        }
        Ok(())
    }
}

/// Edge lengths from vertex positions.
pub fn euclidean_edge_metric(mesh: &TriangleMesh) -> Result<EdgeMetric> {
    let threshold = 1e-12 * mesh.bounding_box_diagonal();
    let p = mesh.vertices();
    let mut lengths = Vec::with_capacity(mesh.num_edges());
    for (e, &[i, j]) in mesh.edges().iter().enumerate() {
        let d = [p[i][0] - p[j][0], p[i][1] - p[j][1], p[i][2] - p[j][2]];
        let l = (d[0] * d[0] + d[1] * d[1] + d[2] * d[2]).sqrt();
        if !(l > threshold) {
            return Err(Error::DegenerateEdge {
                edge: e,
                length: l,
                threshold,
            });
        }
        lengths.push(l);
    }
    Ok(EdgeMetric { lengths })
}

/// Interior angles of a triangle with side lengths `l[c]` opposite corner `c`.
///
/// Uses the half-angle form of the law of cosines, which keeps full relative
/// precision for needle-shaped triangles where `acos` does not.
pub fn triangle_angles(l: [f64; 3]) -> Option<[f64; 3]> {
    let [a, b, c] = l;
    let s = [b + c - a, a + c - b, a + b - c];
    if !(s[0] > 0.0 && s[1] > 0.0 && s[2] > 0.0) {
        return None;
    }
    let p = a + b + c;
    let angle = |k: usize| {
        let (i, j) = ((k + 1) % 3, (k + 2) % 3);
        2.0 * ((s[i] * s[j]) / (p * s[k])).sqrt().atan()
    };
    Some([angle(0), angle(1), angle(2)])
}

/// Corner angles per face, indexed by face corner.
#[derive(Debug, Clone, PartialEq)]
pub struct CornerAngles {
    angles: Vec<[f64; 3]>,
}

impl CornerAngles {
    pub fn face(&self, f: usize) -> [f64; 3] {
        self.angles[f]
    }

    pub fn get(&self, f: usize, corner: usize) -> f64 {
        self.angles[f][corner]
    }

    pub fn as_slice(&self) -> &[[f64; 3]] {
        &self.angles
    }
}

pub fn corner_angles(mesh: &TriangleMesh, metric: &EdgeMetric) -> Result<CornerAngles> {
    let mut angles = Vec::with_capacity(mesh.num_faces());
    for f in 0..mesh.num_faces() {
        let l = metric.face_lengths(mesh, f);
        angles.push(triangle_angles(l).ok_or(Error::TriangleInequality { face: f })?);
    }
    Ok(CornerAngles { angles })
}

/// Discrete Gaussian curvature per vertex.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurvatureField {
    values: Vec<f64>,
}

impl CurvatureField {
    pub fn new(values: Vec<f64>) -> Self {
        CurvatureField { values }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn get(&self, v: usize) -> f64 {
        self.values[v]
    }

    pub fn total(&self) -> f64 {
        self.values.iter().sum()
    }
}

/// Angle deficit: `2pi - sum` at interior vertices and `pi - sum` on the boundary.
pub fn gaussian_curvature(mesh: &TriangleMesh, angles: &CornerAngles) -> CurvatureField {
    let mut sums = vec![0.0; mesh.num_vertices()];
    for (f, face) in mesh.faces().iter().enumerate() {
        for c in 0..3 {
            sums[face[c]] += angles.get(f, c);
        }
    }
    let values = sums
        .into_iter()
        .enumerate()
        .map(|(v, s)| {
            if mesh.is_boundary_vertex(v) {
                PI - s
            } else {
                2.0 * PI - s
            }
        })
        .collect();
    CurvatureField { values }
}

/// Heron's formula in Kahan's numerically stable arrangement.
pub fn heron_area(a: f64, b: f64, c: f64) -> f64 {
    let mut s = [a, b, c];
    s.sort_by(|x, y| y.total_cmp(x));
    let [a, b, c] = s;
    let q = (a + (b + c)) * (c - (a - b)) * (c + (a - b)) * (a + (b - c));
    0.25 * q.max(0.0).sqrt()
}

pub fn face_areas(mesh: &TriangleMesh, metric: &EdgeMetric) -> Vec<f64> {
    (0..mesh.num_faces())
        .map(|f| {
            let [a, b, c] = metric.face_lengths(mesh, f);
            heron_area(a, b, c)
        })
        .collect()
}

/// Total area of the faces incident to `v`.
pub fn one_ring_area(mesh: &TriangleMesh, metric: &EdgeMetric, v: usize) -> f64 {
    mesh.vertex_corners(v)
        .iter()
        .map(|&(f, _)| {
            let [a, b, c] = metric.face_lengths(mesh, f);
            heron_area(a, b, c)
        })
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::tests::{hex_fan, icosahedron};

    fn single(p: [[f64; 3]; 3]) -> TriangleMesh {
        TriangleMesh::new(p.to_vec(), vec![[0, 1, 2]]).unwrap()
    }

    #[test]
    fn equilateral_lengths_and_angles() {
        let m = single([[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.5, 3f64.sqrt() / 2.0, 0.0]]);
        let metric = euclidean_edge_metric(&m).unwrap();
        for &l in metric.lengths() {
            assert!((l - 1.0).abs() < 1e-15);
        }
        let ang = corner_angles(&m, &metric).unwrap();
        for c in 0..3 {
            assert!((ang.get(0, c) - PI / 3.0).abs() < 1e-15);
        }
    }

    #[test]
    fn right_triangle() {
        let m = single([[0.0, 0.0, 0.0], [3.0, 0.0, 0.0], [0.0, 4.0, 0.0]]);
        let metric = euclidean_edge_metric(&m).unwrap();
        let mut ls = metric.lengths().to_vec();
        ls.sort_by(f64::total_cmp);
        assert_eq!(ls, vec![3.0, 4.0, 5.0]);
        let ang = corner_angles(&m, &metric).unwrap();
        // corner 0 sits at the right angle, opposite the hypotenuse
        assert!((ang.get(0, 0) - PI / 2.0).abs() < 1e-15);
        assert!((one_ring_area(&m, &metric, 0) - 6.0).abs() < 1e-14);
    }

    #[test]
    fn degenerate_vertex_rejected() {
        let m = single([[0.0, 0.0, 0.0], [0.0, 0.0, 0.0], [0.0, 1.0, 0.0]]);
        assert!(matches!(
            euclidean_edge_metric(&m),
            Err(Error::DegenerateEdge { .. })
        ));
    }

    #[test]
    fn triangle_inequality_violation() {
        assert!(triangle_angles([1.0, 1.0, 2.1]).is_none());
        let m = single([[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0]]);
        let metric = EdgeMetric::new(vec![1.0, 1.0, 2.1]).unwrap();
        assert!(matches!(
            corner_angles(&m, &metric),
            Err(Error::TriangleInequality { face: 0 })
        ));
    }

    #[test]
    fn flat_fan_and_icosahedron_curvature() {
        let fan = hex_fan();
        let metric = euclidean_edge_metric(&fan).unwrap();
        let k = gaussian_curvature(&fan, &corner_angles(&fan, &metric).unwrap());
        assert!(k.get(0).abs() < 1e-14);
        assert!((one_ring_area(&fan, &metric, 0) - 6.0 * 3f64.sqrt() / 4.0).abs() < 1e-14);
        assert!((k.total() - 2.0 * PI).abs() < 1e-12);

        let ico = icosahedron();
        let metric = euclidean_edge_metric(&ico).unwrap();
        let k = gaussian_curvature(&ico, &corner_angles(&ico, &metric).unwrap());
        for v in 0..12 {
            assert!((k.get(v) - PI / 3.0).abs() < 1e-13);
        }
        assert!((k.total() - 4.0 * PI).abs() < 1e-12);
    }

    #[test]
    fn cube_corner_curvature() {
        // three right-angle corners meeting at the origin, closed by a fourth face
        let v = vec![
            [0.0, 0.0, 0.0],
            [1.0, 0.0, 0.0],
            [0.0, 1.0, 0.0],
            [0.0, 0.0, 1.0],
        ];
        let m = TriangleMesh::new(v, vec![[0, 2, 1], [0, 1, 3], [0, 3, 2], [1, 2, 3]]).unwrap();
        let metric = euclidean_edge_metric(&m).unwrap();
        let k = gaussian_curvature(&m, &corner_angles(&m, &metric).unwrap());
        assert!((k.get(0) - PI / 2.0).abs() < 1e-14);
    }

    #[test]
    fn heron_matches_cross_product() {
        let a = heron_area(3.0, 4.0, 5.0);
        assert_eq!(a, 6.0);
        let e = heron_area(1.0, 1.0, 1.0);
        assert!((e - 3f64.sqrt() / 4.0).abs() < 1e-16);
    }
}
