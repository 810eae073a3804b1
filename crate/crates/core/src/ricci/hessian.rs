use crate::error::{Error, Result};
use crate::mesh::{EdgeMetric, TriangleMesh};
use crate::sparse::CsrMatrix;

use super::packing::{packing_edge_lengths, CirclePackingMetric};

/// Planar layout of a triangle with side `l[c]` opposite corner `c`:
/// corner 0 at the origin, corner 1 on the positive x axis, corner 2 above it.
pub fn layout_triangle(l: [f64; 3]) -> Option<[[f64; 2]; 3]> {
    let x = (l[2] * l[2] + l[1] * l[1] - l[0] * l[0]) / (2.0 * l[2]);
    let y2 = l[1] * l[1] - x * x;
    if !(y2 > 0.0) {
        return None;
    }
    let y = y2.sqrt();
    if !(y > 1e-14 * l[1]) {
        return None;
    }
    Some([[0.0, 0.0], [l[2], 0.0], [x, y]])
}

/// Power center of three circles centered at the triangle layout with radii `r`.
///
/// Returns the layout and the point whose power `|o - p_c|^2 - r_c^2` is the
/// same for all three circles.
pub fn face_power_center(l: [f64; 3], r: [f64; 3]) -> Option<([[f64; 2]; 3], [f64; 2])> {
    let p = layout_triangle(l)?;
    let ox = (l[2] * l[2] - r[1] * r[1] + r[0] * r[0]) / (2.0 * l[2]);
    let p2sq = p[2][0] * p[2][0] + p[2][1] * p[2][1];
    let oy = (p2sq - r[2] * r[2] + r[0] * r[0] - 2.0 * p[2][0] * ox) / (2.0 * p[2][1]);
    Some((p, [ox, oy]))
}

/// Signed distances from each face's power center to its edges, indexed
/// `[face][corner]` for the edge opposite that corner. Positive toward the
/// face interior.
#[derive(Debug, Clone, PartialEq)]
pub struct PowerHeights {
    heights: Vec<[f64; 3]>,
}

impl PowerHeights {
    pub fn get(&self, f: usize, corner: usize) -> f64 {
        self.heights[f][corner]
    }

    pub fn face(&self, f: usize) -> [f64; 3] {
        self.heights[f]
    }
}

pub fn power_heights(mesh: &TriangleMesh, packing: &CirclePackingMetric) -> Result<PowerHeights> {
    let metric = packing_edge_lengths(mesh, packing)?;
    power_heights_with_metric(mesh, packing, &metric)
}

/// As [`power_heights`], reusing lengths already induced by `packing`.
pub fn power_heights_with_metric(
    mesh: &TriangleMesh,
    packing: &CirclePackingMetric,
    metric: &EdgeMetric,
) -> Result<PowerHeights> {
    let heights = mesh
        .faces()
        .iter()
        .enumerate()
        .map(|(f, face)| {
            let l = metric.face_lengths(mesh, f);
            let r = [
                packing.radius(face[0]),
                packing.radius(face[1]),
                packing.radius(face[2]),
            ];
            let (p, o) = face_power_center(l, r).ok_or(Error::DegenerateLayout { face: f })?;
            let mut h = [0.0; 3];
            for c in 0..3 {
                let a = p[(c + 1) % 3];
                let b = p[(c + 2) % 3];
                let cross = (b[0] - a[0]) * (o[1] - a[1]) - (b[1] - a[1]) * (o[0] - a[0]);
                h[c] = cross / l[c];
            }
            Ok(h)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(PowerHeights { heights })
}

/// Per-edge weights `(h_ij^k + h_ji^l) / l_ij`; boundary edges use their single face.
pub fn edge_weights(mesh: &TriangleMesh, heights: &PowerHeights, metric: &EdgeMetric) -> Vec<f64> {
    (0..mesh.num_edges())
        .map(|e| {
            let (a, b) = mesh.edge_sides(e);
            let mut h = heights.get(a.face, a.corner);
            if let Some(b) = b {
                h += heights.get(b.face, b.corner);
            }
            h / metric.length(e)
        })
        .collect()
}

/// Hessian of the Ricci energy: `-w_ij` off the diagonal, `sum_k w_ik` on it.
pub fn ricci_hessian(mesh: &TriangleMesh, weights: &[f64]) -> CsrMatrix {
    CsrMatrix::from_edge_weights(mesh.num_vertices(), mesh.edges(), weights)
}
