use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mesh::{EdgeMetric, TriangleMesh};

/// Lower clamp for inversive distances; keeps induced lengths real.
pub const ETA_FLOOR: f64 = -0.999999;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Background {
    Euclidean,
}

/// Vertex radii and fixed per-edge inversive distances.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CirclePackingMetric {
    radii: Vec<f64>,
    eta: Vec<f64>,
    background: Background,
}

impl CirclePackingMetric {
    pub fn new(radii: Vec<f64>, eta: Vec<f64>) -> Result<Self> {
        for (v, &r) in radii.iter().enumerate() {
            if !(r > 0.0) || !r.is_finite() {
                return Err(Error::NonPositiveRadius { vertex: v, radius: r });
            }
        }
        Ok(CirclePackingMetric {
            radii,
            eta,
            background: Background::Euclidean,
        })
    }

    pub fn radii(&self) -> &[f64] {
        &self.radii
    }

    pub fn radius(&self, v: usize) -> f64 {
        self.radii[v]
    }

    /// Inversive distances, indexed by edge.
    pub fn eta(&self) -> &[f64] {
        &self.eta
    }

    pub fn background(&self) -> Background {
        self.background
    }

    /// Packing with radii `r_i * exp(u_i)` and the same inversive distances.
    pub fn with_conformal_factors(&self, u: &[f64]) -> Result<Self> {
        if u.len() != self.radii.len() {
            return Err(Error::DimensionMismatch {
                left: u.len(),
                right: self.radii.len(),
            });
        }
        CirclePackingMetric::new(
            self.radii.iter().zip(u).map(|(r, ui)| r * ui.exp()).collect(),
            self.eta.clone(),
        )
    }
}

/// Inversive-distance circle packing reproducing the given edge lengths.
///
/// Each vertex gets the smallest of its per-face tangent radii
/// `(l_ij + l_ki - l_jk) / 2`; each edge gets the inversive distance that makes
/// the induced length equal the input length.
pub fn init_circle_packing(mesh: &TriangleMesh, metric: &EdgeMetric) -> Result<CirclePackingMetric> {
    let mut radii = vec![f64::INFINITY; mesh.num_vertices()];
    for (f, face) in mesh.faces().iter().enumerate() {
        let l = metric.face_lengths(mesh, f);
        for c in 0..3 {
            let r = 0.5 * (l[(c + 1) % 3] + l[(c + 2) % 3] - l[c]);
            radii[face[c]] = radii[face[c]].min(r);
        }
    }
    for (v, &r) in radii.iter().enumerate() {
        if !(r > 0.0) || !r.is_finite() {
            return Err(Error::NonPositiveRadius { vertex: v, radius: r });
        }
    }
    let mut clamped = 0usize;
    let eta = mesh
        .edges()
        .iter()
        .enumerate()
        .map(|(e, &[i, j])| {
            let l = metric.length(e);
            let (ri, rj) = (radii[i], radii[j]);
            let eta = (l * l - ri * ri - rj * rj) / (2.0 * ri * rj);
            if eta < ETA_FLOOR {
                clamped += 1;
                ETA_FLOOR
            } else {
                eta
            }
        })
        .collect();
    if clamped > 0 {
        log::warn!("clamped {clamped} inversive distances to {ETA_FLOOR}");
    }
    CirclePackingMetric::new(radii, eta)
}

/// Edge lengths `l^2 = r_i^2 + r_j^2 + 2 r_i r_j eta_ij`, with the triangle
/// inequality checked on every face.
pub fn packing_edge_lengths(mesh: &TriangleMesh, packing: &CirclePackingMetric) -> Result<EdgeMetric> {
    let r = packing.radii();
    let mut lengths = Vec::with_capacity(mesh.num_edges());
    for (e, &[i, j]) in mesh.edges().iter().enumerate() {
        let sq = r[i] * r[i] + r[j] * r[j] + 2.0 * r[i] * r[j] * packing.eta[e];
        if !(sq > 0.0) {
            return Err(Error::NegativeSquaredLength { edge: e, squared: sq });
        }
        lengths.push(sq.sqrt());
    }
    let metric = EdgeMetric::new(lengths)?;
    metric.check_triangle_inequality(mesh)?;
    Ok(metric)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::euclidean_edge_metric;

    fn single(p: [[f64; 3]; 3]) -> TriangleMesh {
        TriangleMesh::new(p.to_vec(), vec![[0, 1, 2]]).unwrap()
    }

    #[test]
    fn equilateral_packing() {
        let m = single([[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.5, 3f64.sqrt() / 2.0, 0.0]]);
        let p = init_circle_packing(&m, &euclidean_edge_metric(&m).unwrap()).unwrap();
        for &r in p.radii() {
            assert!((r - 0.5).abs() < 1e-15);
        }
        for &eta in p.eta() {
            assert!((eta - 1.0).abs() < 1e-14);
        }
    }

    #[test]
    fn right_triangle_corner_radii() {
        let m = single([[0.0, 0.0, 0.0], [3.0, 0.0, 0.0], [0.0, 4.0, 0.0]]);
        let p = init_circle_packing(&m, &euclidean_edge_metric(&m).unwrap()).unwrap();
        assert_eq!(p.radii(), &[1.0, 2.0, 3.0]);
    }

    #[test]
    fn induced_lengths() {
        let m = single([[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0]]);
        // only the edge endpoints matter here
        let e01 = m.edge_between(0, 1).unwrap();
        let e02 = m.edge_between(0, 2).unwrap();
        let e12 = m.edge_between(1, 2).unwrap();

        let mut eta = vec![1.0; 3];
        let p = CirclePackingMetric::new(vec![0.5, 0.5, 0.5], eta.clone()).unwrap();
        let l = packing_edge_lengths(&m, &p).unwrap();
        assert!((l.length(e01) - 1.0).abs() < 1e-15);

        eta[e01] = 0.0;
        eta[e02] = 1.0;
        eta[e12] = 1.0;
        let p = CirclePackingMetric::new(vec![1.0, 2.0, 1.0], eta.clone()).unwrap();
        let l = packing_edge_lengths(&m, &p).unwrap();
        assert!((l.length(e01) - 5f64.sqrt()).abs() < 1e-15);

        eta[e01] = -1.0;
        let p = CirclePackingMetric::new(vec![1.0, 1.0, 1.0], eta).unwrap();
        assert!(matches!(
            packing_edge_lengths(&m, &p),
            Err(Error::NegativeSquaredLength { .. })
        ));
    }

    #[test]
    fn nonpositive_radius_rejected() {
        assert!(CirclePackingMetric::new(vec![1.0, 0.0], vec![]).is_err());
    }
}
