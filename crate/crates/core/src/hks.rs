//! Cotangent Laplacian, its spectrum, and heat kernel signatures.

use std::fmt::Write as _;

use faer::{Mat, Side};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mesh::{corner_angles, one_ring_area, EdgeMetric, TriangleMesh};
use crate::sparse::CsrMatrix;

/// Meshes above this size get a truncated spectrum by default.
pub const FULL_SPECTRUM_LIMIT: usize = 2000;
pub const TRUNCATED_PAIRS: usize = 300;

/// Per-edge `cot(alpha)/2 (+ cot(beta)/2)` from the corners opposite each edge.
pub fn cotangent_weights(mesh: &TriangleMesh, metric: &EdgeMetric) -> Result<Vec<f64>> {
    let angles = corner_angles(mesh, metric)?;
    let cot = |s: crate::mesh::EdgeSide| 0.5 / angles.get(s.face, s.corner).tan();
    let w: Vec<f64> = (0..mesh.num_edges())
        .map(|e| {
            let (a, b) = mesh.edge_sides(e);
            cot(a) + b.map_or(0.0, cot)
        })
        .collect();
    let negative = w.iter().filter(|&&x| x < 0.0).count();
    if negative > 0 {
        log::info!("{negative} negative cotangent weights");
    }
    Ok(w)
}

#[derive(Debug, Clone, PartialEq)]
pub struct LaplaceMatrix {
    pub matrix: CsrMatrix,
    pub weights: Vec<f64>,
    /// Lumped vertex masses (one third of the one-ring area), if used.
    pub mass: Option<Vec<f64>>,
}

impl LaplaceMatrix {
    pub fn dim(&self) -> usize {
        self.matrix.dim()
    }

    pub fn has_negative_weights(&self) -> bool {
        self.weights.iter().any(|&w| w < 0.0)
    }

    /// Attaches a lumped mass matrix, turning the eigenproblem into `L phi = lambda M phi`.
    pub fn with_lumped_mass(mut self, mesh: &TriangleMesh, metric: &EdgeMetric) -> Self {
        self.mass = Some(
            (0..mesh.num_vertices())
                .map(|v| one_ring_area(mesh, metric, v) / 3.0)
                .collect(),
        );
        self
    }
}

/// `-w_ij` off the diagonal, `sum_k w_ik` on it.
pub fn laplace_matrix(mesh: &TriangleMesh, weights: &[f64]) -> LaplaceMatrix {
    LaplaceMatrix {
        matrix: CsrMatrix::from_edge_weights(mesh.num_vertices(), mesh.edges(), weights),
        weights: weights.to_vec(),
        mass: None,
    }
}

/// Cotangent Laplacian for a mesh under the given metric, optionally mass-lumped.
pub fn cotangent_laplacian(mesh: &TriangleMesh, metric: &EdgeMetric, lumped_mass: bool) -> Result<LaplaceMatrix> {
    let l = laplace_matrix(mesh, &cotangent_weights(mesh, metric)?);
    Ok(if lumped_mass { l.with_lumped_mass(mesh, metric) } else { l })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SpectrumSize {
    Full,
    /// The `k` smallest eigenpairs.
    Count(usize),
}

impl SpectrumSize {
    /// Full spectrum up to [`FULL_SPECTRUM_LIMIT`] vertices, otherwise the smallest [`TRUNCATED_PAIRS`].
    pub fn auto(n: usize) -> Self {
        if n <= FULL_SPECTRUM_LIMIT {
            SpectrumSize::Full
        } else {
            SpectrumSize::Count(TRUNCATED_PAIRS)
        }
    }
}

/// Ascending eigenvalues and matching eigenvectors (columns).
#[derive(Debug, Clone)]
pub struct Spectrum {
    pub values: Vec<f64>,
    pub vectors: Mat<f64>,
    pub full: bool,
}

impl Spectrum {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// First eigenvalue above round-off, i.e. the Fiedler value of a connected mesh.
    pub fn first_nonzero(&self) -> Option<f64> {
        let top = self.values.iter().fold(0.0f64, |a, &b| a.max(b.abs()));
        self.values.iter().copied().find(|&l| l > 1e-9 * top.max(1.0))
    }

    /// Time unit `1 / lambda_1`.
    pub fn t_scale(&self) -> Result<f64> {
        self.first_nonzero()
            .map(|l| 1.0 / l)
            .ok_or_else(|| Error::Eigen("spectrum has no positive eigenvalue".into()))
    }

    /// `max |Phi^T Phi - I|`.
    pub fn orthonormality_error(&self) -> f64 {
        let g = self.vectors.transpose() * &self.vectors;
        let mut worst: f64 = 0.0;
        for j in 0..g.ncols() {
            for i in 0..g.nrows() {
                let id = if i == j { 1.0 } else { 0.0 };
                worst = worst.max((g[(i, j)] - id).abs());
            }
        }
        worst
    }

    /// `max |L phi - lambda phi|` over all pairs and entries.
    pub fn residual(&self, l: &LaplaceMatrix) -> f64 {
        let n = self.vectors.nrows();
        let mut worst: f64 = 0.0;
        for (k, &lambda) in self.values.iter().enumerate() {
            let phi: Vec<f64> = (0..n).map(|i| self.vectors[(i, k)]).collect();
            let lphi = l.matrix.mul_vec(&phi);
            for i in 0..n {
                let m = l.mass.as_ref().map_or(1.0, |m| m[i]);
                worst = worst.max((lphi[i] - lambda * m * phi[i]).abs());
            }
        }
        worst
    }
}

/// Dense symmetric eigendecomposition, truncated to the requested size.
///
/// With a mass matrix, the problem `L phi = lambda M phi` is reduced to the
/// symmetric `M^-1/2 L M^-1/2` and the eigenvectors are mapped back, so they
/// are `M`-orthonormal.
pub fn eigendecompose(l: &LaplaceMatrix, size: SpectrumSize) -> Result<Spectrum> {
    let n = l.dim();
    let k = match size {
        SpectrumSize::Full => n,
        SpectrumSize::Count(k) => k.min(n),
    };
    if k == 0 {
        return Err(Error::InvalidParameter("spectrum size must be >= 1".into()));
    }
    let mut a = l.matrix.to_dense();
    let scale: Option<Vec<f64>> = l
        .mass
        .as_ref()
        .map(|m| m.iter().map(|x| 1.0 / x.sqrt()).collect());
    if let Some(s) = &scale {
        for j in 0..n {
            for i in 0..n {
                a[(i, j)] *= s[i] * s[j];
            }
        }
    }
    let eig = a
        .self_adjoint_eigen(Side::Lower)
        .map_err(|e| Error::Eigen(format!("{e:?}")))?;
    let s = eig.S().column_vector();
    let u = eig.U();
    let values: Vec<f64> = (0..k).map(|i| s[i]).collect();
    let vectors = Mat::from_fn(n, k, |i, j| {
        u[(i, j)] * scale.as_ref().map_or(1.0, |s| s[i])
    });
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::Eigen("non-finite eigenvalue".into()));
    }
    Ok(Spectrum {
        values,
        vectors,
        full: k == n,
    })
}

/// `HKS(x, t)` for a set of vertices and times; `values[t][row]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeatSignature {
    pub vertices: Vec<usize>,
    pub times: Vec<f64>,
    pub values: Vec<Vec<f64>>,
}

impl HeatSignature {
    /// Values at the `ti`-th time, one per selected vertex.
    pub fn at(&self, ti: usize) -> &[f64] {
        &self.values[ti]
    }

    /// Rows `vertex,t,hks`.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("vertex,t,hks\n");
        for (ti, t) in self.times.iter().enumerate() {
            for (row, v) in self.vertices.iter().enumerate() {
                let _ = writeln!(s, "{v},{t},{}", self.values[ti][row]);
            }
        }
        s
    }
}

/// `HKS(x, t) = sum_i exp(-lambda_i t) phi_i(x)^2`.
pub fn heat_kernel_signature(spec: &Spectrum, times: &[f64], vertices: &[usize]) -> Result<HeatSignature> {
    let n = spec.vectors.nrows();
    if let Some(&v) = vertices.iter().find(|&&v| v >= n) {
        return Err(Error::InvalidVertex { vertex: v });
    }
    if let Some(&t) = times.iter().find(|&&t| !(t >= 0.0) || !t.is_finite()) {
        return Err(Error::InvalidParameter(format!("heat kernel time {t} must be >= 0")));
    }
    let values = times
        .iter()
        .map(|&t| {
            let decay: Vec<f64> = spec.values.iter().map(|&l| (-l * t).exp()).collect();
            vertices
                .par_iter()
                .map(|&x| {
                    decay
                        .iter()
                        .enumerate()
                        .map(|(i, d)| {
                            let p = spec.vectors[(x, i)];
                            d * p * p
                        })
                        .sum()
                })
                .collect()
        })
        .collect();
    Ok(HeatSignature {
        vertices: vertices.to_vec(),
        times: times.to_vec(),
        values,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::euclidean_edge_metric;

    const W: f64 = 0.28867513459481287;

    fn equilateral() -> TriangleMesh {
        TriangleMesh::new(
            vec![[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.5, 3f64.sqrt() / 2.0, 0.0]],
            vec![[0, 1, 2]],
        )
        .unwrap()
    }

    #[test]
    fn cotangent_examples() {
        let m = equilateral();
        let w = cotangent_weights(&m, &euclidean_edge_metric(&m).unwrap()).unwrap();
        assert!(w.iter().all(|x| (x - W).abs() < 1e-15));

        let h = 3f64.sqrt() / 2.0;
        let rhombus = TriangleMesh::new(
            vec![[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.5, h, 0.0], [0.5, -h, 0.0]],
            vec![[0, 1, 2], [1, 0, 3]],
        )
        .unwrap();
        let w = cotangent_weights(&rhombus, &euclidean_edge_metric(&rhombus).unwrap()).unwrap();
        assert!((w[rhombus.edge_between(0, 1).unwrap()] - 1.0 / 3f64.sqrt()).abs() < 1e-15);

        // 120 degree corner at vertex 2 on one side, 60 on the other
        let obtuse = TriangleMesh::new(
            vec![[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.5, h / 3.0, 0.0], [0.5, -h, 0.0]],
            vec![[0, 1, 2], [1, 0, 3]],
        )
        .unwrap();
        let w = cotangent_weights(&obtuse, &euclidean_edge_metric(&obtuse).unwrap()).unwrap();
        assert!(w[obtuse.edge_between(0, 1).unwrap()].abs() < 1e-15);
    }

    #[test]
    fn small_spectra() {
        let two = TriangleMesh::new(
            vec![[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0]],
            vec![[0, 1, 2]],
        )
        .unwrap();
        // path of two vertices, embedded as one edge of a weighted triangle
        let mut w = vec![0.0; 3];
        w[two.edge_between(0, 1).unwrap()] = 0.7;
        let spec = eigendecompose(&laplace_matrix(&two, &w), SpectrumSize::Full).unwrap();
        assert!(spec.values[0].abs() < 1e-15 && spec.values[1].abs() < 1e-15);
        assert!((spec.values[2] - 1.4).abs() < 1e-14);

        let m = equilateral();
        let l = cotangent_laplacian(&m, &euclidean_edge_metric(&m).unwrap(), false).unwrap();
        assert!((l.matrix.get(0, 0) - 2.0 * W).abs() < 1e-15);
        assert!((l.matrix.get(0, 1) + W).abs() < 1e-15);
        let spec = eigendecompose(&l, SpectrumSize::Full).unwrap();
        assert!(spec.values[0].abs() < 1e-9);
        assert!((spec.values[1] - 3.0 * W).abs() < 1e-14);
        assert!((spec.values[2] - 3.0 * W).abs() < 1e-14);
        assert!((spec.t_scale().unwrap() - 1.0 / (3.0 * W)).abs() < 1e-12);
    }

    #[test]
    fn equilateral_hks() {
        let m = equilateral();
        let l = cotangent_laplacian(&m, &euclidean_edge_metric(&m).unwrap(), false).unwrap();
        let spec = eigendecompose(&l, SpectrumSize::Full).unwrap();
        let hks = heat_kernel_signature(&spec, &[0.0, 1.0, 1e6], &[0, 1, 2]).unwrap();
        let expected = 1.0 / 3.0 + 2.0 / 3.0 * (-3.0 * W).exp();
        assert!((expected - 0.6137466840360764).abs() < 1e-15);
        for x in 0..3 {
            assert!((hks.at(0)[x] - 1.0).abs() < 1e-12);
            assert!((hks.at(1)[x] - expected).abs() < 1e-12);
            // lambda_0 is zero only to round-off, which t = 1e6 amplifies
            assert!((hks.at(2)[x] - 1.0 / 3.0).abs() < 1e-8);
        }
        let csv = hks.to_csv();
        assert!(csv.starts_with("vertex,t,hks\n"));
        assert_eq!(csv.lines().count(), 10);
    }

    #[test]
    fn lumped_mass_is_m_orthonormal() {
        let m = crate::synth::generate(&crate::synth::SynthSpec::bumpy(0, 61)).unwrap();
        let metric = euclidean_edge_metric(&m).unwrap();
        let l = cotangent_laplacian(&m, &metric, true).unwrap();
        let spec = eigendecompose(&l, SpectrumSize::Count(10)).unwrap();
        assert_eq!(spec.len(), 10);
        assert!(!spec.full);
        let mass = l.mass.as_ref().unwrap();
        for a in 0..10 {
            for b in 0..10 {
                let dot: f64 = (0..m.num_vertices())
                    .map(|i| mass[i] * spec.vectors[(i, a)] * spec.vectors[(i, b)])
                    .sum();
                let id = if a == b { 1.0 } else { 0.0 };
                assert!((dot - id).abs() < 1e-9);
            }
        }
        assert!(spec.residual(&l) < 1e-9 * spec.values[9].max(1.0));
    }

    #[test]
    fn rejects_bad_inputs() {
        let m = equilateral();
        let l = cotangent_laplacian(&m, &euclidean_edge_metric(&m).unwrap(), false).unwrap();
        let spec = eigendecompose(&l, SpectrumSize::Full).unwrap();
        assert!(heat_kernel_signature(&spec, &[1.0], &[3]).is_err());
        assert!(heat_kernel_signature(&spec, &[-1.0], &[0]).is_err());
        assert!(eigendecompose(&l, SpectrumSize::Count(0)).is_err());
    }
}
