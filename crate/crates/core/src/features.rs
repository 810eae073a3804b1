//! Per-stage feature matrices `(u, AD, HK)` over curvature-selected vertices.

use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hks::{cotangent_laplacian, eigendecompose, heat_kernel_signature, HeatSignature, SpectrumSize};
use crate::mesh::{one_ring_area, CurvatureField, TriangleMesh};
use crate::ricci::RicciTrace;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VertexSelection {
    pub vertices: Vec<usize>,
    pub tau: f64,
}

impl VertexSelection {
    pub fn len(&self) -> usize {
        self.vertices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vertices.is_empty()
    }
}

/// Vertices with `|K| > tau`, ascending.
pub fn select_vertices(curvature: &CurvatureField, tau: f64) -> Result<VertexSelection> {
    if !(tau >= 0.0) {
        return Err(Error::InvalidParameter(format!("tau must be >= 0, got {tau}")));
    }
    let vertices: Vec<usize> = curvature
        .values()
        .iter()
        .enumerate()
        .filter(|(_, k)| k.abs() > tau)
        .map(|(v, _)| v)
        .collect();
    if vertices.is_empty() {
        return Err(Error::EmptySelection { tau });
    }
    Ok(VertexSelection { vertices, tau })
}

/// `m` stage indices spread evenly over `0..count`, strictly increasing.
///
/// Index `j` is `round(j * last / (m - 1))`. When `m` exceeds the number of
/// stages every stage is returned and a warning is logged.
pub fn sample_stages(count: usize, m: usize) -> Result<Vec<usize>> {
    let stages = spread_stages(count, m)?;
    if stages.len() < m {
        log::warn!("requested {m} stages but the trace has only {count}; using all of them");
    }
    Ok(stages)
}

/// As [`sample_stages`], without the saturation warning.
pub fn spread_stages(count: usize, m: usize) -> Result<Vec<usize>> {
    if count == 0 {
        return Err(Error::InvalidParameter("trace has no stages".into()));
    }
    if m == 0 {
        return Err(Error::InvalidParameter("number of stages must be >= 1".into()));
    }
    let last = count - 1;
    if m > count {
        return Ok((0..count).collect());
    }
    if m == 1 {
        return Ok(vec![last]);
    }
    let den = m - 1;
    let mut out: Vec<usize> = (0..m).map(|j| (2 * j * last + den) / (2 * den)).collect();
    // collisions cannot happen when m <= count, but resolve them anyway
    for j in 1..m {
        if out[j] <= out[j - 1] {
            out[j] = out[j - 1] + 1;
        }
    }
    for j in (0..m - 1).rev() {
        if out[j] >= out[j + 1] {
            out[j] = out[j + 1] - 1;
        }
    }
    Ok(out)
}

/// Per-vertex one-ring area under the initial metric minus the same under `stage`.
pub fn area_distortions(mesh: &TriangleMesh, trace: &RicciTrace, stage: usize) -> Result<Vec<f64>> {
    let initial = &trace.stage(0)?.lengths;
    let current = &trace.stage(stage)?.lengths;
    Ok((0..mesh.num_vertices())
        .map(|v| one_ring_area(mesh, initial, v) - one_ring_area(mesh, current, v))
        .collect())
}

pub fn area_distortion(mesh: &TriangleMesh, trace: &RicciTrace, stage: usize, v: usize) -> Result<f64> {
    if v >= mesh.num_vertices() {
        return Err(Error::InvalidVertex { vertex: v });
    }
    Ok(one_ring_area(mesh, &trace.stage(0)?.lengths, v)
        - one_ring_area(mesh, &trace.stage(stage)?.lengths, v))
}

/// Rows are selected vertices; columns are `u`, `AD`, then one `HK` column per time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureMatrix {
    pub stage: usize,
    pub vertices: Vec<usize>,
    pub rows: Vec<Vec<f64>>,
}

impl FeatureMatrix {
    pub fn nrows(&self) -> usize {
        self.rows.len()
    }

    pub fn ncols(&self) -> usize {
        self.rows.first().map_or(0, Vec::len)
    }

    pub fn column(&self, c: usize) -> Vec<f64> {
        self.rows.iter().map(|r| r[c]).collect()
    }

    /// `stage,vertex,u,AD,HK[,HK2,...]`.
    pub fn to_csv(&self) -> String {
        let extra = self.ncols().saturating_sub(3);
        let mut s = String::from("stage,vertex,u,AD,HK");
        for k in 0..extra {
            let _ = write!(s, ",HK{}", k + 2);
        }
        s.push('\n');
        for (v, row) in self.vertices.iter().zip(&self.rows) {
            let _ = write!(s, "{},{v}", self.stage);
            for x in row {
                let _ = write!(s, ",{x}");
            }
            s.push('\n');
        }
        s
    }
}

pub fn stage_features(
    mesh: &TriangleMesh,
    trace: &RicciTrace,
    stage: usize,
    sel: &VertexSelection,
    hks: &HeatSignature,
) -> Result<FeatureMatrix> {
    if hks.vertices != sel.vertices {
        return Err(Error::InvalidParameter(
            "heat signature was computed for a different vertex selection".into(),
        ));
    }
    let snap = trace.stage(stage)?;
    let ad = area_distortions(mesh, trace, stage)?;
    let mut rows = Vec::with_capacity(sel.len());
    for (r, &v) in sel.vertices.iter().enumerate() {
        let mut row = vec![snap.u[v], ad[v]];
        row.extend(hks.values.iter().map(|t| t[r]));
        for (c, x) in row.iter().enumerate() {
            if !x.is_finite() {
                let feature = match c {
                    0 => "u",
                    1 => "AD",
                    _ => "HK",
                };
                return Err(Error::NonFinite { feature, vertex: v, stage });
            }
        }
        rows.push(row);
    }
    Ok(FeatureMatrix {
        stage,
        vertices: sel.vertices.clone(),
        rows,
    })
}

/// How heat kernel values are computed for the feature matrices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HeatOptions {
    /// Times in units of `1 / lambda_1` of the initial metric.
    pub times: Vec<f64>,
    pub lumped_mass: bool,
    /// Number of eigenpairs; `None` picks automatically from the mesh size.
    pub eigenpairs: Option<usize>,
}

impl Default for HeatOptions {
    fn default() -> Self {
        HeatOptions {
            times: vec![1.0],
            lumped_mass: false,
            eigenpairs: None,
        }
    }
}

fn heat_at(
    mesh: &TriangleMesh,
    trace: &RicciTrace,
    stage: usize,
    opts: &HeatOptions,
) -> Result<crate::hks::Spectrum> {
    let l = cotangent_laplacian(mesh, &trace.stage(stage)?.lengths, opts.lumped_mass)?;
    let size = opts
        .eigenpairs
        .map_or_else(|| SpectrumSize::auto(mesh.num_vertices()), SpectrumSize::Count);
    eigendecompose(&l, size)
}

/// Feature matrices at the given stages.
///
/// The heat kernel time unit comes from the stage-0 spectrum and is held
/// fixed for every stage of the subject.
pub fn feature_stack(
    mesh: &TriangleMesh,
    trace: &RicciTrace,
    stages: &[usize],
    sel: &VertexSelection,
    opts: &HeatOptions,
) -> Result<Vec<FeatureMatrix>> {
    if opts.times.is_empty() {
        return Err(Error::InvalidParameter("at least one heat kernel time is required".into()));
    }
    let t_scale = heat_at(mesh, trace, 0, opts)?.t_scale()?;
    let times: Vec<f64> = opts.times.iter().map(|t| t * t_scale).collect();
    stages
        .par_iter()
        .map(|&s| {
            let spec = heat_at(mesh, trace, s, opts)?;
            let hks = heat_kernel_signature(&spec, &times, &sel.vertices)?;
            stage_features(mesh, trace, s, sel, &hks)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stage_sampling() {
        assert_eq!(sample_stages(101, 3).unwrap(), vec![0, 50, 100]);
        assert_eq!(sample_stages(101, 1).unwrap(), vec![100]);
        assert_eq!(sample_stages(7, 10).unwrap(), (0..7).collect::<Vec<_>>());
        assert_eq!(sample_stages(7, 7).unwrap(), (0..7).collect::<Vec<_>>());
        assert_eq!(sample_stages(1, 1).unwrap(), vec![0]);
        assert!(sample_stages(0, 3).is_err());
        assert!(sample_stages(5, 0).is_err());
        for count in 1..60 {
            for m in 1..=count {
                let s = sample_stages(count, m).unwrap();
                assert_eq!(s.len(), m);
                assert!(s.windows(2).all(|w| w[0] < w[1]));
                assert_eq!(*s.last().unwrap(), count - 1);
                if m >= 2 {
                    assert_eq!(s[0], 0);
                }
            }
        }
    }

    #[test]
    fn selection_threshold() {
        let k = CurvatureField::new(vec![0.0, 0.3, -0.06, 0.05, -0.2, 1e-3]);
        assert_eq!(select_vertices(&k, 0.05).unwrap().vertices, vec![1, 2, 4]);
        assert_eq!(select_vertices(&k, 0.0).unwrap().vertices, vec![1, 2, 3, 4, 5]);
        assert!(matches!(
            select_vertices(&k, 0.5),
            Err(Error::EmptySelection { .. })
        ));
        assert!(select_vertices(&k, -1.0).is_err());
    }

    #[test]
    fn csv_layout() {
        let f = FeatureMatrix {
            stage: 2,
            vertices: vec![4, 9],
            rows: vec![vec![0.5, 1.0, 0.25], vec![-0.5, 2.0, 0.75]],
        };
        assert_eq!(f.to_csv(), "stage,vertex,u,AD,HK\n2,4,0.5,1,0.25\n2,9,-0.5,2,0.75\n");
    }
}
