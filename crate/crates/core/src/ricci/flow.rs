use std::f64::consts::PI;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mesh::{
    corner_angles, euclidean_edge_metric, gaussian_curvature, CurvatureField, EdgeMetric,
    TriangleMesh,
};

use super::hessian::{edge_weights, power_heights_with_metric, ricci_hessian};
use super::packing::{init_circle_packing, packing_edge_lengths, CirclePackingMetric};

/// How boundary vertices are assigned target curvature for flattening.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BoundaryTargetMode {
    /// Every boundary vertex gets `2 pi chi / |boundary|`.
    Uniform,
    /// Boundary vertices keep their initial curvature plus an equal share of
    /// the total interior curvature.
    Initial,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverConfig {
    pub epsilon: f64,
    pub max_iterations: usize,
    pub damping_min: f64,
    pub boundary_target_mode: BoundaryTargetMode,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            epsilon: 1e-6,
            max_iterations: 200,
            damping_min: 1e-8,
            boundary_target_mode: BoundaryTargetMode::Uniform,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon > 0.0) {
            return Err(Error::Config("solver.epsilon must be > 0".into()));
        }
        if self.max_iterations == 0 {
            return Err(Error::Config("solver.max_iterations must be >= 1".into()));
        }
        if !(self.damping_min > 0.0 && self.damping_min < 1.0) {
            return Err(Error::Config("solver.damping_min must be in (0, 1)".into()));
        }
        Ok(())
    }
}

/// Per-vertex target curvature satisfying discrete Gauss-Bonnet.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TargetCurvature {
    values: Vec<f64>,
}

impl TargetCurvature {
    pub fn new(mesh: &TriangleMesh, values: Vec<f64>) -> Result<Self> {
        if values.len() != mesh.num_vertices() {
            return Err(Error::TargetSize {
                got: values.len(),
                expected: mesh.num_vertices(),
            });
        }
        let sum: f64 = values.iter().sum();
        let expected = 2.0 * PI * mesh.euler_characteristic() as f64;
        if (sum - expected).abs() > 1e-9 {
            return Err(Error::InadmissibleTarget { sum, expected });
        }
        Ok(TargetCurvature { values })
    }

    /// Zero curvature at interior vertices; boundary curvature per `mode`.
    pub fn flat_interior(
        mesh: &TriangleMesh,
        mode: BoundaryTargetMode,
        initial: &CurvatureField,
    ) -> Result<Self> {
        let boundary = mesh.boundary_vertices();
        if boundary.is_empty() {
            return Err(Error::InvalidParameter(
                "flat target needs a mesh with boundary".into(),
            ));
        }
        let mut values = vec![0.0; mesh.num_vertices()];
        match mode {
            BoundaryTargetMode::Uniform => {
                let k = 2.0 * PI * mesh.euler_characteristic() as f64 / boundary.len() as f64;
                for &v in &boundary {
                    values[v] = k;
                }
            }
            BoundaryTargetMode::Initial => {
                let interior: f64 = (0..mesh.num_vertices())
                    .filter(|&v| !mesh.is_boundary_vertex(v))
                    .map(|v| initial.get(v))
                    .sum();
                let share = interior / boundary.len() as f64;
                for &v in &boundary {
                    values[v] = initial.get(v) + share;
                }
            }
        }
        // absorb summation round-off so the admissibility check is exact
        let expected = 2.0 * PI * mesh.euler_characteristic() as f64;
        let drift = values.iter().sum::<f64>() - expected;
        let fix = drift / boundary.len() as f64;
        for &v in &boundary {
            values[v] -= fix;
        }
        TargetCurvature::new(mesh, values)
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }
}

/// One recorded state of the optimization.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageSnapshot {
    pub iteration: usize,
    /// Conformal factors relative to the initial packing, zero-mean.
    pub u: Vec<f64>,
    pub lengths: EdgeMetric,
    pub curvature: CurvatureField,
    /// `max_i |target_i - K_i|`.
    pub residual: f64,
    /// Step length accepted to reach this state (1 for stage 0).
    pub damping: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StopReason {
    Converged,
    MaxIterations,
    Stalled,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RicciTrace {
    pub initial_packing: CirclePackingMetric,
    pub target: TargetCurvature,
    pub stages: Vec<StageSnapshot>,
    pub converged: bool,
    pub iterations: usize,
    pub stop_reason: StopReason,
}

impl RicciTrace {
    pub fn num_stages(&self) -> usize {
        self.stages.len()
    }

    pub fn stage(&self, s: usize) -> Result<&StageSnapshot> {
        self.stages.get(s).ok_or(Error::InvalidStage {
            stage: s,
            count: self.stages.len(),
        })
    }

    pub fn last(&self) -> &StageSnapshot {
        self.stages.last().expect("trace has at least one stage")
    }

    pub fn final_residual(&self) -> f64 {
        self.last().residual
    }

    /// Packing radii at a stage.
    pub fn radii_at(&self, s: usize) -> Result<Vec<f64>> {
        let u = &self.stage(s)?.u;
        Ok(self
            .initial_packing
            .radii()
            .iter()
            .zip(u)
            .map(|(r, ui)| r * ui.exp())
            .collect())
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let json = serde_json::to_string(self).map_err(|e| Error::TraceFormat(e.to_string()))?;
        std::fs::write(path, json).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let trace: RicciTrace =
            serde_json::from_str(&text).map_err(|e| Error::TraceFormat(e.to_string()))?;
        if trace.stages.is_empty() {
            return Err(Error::TraceFormat("trace has no stages".into()));
        }
        Ok(trace)
    }
}

struct State {
    lengths: EdgeMetric,
    curvature: CurvatureField,
    residual: f64,
}

fn evaluate(
    mesh: &TriangleMesh,
    initial: &CirclePackingMetric,
    target: &TargetCurvature,
    u: &[f64],
) -> Result<(CirclePackingMetric, State)> {
    let packing = initial.with_conformal_factors(u)?;
    let lengths = packing_edge_lengths(mesh, &packing)?;
    let curvature = gaussian_curvature(mesh, &corner_angles(mesh, &lengths)?);
    let residual = max_residual(target.values(), curvature.values());
    Ok((
        packing,
        State {
            lengths,
            curvature,
            residual,
        },
    ))
}

fn max_residual(target: &[f64], k: &[f64]) -> f64 {
    target
        .iter()
        .zip(k)
        .map(|(t, k)| (t - k).abs())
        .fold(0.0, f64::max)
}

/// Runs the flow from the packing induced by the mesh's own edge lengths.
pub fn optimize(mesh: &TriangleMesh, target: &TargetCurvature, cfg: &SolverConfig) -> Result<RicciTrace> {
    let metric = euclidean_edge_metric(mesh)?;
    let packing = init_circle_packing(mesh, &metric)?;
    optimize_from(mesh, &packing, target, cfg)
}

/// Damped Newton iteration on the conformal factors.
///
/// Each step solves `H du = target - K` on the zero-mean subspace and
/// backtracks (halving) until the induced metric is valid and the max
/// residual does not increase. Every accepted iterate is recorded.
pub fn optimize_from(
    mesh: &TriangleMesh,
    initial: &CirclePackingMetric,
    target: &TargetCurvature,
    cfg: &SolverConfig,
) -> Result<RicciTrace> {
    cfg.validate()?;
    if target.values().len() != mesh.num_vertices() {
        return Err(Error::TargetSize {
            got: target.values().len(),
            expected: mesh.num_vertices(),
        });
    }
    let n = mesh.num_vertices();
    let mut u = vec![0.0; n];
    let (mut packing, mut state) = evaluate(mesh, initial, target, &u)?;
    let mut stages = vec![StageSnapshot {
        iteration: 0,
        u: u.clone(),
        lengths: state.lengths.clone(),
        curvature: state.curvature.clone(),
        residual: state.residual,
        damping: 1.0,
    }];

    let mut stop = StopReason::MaxIterations;
    let mut iterations = 0;
    loop {
        if state.residual < cfg.epsilon {
            stop = StopReason::Converged;
            break;
        }
        if iterations >= cfg.max_iterations {
            break;
        }
        let heights = power_heights_with_metric(mesh, &packing, &state.lengths)?;
        let weights = edge_weights(mesh, &heights, &state.lengths);
        let hessian = ricci_hessian(mesh, &weights);
        let rhs: Vec<f64> = target
            .values()
            .iter()
            .zip(state.curvature.values())
            .map(|(t, k)| t - k)
            .collect();
        let du = hessian.solve_zero_mean(&rhs)?;

        let mut lambda = 1.0;
        let accepted = loop {
            let mut trial: Vec<f64> = u.iter().zip(&du).map(|(a, b)| a + lambda * b).collect();
            let mean = trial.iter().sum::<f64>() / n as f64;
            for t in &mut trial {
                *t -= mean;
            }
            if let Ok((p, s)) = evaluate(mesh, initial, target, &trial) {
                if s.residual <= state.residual {
                    break Some((trial, p, s));
                }
            }
            lambda *= 0.5;
            if lambda < cfg.damping_min {
                break None;
            }
        };
        let Some((trial, p, s)) = accepted else {
            log::warn!(
                "Newton step stalled at iteration {iterations} (residual {:e})",
                state.residual
            );
            stop = StopReason::Stalled;
            break;
        };
        iterations += 1;
        log::debug!(
            "iteration {iterations}: residual {:e} -> {:e}, step {lambda}, ratio r/r^2 {:e}",
            state.residual,
            s.residual,
            s.residual / (state.residual * state.residual)
        );
        u = trial;
        packing = p;
        state = s;
        stages.push(StageSnapshot {
            iteration: iterations,
            u: u.clone(),
            lengths: state.lengths.clone(),
            curvature: state.curvature.clone(),
            residual: state.residual,
            damping: lambda,
        });
    }

    Ok(RicciTrace {
        initial_packing: initial.clone(),
        target: target.clone(),
        stages,
        converged: stop == StopReason::Converged,
        iterations,
        stop_reason: stop,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::tests::hex_fan;
    use crate::synth::{generate, SynthSpec};

    fn flat_target(mesh: &TriangleMesh) -> TargetCurvature {
        let metric = euclidean_edge_metric(mesh).unwrap();
        let k = gaussian_curvature(mesh, &corner_angles(mesh, &metric).unwrap());
        TargetCurvature::flat_interior(mesh, BoundaryTargetMode::Uniform, &k).unwrap()
    }

    #[test]
    fn fixed_point_converges_immediately() {
        let m = hex_fan();
        let metric = euclidean_edge_metric(&m).unwrap();
        let k = gaussian_curvature(&m, &corner_angles(&m, &metric).unwrap());
        let target = TargetCurvature::new(&m, k.values().to_vec()).unwrap();
        let trace = optimize(&m, &target, &SolverConfig::default()).unwrap();
        assert!(trace.converged);
        assert_eq!(trace.iterations, 0);
        assert_eq!(trace.num_stages(), 1);
        assert!(trace.stages[0].u.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn inadmissible_target_rejected() {
        let m = hex_fan();
        let mut values = flat_target(&m).values().to_vec();
        values[1] += 0.1;
        assert!(matches!(
            TargetCurvature::new(&m, values),
            Err(Error::InadmissibleTarget { .. })
        ));
    }

    #[test]
    fn sphere_cap_flattens() {
        let m = generate(&SynthSpec::smooth(1, 500)).unwrap();
        let target = flat_target(&m);
        let trace = optimize(&m, &target, &SolverConfig::default()).unwrap();
        assert!(trace.converged, "{:?}", trace.stop_reason);
        assert!(trace.final_residual() < 1e-6);
        let last = trace.last();
        for v in 0..m.num_vertices() {
            if !m.is_boundary_vertex(v) {
                assert!(last.curvature.get(v).abs() < 1e-6);
            }
        }
        let chi = 2.0 * PI * m.euler_characteristic() as f64;
        for (i, s) in trace.stages.iter().enumerate() {
            assert!((s.curvature.total() - chi).abs() < 1e-8);
            assert!(s.u.iter().sum::<f64>().abs() < 1e-9);
            if i > 0 {
                assert!(s.residual <= trace.stages[i - 1].residual);
            }
        }
    }

    #[test]
    fn eta_is_fixed_and_radii_recoverable() {
        let m = generate(&SynthSpec::bumpy(2, 200)).unwrap();
        let trace = optimize(&m, &flat_target(&m), &SolverConfig::default()).unwrap();
        assert!(trace.converged);
        let last = trace.num_stages() - 1;
        let radii = trace.radii_at(last).unwrap();
        let p = CirclePackingMetric::new(radii, trace.initial_packing.eta().to_vec()).unwrap();
        let l = packing_edge_lengths(&m, &p).unwrap();
        for (a, b) in l.lengths().iter().zip(trace.last().lengths.lengths()) {
            assert!((a - b).abs() <= 1e-12 * b);
        }
    }

    #[test]
    fn iteration_cap_reports_non_convergence() {
        let m = generate(&SynthSpec::bumpy(2, 200)).unwrap();
        let cfg = SolverConfig {
            max_iterations: 1,
            ..SolverConfig::default()
        };
        let trace = optimize(&m, &flat_target(&m), &cfg).unwrap();
        assert!(!trace.converged);
        assert_eq!(trace.stop_reason, StopReason::MaxIterations);
        assert_eq!(trace.num_stages(), 2);
    }

    #[test]
    fn trace_file_round_trip() {
        let m = generate(&SynthSpec::smooth(4, 100)).unwrap();
        let trace = optimize(&m, &flat_target(&m), &SolverConfig::default()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("trace.json");
        trace.save(&path).unwrap();
        assert_eq!(RicciTrace::load(&path).unwrap(), trace);
    }
}
