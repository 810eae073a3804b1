//! End-to-end orchestration: mesh files in, signatures and classification
//! reports out.
//!
//! Per subject: load, flow to a flat metric, select vertices on the initial
//! curvature, build feature matrices and covariance descriptors at every
//! recorded stage. Descriptor tables are cached by content hash, so changing
//! only the number of sampled stages, `K` or the kernel reuses them.

mod config;
mod manifest;

pub use config::{
    ClassifyConfig, FeatureConfig, KernelConfig, MedianTag, PathsConfig, PipelineConfig,
    SigmaSetting, SweepConfig,
};
pub use manifest::{DatasetManifest, SubjectEntry, MANIFEST_VERSION};

use std::path::{Path, PathBuf};

use rayon::prelude::*;
use sha2::{Digest, Sha256};

use crate::classify::{
    leave_one_out_with_kernel, metric_sweep, report_from_predictions, sweep_csv, Bandwidth,
    ClassificationReport, KernelMatrix, LabeledDataset, ReportParams, SweepRow,
};
use crate::error::{Error, Result};
use crate::features::{feature_stack, select_vertices, spread_stages, FeatureMatrix, VertexSelection};
use crate::mesh::{
    corner_angles, euclidean_edge_metric, gaussian_curvature, parse_obj, parse_off, save_mesh,
    MeshFormat, TriangleMesh,
};
use crate::ricci::{init_circle_packing, optimize_from, RicciTrace, SolverConfig, TargetCurvature};
use crate::spd::{covariance, CovDescriptor, KernelParams, SubjectSignature};
use crate::synth::{add_noise, generate, NoiseSpec, SynthSpec};

const CACHE_TAG: &str = "ricci-cov-stage-descriptors/1";

/// Makes linear algebra single-threaded so results do not depend on scheduling.
pub fn init_deterministic_linear_algebra() {
    faer::set_global_parallelism(faer::Par::Seq);
}

/// Flattening target from the mesh's own curvature.
pub fn flat_target(mesh: &TriangleMesh, solver: &SolverConfig) -> Result<TargetCurvature> {
    let metric = euclidean_edge_metric(mesh)?;
    let k = gaussian_curvature(mesh, &corner_angles(mesh, &metric)?);
    TargetCurvature::flat_interior(mesh, solver.boundary_target_mode, &k)
}

/// Runs the flow and fails unless it converged.
pub fn flatten(mesh: &TriangleMesh, solver: &SolverConfig) -> Result<RicciTrace> {
    let packing = init_circle_packing(mesh, &euclidean_edge_metric(mesh)?)?;
    let trace = optimize_from(mesh, &packing, &flat_target(mesh, solver)?, solver)?;
    if !trace.converged {
        return Err(Error::NotConverged {
            iterations: trace.iterations,
            residual: trace.final_residual(),
            reason: format!("{:?}", trace.stop_reason),
        });
    }
    Ok(trace)
}

/// Everything computed for one mesh, at every recorded stage.
#[derive(Debug, Clone)]
pub struct SubjectAnalysis {
    pub trace: RicciTrace,
    pub selection: VertexSelection,
    pub features: Vec<FeatureMatrix>,
    pub descriptors: Vec<CovDescriptor>,
}

pub fn analyze_mesh(mesh: &TriangleMesh, cfg: &PipelineConfig, tau: f64) -> Result<SubjectAnalysis> {
    let trace = flatten(mesh, &cfg.solver)?;
    let selection = select_vertices(&trace.stage(0)?.curvature, tau)?;
    let stages: Vec<usize> = (0..trace.num_stages()).collect();
    let features = feature_stack(mesh, &trace, &stages, &selection, &cfg.features.heat_options())?;
    let descriptors = features
        .iter()
        .map(|f| covariance(f, cfg.features.lambda_rel))
        .collect::<Result<Vec<_>>>()?;
    Ok(SubjectAnalysis {
        trace,
        selection,
        features,
        descriptors,
    })
}

/// Picks `m` evenly spread stages from a per-stage descriptor table.
pub fn signature_from_stages(
    id: &str,
    label: Option<usize>,
    stages: &[CovDescriptor],
    m: usize,
) -> Result<SubjectSignature> {
    let picked = spread_stages(stages.len(), m)?;
    SubjectSignature::new(id, label, picked.iter().map(|&s| stages[s].clone()).collect())
}

fn parse_mesh_bytes(path: &Path, bytes: &[u8]) -> Result<TriangleMesh> {
    let text = std::str::from_utf8(bytes).map_err(|_| Error::Parse {
        line: 0,
        message: format!("{} is not valid UTF-8", path.display()),
    })?;
    match MeshFormat::from_path(path)? {
        MeshFormat::Off => parse_off(text),
        MeshFormat::Obj => parse_obj(text),
    }
}

/// Content hash of the mesh bytes and every setting that affects per-stage descriptors.
pub fn cache_key(mesh_bytes: &[u8], cfg: &PipelineConfig, tau: f64) -> String {
    let mut h = Sha256::new();
    h.update(CACHE_TAG.as_bytes());
    h.update((mesh_bytes.len() as u64).to_le_bytes());
    h.update(mesh_bytes);
    let settings = serde_json::json!({
        "solver": cfg.solver,
        "tau": tau,
        "hks_times": cfg.features.hks_times,
        "lambda_rel": cfg.features.lambda_rel,
        "lumped_mass": cfg.features.lumped_mass,
        "eigenpairs": cfg.features.eigenpairs,
    });
    h.update(settings.to_string().as_bytes());
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

/// Per-stage descriptors for a mesh file, read from or written to the cache.
pub fn stage_descriptors(mesh_path: &Path, cfg: &PipelineConfig, tau: f64) -> Result<Vec<CovDescriptor>> {
    let bytes = std::fs::read(mesh_path).map_err(|e| Error::io(mesh_path, e))?;
    let cache_file = cfg
        .paths
        .cache_dir
        .as_ref()
        .map(|d| d.join(format!("{}.bin", cache_key(&bytes, cfg, tau))));
    if let Some(file) = &cache_file {
        if file.exists() {
            match SubjectSignature::load(file) {
                Ok(sig) => {
                    log::debug!("cache hit for {}", mesh_path.display());
                    return Ok(sig.descriptors);
                }
                Err(e) => log::warn!("ignoring unreadable cache entry {}: {e}", file.display()),
            }
        }
    }
    let mesh = parse_mesh_bytes(mesh_path, &bytes)?;
    let analysis = analyze_mesh(&mesh, cfg, tau)?;
    if let Some(file) = &cache_file {
        let sig = SubjectSignature::new("stages", None, analysis.descriptors.clone())?;
        let dir = file.parent().expect("cache file has a parent");
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        // write-then-rename keeps concurrent readers from seeing partial files
        let tmp = file.with_extension(format!("tmp{}", std::process::id()));
        sig.save(&tmp)?;
        std::fs::rename(&tmp, file).map_err(|e| Error::io(file, e))?;
    }
    Ok(analysis.descriptors)
}

/// Unlabelled signature of one mesh with the configured `tau` and stage count.
pub fn run_subject(mesh_path: &Path, cfg: &PipelineConfig) -> Result<SubjectSignature> {
    let id = mesh_path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "subject".into());
    let stages = stage_descriptors(mesh_path, cfg, cfg.features.tau)?;
    signature_from_stages(&id, None, &stages, cfg.features.steps)
}

#[derive(Debug)]
pub struct SubjectFailure {
    pub subject: String,
    pub error: Error,
}

/// Per-stage descriptor tables for every manifest subject that succeeded,
/// in manifest order.
#[derive(Debug)]
pub struct DescriptorTables {
    pub tau: f64,
    /// `(manifest index, per-stage descriptors)`.
    pub tables: Vec<(usize, Vec<CovDescriptor>)>,
    pub failures: Vec<SubjectFailure>,
}

fn with_pool<T: Send>(jobs: usize, f: impl FnOnce() -> T + Send) -> Result<T> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| Error::Config(format!("cannot start worker pool: {e}")))?;
    Ok(pool.install(f))
}

pub fn compute_tables(manifest: &DatasetManifest, cfg: &PipelineConfig, tau: f64) -> Result<DescriptorTables> {
    let results: Vec<Result<Vec<CovDescriptor>>> = with_pool(cfg.jobs, || {
        manifest
            .subjects
            .par_iter()
            .map(|s| stage_descriptors(&manifest.mesh_path(s), cfg, tau))
            .collect()
    })?;
    let mut tables = Vec::new();
    let mut failures = Vec::new();
    for (i, (s, r)) in manifest.subjects.iter().zip(results).enumerate() {
        match r {
            Ok(t) => tables.push((i, t)),
            Err(e) => {
                log::warn!("excluding subject {}: {e}", s.id);
                failures.push(SubjectFailure {
                    subject: s.id.clone(),
                    error: e,
                });
            }
        }
    }
    Ok(DescriptorTables { tau, tables, failures })
}

impl DescriptorTables {
    /// Labelled signatures with `m` sampled stages each.
    pub fn dataset(&self, manifest: &DatasetManifest, m: usize, positive: usize) -> Result<LabeledDataset> {
        let short = self.tables.iter().filter(|(_, t)| t.len() < m).count();
        if short > 0 {
            log::warn!(
                "{short} of {} subjects have fewer than {m} stages; all their stages are used",
                self.tables.len()
            );
        }
        let signatures = self
            .tables
            .iter()
            .map(|(i, t)| {
                let s = &manifest.subjects[*i];
                signature_from_stages(&s.id, Some(manifest.binary_label(s, positive)), t, m)
            })
            .collect::<Result<Vec<_>>>()?;
        let data = LabeledDataset::new(signatures, manifest.class_names(positive))?;
        let [neg, pos] = data.class_counts();
        if neg < 2 || pos < 2 {
            return Err(Error::InvalidParameter(format!(
                "need at least 2 subjects per class after exclusions, have {neg} and {pos}"
            )));
        }
        Ok(data)
    }
}

fn bandwidth(cfg: &PipelineConfig) -> Bandwidth {
    match cfg.kernel.sigma {
        SigmaSetting::Value(s) => Bandwidth::Fixed(s),
        SigmaSetting::Named(_) => Bandwidth::Median { seed: cfg.seed },
    }
}

/// Leave-one-out results for each configured `K`.
#[derive(Debug)]
pub struct ClassificationRun {
    pub reports: Vec<ClassificationReport>,
    pub signatures: Vec<SubjectSignature>,
    pub failures: Vec<SubjectFailure>,
}

fn check_manifest(manifest: &DatasetManifest, cfg: &PipelineConfig) -> Result<usize> {
    cfg.validate()?;
    manifest.validate()?;
    manifest.require_per_class(2)?;
    manifest.positive_index(cfg.classify.positive_class.as_deref())
}

pub fn run_experiment(manifest: &DatasetManifest, cfg: &PipelineConfig) -> Result<ClassificationRun> {
    let positive = check_manifest(manifest, cfg)?;
    let tables = compute_tables(manifest, cfg, cfg.features.tau)?;
    let data = tables.dataset(manifest, cfg.features.steps, positive)?;
    let sigma = bandwidth(cfg).resolve(data.signatures())?;
    let params = KernelParams::new(sigma, cfg.kernel.match_mode)?;
    log::info!("kernel bandwidth sigma = {sigma}");
    let kernel = KernelMatrix::compute(data.signatures(), &params)?;
    let reports = cfg
        .classify
        .k
        .iter()
        .map(|&k| {
            let predicted = leave_one_out_with_kernel(&data, &kernel, k)?;
            Ok(report_from_predictions(
                &data,
                &predicted,
                ReportParams {
                    k,
                    steps: Some(cfg.features.steps),
                    tau: Some(cfg.features.tau),
                    sigma,
                    match_mode: cfg.kernel.match_mode,
                },
            ))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ClassificationRun {
        reports,
        signatures: data.signatures().to_vec(),
        failures: tables.failures,
    })
}

/// One sweep table per `tau`.
#[derive(Debug)]
pub struct SweepRun {
    pub tables: Vec<(f64, Vec<SweepRow>)>,
    pub failures: Vec<SubjectFailure>,
}

pub fn run_sweep(manifest: &DatasetManifest, cfg: &PipelineConfig) -> Result<SweepRun> {
    let positive = check_manifest(manifest, cfg)?;
    let mut out = Vec::new();
    let mut failures: Vec<SubjectFailure> = Vec::new();
    for tau in cfg.sweep_taus() {
        let tables = compute_tables(manifest, cfg, tau)?;
        let cells = cfg
            .sweep
            .steps
            .iter()
            .map(|&m| Ok((m, tables.dataset(manifest, m, positive)?)))
            .collect::<Result<Vec<_>>>()?;
        let rows = metric_sweep(&cells, &cfg.sweep.k, bandwidth(cfg), cfg.kernel.match_mode, Some(tau))?;
        out.push((tau, rows));
        for f in tables.failures {
            if !failures.iter().any(|g| g.subject == f.subject) {
                failures.push(f);
            }
        }
    }
    Ok(SweepRun { tables: out, failures })
}

fn write(path: &Path, contents: impl AsRef<[u8]>) -> Result<PathBuf> {
    std::fs::write(path, contents).map_err(|e| Error::io(path, e))?;
    Ok(path.to_path_buf())
}

fn ensure_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn failures_text(failures: &[SubjectFailure]) -> String {
    failures
        .iter()
        .map(|f| format!("{}\t{}\n", f.subject, f.error))
        .collect()
}

/// Writes `report_k{K}.json/.csv`, `predictions_k{K}.csv`, one signature file
/// per subject, and `failures.tsv` when any subject was excluded.
pub fn write_classification(run: &ClassificationRun, out_dir: &Path) -> Result<Vec<PathBuf>> {
    ensure_dir(out_dir)?;
    let mut written = Vec::new();
    for r in &run.reports {
        let k = r.params.k;
        written.push(write(&out_dir.join(format!("report_k{k}.json")), r.to_json())?);
        written.push(write(&out_dir.join(format!("report_k{k}.csv")), r.to_csv())?);
        written.push(write(&out_dir.join(format!("predictions_k{k}.csv")), r.predictions_csv())?);
    }
    let sig_dir = out_dir.join("signatures");
    ensure_dir(&sig_dir)?;
    for s in &run.signatures {
        let path = sig_dir.join(format!("{}.sig", s.id));
        s.save(&path)?;
        written.push(path);
    }
    if !run.failures.is_empty() {
        written.push(write(&out_dir.join("failures.tsv"), failures_text(&run.failures))?);
    }
    Ok(written)
}

/// `sweep.csv` for a single `tau`, otherwise `sweep_tau{tau}.csv` per value;
/// plus `sweep.json` with the full reports.
pub fn write_sweep(run: &SweepRun, out_dir: &Path) -> Result<Vec<PathBuf>> {
    ensure_dir(out_dir)?;
    let mut written = Vec::new();
    let single = run.tables.len() == 1;
    for (tau, rows) in &run.tables {
        let name = if single {
            "sweep.csv".to_string()
        } else {
            format!("sweep_tau{tau}.csv")
        };
        written.push(write(&out_dir.join(name), sweep_csv(rows))?);
    }
    let json = serde_json::to_string_pretty(&run.tables).expect("sweep serializes");
    written.push(write(&out_dir.join("sweep.json"), json)?);
    if !run.failures.is_empty() {
        written.push(write(&out_dir.join("failures.tsv"), failures_text(&run.failures))?);
    }
    Ok(written)
}

/// Writes `count_per_class` smooth and bumpy caps plus `manifest.toml`.
///
/// Subject `j` (smooth first, then bumpy) uses seed `seed * 1000 + j`.
pub fn write_synthetic_dataset(
    out_dir: &Path,
    count_per_class: usize,
    resolution: usize,
    seed: u64,
) -> Result<DatasetManifest> {
    let mesh_dir = out_dir.join("meshes");
    ensure_dir(&mesh_dir)?;
    let mut subjects = Vec::with_capacity(2 * count_per_class);
    for class in 0..2 {
        for i in 0..count_per_class {
            let j = (class * count_per_class + i) as u64;
            let s = seed.wrapping_mul(1000).wrapping_add(j);
            let spec = if class == 0 {
                SynthSpec::smooth(s, resolution)
            } else {
                SynthSpec::bumpy(s, resolution)
            };
            let name = if class == 0 { "smooth" } else { "bumpy" };
            let id = format!("{name}_{i:03}");
            let rel = PathBuf::from("meshes").join(format!("{id}.off"));
            save_mesh(&generate(&spec)?, out_dir.join(&rel))?;
            subjects.push(SubjectEntry {
                id,
                mesh: rel,
                label: name.to_string(),
                seed: Some(s),
            });
        }
    }
    let mut manifest = DatasetManifest::new(["smooth".into(), "bumpy".into()], subjects)?;
    manifest.save(out_dir.join("manifest.toml"))?;
    manifest.base_dir = out_dir.to_path_buf();
    Ok(manifest)
}

/// Copies a dataset with normal-direction noise added to every mesh.
///
/// Subject `j` uses noise seed `spec.seed + j`. Subjects whose mesh breaks
/// under the noise are reported and left out of the new manifest.
pub fn write_noisy_dataset(
    manifest: &DatasetManifest,
    out_dir: &Path,
    spec: &NoiseSpec,
) -> Result<(DatasetManifest, Vec<SubjectFailure>)> {
    let mesh_dir = out_dir.join("meshes");
    ensure_dir(&mesh_dir)?;
    let mut subjects = Vec::new();
    let mut failures = Vec::new();
    for (j, s) in manifest.subjects.iter().enumerate() {
        let rel = PathBuf::from("meshes").join(format!("{}.off", s.id));
        let noisy = crate::mesh::load_mesh(manifest.mesh_path(s)).and_then(|m| {
            add_noise(
                &m,
                &NoiseSpec {
                    seed: spec.seed.wrapping_add(j as u64),
                    ..spec.clone()
                },
            )
        });
        match noisy.and_then(|m| save_mesh(&m, out_dir.join(&rel))) {
            Ok(()) => subjects.push(SubjectEntry {
                mesh: rel,
                ..s.clone()
            }),
            Err(error) => failures.push(SubjectFailure {
                subject: s.id.clone(),
                error,
            }),
        }
    }
    let classes = [manifest.classes[0].clone(), manifest.classes[1].clone()];
    let mut noisy = DatasetManifest::new(classes, subjects)?;
    noisy.save(out_dir.join("manifest.toml"))?;
    noisy.base_dir = out_dir.to_path_buf();
    Ok((noisy, failures))
}
