use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use log::{info, warn};

use ricci_cov::classify::{
    leave_one_out_with_kernel, report_from_predictions, ClassificationReport, KernelMatrix,
    LabeledDataset, ReportParams, SweepRow,
};
use ricci_cov::embed::{embed_plane, SeedFace};
use ricci_cov::features::{feature_stack, sample_stages, select_vertices};
use ricci_cov::mesh::load_mesh;
use ricci_cov::pipeline::{
    self, flatten, init_deterministic_linear_algebra, run_experiment, run_subject, run_sweep,
    write_classification, write_noisy_dataset, write_sweep, write_synthetic_dataset,
    DatasetManifest, PipelineConfig, SigmaSetting,
};
use ricci_cov::spd::{median_bandwidth, KernelParams, MatchMode, SubjectSignature};
use ricci_cov::synth::{NoiseScale, NoiseSpec};
use ricci_cov::Error;

const EXIT_VALIDATION: u8 = 1;
const EXIT_COMPUTE: u8 = 2;
const EXIT_PARTIAL: u8 = 3;

#[derive(Parser)]
#[command(name = "ricci-cov", version, about = "Ricci-flow covariance descriptors for mesh classification")]
struct Cli {
    #[command(flatten)]
    common: Common,
    /// More log output (-v info, -vv debug).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// TOML configuration file; flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (0 = all cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,
}

#[derive(Args, Default)]
struct Overrides {
    /// Curvature threshold for vertex selection (comma-separated for `sweep`).
    #[arg(long, value_delimiter = ',')]
    tau: Vec<f64>,
    /// Number of sampled flow stages (comma-separated for `sweep`).
    #[arg(long, value_delimiter = ',')]
    steps: Vec<usize>,
    /// Neighbour counts, comma-separated.
    #[arg(long, value_delimiter = ',')]
    k: Vec<usize>,
    /// Kernel bandwidth, a number or "median".
    #[arg(long)]
    sigma: Option<SigmaSetting>,
    /// best-match or worst-match.
    #[arg(long)]
    match_mode: Option<MatchMode>,
    /// Disable the descriptor cache.
    #[arg(long)]
    no_cache: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Flow one mesh to a flat metric; write the trace and the planar embedding.
    Flow {
        mesh: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Also write an SVG of the embedding with the final packing circles.
        #[arg(long)]
        svg: bool,
    },
    /// Per-stage feature matrices of one mesh as CSV.
    Features {
        mesh: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        o: Overrides,
    },
    /// Covariance signature of one mesh, or of every manifest subject.
    Descriptors {
        mesh: Option<PathBuf>,
        #[arg(long, conflicts_with = "mesh")]
        manifest: Option<PathBuf>,
        /// Signature file for a single mesh (`.bin` for binary), directory for a manifest.
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        o: Overrides,
    },
    /// Leave-one-out KNN over a manifest or a directory of labelled signatures.
    Classify {
        #[arg(long, required_unless_present = "signatures")]
        manifest: Option<PathBuf>,
        #[arg(long, conflicts_with = "manifest")]
        signatures: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        o: Overrides,
    },
    /// Metrics for every (steps, K) combination, per tau.
    Sweep {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        o: Overrides,
    },
    /// Generate a two-class synthetic dataset (smooth and bumpy caps).
    Synth {
        #[arg(long)]
        out: PathBuf,
        /// Subjects per class.
        #[arg(long, default_value_t = 20)]
        count: usize,
        /// Approximate vertices per mesh.
        #[arg(long, default_value_t = 500)]
        resolution: usize,
    },
    /// Copy a dataset with Gaussian vertex noise along the normals.
    Noise {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Noise standard deviation, as a fraction of the mean edge length.
        #[arg(long, default_value_t = 0.1)]
        level: f64,
        /// Treat `--level` as an absolute length.
        #[arg(long)]
        absolute: bool,
    },
    /// Print report or sweep files as a table.
    Report {
        #[arg(required = true)]
        files: Vec<PathBuf>,
    },
    /// Print the effective configuration as TOML.
    Config,
}

enum Outcome {
    Done,
    Partial(usize),
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    init_deterministic_linear_algebra();
    match run(cli) {
        Ok(Outcome::Done) => ExitCode::SUCCESS,
        Ok(Outcome::Partial(n)) => {
            eprintln!("warning: {n} subject(s) failed; see failures.tsv");
            ExitCode::from(EXIT_PARTIAL)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_validation() { EXIT_VALIDATION } else { EXIT_COMPUTE })
        }
    }
}

fn load_config(common: &Common) -> Result<PipelineConfig, Error> {
    let mut cfg = match &common.config {
        Some(p) => PipelineConfig::load(p)?,
        None => PipelineConfig::default(),
    };
    if let Some(s) = common.seed {
        cfg.seed = s;
    }
    if let Some(j) = common.jobs {
        cfg.jobs = j;
    }
    Ok(cfg)
}

fn single<T: Copy>(values: &[T], flag: &str) -> Result<Option<T>, Error> {
    match values {
        [] => Ok(None),
        [v] => Ok(Some(*v)),
        _ => Err(Error::InvalidParameter(format!("--{flag} takes a single value here"))),
    }
}

/// Applies flag overrides; `sweep` takes lists for tau and steps.
fn apply(cfg: &mut PipelineConfig, o: &Overrides, sweep: bool) -> Result<(), Error> {
    if sweep {
        if !o.tau.is_empty() {
            cfg.sweep.tau = o.tau.clone();
        }
        if !o.steps.is_empty() {
            cfg.sweep.steps = o.steps.clone();
        }
        if !o.k.is_empty() {
            cfg.sweep.k = o.k.clone();
        }
    } else {
        if let Some(t) = single(&o.tau, "tau")? {
            cfg.features.tau = t;
        }
        if let Some(s) = single(&o.steps, "steps")? {
            cfg.features.steps = s;
        }
        if !o.k.is_empty() {
            cfg.classify.k = o.k.clone();
        }
    }
    if let Some(s) = o.sigma {
        cfg.kernel.sigma = s;
    }
    if let Some(m) = o.match_mode {
        cfg.kernel.match_mode = m;
    }
    if o.no_cache {
        cfg.paths.cache_dir = None;
    }
    cfg.validate()
}

fn write(path: &Path, contents: impl AsRef<[u8]>) -> Result<(), Error> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| io_error(dir, e))?;
    }
    std::fs::write(path, contents).map_err(|e| io_error(path, e))
}

fn io_error(path: &Path, source: std::io::Error) -> Error {
    Error::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn run(cli: Cli) -> Result<Outcome, Error> {
    let mut cfg = load_config(&cli.common)?;
    match cli.command {
        Command::Flow { mesh, out, svg } => {
            cfg.validate()?;
            let m = load_mesh(&mesh)?;
            let trace = flatten(&m, &cfg.solver)?;
            std::fs::create_dir_all(&out).map_err(|e| io_error(&out, e))?;
            trace.save(out.join("trace.json"))?;
            let last = trace.last();
            let emb = embed_plane(&m, &last.lengths, SeedFace::Auto)?;
            write(&out.join("embedding.obj"), emb.to_obj(&m))?;
            if svg {
                let radii = trace.radii_at(trace.num_stages() - 1)?;
                write(&out.join("embedding.svg"), emb.to_svg(&m, Some(&radii)))?;
            }
            println!(
                "{}: {} iterations, residual {:e}, length distortion {:e}",
                mesh.display(),
                trace.iterations,
                trace.final_residual(),
                emb.length_distortion(&m, &last.lengths)
            );
            Ok(Outcome::Done)
        }
        Command::Features { mesh, out, o } => {
            apply(&mut cfg, &o, false)?;
            let m = load_mesh(&mesh)?;
            let trace = flatten(&m, &cfg.solver)?;
            let sel = select_vertices(&trace.stage(0)?.curvature, cfg.features.tau)?;
            let stages = sample_stages(trace.num_stages(), cfg.features.steps)?;
            let feats = feature_stack(&m, &trace, &stages, &sel, &cfg.features.heat_options())?;
            let mut csv = String::new();
            for (i, f) in feats.iter().enumerate() {
                let text = f.to_csv();
                // one header for the whole file
                csv.push_str(if i == 0 { &text } else { text.split_once('\n').map_or("", |x| x.1) });
            }
            write(&out, csv)?;
            info!("{} vertices selected, {} stages", sel.len(), feats.len());
            Ok(Outcome::Done)
        }
        Command::Descriptors { mesh, manifest, out, o } => {
            apply(&mut cfg, &o, false)?;
            match (mesh, manifest) {
                (Some(mesh), _) => {
                    run_subject(&mesh, &cfg)?.save(&out)?;
                    Ok(Outcome::Done)
                }
                (None, Some(manifest)) => descriptors_for_manifest(&DatasetManifest::load(manifest)?, &cfg, &out),
                (None, None) => Err(Error::InvalidParameter("give a mesh or --manifest".into())),
            }
        }
        Command::Classify { manifest, signatures, out, o } => {
            apply(&mut cfg, &o, false)?;
            let out = out.unwrap_or_else(|| cfg.paths.output_dir.clone());
            if let Some(dir) = signatures {
                let reports = classify_signatures(&dir, &cfg)?;
                for r in &reports {
                    write(&out.join(format!("report_k{}.json", r.params.k)), r.to_json())?;
                    write(&out.join(format!("report_k{}.csv", r.params.k)), r.to_csv())?;
                    write(&out.join(format!("predictions_k{}.csv", r.params.k)), r.predictions_csv())?;
                }
                print_reports(&reports);
                return Ok(Outcome::Done);
            }
            let manifest = DatasetManifest::load(manifest.expect("clap enforces one source"))?;
            let run = run_experiment(&manifest, &cfg)?;
            write_classification(&run, &out)?;
            print_reports(&run.reports);
            Ok(partial(run.failures.len()))
        }
        Command::Sweep { manifest, out, o } => {
            apply(&mut cfg, &o, true)?;
            let out = out.unwrap_or_else(|| cfg.paths.output_dir.clone());
            let run = run_sweep(&DatasetManifest::load(manifest)?, &cfg)?;
            write_sweep(&run, &out)?;
            for (tau, rows) in &run.tables {
                println!("tau = {tau}");
                print_sweep(rows);
            }
            Ok(partial(run.failures.len()))
        }
        Command::Synth { out, count, resolution } => {
            let manifest = write_synthetic_dataset(&out, count, resolution, cfg.seed)?;
            println!("wrote {} subjects to {}", manifest.subjects.len(), out.display());
            Ok(Outcome::Done)
        }
        Command::Noise { manifest, out, level, absolute } => {
            let spec = NoiseSpec {
                sigma: level,
                scale: if absolute {
                    NoiseScale::Absolute
                } else {
                    NoiseScale::RelativeToMeanEdge
                },
                seed: cfg.seed,
            };
            let (noisy, failures) = write_noisy_dataset(&DatasetManifest::load(manifest)?, &out, &spec)?;
            for f in &failures {
                warn!("{}: {}", f.subject, f.error);
            }
            println!("wrote {} subjects to {}", noisy.subjects.len(), out.display());
            Ok(partial(failures.len()))
        }
        Command::Report { files } => {
            for f in files {
                print_report_file(&f)?;
            }
            Ok(Outcome::Done)
        }
        Command::Config => {
            cfg.validate()?;
            print!("{}", cfg.to_toml());
            Ok(Outcome::Done)
        }
    }
}

fn partial(failures: usize) -> Outcome {
    if failures == 0 {
        Outcome::Done
    } else {
        Outcome::Partial(failures)
    }
}

fn descriptors_for_manifest(manifest: &DatasetManifest, cfg: &PipelineConfig, out: &Path) -> Result<Outcome, Error> {
    manifest.validate()?;
    let positive = manifest.positive_index(cfg.classify.positive_class.as_deref())?;
    let tables = pipeline::compute_tables(manifest, cfg, cfg.features.tau)?;
    std::fs::create_dir_all(out).map_err(|e| io_error(out, e))?;
    for (i, t) in &tables.tables {
        let s = &manifest.subjects[*i];
        let sig = pipeline::signature_from_stages(&s.id, Some(manifest.binary_label(s, positive)), t, cfg.features.steps)?;
        sig.save(out.join(format!("{}.sig", s.id)))?;
    }
    let mut failed = String::new();
    for f in &tables.failures {
        failed.push_str(&format!("{}\t{}\n", f.subject, f.error));
    }
    if !failed.is_empty() {
        write(&out.join("failures.tsv"), failed)?;
    }
    println!("wrote {} signatures to {}", tables.tables.len(), out.display());
    Ok(partial(tables.failures.len()))
}

fn classify_signatures(dir: &Path, cfg: &PipelineConfig) -> Result<Vec<ClassificationReport>, Error> {
    let mut paths: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(|e| io_error(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "sig" || x == "bin"))
        .collect();
    paths.sort();
    let sigs = paths.iter().map(SubjectSignature::load).collect::<Result<Vec<_>, _>>()?;
    let data = LabeledDataset::new(sigs, ["0".into(), "1".into()])?;
    let sigma = match cfg.kernel.sigma {
        SigmaSetting::Value(s) => s,
        SigmaSetting::Named(_) => median_bandwidth(data.signatures(), cfg.seed)?,
    };
    let p = KernelParams::new(sigma, cfg.kernel.match_mode)?;
    let kernel = KernelMatrix::compute(data.signatures(), &p)?;
    cfg.classify
        .k
        .iter()
        .map(|&k| {
            let predicted = leave_one_out_with_kernel(&data, &kernel, k)?;
            Ok(report_from_predictions(
                &data,
                &predicted,
                ReportParams {
                    k,
                    steps: None,
                    tau: None,
                    sigma,
                    match_mode: cfg.kernel.match_mode,
                },
            ))
        })
        .collect()
}

fn print_reports(reports: &[ClassificationReport]) {
    println!("{:>3} {:>7} {:>7} {:>7} {:>7} {:>7}", "K", "ACC", "PRE", "SPE", "SEN", "F1");
    for r in reports {
        let m = &r.metrics;
        println!(
            "{:>3} {:>7.2} {:>7.2} {:>7.2} {:>7.2} {:>7.2}",
            r.params.k, m.acc, m.pre, m.spe, m.sen, m.f1
        );
    }
}

fn print_sweep(rows: &[SweepRow]) {
    println!("{:>5} {:>3} {:>7} {:>7} {:>7} {:>7} {:>7}", "Steps", "K", "ACC", "PRE", "SPE", "SEN", "F1");
    for r in rows {
        let m = &r.report.metrics;
        println!(
            "{:>5} {:>3} {:>7.2} {:>7.2} {:>7.2} {:>7.2} {:>7.2}",
            r.steps, r.k, m.acc, m.pre, m.spe, m.sen, m.f1
        );
    }
}

fn print_report_file(path: &Path) -> Result<(), Error> {
    let text = std::fs::read_to_string(path).map_err(|e| io_error(path, e))?;
    let bad = |e: serde_json::Error| Error::InvalidParameter(format!("{}: {e}", path.display()));
    println!("{}", path.display());
    if path.extension().is_some_and(|e| e == "csv") {
        print!("{text}");
        return Ok(());
    }
    let value: serde_json::Value = serde_json::from_str(&text).map_err(bad)?;
    if value.is_array() {
        let tables: Vec<(f64, Vec<SweepRow>)> = serde_json::from_value(value).map_err(bad)?;
        for (tau, rows) in &tables {
            println!("tau = {tau}");
            print_sweep(rows);
        }
    } else {
        let r: ClassificationReport = serde_json::from_value(value).map_err(bad)?;
        let c = &r.confusion;
        println!("TP {} TN {} FP {} FN {}", c.tp, c.tn, c.fp, c.fn_);
        print_reports(std::slice::from_ref(&r));
    }
    Ok(())
}
