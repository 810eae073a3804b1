use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use ricci_cov::classify::KernelMatrix;
use ricci_cov::hks::{cotangent_laplacian, eigendecompose, heat_kernel_signature, SpectrumSize};
use ricci_cov::mesh::euclidean_edge_metric;
use ricci_cov::pipeline::{analyze_mesh, flatten, init_deterministic_linear_algebra, PipelineConfig};
use ricci_cov::spd::{geodesic_distance, KernelParams, MatchMode, SubjectSignature};
use ricci_cov::synth::{generate, SynthSpec};
use ricci_cov::SolverConfig;

fn flow(c: &mut Criterion) {
    init_deterministic_linear_algebra();
    let mut g = c.benchmark_group("flow");
    g.sample_size(10);
    for n in [250, 500, 1000] {
        let mesh = generate(&SynthSpec::bumpy(1, n)).unwrap();
        g.bench_with_input(BenchmarkId::from_parameter(n), &mesh, |b, m| {
            b.iter(|| flatten(black_box(m), &SolverConfig::default()).unwrap())
        });
    }
    g.finish();
}

fn hks(c: &mut Criterion) {
    init_deterministic_linear_algebra();
    let mut g = c.benchmark_group("hks");
    g.sample_size(10);
    for n in [250, 500, 1000] {
        let mesh = generate(&SynthSpec::bumpy(2, n)).unwrap();
        let l = cotangent_laplacian(&mesh, &euclidean_edge_metric(&mesh).unwrap(), false).unwrap();
        let all: Vec<usize> = (0..mesh.num_vertices()).collect();
        g.bench_with_input(BenchmarkId::new("eigen", n), &l, |b, l| {
            b.iter(|| eigendecompose(black_box(l), SpectrumSize::Full).unwrap())
        });
        let spec = eigendecompose(&l, SpectrumSize::Full).unwrap();
        let t = spec.t_scale().unwrap();
        g.bench_with_input(BenchmarkId::new("signature", n), &spec, |b, s| {
            b.iter(|| heat_kernel_signature(black_box(s), &[t], &all).unwrap())
        });
    }
    g.finish();
}

fn signatures(count: usize) -> Vec<SubjectSignature> {
    let cfg = PipelineConfig::default();
    (0..count)
        .map(|i| {
            let spec = if i % 2 == 0 {
                SynthSpec::smooth(i as u64, 200)
            } else {
                SynthSpec::bumpy(i as u64, 200)
            };
            let a = analyze_mesh(&generate(&spec).unwrap(), &cfg, cfg.features.tau).unwrap();
            SubjectSignature::new(format!("s{i}"), Some(i % 2), a.descriptors).unwrap()
        })
        .collect()
}

fn kernels(c: &mut Criterion) {
    init_deterministic_linear_algebra();
    let sigs = signatures(20);
    let (x, y) = (&sigs[0].descriptors[0], &sigs[1].descriptors[0]);
    c.bench_function("geodesic_distance", |b| {
        b.iter(|| geodesic_distance(black_box(x), black_box(y)).unwrap())
    });
    let p = KernelParams::new(1.0, MatchMode::BestMatch).unwrap();
    let mut g = c.benchmark_group("kernel_matrix");
    g.sample_size(10);
    g.bench_function("20_subjects", |b| {
        b.iter(|| KernelMatrix::compute(black_box(&sigs), &p).unwrap())
    });
    g.finish();
}

criterion_group!(benches, flow, hks, kernels);
criterion_main!(benches);
