mod common;

use ricci_cov::features::{
    area_distortion, area_distortions, feature_stack, sample_stages, select_vertices, HeatOptions,
};
use ricci_cov::hks::{cotangent_laplacian, eigendecompose, heat_kernel_signature, SpectrumSize};
use ricci_cov::mesh::{face_areas, one_ring_area, EdgeMetric, TriangleMesh};
use ricci_cov::ricci::RicciTrace;
use ricci_cov::synth::{generate, SynthSpec};

fn cap(seed: u64) -> TriangleMesh {
    generate(&SynthSpec::smooth(seed, 300)).unwrap()
}

fn bumpy(seed: u64) -> TriangleMesh {
    generate(&SynthSpec::bumpy(seed, 300)).unwrap()
}

fn total_area(mesh: &TriangleMesh, m: &EdgeMetric) -> f64 {
    face_areas(mesh, m).iter().sum()
}

#[test]
fn stage_zero_has_no_distortion_and_initial_hks() {
    let mesh = bumpy(3);
    let trace = common::flatten(&mesh);
    let sel = select_vertices(&trace.stage(0).unwrap().curvature, 0.05).unwrap();
    let opts = HeatOptions::default();
    let f = feature_stack(&mesh, &trace, &[0], &sel, &opts).unwrap().remove(0);
    assert_eq!(f.ncols(), 3);
    assert!(f.column(0).iter().all(|&u| u == 0.0));
    assert!(f.column(1).iter().all(|&a| a == 0.0));

    let l = cotangent_laplacian(&mesh, &trace.stage(0).unwrap().lengths, false).unwrap();
    let spec = eigendecompose(&l, SpectrumSize::Full).unwrap();
    let t = spec.t_scale().unwrap();
    let hks = heat_kernel_signature(&spec, &[t], &sel.vertices).unwrap();
    for (a, b) in f.column(2).iter().zip(hks.at(0)) {
        assert!((a - b).abs() < 1e-12, "{a} vs {b}");
    }
}

#[test]
fn area_bookkeeping() {
    for seed in 0..3 {
        let mesh = cap(seed);
        let trace = common::flatten(&mesh);
        let last = trace.num_stages() - 1;
        let ad = area_distortions(&mesh, &trace, last).unwrap();
        let a0 = total_area(&mesh, &trace.stage(0).unwrap().lengths);
        let a1 = total_area(&mesh, &trace.last().lengths);
        let sum: f64 = ad.iter().sum();
        let expected = 3.0 * (a0 - a1);
        assert!(
            (sum - expected).abs() <= 1e-9 * expected.abs().max(a0),
            "seed {seed}: {sum} vs {expected}"
        );
        for v in [0, mesh.num_vertices() / 2] {
            assert_eq!(area_distortion(&mesh, &trace, last, v).unwrap(), ad[v]);
        }
    }
}

#[test]
fn half_scaled_metric_loses_three_quarters() {
    let mesh = cap(5);
    let mut trace: RicciTrace = common::flatten(&mesh);
    let scaled = trace.stage(0).unwrap().lengths.scaled(0.5).unwrap();
    trace.stages.last_mut().unwrap().lengths = scaled;
    let last = trace.num_stages() - 1;
    let ad = area_distortions(&mesh, &trace, last).unwrap();
    let initial = &trace.stage(0).unwrap().lengths;
    for (v, a) in ad.iter().enumerate() {
        let expected = 0.75 * one_ring_area(&mesh, initial, v);
        assert!((a - expected).abs() < 1e-12 * expected.max(1.0), "vertex {v}");
    }
}

#[test]
fn conformal_factor_column_matches_radii() {
    let mesh = bumpy(8);
    let trace = common::flatten(&mesh);
    let last = trace.num_stages() - 1;
    let sel = select_vertices(&trace.stage(0).unwrap().curvature, 0.05).unwrap();
    let f = feature_stack(&mesh, &trace, &[last], &sel, &HeatOptions::default())
        .unwrap()
        .remove(0);

    let g0 = trace.initial_packing.radii();
    let g1 = trace.radii_at(last).unwrap();
    let eta = trace.initial_packing.eta();
    // the final radii must induce the final lengths
    for (e, &[i, j]) in mesh.edges().iter().enumerate() {
        let l2 = g1[i] * g1[i] + g1[j] * g1[j] + 2.0 * g1[i] * g1[j] * eta[e];
        let l = trace.last().lengths.length(e);
        assert!((l2.sqrt() - l).abs() < 1e-10 * l, "edge {e}");
    }
    for (r, &v) in sel.vertices.iter().enumerate() {
        let expected = (g1[v] / g0[v]).ln();
        assert!((f.rows[r][0] - expected).abs() < 1e-10, "vertex {v}");
    }
}

#[test]
fn area_distortion_is_rigid_invariant() {
    let mesh = bumpy(11);
    let moved = common::rigid_motion(&mesh);
    let (ta, tb) = (common::flatten(&mesh), common::flatten(&moved));
    let last = ta.num_stages() - 1;
    assert_eq!(last, tb.num_stages() - 1);
    let (a, b) = (
        area_distortions(&mesh, &ta, last).unwrap(),
        area_distortions(&moved, &tb, last).unwrap(),
    );
    let scale = a.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    for (x, y) in a.iter().zip(&b) {
        assert!((x - y).abs() < 1e-9 * scale.max(1e-3));
    }
}

#[test]
fn selection_is_nested_in_tau() {
    let mesh = bumpy(2);
    let trace = common::flatten(&mesh);
    let k = &trace.stage(0).unwrap().curvature;
    let taus = [0.0, 0.01, 0.02, 0.05, 0.1];
    let sels: Vec<Vec<usize>> = taus
        .iter()
        .map(|&t| select_vertices(k, t).map(|s| s.vertices).unwrap_or_default())
        .collect();
    for w in sels.windows(2) {
        assert!(w[1].iter().all(|v| w[0].contains(v)));
        assert!(w[1].len() <= w[0].len());
    }
}

#[test]
fn flat_grid_selects_only_boundary() {
    let mesh = common::lattice(9, 9, 0.0);
    let trace = common::flatten(&mesh);
    let sel = select_vertices(&trace.stage(0).unwrap().curvature, 0.05).unwrap();
    assert!(!sel.is_empty());
    assert!(sel.vertices.iter().all(|&v| mesh.is_boundary_vertex(v)));
}

#[test]
fn stage_sampling_saturates() {
    assert_eq!(sample_stages(4, 20).unwrap(), vec![0, 1, 2, 3]);
    assert_eq!(sample_stages(21, 3).unwrap(), vec![0, 10, 20]);
}
