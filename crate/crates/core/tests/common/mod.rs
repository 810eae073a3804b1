#![allow(dead_code)]

use ricci_cov::mesh::{corner_angles, euclidean_edge_metric, gaussian_curvature, TriangleMesh};
use ricci_cov::ricci::{optimize, BoundaryTargetMode, RicciTrace, SolverConfig, TargetCurvature};

pub fn flatten(mesh: &TriangleMesh) -> RicciTrace {
    let metric = euclidean_edge_metric(mesh).unwrap();
    let k = gaussian_curvature(mesh, &corner_angles(mesh, &metric).unwrap());
    let target = TargetCurvature::flat_interior(mesh, BoundaryTargetMode::Uniform, &k).unwrap();
    optimize(mesh, &target, &SolverConfig::default()).unwrap()
}

/// RMS distance after the best rotation + translation (no reflection, no scale).
pub fn procrustes_rms(a: &[[f64; 2]], b: &[[f64; 2]]) -> f64 {
    let n = a.len() as f64;
    let ca = centroid(a);
    let cb = centroid(b);
    let (mut sxx, mut sxy) = (0.0, 0.0);
    for (p, q) in a.iter().zip(b) {
        let (px, py) = (p[0] - ca[0], p[1] - ca[1]);
        let (qx, qy) = (q[0] - cb[0], q[1] - cb[1]);
        sxx += px * qx + py * qy;
        sxy += px * qy - py * qx;
    }
    let theta = sxy.atan2(sxx);
    let (s, c) = theta.sin_cos();
    let mut sum = 0.0;
    for (p, q) in a.iter().zip(b) {
        let (px, py) = (p[0] - ca[0], p[1] - ca[1]);
        let rx = c * px - s * py;
        let ry = s * px + c * py;
        sum += (rx - (q[0] - cb[0])).powi(2) + (ry - (q[1] - cb[1])).powi(2);
    }
    (sum / n).sqrt()
}

fn centroid(p: &[[f64; 2]]) -> [f64; 2] {
    let n = p.len() as f64;
    let (x, y) = p.iter().fold((0.0, 0.0), |(x, y), q| (x + q[0], y + q[1]));
    [x / n, y / n]
}

fn ranks(x: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..x.len()).collect();
    idx.sort_by(|&a, &b| x[a].total_cmp(&x[b]));
    let mut r = vec![0.0; x.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && x[idx[j + 1]] == x[idx[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0;
        for k in i..=j {
            r[idx[k]] = avg;
        }
        i = j + 1;
    }
    r
}

pub fn spearman(a: &[f64], b: &[f64]) -> f64 {
    let (ra, rb) = (ranks(a), ranks(b));
    let n = a.len() as f64;
    let ma = ra.iter().sum::<f64>() / n;
    let mb = rb.iter().sum::<f64>() / n;
    let (mut num, mut da, mut db) = (0.0, 0.0, 0.0);
    for (x, y) in ra.iter().zip(&rb) {
        num += (x - ma) * (y - mb);
        da += (x - ma).powi(2);
        db += (y - mb).powi(2);
    }
    num / (da * db).sqrt()
}

/// Rotation about an arbitrary axis followed by a translation.
pub fn rigid_motion(mesh: &TriangleMesh) -> TriangleMesh {
    let (s, c) = 0.7f64.sin_cos();
    let (s2, c2) = (-1.3f64).sin_cos();
    let moved = mesh
        .vertices()
        .iter()
        .map(|p| {
            let x = c * p[0] - s * p[1];
            let y = s * p[0] + c * p[1];
            let z = p[2];
            let y2 = c2 * y - s2 * z;
            let z2 = s2 * y + c2 * z;
            [x + 3.0, y2 - 1.5, z2 + 0.25]
        })
        .collect();
    mesh.with_vertices(moved).unwrap()
}

/// Regular triangle lattice (`rows` x `cols` vertices) lifted onto `z = a (x^2 + y^2)`.
pub fn lattice(rows: usize, cols: usize, a: f64) -> TriangleMesh {
    let h = 3f64.sqrt() / 2.0;
    let mut v = Vec::new();
    for r in 0..rows {
        for c in 0..cols {
            let x = c as f64 + if r % 2 == 1 { 0.5 } else { 0.0 } - cols as f64 / 2.0;
            let y = r as f64 * h - rows as f64 * h / 2.0;
            v.push([x, y, a * (x * x + y * y)]);
        }
    }
    let id = |r: usize, c: usize| r * cols + c;
    let mut f = Vec::new();
    for r in 0..rows - 1 {
        for c in 0..cols - 1 {
            if r % 2 == 0 {
                f.push([id(r, c), id(r, c + 1), id(r + 1, c)]);
                f.push([id(r, c + 1), id(r + 1, c + 1), id(r + 1, c)]);
            } else {
                f.push([id(r, c), id(r + 1, c + 1), id(r + 1, c)]);
                f.push([id(r, c), id(r, c + 1), id(r + 1, c + 1)]);
            }
        }
    }
    TriangleMesh::new(v, f).unwrap()
}
