//! Seeded synthetic surface patches and Gaussian vertex noise.
//!
//! Patches are hexagonal-lattice disks (jittered) mapped onto a sphere or
//! ellipsoid cap. Class 1 patches carry Gaussian bumps displaced along the
//! surface normal. Every output is a pure function of its spec and seed.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mesh::{corner_angles, euclidean_edge_metric, TriangleMesh};

/// Half-angle of the cap in radians; also the patch radius on the unit sphere.
pub const CAP_ANGLE: f64 = std::f64::consts::FRAC_PI_3;
const JITTER: f64 = 0.2;
const BUMP_CENTER_RADIUS: f64 = 0.65;
const ELLIPSOID_AXES: [f64; 3] = [1.25, 1.0, 0.8];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BaseShape {
    SphereCap,
    EllipsoidCap,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub label: usize,
    pub base: BaseShape,
    pub bump_count: usize,
    /// Bump height as a fraction of the patch radius.
    pub bump_amplitude: f64,
    /// Gaussian bump width as a fraction of the patch radius.
    pub bump_radius: f64,
    /// Target vertex count.
    pub resolution: usize,
    pub seed: u64,
}

impl SynthSpec {
    pub fn smooth(seed: u64, resolution: usize) -> Self {
        SynthSpec {
            label: 0,
            base: BaseShape::SphereCap,
            bump_count: 0,
            bump_amplitude: 0.0,
            bump_radius: 0.2,
            resolution,
            seed,
        }
    }

    pub fn bumpy(seed: u64, resolution: usize) -> Self {
        SynthSpec {
            label: 1,
            bump_count: 4,
            bump_amplitude: 0.15,
            ..SynthSpec::smooth(seed, resolution)
        }
    }

    /// Irregular patch with random bump parameters, for property tests.
    pub fn random_patch(seed: u64, resolution: usize) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x005e_ed0f_da7a);
        SynthSpec {
            label: 0,
            base: if rng.random_bool(0.5) {
                BaseShape::SphereCap
            } else {
                BaseShape::EllipsoidCap
            },
            bump_count: rng.random_range(0..4),
            bump_amplitude: rng.random_range(0.0..0.12),
            bump_radius: rng.random_range(0.15..0.35),
            resolution,
            seed,
        }
    }

    fn validate(&self) -> Result<()> {
        if !(self.bump_amplitude >= 0.0) || !(self.bump_radius > 0.0) {
            return Err(Error::InvalidParameter(
                "bump amplitude must be >= 0 and bump radius > 0".into(),
            ));
        }
        if self.resolution < 50 {
            return Err(Error::InvalidParameter(format!(
                "resolution {} below minimum of 50",
                self.resolution
            )));
        }
        Ok(())
    }
}

/// Number of lattice rings whose hexagon vertex count `1 + 3R(R+1)` is closest to `target`.
fn rings_for(target: usize) -> usize {
    (1usize..200)
        .min_by_key(|&r| (1 + 3 * r * (r + 1)).abs_diff(target))
        .unwrap_or(1)
}

/// Hexagonal lattice disk with `rings` rings; returns unit-disk positions and faces.
fn lattice_disk(rings: usize, rng: &mut ChaCha8Rng) -> (Vec<[f64; 2]>, Vec<[usize; 3]>) {
    let r = rings as i64;
    let mut index = std::collections::HashMap::new();
    let mut points = Vec::new();
    for q in -r..=r {
        for s in -r..=r {
            let ring = q.abs().max(s.abs()).max((q + s).abs());
            if ring > r {
                continue;
            }
            index.insert((q, s), points.len());
            let x = q as f64 + 0.5 * s as f64;
            let y = s as f64 * 3f64.sqrt() / 2.0;
            let norm = (x * x + y * y).sqrt();
            let mut p = if ring == 0 {
                [0.0, 0.0]
            } else {
                let rad = ring as f64 / rings as f64;
                [x / norm * rad, y / norm * rad]
            };
            if ring < r && ring > 0 {
                let h = JITTER / rings as f64;
                p[0] += rng.random_range(-h..h);
                p[1] += rng.random_range(-h..h);
            }
            points.push(p);
        }
    }
    let mut faces = Vec::new();
    for q in -r..=r {
        for s in -r..=r {
            let (Some(&a), Some(&b), Some(&c)) = (
                index.get(&(q, s)),
                index.get(&(q + 1, s)),
                index.get(&(q, s + 1)),
            ) else {
                continue;
            };
            faces.push([a, b, c]);
        }
    }
    for q in -r..=r {
        for s in -r..=r {
            if let (Some(&b), Some(&d), Some(&c)) = (
                index.get(&(q + 1, s)),
                index.get(&(q + 1, s + 1)),
                index.get(&(q, s + 1)),
            ) {
                faces.push([b, d, c]);
            }
        }
    }
    (points, faces)
}

fn sphere_point(p: [f64; 2]) -> [f64; 3] {
    let rad = (p[0] * p[0] + p[1] * p[1]).sqrt();
    let theta = rad * CAP_ANGLE;
    let phi = p[1].atan2(p[0]);
    [theta.sin() * phi.cos(), theta.sin() * phi.sin(), theta.cos()]
}

/// Generates a disk-topology patch for `spec`.
pub fn generate(spec: &SynthSpec) -> Result<TriangleMesh> {
    spec.validate()?;
    let rings = rings_for(spec.resolution);
    let mut lattice_rng = ChaCha8Rng::seed_from_u64(spec.seed);
    lattice_rng.set_stream(0);
    let (disk, faces) = lattice_disk(rings, &mut lattice_rng);

    let mut bump_rng = ChaCha8Rng::seed_from_u64(spec.seed);
    bump_rng.set_stream(1);
    let bumps: Vec<[f64; 3]> = (0..spec.bump_count)
        .map(|_| {
            let rad = BUMP_CENTER_RADIUS * bump_rng.random_range(0.0f64..1.0).sqrt();
            let ang = bump_rng.random_range(0.0..std::f64::consts::TAU);
            sphere_point([rad * ang.cos(), rad * ang.sin()])
        })
        .collect();
    let height = spec.bump_amplitude * CAP_ANGLE;
    let width = spec.bump_radius * CAP_ANGLE;

    let axes = match spec.base {
        BaseShape::SphereCap => [1.0; 3],
        BaseShape::EllipsoidCap => ELLIPSOID_AXES,
    };
    let vertices = disk
        .iter()
        .map(|&p| {
            let s = sphere_point(p);
            let mut x = [s[0] * axes[0], s[1] * axes[1], s[2] * axes[2]];
            if height > 0.0 && !bumps.is_empty() {
                let g = [x[0] / (axes[0] * axes[0]), x[1] / (axes[1] * axes[1]), x[2] / (axes[2] * axes[2])];
                let gn = (g[0] * g[0] + g[1] * g[1] + g[2] * g[2]).sqrt();
                let offset: f64 = bumps
                    .iter()
                    .map(|c| {
                        let d = (s[0] * c[0] + s[1] * c[1] + s[2] * c[2]).clamp(-1.0, 1.0).acos();
                        height * (-d * d / (2.0 * width * width)).exp()
                    })
                    .sum();
                for k in 0..3 {
                    x[k] += offset * g[k] / gn;
                }
            }
            x
        })
        .collect();
    TriangleMesh::new(vertices, faces)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NoiseScale {
    /// `sigma` is a fraction of the mean edge length.
    RelativeToMeanEdge,
    /// `sigma` is in model units.
    Absolute,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    pub sigma: f64,
    pub scale: NoiseScale,
    pub seed: u64,
}

/// Area-weighted unit vertex normals.
pub fn vertex_normals(mesh: &TriangleMesh) -> Vec<[f64; 3]> {
    let p = mesh.vertices();
    let mut normals = vec![[0.0; 3]; mesh.num_vertices()];
    for f in mesh.faces() {
        let n = face_cross(p[f[0]], p[f[1]], p[f[2]]);
        for &v in f {
            for k in 0..3 {
                normals[v][k] += n[k];
            }
        }
    }
    for n in &mut normals {
        let len = (n[0] * n[0] + n[1] * n[1] + n[2] * n[2]).sqrt();
        if len > 0.0 {
            for c in n.iter_mut() {
                *c /= len;
            }
        }
    }
    normals
}

fn face_cross(a: [f64; 3], b: [f64; 3], c: [f64; 3]) -> [f64; 3] {
    let u = [b[0] - a[0], b[1] - a[1], b[2] - a[2]];
    let v = [c[0] - a[0], c[1] - a[1], c[2] - a[2]];
    [
        u[1] * v[2] - u[2] * v[1],
        u[2] * v[0] - u[0] * v[2],
        u[0] * v[1] - u[1] * v[0],
    ]
}

pub fn mean_edge_length(mesh: &TriangleMesh) -> f64 {
    let p = mesh.vertices();
    let total: f64 = mesh
        .edges()
        .iter()
        .map(|&[i, j]| {
            let d = [p[i][0] - p[j][0], p[i][1] - p[j][1], p[i][2] - p[j][2]];
            (d[0] * d[0] + d[1] * d[1] + d[2] * d[2]).sqrt()
        })
        .sum();
    total / mesh.num_edges() as f64
}

/// Displaces every vertex along its normal by an `N(0, sigma^2)` draw.
pub fn add_noise(mesh: &TriangleMesh, spec: &NoiseSpec) -> Result<TriangleMesh> {
    if !(spec.sigma >= 0.0) || !spec.sigma.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "noise sigma must be finite and >= 0, got {}",
            spec.sigma
        )));
    }
    if spec.sigma == 0.0 {
        return Ok(mesh.clone());
    }
    let sigma = match spec.scale {
        NoiseScale::Absolute => spec.sigma,
        NoiseScale::RelativeToMeanEdge => spec.sigma * mean_edge_length(mesh),
    };
    let normal = Normal::new(0.0, sigma).map_err(|e| Error::InvalidParameter(e.to_string()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let normals = vertex_normals(mesh);
    let vertices: Vec<[f64; 3]> = mesh
        .vertices()
        .iter()
        .zip(&normals)
        .map(|(p, n)| {
            let t = normal.sample(&mut rng);
            [p[0] + t * n[0], p[1] + t * n[1], p[2] + t * n[2]]
        })
        .collect();

    let noisy = mesh.with_vertices(vertices)?;
    let wrap = |e: Error| Error::NoiseTooLarge(Box::new(e));
    let metric = euclidean_edge_metric(&noisy).map_err(wrap)?;
    corner_angles(&noisy, &metric).map_err(wrap)?;
    let (old, new) = (mesh.vertices(), noisy.vertices());
    for (f, face) in mesh.faces().iter().enumerate() {
        let a = face_cross(old[face[0]], old[face[1]], old[face[2]]);
        let b = face_cross(new[face[0]], new[face[1]], new[face[2]]);
        if a[0] * b[0] + a[1] * b[1] + a[2] * b[2] <= 0.0 {
            return Err(wrap(Error::FaceFlipped { face: f }));
        }
    }
    Ok(noisy)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lattice_counts() {
        assert_eq!(rings_for(500), 12);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let (p, f) = lattice_disk(3, &mut rng);
        assert_eq!(p.len(), 37);
        assert_eq!(f.len(), 6 * 9);
    }

    #[test]
    fn resolution_and_topology() {
        let m = generate(&SynthSpec::smooth(7, 500)).unwrap();
        let n = m.num_vertices() as f64;
        assert!((450.0..=550.0).contains(&n), "{n}");
        assert_eq!(m.num_boundary_loops(), 1);
        assert_eq!(m.euler_characteristic(), 1);
    }

    #[test]
    fn zero_amplitude_matches_smooth() {
        let smooth = generate(&SynthSpec::smooth(3, 200)).unwrap();
        let flat_bumps = generate(&SynthSpec {
            bump_count: 6,
            ..SynthSpec::smooth(3, 200)
        })
        .unwrap();
        assert_eq!(smooth.vertices(), flat_bumps.vertices());
        assert_eq!(smooth.faces(), flat_bumps.faces());
    }

    #[test]
    fn seeds_are_deterministic() {
        let a = generate(&SynthSpec::bumpy(11, 300)).unwrap();
        let b = generate(&SynthSpec::bumpy(11, 300)).unwrap();
        let c = generate(&SynthSpec::bumpy(12, 300)).unwrap();
        assert_eq!(a.vertices(), b.vertices());
        assert_ne!(a.vertices(), c.vertices());
    }

    #[test]
    fn rejects_invalid_spec() {
        assert!(generate(&SynthSpec::smooth(0, 20)).is_err());
        let mut s = SynthSpec::bumpy(0, 100);
        s.bump_amplitude = -1.0;
        assert!(generate(&s).is_err());
    }

    #[test]
    fn zero_noise_is_identity() {
        let m = generate(&SynthSpec::bumpy(5, 200)).unwrap();
        let spec = NoiseSpec {
            sigma: 0.0,
            scale: NoiseScale::RelativeToMeanEdge,
            seed: 1,
        };
        assert_eq!(add_noise(&m, &spec).unwrap().vertices(), m.vertices());
    }

    #[test]
    fn noise_is_reproducible() {
        let m = generate(&SynthSpec::bumpy(5, 200)).unwrap();
        let spec = NoiseSpec {
            sigma: 0.1,
            scale: NoiseScale::RelativeToMeanEdge,
            seed: 9,
        };
        let a = add_noise(&m, &spec).unwrap();
        let b = add_noise(&m, &spec).unwrap();
        assert_eq!(a.vertices(), b.vertices());
        assert_eq!(a.num_faces(), m.num_faces());
        assert_ne!(a.vertices(), m.vertices());
    }

    #[test]
    fn huge_noise_rejected() {
        let m = generate(&SynthSpec::smooth(5, 200)).unwrap();
        let spec = NoiseSpec {
            sigma: 5.0,
            scale: NoiseScale::RelativeToMeanEdge,
            seed: 2,
        };
        assert!(matches!(add_noise(&m, &spec), Err(Error::NoiseTooLarge(_))));
    }
}
