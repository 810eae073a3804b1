//! Covariance descriptors on the SPD manifold: affine-invariant distance,
//! Gaussian kernel, set kernel between descriptor sequences, and signature files.

use std::cmp::Ordering;
use std::fmt::Write as _;
use std::path::Path;

use faer::{Mat, Side};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::FeatureMatrix;

/// Eigenvalues below this fraction of the largest are raised to it.
pub const EIGEN_FLOOR: f64 = 1e-12;
pub const MEDIAN_PAIR_CAP: usize = 10_000;

/// Symmetric positive-definite `d x d` matrix, row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CovDescriptor {
    d: usize,
    data: Vec<f64>,
    /// Ridge added to the diagonal.
    pub lambda: f64,
}

impl CovDescriptor {
    /// Checks shape, symmetry (1e-12 relative) and positive eigenvalues.
    pub fn new(d: usize, data: Vec<f64>, lambda: f64) -> Result<Self> {
        if d == 0 || data.len() != d * d {
            return Err(Error::DimensionMismatch {
                left: data.len(),
                right: d * d,
            });
        }
        let c = CovDescriptor { d, data, lambda };
        let scale = c.data.iter().fold(0.0f64, |a, b| a.max(b.abs()));
        for i in 0..d {
            for j in 0..i {
                if (c.get(i, j) - c.get(j, i)).abs() > 1e-12 * scale {
                    return Err(Error::NotSpd { eigenvalue: f64::NAN });
                }
            }
        }
        let (vals, _) = c.eigen()?;
        if let Some(&bad) = vals.iter().find(|&&v| !(v > 0.0)) {
            return Err(Error::NotSpd { eigenvalue: bad });
        }
        Ok(c)
    }

    pub fn identity(d: usize) -> Self {
        let mut data = vec![0.0; d * d];
        for i in 0..d {
            data[i * d + i] = 1.0;
        }
        CovDescriptor { d, data, lambda: 0.0 }
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.d + j]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn trace(&self) -> f64 {
        (0..self.d).map(|i| self.get(i, i)).sum()
    }

    fn to_mat(&self) -> Mat<f64> {
        Mat::from_fn(self.d, self.d, |i, j| self.get(i, j))
    }

    fn eigen(&self) -> Result<(Vec<f64>, Mat<f64>)> {
        sym_eigen(&self.to_mat())
    }
}

fn sym_eigen(m: &Mat<f64>) -> Result<(Vec<f64>, Mat<f64>)> {
    let eig = m
        .self_adjoint_eigen(Side::Lower)
        .map_err(|e| Error::Eigen(format!("{e:?}")))?;
    let s = eig.S().column_vector();
    let vals: Vec<f64> = (0..m.nrows()).map(|i| s[i]).collect();
    Ok((vals, eig.U().to_owned()))
}

fn lex_rows(a: &[f64], b: &[f64]) -> Ordering {
    a.iter()
        .zip(b)
        .map(|(x, y)| x.total_cmp(y))
        .find(|o| o.is_ne())
        .unwrap_or(Ordering::Equal)
}

/// Population covariance `(1/n) sum (F_j - mu)(F_j - mu)^T` plus
/// `lambda_rel * trace / d` on the diagonal (`lambda_rel` alone when the
/// trace is zero).
///
/// Rows are summed in a canonical order, so permuting them does not change
/// a single bit of the result.
pub fn covariance(f: &FeatureMatrix, lambda_rel: f64) -> Result<CovDescriptor> {
    covariance_of_rows(&f.rows, lambda_rel)
}

pub fn covariance_of_rows(rows: &[Vec<f64>], lambda_rel: f64) -> Result<CovDescriptor> {
    let n = rows.len();
    if n < 2 {
        return Err(Error::TooFewRows { rows: n });
    }
    if !(lambda_rel >= 0.0) {
        return Err(Error::InvalidParameter(format!(
            "regularization must be >= 0, got {lambda_rel}"
        )));
    }
    let d = rows[0].len();
    if let Some(r) = rows.iter().find(|r| r.len() != d) {
        return Err(Error::DimensionMismatch { left: r.len(), right: d });
    }
    let mut sorted: Vec<&Vec<f64>> = rows.iter().collect();
    sorted.sort_by(|a, b| lex_rows(a, b));

    let mut mu = vec![0.0; d];
    for r in &sorted {
        for k in 0..d {
            mu[k] += r[k];
        }
    }
    for m in &mut mu {
        *m /= n as f64;
    }
    let mut c = vec![0.0; d * d];
    for r in &sorted {
        for i in 0..d {
            let di = r[i] - mu[i];
            for j in i..d {
                c[i * d + j] += di * (r[j] - mu[j]);
            }
        }
    }
    for i in 0..d {
        for j in i..d {
            c[i * d + j] /= n as f64;
            c[j * d + i] = c[i * d + j];
        }
    }
    let tr: f64 = (0..d).map(|i| c[i * d + i]).sum();
    let lambda = if tr > 0.0 { lambda_rel * tr / d as f64 } else { lambda_rel };
    for i in 0..d {
        c[i * d + i] += lambda;
    }
    CovDescriptor::new(d, c, lambda)
}

/// `X^{-1/2}` with small eigenvalues floored.
fn inv_sqrt(x: &CovDescriptor) -> Result<Mat<f64>> {
    let (vals, vecs) = x.eigen()?;
    let top = vals.iter().fold(0.0f64, |a, &b| a.max(b));
    if let Some(&bad) = vals.iter().find(|&&v| !(v > 0.0)) {
        return Err(Error::NotSpd { eigenvalue: bad });
    }
    let floor = EIGEN_FLOOR * top;
    let d = x.d;
    let s: Vec<f64> = vals
        .iter()
        .map(|&v| {
            if v < floor {
                log::debug!("eigenvalue {v:e} floored to {floor:e}");
            }
            1.0 / v.max(floor).sqrt()
        })
        .collect();
    Ok(Mat::from_fn(d, d, |i, j| {
        (0..d).map(|k| vecs[(i, k)] * s[k] * vecs[(j, k)]).sum()
    }))
}

/// Affine-invariant distance `||log(X^{-1/2} Y X^{-1/2})||_F`.
///
/// Arguments are put in a canonical order first, so the result is exactly
/// symmetric.
pub fn geodesic_distance(x: &CovDescriptor, y: &CovDescriptor) -> Result<f64> {
    if x.d != y.d {
        return Err(Error::DimensionMismatch { left: x.d, right: y.d });
    }
    let (x, y) = match lex_rows(&x.data, &y.data) {
        Ordering::Equal => return Ok(0.0),
        Ordering::Less => (x, y),
        Ordering::Greater => (y, x),
    };
    let w = inv_sqrt(x)?;
    let mut m = &w * y.to_mat() * &w;
    let d = x.d;
    for i in 0..d {
        for j in 0..i {
            let s = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = s;
            m[(j, i)] = s;
        }
    }
    let (theta, _) = sym_eigen(&m)?;
    let top = theta.iter().fold(0.0f64, |a, &b| a.max(b));
    let mut sum = 0.0;
    for &t in &theta {
        if !(t > 0.0) {
            return Err(Error::NotSpd { eigenvalue: t });
        }
        let t = t.max(EIGEN_FLOOR * top);
        sum += t.ln().powi(2);
    }
    Ok(sum.sqrt())
}

/// `exp(-d^2 / (2 sigma^2))`.
pub fn rbf_from_distance(distance: f64, sigma: f64) -> f64 {
    (-distance * distance / (2.0 * sigma * sigma)).exp()
}

pub fn rbf_kernel(x: &CovDescriptor, y: &CovDescriptor, sigma: f64) -> Result<f64> {
    if !(sigma > 0.0) {
        return Err(Error::InvalidParameter(format!("sigma must be > 0, got {sigma}")));
    }
    Ok(rbf_from_distance(geodesic_distance(x, y)?, sigma))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MatchMode {
    /// Each descriptor is matched with its most similar counterpart.
    #[default]
    BestMatch,
    /// Each descriptor is matched with its least similar counterpart.
    WorstMatch,
}

impl std::str::FromStr for MatchMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "best-match" | "best" | "max" => Ok(MatchMode::BestMatch),
            "worst-match" | "worst" | "min" => Ok(MatchMode::WorstMatch),
            _ => Err(Error::InvalidParameter(format!(
                "unknown match mode {s:?} (expected best-match or worst-match)"
            ))),
        }
    }
}

impl std::fmt::Display for MatchMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            MatchMode::BestMatch => "best-match",
            MatchMode::WorstMatch => "worst-match",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelParams {
    pub sigma: f64,
    pub match_mode: MatchMode,
}

impl KernelParams {
    pub fn new(sigma: f64, match_mode: MatchMode) -> Result<Self> {
        if !(sigma > 0.0) || !sigma.is_finite() {
            return Err(Error::InvalidParameter(format!("sigma must be > 0, got {sigma}")));
        }
        Ok(KernelParams { sigma, match_mode })
    }
}

/// Ordered covariance descriptors of one subject, one per sampled stage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubjectSignature {
    pub id: String,
    pub label: Option<usize>,
    pub descriptors: Vec<CovDescriptor>,
}

impl SubjectSignature {
    pub fn new(id: impl Into<String>, label: Option<usize>, descriptors: Vec<CovDescriptor>) -> Result<Self> {
        let Some(first) = descriptors.first() else {
            return Err(Error::InvalidParameter("signature needs at least one descriptor".into()));
        };
        let d = first.dim();
        if let Some(c) = descriptors.iter().find(|c| c.dim() != d) {
            return Err(Error::DimensionMismatch { left: c.dim(), right: d });
        }
        Ok(SubjectSignature {
            id: id.into(),
            label,
            descriptors,
        })
    }

    pub fn len(&self) -> usize {
        self.descriptors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.descriptors.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.descriptors[0].dim()
    }

    pub fn to_text(&self) -> String {
        let mut s = String::from("ricci-cov-signature 1\n");
        let _ = writeln!(s, "subject {}", self.id);
        match self.label {
            Some(l) => {
                let _ = writeln!(s, "label {l}");
            }
            None => s.push_str("label none\n"),
        }
        let _ = writeln!(s, "m {}", self.len());
        let _ = writeln!(s, "d {}", self.dim());
        for c in &self.descriptors {
            let _ = writeln!(s, "lambda {}", c.lambda);
            for i in 0..c.d {
                let row: Vec<String> = (0..c.d).map(|j| c.get(i, j).to_string()).collect();
                let _ = writeln!(s, "{}", row.join(" "));
            }
        }
        s
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let bad = |m: &str| Error::SignatureFormat(m.to_string());
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        if lines.next().map(str::trim) != Some("ricci-cov-signature 1") {
            return Err(bad("missing header line"));
        }
        fn field<'a>(lines: &mut impl Iterator<Item = &'a str>, key: &str) -> Result<String> {
            let bad = |m: &str| Error::SignatureFormat(m.to_string());
            let line = lines.next().ok_or_else(|| bad(&format!("missing {key}")))?;
            line.strip_prefix(key)
                .and_then(|r| r.strip_prefix(' '))
                .map(str::to_string)
                .ok_or_else(|| bad(&format!("expected `{key} ...`, got {line:?}")))
        }
        let id = field(&mut lines, "subject")?;
        let label = match field(&mut lines, "label")?.trim() {
            "none" => None,
            l => Some(l.parse().map_err(|_| bad("label must be an integer or none"))?),
        };
        let m: usize = field(&mut lines, "m")?.trim().parse().map_err(|_| bad("bad m"))?;
        let d: usize = field(&mut lines, "d")?.trim().parse().map_err(|_| bad("bad d"))?;
        let mut descriptors = Vec::with_capacity(m);
        for _ in 0..m {
            let lambda: f64 = field(&mut lines, "lambda")?.trim().parse().map_err(|_| bad("bad lambda"))?;
            let mut data = Vec::with_capacity(d * d);
            for _ in 0..d {
                let line = lines.next().ok_or_else(|| bad("truncated matrix"))?;
                let row: Vec<f64> = line
                    .split_whitespace()
                    .map(str::parse)
                    .collect::<std::result::Result<_, _>>()
                    .map_err(|_| bad("bad matrix entry"))?;
                if row.len() != d {
                    return Err(bad("matrix row has the wrong length"));
                }
                data.extend(row);
            }
            descriptors.push(CovDescriptor::new(d, data, lambda)?);
        }
        if lines.next().is_some() {
            return Err(bad("trailing data"));
        }
        SubjectSignature::new(id, label, descriptors)
    }

    /// Little-endian binary form: magic, id, label, m, d, then `lambda` and the
    /// matrix of each descriptor.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut b = Vec::new();
        b.extend_from_slice(BINARY_MAGIC);
        b.extend_from_slice(&(self.id.len() as u32).to_le_bytes());
        b.extend_from_slice(self.id.as_bytes());
        b.extend_from_slice(&self.label.map_or(-1i64, |l| l as i64).to_le_bytes());
        b.extend_from_slice(&(self.len() as u32).to_le_bytes());
        b.extend_from_slice(&(self.dim() as u32).to_le_bytes());
        for c in &self.descriptors {
            b.extend_from_slice(&c.lambda.to_le_bytes());
            for x in &c.data {
                b.extend_from_slice(&x.to_le_bytes());
            }
        }
        b
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let bad = || Error::SignatureFormat("truncated or corrupt binary signature".into());
        let mut pos = 0;
        let mut take = |n: usize| -> Result<&[u8]> {
            let s = bytes.get(pos..pos + n).ok_or_else(bad)?;
            pos += n;
            Ok(s)
        };
        if take(4)? != BINARY_MAGIC {
            return Err(Error::SignatureFormat("not a binary signature file".into()));
        }
        let u32_at = |s: &[u8]| u32::from_le_bytes(s.try_into().unwrap()) as usize;
        let f64_at = |s: &[u8]| f64::from_le_bytes(s.try_into().unwrap());
        let len = u32_at(take(4)?);
        let id = String::from_utf8(take(len)?.to_vec()).map_err(|_| bad())?;
        let label = i64::from_le_bytes(take(8)?.try_into().unwrap());
        let label = if label < 0 { None } else { Some(label as usize) };
        let m = u32_at(take(4)?);
        let d = u32_at(take(4)?);
        let mut descriptors = Vec::with_capacity(m.min(1 << 16));
        for _ in 0..m {
            let lambda = f64_at(take(8)?);
            let data = (0..d * d)
                .map(|_| take(8).map(f64_at))
                .collect::<Result<Vec<_>>>()?;
            descriptors.push(CovDescriptor::new(d, data, lambda)?);
        }
        if pos != bytes.len() {
            return Err(bad());
        }
        SubjectSignature::new(id, label, descriptors)
    }

    /// Writes the binary form for `.bin` paths and the text form otherwise.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let bytes = if is_binary(path) {
            self.to_bytes()
        } else {
            self.to_text().into_bytes()
        };
        std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        if bytes.starts_with(BINARY_MAGIC) {
            SubjectSignature::from_bytes(&bytes)
        } else {
            let text = String::from_utf8(bytes)
                .map_err(|_| Error::SignatureFormat("signature file is not UTF-8".into()))?;
            SubjectSignature::from_text(&text)
        }
    }
}

const BINARY_MAGIC: &[u8; 4] = b"RCSG";

fn is_binary(path: &Path) -> bool {
    path.extension().is_some_and(|e| e.eq_ignore_ascii_case("bin"))
}

/// Matrix of descriptor-pair distances between two signatures.
pub fn pairwise_distances(a: &SubjectSignature, b: &SubjectSignature) -> Result<Vec<Vec<f64>>> {
    if a.dim() != b.dim() {
        return Err(Error::DimensionMismatch { left: a.dim(), right: b.dim() });
    }
    a.descriptors
        .iter()
        .map(|x| b.descriptors.iter().map(|y| geodesic_distance(x, y)).collect())
        .collect()
}

/// Symmetrized average of per-descriptor matches:
/// `K = (K^(S1, S2) + K^(S2, S1)) / 2`, where `K^(S1, S2)` averages, over
/// `C_i` in `S1`, the max (best-match) or min (worst-match) of `kappa(C_i, C_j)`
/// over `C_j` in `S2`.
pub fn set_kernel(s1: &SubjectSignature, s2: &SubjectSignature, p: &KernelParams) -> Result<f64> {
    let d = pairwise_distances(s1, s2)?;
    Ok(set_kernel_from_distances(&d, p))
}

pub fn set_kernel_from_distances(d: &[Vec<f64>], p: &KernelParams) -> f64 {
    let k: Vec<Vec<f64>> = d
        .iter()
        .map(|row| row.iter().map(|&x| rbf_from_distance(x, p.sigma)).collect())
        .collect();
    let pick = |a: f64, b: f64| match p.match_mode {
        MatchMode::BestMatch => a.max(b),
        MatchMode::WorstMatch => a.min(b),
    };
    let init = match p.match_mode {
        MatchMode::BestMatch => f64::NEG_INFINITY,
        MatchMode::WorstMatch => f64::INFINITY,
    };
    let (n1, n2) = (k.len(), k[0].len());
    let forward = k.iter().map(|row| row.iter().copied().fold(init, pick)).sum::<f64>() / n1 as f64;
    let backward = (0..n2)
        .map(|j| k.iter().map(|row| row[j]).fold(init, pick))
        .sum::<f64>()
        / n2 as f64;
    0.5 * (forward + backward)
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Median pairwise geodesic distance over all descriptors of all signatures.
///
/// Every pair is used when there are at most [`MEDIAN_PAIR_CAP`]; otherwise
/// that many pairs are drawn uniformly with the given seed. Falls back to 1
/// when the median is zero.
pub fn median_bandwidth(signatures: &[SubjectSignature], seed: u64) -> Result<f64> {
    let all: Vec<&CovDescriptor> = signatures.iter().flat_map(|s| &s.descriptors).collect();
    let n = all.len();
    if n < 2 {
        return Err(Error::InvalidParameter(
            "median bandwidth needs at least two descriptors".into(),
        ));
    }
    let total = n * (n - 1) / 2;
    let pairs: Vec<(usize, usize)> = if total <= MEDIAN_PAIR_CAP {
        (0..n).flat_map(|i| (i + 1..n).map(move |j| (i, j))).collect()
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..MEDIAN_PAIR_CAP)
            .map(|_| {
                let i = rng.random_range(0..n);
                let mut j = rng.random_range(0..n - 1);
                if j >= i {
                    j += 1;
                }
                (i.min(j), i.max(j))
            })
            .collect()
    };
    let d = pairs
        .iter()
        .map(|&(i, j)| geodesic_distance(all[i], all[j]))
        .collect::<Result<Vec<_>>>()?;
    let m = median(d);
    if m > 0.0 && m.is_finite() {
        Ok(m)
    } else {
        log::warn!("median descriptor distance is zero; using sigma = 1");
        Ok(1.0)
    }
}
