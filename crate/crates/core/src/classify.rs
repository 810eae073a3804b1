//! Kernel KNN over subject signatures, leave-one-out evaluation and the
//! ACC / PRE / SPE / SEN / F1 report.

use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::spd::{median_bandwidth, pairwise_distances, set_kernel, set_kernel_from_distances, KernelParams, MatchMode, SubjectSignature};

/// Binary-labelled signatures. Label 1 is the positive (disease) class.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDataset {
    signatures: Vec<SubjectSignature>,
    labels: Vec<usize>,
    pub class_names: [String; 2],
}

impl LabeledDataset {
    /// Takes labels from the signatures; every one must be 0 or 1.
    pub fn new(signatures: Vec<SubjectSignature>, class_names: [String; 2]) -> Result<Self> {
        let mut labels = Vec::with_capacity(signatures.len());
        for s in &signatures {
            match s.label {
                Some(l @ (0 | 1)) => labels.push(l),
                other => {
                    return Err(Error::InvalidParameter(format!(
                        "subject {} has label {other:?}; expected 0 or 1",
                        s.id
                    )))
                }
            }
        }
        if let Some(first) = signatures.first() {
            let d = first.dim();
            if let Some(s) = signatures.iter().find(|s| s.dim() != d) {
                return Err(Error::DimensionMismatch { left: s.dim(), right: d });
            }
        }
        let mut ids: Vec<&str> = signatures.iter().map(|s| s.id.as_str()).collect();
        ids.sort_unstable();
        if let Some(w) = ids.windows(2).find(|w| w[0] == w[1]) {
            return Err(Error::InvalidParameter(format!("duplicate subject id {}", w[0])));
        }
        Ok(LabeledDataset {
            signatures,
            labels,
            class_names,
        })
    }

    pub fn len(&self) -> usize {
        self.signatures.len()
    }

    pub fn is_empty(&self) -> bool {
        self.signatures.is_empty()
    }

    pub fn signatures(&self) -> &[SubjectSignature] {
        &self.signatures
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn class_counts(&self) -> [usize; 2] {
        let ones = self.labels.iter().filter(|&&l| l == 1).count();
        [self.labels.len() - ones, ones]
    }
}

fn check_k(k: usize, available: usize) -> Result<()> {
    if k == 0 || k.is_multiple_of(2) {
        return Err(Error::InvalidK {
            k,
            reason: "K must be odd".into(),
        });
    }
    if k > available {
        return Err(Error::InvalidK {
            k,
            reason: format!("only {available} training subjects"),
        });
    }
    Ok(())
}

/// Majority label among the `k` most similar candidates `(similarity, id, label)`.
/// Equal similarities are ranked by id.
pub fn knn_vote(candidates: &[(f64, &str, usize)], k: usize) -> Result<usize> {
    check_k(k, candidates.len())?;
    let mut order: Vec<usize> = (0..candidates.len()).collect();
    order.sort_by(|&a, &b| {
        let (sa, ia, _) = candidates[a];
        let (sb, ib, _) = candidates[b];
        sb.total_cmp(&sa).then_with(|| ia.cmp(ib)).then(a.cmp(&b))
    });
    let ones = order[..k].iter().filter(|&&i| candidates[i].2 == 1).count();
    Ok(usize::from(2 * ones > k))
}

pub fn knn_predict(query: &SubjectSignature, train: &LabeledDataset, k: usize, p: &KernelParams) -> Result<usize> {
    check_k(k, train.len())?;
    let sims = train
        .signatures
        .par_iter()
        .map(|s| set_kernel(query, s, p))
        .collect::<Result<Vec<_>>>()?;
    let candidates: Vec<(f64, &str, usize)> = sims
        .iter()
        .zip(&train.signatures)
        .zip(&train.labels)
        .map(|((&s, sig), &l)| (s, sig.id.as_str(), l))
        .collect();
    knn_vote(&candidates, k)
}

/// Pairwise signature distances, kept so kernels for several bandwidths can
/// be formed without recomputing geodesics.
#[derive(Debug, Clone)]
pub struct DistanceTable {
    n: usize,
    /// Upper-triangle blocks `(i, j)`, `i < j`, row-major over pairs.
    blocks: Vec<Vec<Vec<f64>>>,
}

impl DistanceTable {
    pub fn compute(signatures: &[SubjectSignature]) -> Result<Self> {
        let n = signatures.len();
        let pairs: Vec<(usize, usize)> = (0..n).flat_map(|i| (i + 1..n).map(move |j| (i, j))).collect();
        let blocks = pairs
            .par_iter()
            .map(|&(i, j)| pairwise_distances(&signatures[i], &signatures[j]))
            .collect::<Result<Vec<_>>>()?;
        Ok(DistanceTable { n, blocks })
    }

    fn index(&self, i: usize, j: usize) -> usize {
        // pairs (a, b), a < b, enumerated row by row
        i * self.n - i * (i + 1) / 2 + (j - i - 1)
    }

    pub fn kernel(&self, p: &KernelParams) -> KernelMatrix {
        let n = self.n;
        let mut values = vec![0.0; n * n];
        for i in 0..n {
            values[i * n + i] = f64::NAN;
            for j in i + 1..n {
                let k = set_kernel_from_distances(&self.blocks[self.index(i, j)], p);
                values[i * n + j] = k;
                values[j * n + i] = k;
            }
        }
        KernelMatrix { n, values }
    }
}

/// Symmetric subject-by-subject similarity matrix. The diagonal is never used.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelMatrix {
    n: usize,
    values: Vec<f64>,
}

impl KernelMatrix {
    pub fn from_fn(n: usize, f: impl Fn(usize, usize) -> f64) -> Self {
        let mut values = vec![f64::NAN; n * n];
        for i in 0..n {
            for j in 0..n {
                if i != j {
                    values[i * n + j] = f(i, j);
                }
            }
        }
        KernelMatrix { n, values }
    }

    pub fn compute(signatures: &[SubjectSignature], p: &KernelParams) -> Result<Self> {
        Ok(DistanceTable::compute(signatures)?.kernel(p))
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.n + j]
    }

    /// Applies `f` to every off-diagonal entry.
    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        KernelMatrix::from_fn(self.n, |i, j| f(self.get(i, j)))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Confusion {
    pub tp: usize,
    pub tn: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
}

fn pct(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        100.0 * num as f64 / den as f64
    }
}

impl Confusion {
    pub fn from_predictions(labels: &[usize], predicted: &[usize]) -> Self {
        let mut c = Confusion::default();
        for (&l, &p) in labels.iter().zip(predicted) {
            match (l, p) {
                (1, 1) => c.tp += 1,
                (0, 0) => c.tn += 1,
                (0, _) => c.fp += 1,
                _ => c.fn_ += 1,
            }
        }
        c
    }

    pub fn total(&self) -> usize {
        self.tp + self.tn + self.fp + self.fn_
    }

    /// Percentages; any ratio with a zero denominator is reported as 0.
    pub fn metrics(&self) -> Metrics {
        let acc = pct(self.tp + self.tn, self.total());
        let pre = pct(self.tp, self.tp + self.fp);
        let spe = pct(self.tn, self.tn + self.fp);
        let sen = pct(self.tp, self.tp + self.fn_);
        let f1 = if pre + sen > 0.0 { 2.0 * pre * sen / (pre + sen) } else { 0.0 };
        Metrics { acc, pre, spe, sen, f1 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub acc: f64,
    pub pre: f64,
    pub spe: f64,
    pub sen: f64,
    pub f1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub subject: String,
    pub label: usize,
    pub predicted: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportParams {
    pub k: usize,
    pub steps: Option<usize>,
    pub tau: Option<f64>,
    pub sigma: f64,
    pub match_mode: MatchMode,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassificationReport {
    pub confusion: Confusion,
    pub metrics: Metrics,
    pub predictions: Vec<Prediction>,
    pub params: ReportParams,
}

impl ClassificationReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// One header line and one row of parameters, counts and metrics.
    pub fn to_csv(&self) -> String {
        let c = &self.confusion;
        let m = &self.metrics;
        let p = &self.params;
        let opt = |x: Option<String>| x.unwrap_or_default();
        format!(
            "K,Steps,tau,sigma,match_mode,TP,TN,FP,FN,ACC,PRE,SPE,SEN,F1\n{},{},{},{},{},{},{},{},{},{},{},{},{},{}\n",
            p.k,
            opt(p.steps.map(|s| s.to_string())),
            opt(p.tau.map(|t| t.to_string())),
            p.sigma,
            p.match_mode,
            c.tp,
            c.tn,
            c.fp,
            c.fn_,
            m.acc,
            m.pre,
            m.spe,
            m.sen,
            m.f1
        )
    }

    /// `subject,label,predicted` per subject.
    pub fn predictions_csv(&self) -> String {
        let mut s = String::from("subject,label,predicted\n");
        for p in &self.predictions {
            let _ = writeln!(s, "{},{},{}", p.subject, p.label, p.predicted);
        }
        s
    }
}

/// Leave-one-out predictions from a precomputed kernel matrix.
///
/// Subject `i` is predicted from every `j != i`; its own row entry is never
/// read.
pub fn leave_one_out_with_kernel(data: &LabeledDataset, kernel: &KernelMatrix, k: usize) -> Result<Vec<usize>> {
    let n = data.len();
    if kernel.len() != n {
        return Err(Error::DimensionMismatch { left: kernel.len(), right: n });
    }
    if n < k + 1 {
        return Err(Error::InvalidK {
            k,
            reason: format!("leave-one-out needs at least K + 1 subjects, have {n}"),
        });
    }
    check_k(k, n - 1)?;
    (0..n)
        .into_par_iter()
        .map(|i| {
            let candidates: Vec<(f64, &str, usize)> = (0..n)
                .filter(|&j| j != i)
                .map(|j| (kernel.get(i, j), data.signatures[j].id.as_str(), data.labels[j]))
                .collect();
            knn_vote(&candidates, k)
        })
        .collect()
}

pub fn report_from_predictions(data: &LabeledDataset, predicted: &[usize], params: ReportParams) -> ClassificationReport {
    let confusion = Confusion::from_predictions(&data.labels, predicted);
    ClassificationReport {
        confusion,
        metrics: confusion.metrics(),
        predictions: data
            .signatures
            .iter()
            .zip(&data.labels)
            .zip(predicted)
            .map(|((s, &label), &predicted)| Prediction {
                subject: s.id.clone(),
                label,
                predicted,
            })
            .collect(),
        params,
    }
}

pub fn leave_one_out(data: &LabeledDataset, k: usize, p: &KernelParams) -> Result<ClassificationReport> {
    let kernel = KernelMatrix::compute(&data.signatures, p)?;
    let predicted = leave_one_out_with_kernel(data, &kernel, k)?;
    Ok(report_from_predictions(
        data,
        &predicted,
        ReportParams {
            k,
            steps: None,
            tau: None,
            sigma: p.sigma,
            match_mode: p.match_mode,
        },
    ))
}

/// Fixed bandwidth or the median-distance heuristic.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Bandwidth {
    Fixed(f64),
    Median { seed: u64 },
}

impl Bandwidth {
    pub fn resolve(&self, signatures: &[SubjectSignature]) -> Result<f64> {
        match *self {
            Bandwidth::Fixed(s) if s > 0.0 && s.is_finite() => Ok(s),
            Bandwidth::Fixed(s) => Err(Error::InvalidParameter(format!("sigma must be > 0, got {s}"))),
            Bandwidth::Median { seed } => median_bandwidth(signatures, seed),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub steps: usize,
    pub k: usize,
    pub report: ClassificationReport,
}

/// Every `(steps, K)` combination; rows ordered by steps, then K.
///
/// `cells` pairs each steps value with the dataset built for it. The
/// bandwidth is resolved per cell and the kernel matrix is shared across K.
pub fn metric_sweep(
    cells: &[(usize, LabeledDataset)],
    ks: &[usize],
    bandwidth: Bandwidth,
    match_mode: MatchMode,
    tau: Option<f64>,
) -> Result<Vec<SweepRow>> {
    let mut rows = Vec::with_capacity(cells.len() * ks.len());
    for (steps, data) in cells {
        let sigma = bandwidth.resolve(&data.signatures)?;
        let p = KernelParams::new(sigma, match_mode)?;
        let kernel = KernelMatrix::compute(&data.signatures, &p)?;
        for &k in ks {
            let predicted = leave_one_out_with_kernel(data, &kernel, k)?;
            rows.push(SweepRow {
                steps: *steps,
                k,
                report: report_from_predictions(
                    data,
                    &predicted,
                    ReportParams {
                        k,
                        steps: Some(*steps),
                        tau,
                        sigma,
                        match_mode,
                    },
                ),
            });
        }
    }
    Ok(rows)
}

pub const SWEEP_HEADER: &str = "Steps,K,ACC,PRE,SPE,SEN,F1";

pub fn sweep_csv(rows: &[SweepRow]) -> String {
    let mut s = format!("{SWEEP_HEADER}\n");
    for r in rows {
        let m = &r.report.metrics;
        let _ = writeln!(s, "{},{},{},{},{},{},{}", r.steps, r.k, m.acc, m.pre, m.spe, m.sen, m.f1);
    }
    s
}
