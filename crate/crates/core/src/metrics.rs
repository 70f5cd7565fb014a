//! External clustering metrics: ACC, NMI, purity and ARI.

use serde::{Deserialize, Serialize};

use crate::cluster::Partition;
use crate::{Error, Result};

/// Joint counts `n_pq`: rows index true classes, columns predicted clusters.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ContingencyTable {
    counts: Vec<Vec<u64>>,
    row_sums: Vec<u64>,
    col_sums: Vec<u64>,
    n: u64,
}

impl ContingencyTable {
    pub fn new(pred: &Partition, truth: &Partition) -> Result<Self> {
        if pred.n() != truth.n() {
            return Err(Error::DimensionMismatch(format!(
                "{} predicted labels for {} true labels",
                pred.n(),
                truth.n()
            )));
        }
        let mut counts = vec![vec![0u64; pred.k()]; truth.k()];
        for (&t, &p) in truth.labels().iter().zip(pred.labels()) {
            counts[t][p] += 1;
        }
        let row_sums: Vec<u64> = counts.iter().map(|r| r.iter().sum()).collect();
        let col_sums: Vec<u64> = (0..pred.k())
            .map(|q| counts.iter().map(|r| r[q]).sum())
            .collect();
        Ok(Self {
            counts,
            row_sums,
            col_sums,
            n: truth.n() as u64,
        })
    }

    pub fn counts(&self) -> &[Vec<u64>] {
        &self.counts
    }

    pub fn n(&self) -> u64 {
        self.n
    }

    pub fn k_true(&self) -> usize {
        self.row_sums.len()
    }

    pub fn k_pred(&self) -> usize {
        self.col_sums.len()
    }
}

/// Minimum-cost perfect assignment on a square cost matrix; returns the
/// column assigned to each row.
fn hungarian(cost: &[Vec<f64>]) -> Vec<usize> {
    let n = cost.len();
    // 1-based potentials with a virtual column 0.
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    let mut way = vec![0usize; n + 1];
    let mut owner = vec![0usize; n + 1];
    for i in 1..=n {
        owner[0] = i;
        let mut j0 = 0;
        let mut minv = vec![f64::INFINITY; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = owner[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0;
            for j in 1..=n {
                if used[j] {
                    continue;
                }
                let cur = cost[i0 - 1][j - 1] - u[i0] - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[owner[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if owner[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            owner[j0] = owner[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut assignment = vec![0; n];
    for j in 1..=n {
        if owner[j] > 0 {
            assignment[owner[j] - 1] = j - 1;
        }
    }
    assignment
}

/// Fraction of samples matched under the best one-to-one mapping between
/// predicted clusters and true classes.
pub fn accuracy(pred: &Partition, truth: &Partition) -> Result<f64> {
    let table = ContingencyTable::new(pred, truth)?;
    if table.n == 0 {
        return Err(Error::InvalidArgument("empty partition".into()));
    }
    let size = table.k_true().max(table.k_pred());
    let count = |p: usize, t: usize| -> u64 {
        if t < table.k_true() && p < table.k_pred() {
            table.counts[t][p]
        } else {
            0
        }
    };
    let cost: Vec<Vec<f64>> = (0..size)
        .map(|p| (0..size).map(|t| -(count(p, t) as f64)).collect())
        .collect();
    let matched: u64 = hungarian(&cost)
        .iter()
        .enumerate()
        .map(|(p, &t)| count(p, t))
        .sum();
    Ok(matched as f64 / table.n as f64)
}

fn entropy(sums: &[u64], n: f64) -> f64 {
    -sums
        .iter()
        .filter(|&&c| c > 0)
        .map(|&c| {
            let p = c as f64 / n;
            p * p.ln()
        })
        .sum::<f64>()
}

/// Mutual information (natural log) of the two labelings.
pub fn mutual_information(pred: &Partition, truth: &Partition) -> Result<f64> {
    let t = ContingencyTable::new(pred, truth)?;
    Ok(mutual_information_of(&t))
}

fn mutual_information_of(t: &ContingencyTable) -> f64 {
    let n = t.n as f64;
    let mut mi = 0.0;
    for (p, row) in t.counts.iter().enumerate() {
        for (q, &c) in row.iter().enumerate() {
            if c == 0 {
                continue;
            }
            let joint = c as f64 / n;
            let indep = (t.row_sums[p] as f64 / n) * (t.col_sums[q] as f64 / n);
            mi += joint * (joint / indep).ln();
        }
    }
    mi.max(0.0)
}

/// `MI / sqrt(H(truth) · H(pred))`; zero when `MI` is zero.
pub fn nmi(pred: &Partition, truth: &Partition) -> Result<f64> {
    let t = ContingencyTable::new(pred, truth)?;
    if t.n == 0 {
        return Err(Error::InvalidArgument("empty partition".into()));
    }
    let mi = mutual_information_of(&t);
    if mi == 0.0 {
        return Ok(0.0);
    }
    let n = t.n as f64;
    let denom = (entropy(&t.row_sums, n) * entropy(&t.col_sums, n)).sqrt();
    if !(denom > 0.0) {
        return Err(Error::UndefinedNmi);
    }
    Ok((mi / denom).clamp(0.0, 1.0))
}

/// Each predicted cluster claims its majority true class.
pub fn purity(pred: &Partition, truth: &Partition) -> Result<f64> {
    let t = ContingencyTable::new(pred, truth)?;
    if t.n == 0 {
        return Err(Error::InvalidArgument("empty partition".into()));
    }
    let claimed: u64 = (0..t.k_pred())
        .map(|q| t.counts.iter().map(|r| r[q]).max().unwrap_or(0))
        .sum();
    Ok(claimed as f64 / t.n as f64)
}

fn pairs(c: u64) -> u128 {
    let c = c as u128;
    c * c.saturating_sub(1) / 2
}

/// Adjusted Rand index. Pair counts are accumulated in integers, so the
/// result is exactly symmetric in its arguments. When the denominator
/// vanishes (both labelings all-singletons or both a single cluster) the
/// partitions coincide and 1 is returned.
pub fn ari(pred: &Partition, truth: &Partition) -> Result<f64> {
    let t = ContingencyTable::new(pred, truth)?;
    if t.n < 2 {
        return Err(Error::InvalidArgument("ARI needs at least two samples".into()));
    }
    let index: u128 = t.counts.iter().flatten().map(|&c| pairs(c)).sum();
    let a: u128 = t.row_sums.iter().map(|&c| pairs(c)).sum();
    let b: u128 = t.col_sums.iter().map(|&c| pairs(c)).sum();
    let total = pairs(t.n);
    // (index - ab/total) / ((a+b)/2 - ab/total), cleared of fractions so
    // numerator and denominator are exact integers.
    let num = 2 * (index as i128 * total as i128 - (a * b) as i128);
    let denom = total as i128 * (a + b) as i128 - 2 * (a * b) as i128;
    if denom == 0 {
        return Ok(1.0);
    }
    Ok(num as f64 / denom as f64)
}

/// One evaluation of the four metrics.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub acc: f64,
    pub nmi: f64,
    pub pur: f64,
    pub ari: f64,
}

impl MetricsReport {
    pub fn evaluate(pred: &Partition, truth: &Partition) -> Result<Self> {
        Ok(Self {
            acc: accuracy(pred, truth)?,
            nmi: nmi(pred, truth)?,
            pur: purity(pred, truth)?,
            ari: ari(pred, truth)?,
        })
    }

    pub fn get(&self, metric: Metric) -> f64 {
        match metric {
            Metric::Acc => self.acc,
            Metric::Nmi => self.nmi,
            Metric::Pur => self.pur,
            Metric::Ari => self.ari,
        }
    }
}

/// Metric selector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Metric {
    Acc,
    Nmi,
    Pur,
    Ari,
}

impl Metric {
    pub const ALL: [Metric; 4] = [Metric::Acc, Metric::Nmi, Metric::Pur, Metric::Ari];

    pub fn name(&self) -> &'static str {
        match self {
            Metric::Acc => "acc",
            Metric::Nmi => "nmi",
            Metric::Pur => "pur",
            Metric::Ari => "ari",
        }
    }
}

/// Mean and sample standard deviation over repetitions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AggregateReport {
    pub repetitions: usize,
    pub mean: MetricsReport,
    pub std: MetricsReport,
    /// Divisor used for the standard deviation: `n - 1`.
    pub std_divisor: usize,
}

fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.iter().all(|&v| v == values[0]) {
        return (values[0], 0.0);
    }
    let n = values.len() as f64;
    let mean = crate::sum::compensated(values.iter().copied()) / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

pub fn aggregate(reports: &[MetricsReport]) -> Result<AggregateReport> {
    if reports.is_empty() {
        return Err(Error::InvalidArgument("no reports to aggregate".into()));
    }
    let stat = |metric: Metric| {
        let vals: Vec<f64> = reports.iter().map(|r| r.get(metric)).collect();
        mean_std(&vals)
    };
    let (acc, nmi, pur, ari) = (
        stat(Metric::Acc),
        stat(Metric::Nmi),
        stat(Metric::Pur),
        stat(Metric::Ari),
    );
    Ok(AggregateReport {
        repetitions: reports.len(),
        mean: MetricsReport {
            acc: acc.0,
            nmi: nmi.0,
            pur: pur.0,
            ari: ari.0,
        },
        std: MetricsReport {
            acc: acc.1,
            nmi: nmi.1,
            pur: pur.1,
            ari: ari.1,
        },
        std_divisor: reports.len().saturating_sub(1),
    })
}
