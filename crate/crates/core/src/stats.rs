//! Friedman test and Nemenyi critical difference over algorithm ranks.

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Default studentized-range critical value `q_0.05` for eight algorithms.
pub const Q_005_K8: f64 = 3.031;

/// Ranks `1..=k` of `scores`, best first; ties share the mean position.
pub fn rank_row(scores: &[f64], higher_is_better: bool) -> Vec<f64> {
    let k = scores.len();
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&a, &b| {
        let ord = scores[a].total_cmp(&scores[b]);
        if higher_is_better {
            ord.reverse()
        } else {
            ord
        }
    });
    let mut ranks = vec![0.0; k];
    let mut start = 0;
    while start < k {
        let mut end = start + 1;
        while end < k && scores[order[end]] == scores[order[start]] {
            end += 1;
        }
        // Positions start+1 ..= end share their average.
        let avg = (start + 1 + end) as f64 / 2.0;
        for &idx in &order[start..end] {
            ranks[idx] = avg;
        }
        start = end;
    }
    ranks
}

/// Per-dataset ranks of each algorithm.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankTable {
    ranks: Vec<Vec<f64>>,
    mean_ranks: Vec<f64>,
}

impl RankTable {
    /// Ranks every row of a datasets × algorithms score table.
    pub fn from_scores(scores: &[Vec<f64>], higher_is_better: bool) -> Result<Self> {
        let k = scores.first().map_or(0, Vec::len);
        if let Some(i) = scores.iter().position(|r| r.len() != k) {
            return Err(Error::DimensionMismatch(format!(
                "row {i} has {} scores, expected {k}",
                scores[i].len()
            )));
        }
        if let Some(i) = scores.iter().position(|r| r.iter().any(|v| !v.is_finite())) {
            return Err(Error::InvalidArgument(format!("row {i} has a non-finite score")));
        }
        let ranks = scores.iter().map(|r| rank_row(r, higher_is_better)).collect();
        Self::from_ranks(ranks)
    }

    pub fn from_ranks(ranks: Vec<Vec<f64>>) -> Result<Self> {
        let n = ranks.len();
        let k = ranks.first().map_or(0, Vec::len);
        if n == 0 || k == 0 {
            return Err(Error::InvalidArgument("empty rank table".into()));
        }
        let expected = (k * (k + 1)) as f64 / 2.0;
        for (i, row) in ranks.iter().enumerate() {
            if row.len() != k {
                return Err(Error::DimensionMismatch(format!("rank row {i} has wrong length")));
            }
            let s: f64 = row.iter().sum();
            if (s - expected).abs() > 1e-9 {
                return Err(Error::InvalidArgument(format!(
                    "rank row {i} sums to {s}, expected {expected}"
                )));
            }
        }
        let mean_ranks = (0..k)
            .map(|j| ranks.iter().map(|r| r[j]).sum::<f64>() / n as f64)
            .collect();
        Ok(Self { ranks, mean_ranks })
    }

    /// Builds a table whose only content is the mean ranks (every dataset
    /// row equal to them). Useful when only published averages exist.
    pub fn from_mean_ranks(mean_ranks: Vec<f64>, n_datasets: usize) -> Result<Self> {
        if n_datasets == 0 || mean_ranks.is_empty() {
            return Err(Error::InvalidArgument("empty rank table".into()));
        }
        Ok(Self {
            ranks: vec![mean_ranks.clone(); n_datasets],
            mean_ranks,
        })
    }

    pub fn n_datasets(&self) -> usize {
        self.ranks.len()
    }

    pub fn k_algorithms(&self) -> usize {
        self.mean_ranks.len()
    }

    pub fn ranks(&self) -> &[Vec<f64>] {
        &self.ranks
    }

    pub fn mean_ranks(&self) -> &[f64] {
        &self.mean_ranks
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FriedmanStatistics {
    pub tau_chi2: f64,
    pub tau_f: f64,
}

/// `τ_χ² = 12n/(k(k+1)) · (Σ r_i² − k(k+1)²/4)` and
/// `τ_F = (n−1)τ_χ² / (n(k−1) − τ_χ²)`.
pub fn friedman(table: &RankTable) -> Result<FriedmanStatistics> {
    let n = table.n_datasets() as f64;
    let k = table.k_algorithms() as f64;
    if table.n_datasets() < 2 || table.k_algorithms() < 2 {
        return Err(Error::InvalidArgument(
            "Friedman test needs at least two datasets and two algorithms".into(),
        ));
    }
    let sum_sq: f64 = table.mean_ranks.iter().map(|r| r * r).sum();
    let tau_chi2 = 12.0 * n / (k * (k + 1.0)) * (sum_sq - k * (k + 1.0).powi(2) / 4.0);
    let denom = n * (k - 1.0) - tau_chi2;
    if denom.abs() <= 1e-12 * (n * (k - 1.0)) {
        return Err(Error::DegenerateFStatistic);
    }
    Ok(FriedmanStatistics {
        tau_chi2,
        tau_f: (n - 1.0) * tau_chi2 / denom,
    })
}

/// `CD = q_γ · sqrt(k(k+1) / 6n)`.
pub fn nemenyi_cd(k: usize, n: usize, q_gamma: f64) -> Result<f64> {
    if k < 2 || n < 1 || !(q_gamma >= 0.0) {
        return Err(Error::InvalidArgument(format!(
            "need k >= 2, n >= 1, q >= 0 (got k={k}, n={n}, q={q_gamma})"
        )));
    }
    Ok(q_gamma * ((k * (k + 1)) as f64 / (6.0 * n as f64)).sqrt())
}

/// Pairs `(i, j)`, `i < j`, whose mean-rank gap exceeds `cd`.
pub fn significant_pairs(mean_ranks: &[f64], cd: f64) -> Vec<(usize, usize)> {
    let k = mean_ranks.len();
    (0..k)
        .flat_map(|i| ((i + 1)..k).map(move |j| (i, j)))
        .filter(|&(i, j)| (mean_ranks[i] - mean_ranks[j]).abs() > cd)
        .collect()
}
