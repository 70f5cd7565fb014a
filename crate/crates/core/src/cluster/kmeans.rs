//! Lloyd's k-means with k-means++ seeding.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::Partition;
use crate::{Error, Matrix, Result};

/// Lloyd iteration cap.
pub const MAX_LLOYD_ITERS: usize = 300;

#[derive(Debug, Clone, PartialEq)]
pub struct KMeansFit {
    pub partition: Partition,
    pub centroids: Matrix,
    /// Within-cluster sum of squares after each Lloyd iteration.
    pub wcss_trace: Vec<f64>,
    pub iterations: usize,
    /// Number of empty-cluster repairs performed.
    pub repairs: usize,
}

impl KMeansFit {
    pub fn wcss(&self) -> f64 {
        self.wcss_trace.last().copied().unwrap_or(0.0)
    }
}

fn sq_dist(points: &Matrix, i: usize, centroids: &Matrix, c: usize) -> f64 {
    points
        .row(i)
        .iter()
        .zip(centroids.row(c).iter())
        .map(|(a, b)| (a - b) * (a - b))
        .sum()
}

/// k-means++ seeding: first center uniform, then D²-weighted sampling.
fn plus_plus(points: &Matrix, k: usize, rng: &mut ChaCha8Rng) -> Matrix {
    let n = points.nrows();
    let mut centroids = Matrix::zeros(k, points.ncols());
    let first = rng.random_range(0..n);
    centroids.set_row(0, &points.row(first));
    let mut closest: Vec<f64> = (0..n).map(|i| sq_dist(points, i, &centroids, 0)).collect();
    for c in 1..k {
        let total: f64 = closest.iter().sum();
        let pick = if total > 0.0 {
            let target = rng.random::<f64>() * total;
            let mut acc = 0.0;
            let mut chosen = None;
            for (i, &d) in closest.iter().enumerate() {
                acc += d;
                if d > 0.0 && acc > target {
                    chosen = Some(i);
                    break;
                }
            }
            // Rounding can leave `target` just past the final partial sum.
            chosen.unwrap_or_else(|| closest.iter().rposition(|&d| d > 0.0).unwrap_or(0))
        } else {
            rng.random_range(0..n)
        };
        centroids.set_row(c, &points.row(pick));
        for (i, d) in closest.iter_mut().enumerate() {
            *d = d.min(sq_dist(points, i, &centroids, c));
        }
    }
    centroids
}

/// Nearest-centroid assignment. A point keeps its current cluster on ties;
/// otherwise the lowest index wins.
fn assign(points: &Matrix, centroids: &Matrix, labels: &mut [usize], dists: &mut [f64]) -> bool {
    let mut changed = false;
    for i in 0..points.nrows() {
        let current = match labels[i] {
            c if c < centroids.nrows() => (c, sq_dist(points, i, centroids, c)),
            _ => (0, f64::INFINITY),
        };
        let (best, d) = (0..centroids.nrows())
            .map(|c| (c, sq_dist(points, i, centroids, c)))
            .fold(current, |acc, cur| if cur.1 < acc.1 { cur } else { acc });
        if labels[i] != best {
            changed = true;
            labels[i] = best;
        }
        dists[i] = d;
    }
    changed
}

/// Moves the point farthest from its centroid into each empty cluster.
fn repair_empty(points: &Matrix, centroids: &mut Matrix, labels: &mut [usize], dists: &mut [f64]) -> usize {
    let k = centroids.nrows();
    let mut repairs = 0;
    loop {
        let mut sizes = vec![0usize; k];
        for &l in labels.iter() {
            sizes[l] += 1;
        }
        let Some(empty) = sizes.iter().position(|&s| s == 0) else {
            return repairs;
        };
        let donor = (0..labels.len())
            .filter(|&i| sizes[labels[i]] > 1)
            .fold(None, |best: Option<usize>, i| match best {
                Some(b) if dists[b] >= dists[i] => Some(b),
                _ => Some(i),
            });
        let Some(i) = donor else {
            return repairs;
        };
        labels[i] = empty;
        dists[i] = 0.0;
        centroids.set_row(empty, &points.row(i));
        repairs += 1;
    }
}

fn update_centroids(points: &Matrix, labels: &[usize], centroids: &mut Matrix) {
    let k = centroids.nrows();
    let mut sums = Matrix::zeros(k, points.ncols());
    let mut counts = vec![0usize; k];
    for (i, &l) in labels.iter().enumerate() {
        let mut row = sums.row_mut(l);
        row += points.row(i);
        counts[l] += 1;
    }
    for (c, &count) in counts.iter().enumerate() {
        if count > 0 {
            let mean = sums.row(c) / count as f64;
            centroids.set_row(c, &mean);
        }
    }
}

fn wcss(points: &Matrix, labels: &[usize], centroids: &Matrix) -> f64 {
    labels
        .iter()
        .enumerate()
        .map(|(i, &l)| sq_dist(points, i, centroids, l))
        .sum()
}

/// Clusters the rows of `points` into `k` groups.
pub fn kmeans(points: &Matrix, k: usize, seed: u64) -> Result<KMeansFit> {
    let n = points.nrows();
    if k == 0 || k > n {
        return Err(Error::InvalidArgument(format!(
            "k = {k} must lie in 1..={n}"
        )));
    }
    if points.iter().any(|v| !v.is_finite()) {
        return Err(Error::NumericalDivergence("non-finite k-means input".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centroids = plus_plus(points, k, &mut rng);
    let mut labels = vec![usize::MAX; n];
    let mut dists = vec![0.0; n];
    let mut trace = Vec::new();
    let mut repairs = 0;
    let mut iterations = 0;

    assign(points, &centroids, &mut labels, &mut dists);
    while iterations < MAX_LLOYD_ITERS {
        iterations += 1;
        repairs += repair_empty(points, &mut centroids, &mut labels, &mut dists);
        update_centroids(points, &labels, &mut centroids);
        trace.push(wcss(points, &labels, &centroids));
        if !assign(points, &centroids, &mut labels, &mut dists) {
            break;
        }
    }
    let late = repair_empty(points, &mut centroids, &mut labels, &mut dists);
    if late > 0 {
        repairs += late;
        update_centroids(points, &labels, &mut centroids);
        trace.push(wcss(points, &labels, &centroids));
    }
    Ok(KMeansFit {
        partition: Partition { labels, k },
        centroids,
        wcss_trace: trace,
        iterations,
        repairs,
    })
}
