//! Fixtures and independent oracles shared by the integration tests.
#![allow(dead_code)]

use mkkm::cluster::Partition;
use mkkm::kernels::{FeatureMatrix, GramMatrix, KernelBank};
use mkkm::Matrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Three isotropic Gaussian blobs in the plane, 50 points each. Centers
/// are 10 apart, the spread is 0.5, so separation is 20× the spread. The
/// cloud is offset from the origin so cosine similarity stays defined.
pub fn three_blobs(seed: u64) -> (FeatureMatrix, Partition) {
    let centers = [(10.0, 10.0), (20.0, 10.0), (15.0, 10.0 + 75f64.sqrt())];
    let noise = Normal::new(0.0, 0.5).unwrap();
    let mut r = rng(seed);
    let mut samples = Vec::with_capacity(150);
    let mut labels = Vec::with_capacity(150);
    for (c, &(cx, cy)) in centers.iter().enumerate() {
        for _ in 0..50 {
            samples.push(vec![cx + noise.sample(&mut r), cy + noise.sample(&mut r)]);
            labels.push(c);
        }
    }
    (
        FeatureMatrix::from_samples(&samples).unwrap(),
        Partition::new(labels, 3).unwrap(),
    )
}

/// Random symmetric PSD matrix `G Gᵀ / rank` with the given rank.
pub fn random_psd(r: &mut ChaCha8Rng, n: usize, rank: usize) -> Matrix {
    let g = Matrix::from_fn(n, rank, |_, _| r.random_range(-1.0..1.0));
    let s = &g * g.transpose() / rank as f64;
    (&s + s.transpose()) * 0.5
}

pub fn random_symmetric(r: &mut ChaCha8Rng, n: usize) -> Matrix {
    let a = Matrix::from_fn(n, n, |_, _| r.random_range(-1.0..1.0));
    (&a + a.transpose()) * 0.5
}

/// A bank of `m` random PSD kernels over `n` samples with cluster
/// structure of varying strength.
pub fn random_bank(r: &mut ChaCha8Rng, n: usize, m: usize, k: usize) -> KernelBank {
    let labels: Vec<usize> = (0..n).map(|i| i % k).collect();
    let kernels = (0..m)
        .map(|_| {
            let signal = r.random_range(0.0..2.0);
            let rank = r.random_range(1..=n.min(8));
            let noise = random_psd(r, n, rank);
            let block = Matrix::from_fn(n, n, |i, j| if labels[i] == labels[j] { signal } else { 0.0 });
            GramMatrix::precomputed(block + noise, 1e-12).unwrap()
        })
        .collect();
    KernelBank::new(kernels).unwrap()
}

/// Random point of the probability simplex (uniform via sorted spacings).
pub fn random_simplex(r: &mut ChaCha8Rng, m: usize) -> Vec<f64> {
    let mut cuts: Vec<f64> = (0..m - 1).map(|_| r.random::<f64>()).collect();
    cuts.push(0.0);
    cuts.push(1.0);
    cuts.sort_by(f64::total_cmp);
    cuts.windows(2).map(|w| w[1] - w[0]).collect()
}

pub fn random_column_stochastic(r: &mut ChaCha8Rng, m: usize) -> Matrix {
    let mut y = Matrix::zeros(m, m);
    for q in 0..m {
        let col = random_simplex(r, m);
        for p in 0..m {
            y[(p, q)] = col[p];
        }
    }
    y
}

/// Cyclic Jacobi eigenvalue algorithm; returns eigenvalues in descending
/// order and the matching eigenvectors as columns.
pub fn jacobi_eigen(s: &Matrix) -> (Vec<f64>, Matrix) {
    let n = s.nrows();
    let mut a = s.clone();
    let mut v = Matrix::identity(n, n);
    for _sweep in 0..100 {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| a[(i, j)] * a[(i, j)])
            .sum();
        if off.sqrt() <= 1e-15 * a.norm().max(1e-300) {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = a[(p, q)];
                if apq == 0.0 {
                    continue;
                }
                let theta = (a[(q, q)] - a[(p, p)]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let sn = t * c;
                for k in 0..n {
                    let akp = a[(k, p)];
                    let akq = a[(k, q)];
                    a[(k, p)] = c * akp - sn * akq;
                    a[(k, q)] = sn * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[(p, k)];
                    let aqk = a[(q, k)];
                    a[(p, k)] = c * apk - sn * aqk;
                    a[(q, k)] = sn * apk + c * aqk;
                }
                for k in 0..n {
                    let vkp = v[(k, p)];
                    let vkq = v[(k, q)];
                    v[(k, p)] = c * vkp - sn * vkq;
                    v[(k, q)] = sn * vkp + c * vkq;
                }
            }
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a[(j, j)].total_cmp(&a[(i, i)]));
    let values = order.iter().map(|&i| a[(i, i)]).collect();
    let vectors = Matrix::from_fn(n, n, |r, c| v[(r, order[c])]);
    (values, vectors)
}

/// Every labeling of `n` points into at most `max_k` blocks, as restricted
/// growth strings (each set partition exactly once).
pub fn set_partitions(n: usize, max_k: usize) -> Vec<Vec<usize>> {
    fn grow(prefix: &mut Vec<usize>, n: usize, max_k: usize, used: usize, out: &mut Vec<Vec<usize>>) {
        if prefix.len() == n {
            out.push(prefix.clone());
            return;
        }
        let limit = (used + 1).min(max_k);
        for l in 0..limit {
            prefix.push(l);
            grow(prefix, n, max_k, used.max(l + 1), out);
            prefix.pop();
        }
    }
    let mut out = Vec::new();
    grow(&mut Vec::with_capacity(n), n, max_k, 0, &mut out);
    out
}

pub fn partition(labels: &[usize]) -> Partition {
    let k = labels.iter().max().map_or(0, |m| m + 1);
    Partition::new(labels.to_vec(), k).unwrap()
}

/// Accuracy by trying every injective relabeling of the predicted clusters.
pub fn accuracy_oracle(pred: &[usize], truth: &[usize]) -> f64 {
    let kp = pred.iter().max().unwrap() + 1;
    let kt = truth.iter().max().unwrap() + 1;
    let size = kp.max(kt);
    let mut perm: Vec<usize> = (0..size).collect();
    let mut best = 0;
    permute(&mut perm, 0, &mut |map| {
        let hits = pred.iter().zip(truth).filter(|(p, t)| map[**p] == **t).count();
        best = best.max(hits);
    });
    best as f64 / pred.len() as f64
}

fn permute(v: &mut Vec<usize>, start: usize, visit: &mut impl FnMut(&[usize])) {
    if start == v.len() {
        visit(v);
        return;
    }
    for i in start..v.len() {
        v.swap(start, i);
        permute(v, start + 1, visit);
        v.swap(start, i);
    }
}

fn counts(labels: &[usize]) -> std::collections::BTreeMap<usize, f64> {
    let mut m = std::collections::BTreeMap::new();
    for &l in labels {
        *m.entry(l).or_insert(0.0) += 1.0;
    }
    m
}

/// NMI from the textbook definitions (natural log, geometric mean).
pub fn nmi_oracle(pred: &[usize], truth: &[usize]) -> f64 {
    let n = pred.len() as f64;
    let cp = counts(pred);
    let ct = counts(truth);
    let mut joint = std::collections::BTreeMap::new();
    for (&p, &t) in pred.iter().zip(truth) {
        *joint.entry((p, t)).or_insert(0.0) += 1.0;
    }
    let h = |c: &std::collections::BTreeMap<usize, f64>| -> f64 {
        c.values().map(|&x| -(x / n) * (x / n).ln()).sum()
    };
    let mi: f64 = joint
        .iter()
        .map(|(&(p, t), &x)| (x / n) * ((n * x) / (cp[&p] * ct[&t])).ln())
        .sum();
    let denom = (h(&cp) * h(&ct)).sqrt();
    if denom == 0.0 || mi.abs() < 1e-15 {
        0.0
    } else {
        mi / denom
    }
}

pub fn purity_oracle(pred: &[usize], truth: &[usize]) -> f64 {
    let kp = pred.iter().max().unwrap() + 1;
    let kt = truth.iter().max().unwrap() + 1;
    let mut total = 0;
    for c in 0..kp {
        let best = (0..kt)
            .map(|t| pred.iter().zip(truth).filter(|(p, tt)| **p == c && **tt == t).count())
            .max()
            .unwrap();
        total += best;
    }
    total as f64 / pred.len() as f64
}

/// ARI from the four pair-agreement counts over all point pairs.
pub fn ari_oracle(pred: &[usize], truth: &[usize]) -> f64 {
    let n = pred.len();
    let (mut n11, mut n10, mut n01, mut n00) = (0i64, 0i64, 0i64, 0i64);
    for i in 0..n {
        for j in (i + 1)..n {
            match (pred[i] == pred[j], truth[i] == truth[j]) {
                (true, true) => n11 += 1,
                (true, false) => n10 += 1,
                (false, true) => n01 += 1,
                (false, false) => n00 += 1,
            }
        }
    }
    let num = 2 * (n00 * n11 - n01 * n10);
    let denom = (n00 + n01) * (n01 + n11) + (n00 + n10) * (n10 + n11);
    if denom == 0 {
        1.0
    } else {
        num as f64 / denom as f64
    }
}
