//! Clustering algorithms.
//!
//! Single kernel: [`kkm`]. Fixed fusion: [`a_mkkm`] (uniform average) and
//! [`sb_kkm`] (best single kernel against ground truth). Learned weights:
//! [`mkkm`], [`mkkm_mr`] and the correlation/dissimilarity regularized
//! [`kcd_mkkm`].
//!
//! Every algorithm ends by running [`kmeans`] on the rows of the spectral
//! embedding `H`; the seed of that step is the only source of randomness.

mod kcd;
mod kmeans;

use serde::{Deserialize, Serialize};

pub use kcd::{kcd_mkkm, KcdConfig};
pub use kmeans::{kmeans, KMeansFit, MAX_LLOYD_ITERS};

use crate::kernels::{combine, KernelBank};
use crate::metrics;
use crate::simplexqp::{solve_weight_qp_from, RepresentationMatrix, WeightVector};
use crate::spectral::{top_k_eigs, Embedding};
use crate::{Error, Matrix, Result};

/// Hard cluster assignment, labels in `0..k`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Partition {
    labels: Vec<usize>,
    k: usize,
}

impl Partition {
    pub fn new(labels: Vec<usize>, k: usize) -> Result<Self> {
        if let Some(i) = labels.iter().position(|&l| l >= k) {
            return Err(Error::InvalidArgument(format!(
                "label {} of sample {i} is outside 0..{k}",
                labels[i]
            )));
        }
        Ok(Self { labels, k })
    }

    /// Relabels arbitrary integer labels to `0..k` in order of first
    /// appearance.
    pub fn from_raw<T: Eq + std::hash::Hash + Clone>(raw: &[T]) -> Self {
        let mut map = std::collections::HashMap::new();
        let labels = raw
            .iter()
            .map(|v| {
                let next = map.len();
                *map.entry(v.clone()).or_insert(next)
            })
            .collect();
        Self { labels, k: map.len() }
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn n(&self) -> usize {
        self.labels.len()
    }
}

/// Settings shared by the alternating multiple-kernel algorithms.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlternatingOptions {
    pub k: usize,
    /// Seed of the final k-means step.
    pub seed: u64,
    /// Stop when `|f(t+1) - f(t)| <= epsilon`; `None` means `1e-6·|f(1)|`.
    pub epsilon: Option<f64>,
    pub max_iters: usize,
    /// Scale rows of `H` to unit length before k-means.
    pub row_normalize: bool,
}

impl AlternatingOptions {
    pub fn new(k: usize, seed: u64) -> Self {
        Self {
            k,
            seed,
            epsilon: None,
            max_iters: 50,
            row_normalize: false,
        }
    }
}

/// Output of the learned-weight algorithms.
#[derive(Debug, Clone, PartialEq)]
pub struct KcdResult {
    pub weights: WeightVector,
    /// Learned representation matrix; `None` for the MKKM baselines.
    pub representation: Option<RepresentationMatrix>,
    pub embedding: Embedding,
    pub partition: Partition,
    /// Objective after each outer iteration.
    pub objective_trace: Vec<f64>,
    /// Weights after each outer iteration.
    pub weight_trace: Vec<Vec<f64>>,
    pub iterations: usize,
    pub converged: bool,
    /// Count of negative `Tr(K_p(I - HHᵀ))` entries clamped to zero.
    pub clamped: usize,
    pub row_normalize: bool,
}

impl KcdResult {
    /// Re-runs only the discretization step with another seed.
    pub fn repartition(&self, seed: u64) -> Result<Partition> {
        discretize(&self.embedding, seed, self.row_normalize)
    }
}

/// k-means on the rows of `H` (optionally unit-length rows).
pub fn discretize(embedding: &Embedding, seed: u64, row_normalize: bool) -> Result<Partition> {
    let points = if row_normalize {
        embedding.row_normalized()
    } else {
        embedding.h().clone()
    };
    Ok(kmeans(&points, embedding.k(), seed)?.partition)
}

/// Kernel k-means through its spectral relaxation.
pub fn kkm(kernel: &Matrix, k: usize, seed: u64) -> Result<Partition> {
    kkm_with(kernel, k, seed, false)
}

pub fn kkm_with(kernel: &Matrix, k: usize, seed: u64, row_normalize: bool) -> Result<Partition> {
    discretize(&top_k_eigs(kernel, k)?, seed, row_normalize)
}

/// Uniform average `Σ K_p / m`.
pub fn average_kernel(bank: &KernelBank) -> Matrix {
    let n = bank.n();
    let share = 1.0 / bank.len() as f64;
    let mut out = Matrix::zeros(n, n);
    for k in bank.iter() {
        out.zip_apply(k.values(), |o, v| *o += share * v);
    }
    out
}

/// KKM on the uniformly averaged kernel.
pub fn a_mkkm(bank: &KernelBank, k: usize, seed: u64) -> Result<Partition> {
    kkm(&average_kernel(bank), k, seed)
}

/// Best single kernel, judged by accuracy against `truth`.
#[derive(Debug, Clone, PartialEq)]
pub struct SingleBest {
    pub partition: Partition,
    pub best_index: usize,
    pub accuracy: f64,
}

/// Runs KKM on every kernel and keeps the most accurate partition
/// (lowest index on ties).
pub fn sb_kkm(bank: &KernelBank, k: usize, truth: &Partition, seed: u64) -> Result<SingleBest> {
    let embeddings = bank
        .iter()
        .map(|kern| top_k_eigs(kern.values(), k))
        .collect::<Result<Vec<_>>>()?;
    sb_kkm_from_embeddings(&embeddings, truth, seed, false)
}

/// [`sb_kkm`] with precomputed per-kernel embeddings.
pub fn sb_kkm_from_embeddings(
    embeddings: &[Embedding],
    truth: &Partition,
    seed: u64,
    row_normalize: bool,
) -> Result<SingleBest> {
    let mut best: Option<SingleBest> = None;
    for (p, emb) in embeddings.iter().enumerate() {
        let partition = discretize(emb, seed, row_normalize)?;
        let accuracy = metrics::accuracy(&partition, truth)?;
        if best.as_ref().is_none_or(|b| accuracy > b.accuracy) {
            best = Some(SingleBest {
                partition,
                best_index: p,
                accuracy,
            });
        }
    }
    best.ok_or_else(|| Error::InvalidArgument("empty kernel bank".into()))
}

/// `B_p = Tr(K_p (I - H Hᵀ))` for every kernel.
pub fn residual_traces(bank: &KernelBank, h: &Matrix) -> Vec<f64> {
    bank.iter()
        .map(|k| crate::spectral::residual_trace(k.values(), h))
        .collect()
}

/// Clamps negative entries to zero, returning how many were clamped.
pub(crate) fn clamp_nonnegative(b: &[f64]) -> (Vec<f64>, usize) {
    let clamped = b.iter().filter(|&&v| v < 0.0).count();
    if clamped > 0 {
        log::info!("clamped {clamped} negative residual trace(s) to zero");
    }
    (b.iter().map(|&v| v.max(0.0)).collect(), clamped)
}

fn weighted_quadratic(w: &[f64], b: &[f64]) -> f64 {
    w.iter().zip(b).map(|(wp, bp)| wp * wp * bp).sum()
}

fn quad(m: &Matrix, w: &[f64]) -> f64 {
    let v = nalgebra::DVector::from_column_slice(w);
    v.dot(&(m * &v))
}

fn resolve_epsilon(opt: Option<f64>, first: f64) -> f64 {
    opt.unwrap_or(1e-6 * first.abs())
}

/// MKKM (`lambda = None`) or MKKM-MR with regularization `λ`.
fn alternate_weights(
    bank: &KernelBank,
    lambda: Option<f64>,
    opts: &AlternatingOptions,
) -> Result<KcdResult> {
    if let Some(l) = lambda {
        if !(l >= 0.0) || !l.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "lambda must be nonnegative, got {l}"
            )));
        }
    }
    if opts.max_iters == 0 {
        return Err(Error::InvalidArgument("max_iters must be positive".into()));
    }
    let m = bank.len();
    let regularizer = lambda.map(|l| (l, bank.relations().correlation().clone()));
    let mut w = WeightVector::uniform(m).into_vec();
    let mut trace = Vec::new();
    let mut weight_trace = Vec::new();
    let mut prev = 0.0;
    let mut epsilon = None;
    let mut converged = false;
    let mut clamped_total = 0;
    let mut embedding = None;

    for _ in 0..opts.max_iters {
        let combined = combine(bank, &w)?;
        let emb = top_k_eigs(&combined, opts.k)?;
        let b_raw = residual_traces(bank, emb.h());
        let (b, clamped) = clamp_nonnegative(&b_raw);
        clamped_total += clamped;

        let diag = Matrix::from_diagonal(&nalgebra::DVector::from_vec(b));
        let a = match &regularizer {
            Some((l, corr)) => diag * 2.0 + corr * *l,
            None => diag,
        };
        w = solve_weight_qp_from(&a, &w)?.weights.into_vec();

        let mut f = weighted_quadratic(&w, &b_raw);
        if let Some((l, corr)) = &regularizer {
            f += 0.5 * l * quad(corr, &w);
        }
        if !f.is_finite() {
            return Err(Error::NumericalDivergence(format!("objective became {f}")));
        }
        trace.push(f);
        weight_trace.push(w.clone());
        embedding = Some(emb);
        let eps = *epsilon.get_or_insert_with(|| resolve_epsilon(opts.epsilon, f));
        if (f - prev).abs() <= eps {
            converged = true;
            break;
        }
        prev = f;
    }

    let embedding = embedding.expect("at least one iteration ran");
    let partition = discretize(&embedding, opts.seed, opts.row_normalize)?;
    Ok(KcdResult {
        weights: WeightVector::new(w)?,
        representation: None,
        embedding,
        partition,
        iterations: trace.len(),
        objective_trace: trace,
        weight_trace,
        converged,
        clamped: clamped_total,
        row_normalize: opts.row_normalize,
    })
}

/// Multiple kernel k-means: alternates the spectral step on `Σ w_p² K_p`
/// with the diagonal weight QP `min wᵀ B w`.
pub fn mkkm(bank: &KernelBank, opts: &AlternatingOptions) -> Result<KcdResult> {
    alternate_weights(bank, None, opts)
}

/// MKKM with matrix-induced regularization `(λ/2) wᵀ M w`; the weight
/// step solves `min ½ wᵀ(2B + λM)w`.
pub fn mkkm_mr(bank: &KernelBank, lambda: f64, opts: &AlternatingOptions) -> Result<KcdResult> {
    alternate_weights(bank, Some(lambda), opts)
}
