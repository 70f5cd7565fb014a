//! Base kernel construction, normalization, scaling and combination.
//!
//! The standard bank holds twelve kernels in a fixed order:
//!
//! | index | kernel                                      |
//! |-------|---------------------------------------------|
//! | 0..7  | Gaussian, `c` in 0.01, 0.05, 0.1, 1, 10, 50, 100 |
//! | 7..11 | polynomial, `(a, b)` in (0,2), (0,4), (1,2), (1,4) |
//! | 11    | cosine                                      |
//!
//! The Gaussian bandwidth is `σ = c · dmax` where `dmax` is the exact maximum
//! pairwise Euclidean distance between samples.

use std::fmt;
use std::sync::OnceLock;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::relations::RelationMatrices;
use crate::{Error, Matrix, Result};

/// Gaussian bandwidth multipliers of the standard bank, ascending.
pub const GAUSSIAN_MULTIPLIERS: [f64; 7] = [0.01, 0.05, 0.1, 1.0, 10.0, 50.0, 100.0];

/// Polynomial `(offset, degree)` pairs of the standard bank.
pub const POLYNOMIAL_PARAMS: [(f64, u32); 4] = [(0.0, 2), (0.0, 4), (1.0, 2), (1.0, 4)];

/// Symmetry tolerance for constructed matrices.
pub const SYMMETRY_TOL: f64 = 1e-12;

/// Kernel family and parameters a [`GramMatrix`] was built from.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "lowercase")]
pub enum KernelSpec {
    Gaussian { c: f64 },
    Polynomial { a: f64, b: u32 },
    Cosine,
    Precomputed,
}

impl fmt::Display for KernelSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            KernelSpec::Gaussian { c } => write!(f, "gaussian(c={c})"),
            KernelSpec::Polynomial { a, b } => write!(f, "polynomial(a={a},b={b})"),
            KernelSpec::Cosine => write!(f, "cosine"),
            KernelSpec::Precomputed => write!(f, "precomputed"),
        }
    }
}

impl KernelSpec {
    /// The twelve specs of the standard bank in bank order.
    pub fn standard() -> Vec<KernelSpec> {
        GAUSSIAN_MULTIPLIERS
            .iter()
            .map(|&c| KernelSpec::Gaussian { c })
            .chain(
                POLYNOMIAL_PARAMS
                    .iter()
                    .map(|&(a, b)| KernelSpec::Polynomial { a, b }),
            )
            .chain(std::iter::once(KernelSpec::Cosine))
            .collect()
    }
}

/// Samples stored column-wise: a `d × n` matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    data: Matrix,
}

impl FeatureMatrix {
    /// Wraps a `d × n` matrix whose columns are samples.
    pub fn from_columns(data: Matrix) -> Result<Self> {
        check_finite(&data)?;
        Ok(Self { data })
    }

    /// Builds from one row per sample, the usual on-disk layout.
    pub fn from_samples(samples: &[Vec<f64>]) -> Result<Self> {
        let n = samples.len();
        let d = samples.first().map_or(0, Vec::len);
        if let Some(bad) = samples.iter().position(|s| s.len() != d) {
            return Err(Error::DimensionMismatch(format!(
                "sample {bad} has {} features, expected {d}",
                samples[bad].len()
            )));
        }
        let data = Matrix::from_fn(d, n, |f, i| samples[i][f]);
        Self::from_columns(data)
    }

    pub fn dim(&self) -> usize {
        self.data.nrows()
    }

    pub fn n_samples(&self) -> usize {
        self.data.ncols()
    }

    pub fn data(&self) -> &Matrix {
        &self.data
    }

    fn dot(&self, i: usize, j: usize) -> f64 {
        self.data.column(i).dot(&self.data.column(j))
    }

    fn sq_dist(&self, i: usize, j: usize) -> f64 {
        self.data
            .column(i)
            .iter()
            .zip(self.data.column(j).iter())
            .map(|(a, b)| (a - b) * (a - b))
            .sum()
    }
}

/// A symmetric `n × n` kernel matrix with provenance.
#[derive(Debug, Clone, PartialEq)]
pub struct GramMatrix {
    values: Matrix,
    spec: KernelSpec,
    normalized: bool,
    scaled: bool,
}

impl GramMatrix {
    /// Wraps an externally supplied matrix, checking squareness, finiteness
    /// and symmetry within `tol`. The stored matrix is exactly symmetrized.
    pub fn precomputed(values: Matrix, tol: f64) -> Result<Self> {
        if values.nrows() != values.ncols() {
            return Err(Error::DimensionMismatch(format!(
                "kernel is {}x{}, expected square",
                values.nrows(),
                values.ncols()
            )));
        }
        check_finite(&values)?;
        let dev = max_asymmetry(&values);
        if dev > tol {
            return Err(Error::NotSymmetric(dev));
        }
        let sym = (&values + values.transpose()) * 0.5;
        Ok(Self {
            values: sym,
            spec: KernelSpec::Precomputed,
            normalized: false,
            scaled: false,
        })
    }

    fn built(values: Matrix, spec: KernelSpec) -> Self {
        Self {
            values,
            spec,
            normalized: false,
            scaled: false,
        }
    }

    pub fn n(&self) -> usize {
        self.values.nrows()
    }

    pub fn values(&self) -> &Matrix {
        &self.values
    }

    pub fn into_values(self) -> Matrix {
        self.values
    }

    pub fn spec(&self) -> KernelSpec {
        self.spec
    }

    pub fn is_normalized(&self) -> bool {
        self.normalized
    }

    pub fn is_scaled(&self) -> bool {
        self.scaled
    }
}

fn check_finite(m: &Matrix) -> Result<()> {
    for j in 0..m.ncols() {
        for i in 0..m.nrows() {
            if !m[(i, j)].is_finite() {
                return Err(Error::NonFinite { row: i, col: j });
            }
        }
    }
    Ok(())
}

/// Largest `|A(i,j) - A(j,i)|`.
pub fn max_asymmetry(m: &Matrix) -> f64 {
    let n = m.nrows().min(m.ncols());
    let mut dev = 0.0f64;
    for i in 0..n {
        for j in (i + 1)..n {
            dev = dev.max((m[(i, j)] - m[(j, i)]).abs());
        }
    }
    dev
}

/// Fills a symmetric matrix from an upper-triangle evaluator.
fn symmetric_from(n: usize, mut f: impl FnMut(usize, usize) -> f64) -> Matrix {
    let mut out = Matrix::zeros(n, n);
    for i in 0..n {
        for j in i..n {
            let v = f(i, j);
            out[(i, j)] = v;
            out[(j, i)] = v;
        }
    }
    out
}

/// Gaussian kernel `exp(-‖xi - xj‖² / 2σ²)` with `σ = c · dmax`.
pub fn gaussian_gram(x: &FeatureMatrix, c: f64) -> Result<GramMatrix> {
    let n = x.n_samples();
    if n < 2 {
        return Err(Error::InvalidArgument(
            "gaussian kernel needs at least two samples".into(),
        ));
    }
    if !(c > 0.0 && c.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "gaussian multiplier must be positive, got {c}"
        )));
    }
    let mut sq = Matrix::zeros(n, n);
    let mut dmax_sq = 0.0f64;
    for i in 0..n {
        for j in (i + 1)..n {
            let d = x.sq_dist(i, j);
            sq[(i, j)] = d;
            sq[(j, i)] = d;
            dmax_sq = dmax_sq.max(d);
        }
    }
    if dmax_sq == 0.0 {
        return Err(Error::DegenerateBandwidth);
    }
    let sigma = c * dmax_sq.sqrt();
    let denom = 2.0 * sigma * sigma;
    let values = sq.map(|d| (-d / denom).exp());
    Ok(GramMatrix::built(values, KernelSpec::Gaussian { c }))
}

/// Polynomial kernel `(a + xiᵀxj)^b`.
pub fn polynomial_gram(x: &FeatureMatrix, a: f64, b: u32) -> Result<GramMatrix> {
    if x.n_samples() == 0 {
        return Err(Error::InvalidArgument("empty feature matrix".into()));
    }
    if b == 0 || !a.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "polynomial kernel needs finite offset and positive degree, got a={a}, b={b}"
        )));
    }
    let values = symmetric_from(x.n_samples(), |i, j| (a + x.dot(i, j)).powi(b as i32));
    Ok(GramMatrix::built(values, KernelSpec::Polynomial { a, b }))
}

/// Cosine kernel `xiᵀxj / (‖xi‖‖xj‖)`.
pub fn cosine_gram(x: &FeatureMatrix) -> Result<GramMatrix> {
    let n = x.n_samples();
    let norms: Vec<f64> = (0..n).map(|i| x.dot(i, i).sqrt()).collect();
    if let Some(i) = norms.iter().position(|&v| v == 0.0) {
        return Err(Error::ZeroVectorInCosine(i));
    }
    let values = symmetric_from(n, |i, j| {
        if i == j {
            1.0
        } else {
            (x.dot(i, j) / (norms[i] * norms[j])).clamp(-1.0, 1.0)
        }
    });
    Ok(GramMatrix::built(values, KernelSpec::Cosine))
}

/// Builds the kernel described by `spec`.
pub fn build_gram(x: &FeatureMatrix, spec: KernelSpec) -> Result<GramMatrix> {
    match spec {
        KernelSpec::Gaussian { c } => gaussian_gram(x, c),
        KernelSpec::Polynomial { a, b } => polynomial_gram(x, a, b),
        KernelSpec::Cosine => cosine_gram(x),
        KernelSpec::Precomputed => Err(Error::InvalidArgument(
            "precomputed kernels cannot be built from features".into(),
        )),
    }
}

/// `K(i,j) / sqrt(K(i,i) K(j,j))`; the diagonal is set to exactly 1.
pub fn normalize_gram(k: &GramMatrix) -> Result<GramMatrix> {
    let n = k.n();
    let diag: Vec<f64> = (0..n).map(|i| k.values[(i, i)]).collect();
    if let Some(i) = diag.iter().position(|&d| !(d > 0.0)) {
        return Err(Error::NonNormalizable {
            index: i,
            value: diag[i],
        });
    }
    let roots: Vec<f64> = diag.iter().map(|d| d.sqrt()).collect();
    let values = symmetric_from(n, |i, j| {
        if i == j {
            1.0
        } else {
            k.values[(i, j)] / (roots[i] * roots[j])
        }
    });
    Ok(GramMatrix {
        values,
        normalized: true,
        ..k.clone()
    })
}

/// Entrywise min-max map of the whole matrix onto `[0, 1]`.
pub fn scale_gram(k: &GramMatrix) -> Result<GramMatrix> {
    let (lo, hi) = k
        .values
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
            (lo.min(v), hi.max(v))
        });
    if !(hi > lo) {
        return Err(Error::DegenerateScaling);
    }
    let range = hi - lo;
    let values = k.values.map(|v| ((v - lo) / range).clamp(0.0, 1.0));
    Ok(GramMatrix {
        values,
        scaled: true,
        ..k.clone()
    })
}

/// Post-processing applied to every kernel of a bank.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BankOptions {
    pub normalize: bool,
    pub scale: bool,
}

impl Default for BankOptions {
    fn default() -> Self {
        Self {
            normalize: true,
            scale: true,
        }
    }
}

impl BankOptions {
    pub fn apply(&self, mut k: GramMatrix) -> Result<GramMatrix> {
        if self.normalize {
            k = normalize_gram(&k)?;
        }
        if self.scale {
            k = scale_gram(&k)?;
        }
        Ok(k)
    }
}

/// An ordered set of kernels over the same samples.
#[derive(Debug, Clone)]
pub struct KernelBank {
    kernels: Vec<GramMatrix>,
    relations: OnceLock<RelationMatrices>,
}

impl KernelBank {
    pub fn new(kernels: Vec<GramMatrix>) -> Result<Self> {
        let Some(first) = kernels.first() else {
            return Err(Error::InvalidArgument("kernel bank is empty".into()));
        };
        let n = first.n();
        if let Some(p) = kernels.iter().position(|k| k.n() != n) {
            return Err(Error::DimensionMismatch(format!(
                "kernel {p} is {0}x{0}, expected {n}x{n}",
                kernels[p].n()
            )));
        }
        Ok(Self {
            kernels,
            relations: OnceLock::new(),
        })
    }

    /// Number of kernels `m`.
    pub fn len(&self) -> usize {
        self.kernels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.kernels.is_empty()
    }

    /// Number of samples `n`.
    pub fn n(&self) -> usize {
        self.kernels[0].n()
    }

    pub fn kernels(&self) -> &[GramMatrix] {
        &self.kernels
    }

    pub fn get(&self, p: usize) -> Option<&GramMatrix> {
        self.kernels.get(p)
    }

    pub fn iter(&self) -> std::slice::Iter<'_, GramMatrix> {
        self.kernels.iter()
    }

    /// Correlation and dissimilarity matrices, computed on first use.
    pub fn relations(&self) -> &RelationMatrices {
        self.relations.get_or_init(|| {
            RelationMatrices::compute(self).expect("bank kernels share a common size")
        })
    }
}

/// Builds the kernels in `specs` in parallel, preserving order.
pub fn build_bank(x: &FeatureMatrix, specs: &[KernelSpec], opts: BankOptions) -> Result<KernelBank> {
    let kernels = specs
        .par_iter()
        .map(|&spec| build_gram(x, spec).and_then(|k| opts.apply(k)))
        .collect::<Result<Vec<_>>>()?;
    KernelBank::new(kernels)
}

/// The twelve-kernel bank, each kernel normalized then scaled to `[0, 1]`.
pub fn standard_bank(x: &FeatureMatrix) -> Result<KernelBank> {
    build_bank(x, &KernelSpec::standard(), BankOptions::default())
}

/// `Σ_p w_p² K_p`.
pub fn combine(bank: &KernelBank, w: &[f64]) -> Result<Matrix> {
    if w.len() != bank.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} weights for {} kernels",
            w.len(),
            bank.len()
        )));
    }
    if let Some(p) = w.iter().position(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument(format!("weight {p} is not finite")));
    }
    let n = bank.n();
    let mut out = Matrix::zeros(n, n);
    for (k, &wp) in bank.iter().zip(w) {
        let s = wp * wp;
        out.zip_apply(k.values(), |o, v| *o += s * v);
    }
    Ok(out)
}
