//! Kernel correlation `M(p,q) = Σ K_p(i,j) K_q(i,j)` and kernel
//! dissimilarity `D(p,q) = Σ |K_p(i,j) - K_q(i,j)|` over a bank.

use rayon::prelude::*;

use crate::kernels::KernelBank;
use crate::sum::KahanSum;
use crate::{Matrix, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct RelationMatrices {
    n: usize,
    correlation: Matrix,
    dissimilarity: Matrix,
}

impl RelationMatrices {
    pub fn compute(bank: &KernelBank) -> Result<Self> {
        Ok(Self {
            n: bank.n(),
            correlation: correlation_matrix(bank)?,
            dissimilarity: dissimilarity_matrix(bank)?,
        })
    }

    /// Assembles from already computed matrices (e.g. loaded from disk).
    pub fn from_parts(n: usize, correlation: Matrix, dissimilarity: Matrix) -> Result<Self> {
        let m = correlation.nrows();
        if correlation.shape() != (m, m) || dissimilarity.shape() != (m, m) {
            return Err(crate::Error::DimensionMismatch(
                "relation matrices must be square and of equal size".into(),
            ));
        }
        Ok(Self {
            n,
            correlation,
            dissimilarity,
        })
    }

    /// Kernel count `m`.
    pub fn m(&self) -> usize {
        self.correlation.nrows()
    }

    /// Sample count of the bank the relations were computed on.
    pub fn n(&self) -> usize {
        self.n
    }

    /// `M`.
    pub fn correlation(&self) -> &Matrix {
        &self.correlation
    }

    /// `D`.
    pub fn dissimilarity(&self) -> &Matrix {
        &self.dissimilarity
    }
}

fn pairwise(bank: &KernelBank, f: impl Fn(f64, f64) -> f64 + Sync) -> Matrix {
    let m = bank.len();
    let pairs: Vec<(usize, usize)> = (0..m).flat_map(|p| (p..m).map(move |q| (p, q))).collect();
    let vals: Vec<f64> = pairs
        .par_iter()
        .map(|&(p, q)| {
            let a = bank.kernels()[p].values();
            let b = bank.kernels()[q].values();
            let mut acc = KahanSum::default();
            for (x, y) in a.iter().zip(b.iter()) {
                acc.add(f(*x, *y));
            }
            acc.value()
        })
        .collect();
    let mut out = Matrix::zeros(m, m);
    for (&(p, q), v) in pairs.iter().zip(vals) {
        out[(p, q)] = v;
        out[(q, p)] = v;
    }
    out
}

/// Frobenius inner products between every pair of kernels.
pub fn correlation_matrix(bank: &KernelBank) -> Result<Matrix> {
    Ok(pairwise(bank, |x, y| x * y))
}

/// Entrywise Manhattan distances between every pair of kernels.
pub fn dissimilarity_matrix(bank: &KernelBank) -> Result<Matrix> {
    let mut d = pairwise(bank, |x, y| (x - y).abs());
    d.fill_diagonal(0.0);
    Ok(d)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::GramMatrix;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn bank_of(ms: Vec<Matrix>) -> KernelBank {
        KernelBank::new(
            ms.into_iter()
                .map(|m| GramMatrix::precomputed(m, 0.0).unwrap())
                .collect(),
        )
        .unwrap()
    }

    fn random_sym(rng: &mut ChaCha8Rng, n: usize) -> Matrix {
        let a = Matrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
        (&a + a.transpose()) * 0.5
    }

    #[test]
    fn identity_pair() {
        let bank = bank_of(vec![Matrix::identity(5, 5), Matrix::identity(5, 5)]);
        let r = RelationMatrices::compute(&bank).unwrap();
        assert_eq!(r.correlation(), &Matrix::from_element(2, 2, 5.0));
        assert_eq!(r.dissimilarity(), &Matrix::zeros(2, 2));
    }

    #[test]
    fn single_kernel_frobenius() {
        let k = Matrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 3.0]);
        let bank = bank_of(vec![k]);
        assert_eq!(correlation_matrix(&bank).unwrap()[(0, 0)], 18.0);
    }

    #[test]
    fn zero_versus_ones() {
        let bank = bank_of(vec![Matrix::zeros(4, 4), Matrix::from_element(4, 4, 1.0)]);
        let d = dissimilarity_matrix(&bank).unwrap();
        assert_eq!(d[(0, 1)], 16.0);
        assert_eq!(d[(1, 0)], 16.0);
    }

    #[test]
    fn brute_force_double_sums() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let a = random_sym(&mut rng, 4);
        let b = random_sym(&mut rng, 4);
        let mut dot = 0.0;
        let mut l1 = 0.0;
        for i in 0..4 {
            for j in 0..4 {
                dot += a[(i, j)] * b[(i, j)];
                l1 += (a[(i, j)] - b[(i, j)]).abs();
            }
        }
        let bank = bank_of(vec![a, b]);
        let r = RelationMatrices::compute(&bank).unwrap();
        assert!((r.correlation()[(0, 1)] - dot).abs() < 1e-14);
        assert!((r.dissimilarity()[(0, 1)] - l1).abs() < 1e-14);
    }
}
