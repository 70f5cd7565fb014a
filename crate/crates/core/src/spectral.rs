//! Top-k eigenpairs of a dense symmetric matrix.

use nalgebra::SymmetricEigen;

use crate::kernels::max_asymmetry;
use crate::{Error, Matrix, Result};

/// Relative symmetry tolerance accepted by [`top_k_eigs`].
pub const SYMMETRY_TOL: f64 = 1e-10;

/// Orthonormal `n × k` eigenvector block with descending eigenvalues.
#[derive(Debug, Clone, PartialEq)]
pub struct Embedding {
    h: Matrix,
    eigenvalues: Vec<f64>,
}

impl Embedding {
    pub fn h(&self) -> &Matrix {
        &self.h
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    pub fn n(&self) -> usize {
        self.h.nrows()
    }

    pub fn k(&self) -> usize {
        self.h.ncols()
    }

    /// Copy with every row scaled to unit length (zero rows left as is).
    pub fn row_normalized(&self) -> Matrix {
        let mut out = self.h.clone();
        for mut row in out.row_iter_mut() {
            let norm = row.norm();
            if norm > 0.0 {
                row /= norm;
            }
        }
        out
    }
}

/// Eigenvectors for the `k` largest eigenvalues of symmetric `s`.
///
/// The full spectrum is computed, so `s` may be indefinite. Each returned
/// vector is sign-fixed so its largest-magnitude entry is nonnegative.
pub fn top_k_eigs(s: &Matrix, k: usize) -> Result<Embedding> {
    let n = s.nrows();
    if s.ncols() != n {
        return Err(Error::DimensionMismatch(format!(
            "matrix is {}x{}, expected square",
            n,
            s.ncols()
        )));
    }
    if k == 0 || k > n {
        return Err(Error::InvalidArgument(format!(
            "k = {k} must lie in 1..={n}"
        )));
    }
    if let Some((i, j)) = s
        .iter()
        .position(|v| !v.is_finite())
        .map(|idx| (idx % n, idx / n))
    {
        return Err(Error::NonFinite { row: i, col: j });
    }
    let scale = s.amax().max(1.0);
    let dev = max_asymmetry(s);
    if dev > SYMMETRY_TOL * scale {
        return Err(Error::NotSymmetric(dev));
    }

    let eig = SymmetricEigen::new(s.clone());
    let mut order: Vec<usize> = (0..n).collect();
    // Stable sort keeps the routine's order among equal eigenvalues.
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));

    let mut h = Matrix::zeros(n, k);
    let mut eigenvalues = Vec::with_capacity(k);
    for (col, &idx) in order.iter().take(k).enumerate() {
        let v = eig.eigenvectors.column(idx);
        let pivot = v.iter().fold(0.0f64, |acc, &x| if x.abs() > acc.abs() { x } else { acc });
        let sign = if pivot < 0.0 { -1.0 } else { 1.0 };
        h.set_column(col, &(v * sign));
        eigenvalues.push(eig.eigenvalues[idx]);
    }
    Ok(Embedding { h, eigenvalues })
}

/// `Tr(S (I - H Hᵀ))`, evaluated as `Tr(S) - Tr(Hᵀ S H)`.
pub fn residual_trace(s: &Matrix, h: &Matrix) -> f64 {
    s.trace() - (h.transpose() * s * h).trace()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_gives_unit_eigenvalues() {
        let e = top_k_eigs(&Matrix::identity(4, 4), 2).unwrap();
        assert_eq!(e.eigenvalues(), &[1.0, 1.0]);
        let hth = e.h().transpose() * e.h();
        assert!((hth - Matrix::identity(2, 2)).amax() < 1e-12);
    }

    #[test]
    fn diagonal_spans_leading_axes() {
        let s = Matrix::from_diagonal(&nalgebra::DVector::from_vec(vec![3.0, 2.0, 1.0]));
        let e = top_k_eigs(&s, 2).unwrap();
        assert!((e.eigenvalues()[0] - 3.0).abs() < 1e-14);
        assert!((e.eigenvalues()[1] - 2.0).abs() < 1e-14);
        assert!(e.h().row(2).amax() < 1e-12);
        // sign convention: dominant entry nonnegative
        assert!((e.h()[(0, 0)] - 1.0).abs() < 1e-12);
        assert!((e.h()[(1, 1)] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn rejects_bad_inputs() {
        let s = Matrix::from_row_slice(2, 2, &[1.0, 0.5, 0.2, 1.0]);
        assert!(matches!(top_k_eigs(&s, 1), Err(Error::NotSymmetric(_))));
        assert!(top_k_eigs(&Matrix::identity(2, 2), 3).is_err());
        assert!(top_k_eigs(&Matrix::identity(2, 2), 0).is_err());
    }

    #[test]
    fn handles_indefinite_input() {
        let s = Matrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]);
        let e = top_k_eigs(&s, 1).unwrap();
        assert!((e.eigenvalues()[0] - 1.0).abs() < 1e-14);
        let h = e.h();
        assert!((h[(0, 0)] - h[(1, 0)]).abs() < 1e-14);
    }
}
