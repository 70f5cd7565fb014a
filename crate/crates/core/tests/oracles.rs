//! Clustering, spectral and QP results checked against independent oracles.

mod common;

use approx::assert_abs_diff_eq;
use mkkm::cluster::{a_mkkm, average_kernel, kcd_mkkm, kkm, kmeans, mkkm_mr, sb_kkm, AlternatingOptions, KcdConfig};
use mkkm::kernels::{gaussian_gram, standard_bank, FeatureMatrix, GramMatrix, KernelBank};
use mkkm::metrics::accuracy;
use mkkm::relations::correlation_matrix;
use mkkm::simplexqp::{solve_weight_qp, solve_weight_qp_iterative};
use mkkm::spectral::top_k_eigs;
use mkkm::Matrix;
use rand::Rng;
use rand_distr::{Distribution, Normal};

use common::*;

fn bank_of(ms: Vec<Matrix>) -> KernelBank {
    KernelBank::new(
        ms.into_iter()
            .map(|m| GramMatrix::precomputed(m, 1e-12).unwrap())
            .collect(),
    )
    .unwrap()
}

fn quad(a: &Matrix, w: &[f64]) -> f64 {
    let mut s = 0.0;
    for i in 0..w.len() {
        for j in 0..w.len() {
            s += w[i] * a[(i, j)] * w[j];
        }
    }
    s
}

#[test]
fn kmeans_matches_best_of_many_restarts() {
    let mut r = rng(11);
    let noise = Normal::new(0.0, 0.3).unwrap();
    let centers = [(0.0, 0.0), (4.0, 0.0), (2.0, 3.0)];
    let mut pts = Matrix::zeros(20, 2);
    for i in 0..20 {
        let (cx, cy) = centers[i % 3];
        pts[(i, 0)] = cx + noise.sample(&mut r);
        pts[(i, 1)] = cy + noise.sample(&mut r);
    }
    let best = (0..1000)
        .map(|s| kmeans(&pts, 3, s).unwrap().wcss())
        .fold(f64::INFINITY, f64::min);
    // Direct WCSS of the returned partition, independent of the fit's own bookkeeping.
    let fit = kmeans(&pts, 3, 2024).unwrap();
    let labels = fit.partition.labels();
    let mut wcss = 0.0;
    for c in 0..3 {
        let members: Vec<usize> = (0..20).filter(|&i| labels[i] == c).collect();
        let mean: Vec<f64> = (0..2)
            .map(|d| members.iter().map(|&i| pts[(i, d)]).sum::<f64>() / members.len() as f64)
            .collect();
        wcss += members
            .iter()
            .map(|&i| (0..2).map(|d| (pts[(i, d)] - mean[d]).powi(2)).sum::<f64>())
            .sum::<f64>();
    }
    assert!((wcss - best).abs() <= 1e-9, "wcss {wcss} vs best restart {best}");
}

#[test]
fn kkm_recovers_separated_blobs() {
    let (x, truth) = three_blobs(3);
    let k = gaussian_gram(&x, 0.1).unwrap();
    let part = kkm(k.values(), 3, 5).unwrap();
    assert_eq!(accuracy(&part, &truth).unwrap(), 1.0);
}

#[test]
fn a_mkkm_is_kkm_on_the_direct_average() {
    let mut r = rng(12);
    let bank = random_bank(&mut r, 24, 2, 3);
    let avg = Matrix::from_fn(24, 24, |i, j| {
        (bank.kernels()[0].values()[(i, j)] + bank.kernels()[1].values()[(i, j)]) / 2.0
    });
    assert_abs_diff_eq!(average_kernel(&bank), avg.clone(), epsilon = 1e-15);
    assert_eq!(a_mkkm(&bank, 3, 9).unwrap(), kkm(&avg, 3, 9).unwrap());
}

#[test]
fn sb_kkm_picks_informative_over_noise() {
    let (x, truth) = three_blobs(4);
    let informative = gaussian_gram(&x, 0.1).unwrap().into_values();
    let mut r = rng(13);
    let noise = random_psd(&mut r, 150, 150);
    let bank = bank_of(vec![noise, informative]);
    let hits = (0..50)
        .filter(|&s| sb_kkm(&bank, 3, &truth, s).unwrap().best_index == 1)
        .count();
    assert!(hits >= 49, "informative kernel chosen in {hits}/50 runs");
}

#[test]
fn mkkm_mr_large_lambda_spreads_off_duplicated_pair() {
    let mut r = rng(14);
    let big = random_psd(&mut r, 20, 3) * 5.0;
    let other = random_psd(&mut r, 20, 3);
    let bank = bank_of(vec![big.clone(), big, other]);
    let fit = mkkm_mr(&bank, 1e8, &AlternatingOptions::new(2, 0)).unwrap();
    let m = correlation_matrix(&bank).unwrap();
    let w = fit.weights.as_slice();
    assert!(quad(&m, w) < quad(&m, &[1.0 / 3.0; 3]), "w = {w:?}");
}

#[test]
fn kcd_on_blobs_is_monotone_and_quick() {
    let (x, _) = three_blobs(5);
    let bank = standard_bank(&x).unwrap();
    let fit = kcd_mkkm(&bank, bank.relations(), &KcdConfig::new(3, 0.5, 2f64.powi(-8))).unwrap();
    assert!(fit.converged && fit.iterations <= 10, "{} iterations", fit.iterations);
    for pair in fit.objective_trace.windows(2) {
        assert!(pair[1] <= pair[0] + 1e-9);
    }
}

#[test]
fn kcd_with_identical_kernels_matches_kkm() {
    let (x, _) = three_blobs(6);
    let k = gaussian_gram(&x, 0.1).unwrap().into_values();
    let bank = bank_of(vec![k.clone(), k.clone(), k.clone()]);
    let cfg = KcdConfig::new(3, 0.3, 2f64.powi(-9)).with_seed(21);
    assert_eq!(kcd_mkkm(&bank, bank.relations(), &cfg).unwrap().partition, kkm(&k, 3, 21).unwrap());
}

#[test]
fn top_k_trace_matches_jacobi() {
    let mut r = rng(15);
    for _ in 0..20 {
        let s = random_symmetric(&mut r, 8);
        let emb = top_k_eigs(&s, 3).unwrap();
        let (values, _) = jacobi_eigen(&s);
        let h = emb.h();
        let got = (h.transpose() * &s * h).trace();
        assert_abs_diff_eq!(got, values[..3].iter().sum::<f64>(), epsilon = 1e-9);
        assert_abs_diff_eq!(h.transpose() * h, Matrix::identity(3, 3), epsilon = 1e-8);
    }
}

#[test]
fn top_k_subspace_is_scale_invariant() {
    let mut r = rng(16);
    for _ in 0..20 {
        let s = random_symmetric(&mut r, 10);
        let c = r.random_range(0.01..100.0);
        let h1 = top_k_eigs(&s, 3).unwrap().h().clone();
        let h2 = top_k_eigs(&(&s * c), 3).unwrap().h().clone();
        let p1 = &h1 * h1.transpose();
        let p2 = &h2 * h2.transpose();
        assert!((p1 - p2).norm() <= 1e-6);
    }
}

#[test]
fn weight_qp_matches_simplex_grid() {
    let mut r = rng(17);
    for _ in 0..30 {
        let a = random_psd(&mut r, 3, 2) * r.random_range(0.5..5.0);
        let w = solve_weight_qp(&a).unwrap().weights.into_vec();
        let steps = 400;
        let mut best = f64::INFINITY;
        for i in 0..=steps {
            for j in 0..=(steps - i) {
                let (u, v) = (i as f64 / steps as f64, j as f64 / steps as f64);
                best = best.min(quad(&a, &[u, v, 1.0 - u - v]));
            }
        }
        assert!(quad(&a, &w) <= best + 1e-12, "{} vs grid {best}", quad(&a, &w));
    }
}

#[test]
fn diagonal_closed_form_agrees_with_iterative_path() {
    let mut r = rng(18);
    for _ in 0..20 {
        let d: Vec<f64> = (0..5).map(|_| r.random_range(0.1..10.0)).collect();
        let a = Matrix::from_diagonal(&nalgebra::DVector::from_vec(d.clone()));
        let closed = solve_weight_qp(&a).unwrap().weights.into_vec();
        let inv_sum: f64 = d.iter().map(|x| 1.0 / x).sum();
        let iterative = solve_weight_qp_iterative(&a, &[0.2; 5]).unwrap().weights.into_vec();
        for p in 0..5 {
            assert_abs_diff_eq!(closed[p], (1.0 / d[p]) / inv_sum, epsilon = 1e-14);
            assert_abs_diff_eq!(iterative[p], closed[p], epsilon = 1e-9);
        }
    }
}

#[test]
fn correlation_is_psd_and_sees_magnitude() {
    let mut r = rng(19);
    let unit: Vec<Matrix> = (0..3).map(|_| random_psd(&mut r, 12, 4)).collect();
    let mut ms = unit.clone();
    ms.push(&unit[0] * 50.0);
    let m = correlation_matrix(&bank_of(ms)).unwrap();
    let (values, _) = jacobi_eigen(&m);
    assert!(*values.last().unwrap() >= -1e-8 * m.trace() / 4.0);
    // The large-magnitude copy dominates kernel 1's row, not kernel 1 itself.
    let row: Vec<f64> = (0..4).map(|q| m[(1, q)]).collect();
    let argmax = (0..4).max_by(|&i, &j| row[i].total_cmp(&row[j])).unwrap();
    assert_ne!(argmax, 1, "row {row:?}");
}

#[test]
fn feature_matrix_rejects_non_finite() {
    assert!(FeatureMatrix::from_samples(&[vec![1.0, f64::NAN], vec![0.0, 1.0]]).is_err());
}
