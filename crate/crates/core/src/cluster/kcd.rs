//! Kernel correlation-dissimilarity MKKM.
//!
//! Objective, over orthonormal `H` and column-stochastic `Y`:
//!
//! ```text
//! Tr(K_Y (I - H Hᵀ)) + α wᵀ M w + β Tr(Dᵀ Y),   w = Y·1/m,   K_Y = Σ w_p² K_p
//! ```
//!
//! Each outer iteration rebuilds `K_Y`, takes its top-k eigenvectors as `H`,
//! then solves the convex QP in `Y` with quadratic term `B + αM` (where
//! `B = diag(Tr(K_p(I - HHᵀ)))`) and linear cost `βD`.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use super::{clamp_nonnegative, discretize, residual_traces, resolve_epsilon, KcdResult};
use crate::kernels::{combine, KernelBank};
use crate::relations::RelationMatrices;
use crate::simplexqp::{solve_y_qp_from, QpProblem, RepresentationMatrix};
use crate::spectral::top_k_eigs;
use crate::{Error, Matrix, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KcdConfig {
    /// Weight of the correlation term.
    pub alpha: f64,
    /// Weight of the dissimilarity term.
    pub beta: f64,
    /// Stop threshold on `|f(t+1) - f(t)|`; defaults to `1e-6·|f(1)|`.
    pub epsilon: Option<f64>,
    pub max_outer_iters: usize,
    pub k: usize,
    /// Seed of the final k-means step.
    pub seed: u64,
    #[serde(default)]
    pub row_normalize: bool,
}

impl KcdConfig {
    pub fn new(k: usize, alpha: f64, beta: f64) -> Self {
        Self {
            alpha,
            beta,
            epsilon: None,
            max_outer_iters: 50,
            k,
            seed: 0,
            row_normalize: false,
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha >= 0.0 && self.alpha.is_finite()) {
            return Err(Error::config("alpha", format!("must be finite and >= 0, got {}", self.alpha)));
        }
        if !(self.beta >= 0.0 && self.beta.is_finite()) {
            return Err(Error::config("beta", format!("must be finite and >= 0, got {}", self.beta)));
        }
        if let Some(eps) = self.epsilon {
            if !(eps > 0.0) {
                return Err(Error::config("epsilon", format!("must be positive, got {eps}")));
            }
        }
        if self.max_outer_iters == 0 {
            return Err(Error::config("max_outer_iters", "must be positive"));
        }
        if self.k == 0 {
            return Err(Error::config("k", "must be positive"));
        }
        if !(0.1..=0.9).contains(&self.alpha) {
            log::warn!("alpha = {} lies outside the usual grid [0.1, 0.9]", self.alpha);
        }
        if !(2f64.powi(-14)..=2f64.powi(-5)).contains(&self.beta) {
            log::warn!("beta = {} lies outside the usual grid [2^-14, 2^-5]", self.beta);
        }
        Ok(())
    }
}

/// Runs the alternating optimization and discretizes the final `H`.
pub fn kcd_mkkm(bank: &KernelBank, relations: &RelationMatrices, cfg: &KcdConfig) -> Result<KcdResult> {
    cfg.validate()?;
    let m = bank.len();
    if relations.m() != m || relations.n() != bank.n() {
        return Err(Error::DimensionMismatch(format!(
            "relations cover {} kernels over {} samples, bank has {m} over {}",
            relations.m(),
            relations.n(),
            bank.n()
        )));
    }
    let corr = relations.correlation();
    let dis = relations.dissimilarity();

    let mut y = RepresentationMatrix::uniform(m);
    let mut w = y.weights().into_vec();
    let mut trace = Vec::new();
    let mut weight_trace = Vec::new();
    let mut prev = 0.0;
    let mut epsilon = None;
    let mut converged = false;
    let mut clamped_total = 0;
    let mut embedding = None;

    for _ in 0..cfg.max_outer_iters {
        let combined = combine(bank, &w)?;
        let emb = top_k_eigs(&combined, cfg.k)?;

        let b_raw = residual_traces(bank, emb.h());
        let (b, clamped) = clamp_nonnegative(&b_raw);
        clamped_total += clamped;
        let a = Matrix::from_diagonal(&DVector::from_vec(b)) + corr * cfg.alpha;
        let problem = QpProblem::new(a, dis.clone(), cfg.beta)?;
        let solved = solve_y_qp_from(&problem, &y)?;
        if !solved.info.converged {
            log::warn!("representation QP stopped at the iteration cap");
        }
        y = solved.y;
        w = y.weights().into_vec();

        let f = objective(&w, &b_raw, corr, dis, y.matrix(), cfg.alpha, cfg.beta);
        if !f.is_finite() {
            return Err(Error::NumericalDivergence(format!("objective became {f}")));
        }
        trace.push(f);
        weight_trace.push(w.clone());
        embedding = Some(emb);
        let eps = *epsilon.get_or_insert_with(|| resolve_epsilon(cfg.epsilon, f));
        if (f - prev).abs() <= eps {
            converged = true;
            break;
        }
        prev = f;
    }

    let embedding = embedding.expect("at least one iteration ran");
    let partition = discretize(&embedding, cfg.seed, cfg.row_normalize)?;
    Ok(KcdResult {
        weights: y.weights(),
        representation: Some(y),
        embedding,
        partition,
        iterations: trace.len(),
        objective_trace: trace,
        weight_trace,
        converged,
        clamped: clamped_total,
        row_normalize: cfg.row_normalize,
    })
}

/// Full objective given `w`, the per-kernel residual traces `b` at the
/// current `H`, and `Y`.
fn objective(w: &[f64], b: &[f64], corr: &Matrix, dis: &Matrix, y: &Matrix, alpha: f64, beta: f64) -> f64 {
    let spectral: f64 = w.iter().zip(b).map(|(wp, bp)| wp * wp * bp).sum();
    let wv = DVector::from_column_slice(w);
    let correlation = wv.dot(&(corr * &wv));
    let dissimilarity = dis.component_mul(y).sum();
    spectral + alpha * correlation + beta * dissimilarity
}
