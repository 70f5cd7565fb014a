//! Convex quadratic programs over the probability simplex.
//!
//! Two shapes are solved here:
//!
//! * weight QPs `min wᵀ A w` with `w ≥ 0`, `Σ w = 1`;
//! * the representation QP over column-stochastic `Y ∈ R^{m×m}`:
//!
//!   ```text
//!   f(Y) = (1/m²) (Y1)ᵀ A (Y1) + β Σ_{p,q} D(p,q) Y(p,q)
//!   ```
//!
//! Both use projected gradient descent with an Armijo backtracking step
//! starting from `1/L`, where `L` is the largest curvature of the objective
//! along feasible directions. Every iterate is feasible.

use nalgebra::{DVector, SymmetricEigen};

use crate::kernels::max_asymmetry;
use crate::{Error, Matrix, Result};

/// Iteration cap of the projected gradient loop.
pub const MAX_ITERS: usize = 10_000;
/// Stop once the gradient-mapping residual drops below this.
pub const KKT_TOL: f64 = 1e-12;
/// Tolerance on the smallest eigenvalue of `A`, relative to `trace(A)/m`.
pub const PSD_TOL: f64 = 1e-8;

/// Euclidean projection of `v` onto `{x ≥ 0, Σ x = 1}`.
pub fn project_simplex(v: &[f64]) -> Vec<f64> {
    let mut out = v.to_vec();
    project_simplex_in_place(&mut out);
    out
}

fn project_simplex_in_place(v: &mut [f64]) {
    if v.is_empty() {
        return;
    }
    let mut sorted = v.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let mut cumsum = 0.0;
    let mut theta = 0.0;
    for (j, &u) in sorted.iter().enumerate() {
        cumsum += u;
        let t = (cumsum - 1.0) / (j + 1) as f64;
        if u - t > 0.0 {
            theta = t;
        }
    }
    for x in v.iter_mut() {
        *x = (*x - theta).max(0.0);
    }
}

/// Nonnegative weights summing to one.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightVector(Vec<f64>);

impl WeightVector {
    /// Uniform weights `1/m`.
    pub fn uniform(m: usize) -> Self {
        Self(vec![1.0 / m as f64; m])
    }

    /// Validates nonnegativity and unit sum within `1e-9`.
    pub fn new(w: Vec<f64>) -> Result<Self> {
        if w.is_empty() {
            return Err(Error::InvalidArgument("empty weight vector".into()));
        }
        if w.iter().any(|&x| !(x >= -1e-10)) {
            return Err(Error::InvalidArgument(format!("negative weight in {w:?}")));
        }
        let total: f64 = w.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidArgument(format!(
                "weights sum to {total}, expected 1"
            )));
        }
        Ok(Self(w))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }
}

/// Nonnegative `m × m` matrix whose columns each sum to one.
#[derive(Debug, Clone, PartialEq)]
pub struct RepresentationMatrix(Matrix);

impl RepresentationMatrix {
    /// `Y = (1/m)·ones`.
    pub fn uniform(m: usize) -> Self {
        Self(Matrix::from_element(m, m, 1.0 / m as f64))
    }

    pub fn new(y: Matrix) -> Result<Self> {
        let m = y.nrows();
        if y.ncols() != m || m == 0 {
            return Err(Error::DimensionMismatch(format!(
                "representation matrix is {}x{}",
                y.nrows(),
                y.ncols()
            )));
        }
        if y.iter().any(|&v| !(v >= -1e-10)) {
            return Err(Error::InvalidArgument(
                "representation matrix has negative entries".into(),
            ));
        }
        for (q, col) in y.column_iter().enumerate() {
            let s = col.sum();
            if (s - 1.0).abs() > 1e-9 {
                return Err(Error::InvalidArgument(format!(
                    "column {q} sums to {s}, expected 1"
                )));
            }
        }
        Ok(Self(y))
    }

    pub fn m(&self) -> usize {
        self.0.nrows()
    }

    pub fn matrix(&self) -> &Matrix {
        &self.0
    }

    /// Row sums `Y·1`.
    pub fn row_sums(&self) -> DVector<f64> {
        self.0.column_sum()
    }

    /// Induced kernel weights `w = Y·1/m`.
    pub fn weights(&self) -> WeightVector {
        let m = self.m() as f64;
        WeightVector(self.row_sums().iter().map(|s| s / m).collect())
    }
}

/// Spectral facts about the quadratic term needed by the solvers.
#[derive(Debug, Clone)]
struct Curvature {
    /// Largest eigenvalue of `P A P`, `P = I - 11ᵀ/m`.
    tangent_max: f64,
    is_zero: bool,
}

fn checked_quadratic(a: &Matrix) -> Result<(Matrix, Curvature)> {
    let m = a.nrows();
    if a.ncols() != m || m == 0 {
        return Err(Error::DimensionMismatch(format!(
            "quadratic term is {}x{}",
            a.nrows(),
            a.ncols()
        )));
    }
    if let Some(idx) = a.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite {
            row: idx % m,
            col: idx / m,
        });
    }
    let scale = a.amax().max(f64::MIN_POSITIVE);
    let dev = max_asymmetry(a);
    if dev > 1e-10 * scale.max(1.0) {
        return Err(Error::NotSymmetric(dev));
    }
    let a = (a + a.transpose()) * 0.5;
    let eig = SymmetricEigen::new(a.clone());
    let min_eig = eig.eigenvalues.min();
    let tol = PSD_TOL * (a.trace() / m as f64).abs();
    if min_eig < -tol {
        return Err(Error::NonconvexQp(min_eig));
    }
    let p = Matrix::identity(m, m) - Matrix::from_element(m, m, 1.0 / m as f64);
    let pap = &p * &a * &p;
    let pap = (&pap + pap.transpose()) * 0.5;
    let tangent_max = SymmetricEigen::new(pap).eigenvalues.max().max(0.0);
    let is_zero = a.iter().all(|&v| v == 0.0);
    Ok((a, Curvature { tangent_max, is_zero }))
}

/// Outcome of an iterative solve.
#[derive(Debug, Clone, PartialEq)]
pub struct SolveInfo {
    pub objective: f64,
    pub iterations: usize,
    /// False when the iteration cap was hit; the last iterate is returned.
    pub converged: bool,
    /// Gradient-mapping residual at the returned point.
    pub residual: f64,
}

/// Solution of a weight QP.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightSolution {
    pub weights: WeightVector,
    pub info: SolveInfo,
}

/// `argmin wᵀ A w` over the simplex, for symmetric PSD `A`.
///
/// Diagonal `A` is solved in closed form: `w_p ∝ 1/A(p,p)`, with the mass
/// spread uniformly over zero diagonal entries when any exist.
pub fn solve_weight_qp(a: &Matrix) -> Result<WeightSolution> {
    let m = a.nrows();
    solve_weight_qp_from(a, &vec![1.0 / m as f64; m])
}

/// As [`solve_weight_qp`], starting the iterative path from `start`.
pub fn solve_weight_qp_from(a: &Matrix, start: &[f64]) -> Result<WeightSolution> {
    let (a, curv) = checked_quadratic(a)?;
    let m = a.nrows();
    if start.len() != m {
        return Err(Error::DimensionMismatch("start point length".into()));
    }
    let is_diagonal = (0..m).all(|i| (0..m).all(|j| i == j || a[(i, j)] == 0.0));
    if is_diagonal {
        let w = diagonal_weights(a.diagonal().as_slice());
        let objective = quad_form(&a, &w);
        return Ok(WeightSolution {
            weights: WeightVector(w),
            info: SolveInfo {
                objective,
                iterations: 0,
                converged: true,
                residual: 0.0,
            },
        });
    }
    let (w, info) = weight_qp_pgd(&a, &curv, &project_simplex(start));
    Ok(WeightSolution {
        weights: WeightVector(w),
        info,
    })
}

/// Same problem as [`solve_weight_qp`] without the diagonal shortcut.
pub fn solve_weight_qp_iterative(a: &Matrix, start: &[f64]) -> Result<WeightSolution> {
    let (a, curv) = checked_quadratic(a)?;
    if start.len() != a.nrows() {
        return Err(Error::DimensionMismatch("start point length".into()));
    }
    let (w, info) = weight_qp_pgd(&a, &curv, &project_simplex(start));
    Ok(WeightSolution {
        weights: WeightVector(w),
        info,
    })
}

fn diagonal_weights(diag: &[f64]) -> Vec<f64> {
    let zeros = diag.iter().filter(|&&b| b <= 0.0).count();
    if zeros > 0 {
        let share = 1.0 / zeros as f64;
        return diag
            .iter()
            .map(|&b| if b <= 0.0 { share } else { 0.0 })
            .collect();
    }
    let inv: Vec<f64> = diag.iter().map(|b| 1.0 / b).collect();
    let total: f64 = inv.iter().sum();
    inv.iter().map(|v| v / total).collect()
}

fn quad_form(a: &Matrix, w: &[f64]) -> f64 {
    let w = DVector::from_column_slice(w);
    w.dot(&(a * &w))
}

fn weight_qp_pgd(a: &Matrix, curv: &Curvature, start: &[f64]) -> (Vec<f64>, SolveInfo) {
    let objective = |w: &[f64]| quad_form(a, w);
    let gradient = |w: &[f64]| -> Vec<f64> {
        let v = DVector::from_column_slice(w);
        (a * v * 2.0).iter().copied().collect()
    };
    let lipschitz = 2.0 * curv.tangent_max;
    projected_gradient(
        start.to_vec(),
        objective,
        gradient,
        project_simplex_in_place,
        lipschitz,
        |_, _| {},
    )
}

/// The representation subproblem: quadratic term `A`, linear cost `D`,
/// trade-off `β`.
#[derive(Debug, Clone)]
pub struct QpProblem {
    a: Matrix,
    d: Matrix,
    beta: f64,
    curvature: Curvature,
}

impl QpProblem {
    /// Validates `A` symmetric PSD, `D` nonnegative and `β ≥ 0`.
    pub fn new(a: Matrix, d: Matrix, beta: f64) -> Result<Self> {
        if !(beta >= 0.0) || !beta.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "beta must be nonnegative, got {beta}"
            )));
        }
        let (a, curvature) = checked_quadratic(&a)?;
        let m = a.nrows();
        if d.shape() != (m, m) {
            return Err(Error::DimensionMismatch(format!(
                "linear cost is {}x{}, expected {m}x{m}",
                d.nrows(),
                d.ncols()
            )));
        }
        if let Some(idx) = d.iter().position(|&v| !(v >= 0.0) || !v.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "linear cost entry ({}, {}) must be finite and nonnegative",
                idx % m,
                idx / m
            )));
        }
        Ok(Self {
            a,
            d,
            beta,
            curvature,
        })
    }

    pub fn m(&self) -> usize {
        self.a.nrows()
    }

    pub fn a(&self) -> &Matrix {
        &self.a
    }

    pub fn d(&self) -> &Matrix {
        &self.d
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    /// `(1/m²)(Y1)ᵀA(Y1) + β Σ D∘Y`.
    pub fn objective(&self, y: &Matrix) -> f64 {
        let m = self.m() as f64;
        let s = y.column_sum();
        let quad = s.dot(&(&self.a * &s)) / (m * m);
        quad + self.beta * self.d.component_mul(y).sum()
    }

    /// `G(p,q) = (2/m²)(A·Y1)_p + β D(p,q)`.
    pub fn gradient(&self, y: &Matrix) -> Matrix {
        let m = self.m();
        let s = y.column_sum();
        let as_ = &self.a * &s * (2.0 / (m * m) as f64);
        Matrix::from_fn(m, m, |p, q| as_[p] + self.beta * self.d[(p, q)])
    }

    /// Largest KKT violation: per column, the spread of `G` over the
    /// support of `Y` above the column minimum of `G`.
    pub fn kkt_violation(&self, y: &Matrix) -> f64 {
        let g = self.gradient(y);
        let mut worst = 0.0f64;
        for q in 0..self.m() {
            let col = g.column(q);
            let mu = col.min();
            for p in 0..self.m() {
                if y[(p, q)] > 1e-12 {
                    worst = worst.max(col[p] - mu);
                }
            }
        }
        worst
    }
}

/// `f(Y)` for a representation matrix; see [`QpProblem::objective`].
pub fn y_objective(y: &RepresentationMatrix, problem: &QpProblem) -> Result<f64> {
    if y.m() != problem.m() {
        return Err(Error::DimensionMismatch(format!(
            "Y is {0}x{0}, problem is {1}x{1}",
            y.m(),
            problem.m()
        )));
    }
    Ok(problem.objective(y.matrix()))
}

/// Solution of the representation QP.
#[derive(Debug, Clone, PartialEq)]
pub struct YSolution {
    pub y: RepresentationMatrix,
    pub info: SolveInfo,
}

/// Minimizes the representation QP from the uniform start.
pub fn solve_y_qp(problem: &QpProblem) -> Result<YSolution> {
    solve_y_qp_from(problem, &RepresentationMatrix::uniform(problem.m()))
}

/// Minimizes the representation QP from `start` (warm start).
pub fn solve_y_qp_from(problem: &QpProblem, start: &RepresentationMatrix) -> Result<YSolution> {
    solve_y_qp_observed(problem, start, |_, _| {})
}

/// As [`solve_y_qp_from`], calling `observe(iteration, Y)` on every
/// accepted iterate.
pub fn solve_y_qp_observed(
    problem: &QpProblem,
    start: &RepresentationMatrix,
    mut observe: impl FnMut(usize, &Matrix),
) -> Result<YSolution> {
    let m = problem.m();
    if start.m() != m {
        return Err(Error::DimensionMismatch(format!(
            "start is {0}x{0}, problem is {m}x{m}",
            start.m()
        )));
    }
    if problem.curvature.is_zero {
        // Purely linear: each column puts its mass on its cheapest row.
        let mut y = Matrix::zeros(m, m);
        for q in 0..m {
            let p = (0..m)
                .min_by(|&i, &j| problem.d[(i, q)].total_cmp(&problem.d[(j, q)]))
                .unwrap_or(0);
            y[(p, q)] = 1.0;
        }
        observe(1, &y);
        let (y, objective) = {
            let candidate = problem.objective(&y);
            let current = problem.objective(start.matrix());
            if candidate <= current {
                (y, candidate)
            } else {
                (start.matrix().clone(), current)
            }
        };
        return Ok(YSolution {
            y: RepresentationMatrix(y),
            info: SolveInfo {
                objective,
                iterations: 1,
                converged: true,
                residual: 0.0,
            },
        });
    }

    let lipschitz = 2.0 * problem.curvature.tangent_max / m as f64;
    let objective = |x: &[f64]| problem.objective(&Matrix::from_column_slice(m, m, x));
    let gradient = |x: &[f64]| -> Vec<f64> {
        problem
            .gradient(&Matrix::from_column_slice(m, m, x))
            .as_slice()
            .to_vec()
    };
    let project = |x: &mut [f64]| {
        for col in x.chunks_mut(m) {
            project_simplex_in_place(col);
        }
    };
    let (x, info) = projected_gradient(
        start.matrix().as_slice().to_vec(),
        objective,
        gradient,
        project,
        lipschitz,
        |it, x| observe(it, &Matrix::from_column_slice(m, m, x)),
    );
    Ok(YSolution {
        y: RepresentationMatrix(Matrix::from_column_slice(m, m, &x)),
        info,
    })
}

/// Accelerated projected gradient with Armijo backtracking and restart
/// whenever the objective would rise. Accepted iterates are monotone up to
/// rounding.
fn projected_gradient(
    mut x: Vec<f64>,
    objective: impl Fn(&[f64]) -> f64,
    gradient: impl Fn(&[f64]) -> Vec<f64>,
    project: impl Fn(&mut [f64]),
    lipschitz: f64,
    mut observe: impl FnMut(usize, &[f64]),
) -> (Vec<f64>, SolveInfo) {
    let mut fx = objective(&x);
    let base_step = if lipschitz > 0.0 {
        1.0 / lipschitz
    } else {
        // Flat along feasible directions: any point is optimal.
        return (
            x,
            SolveInfo {
                objective: fx,
                iterations: 0,
                converged: true,
                residual: 0.0,
            },
        );
    };

    let mut residual = f64::INFINITY;
    let mut converged = false;
    let mut iterations = 0;
    let mut trial = vec![0.0; x.len()];
    let mut prev = x.clone();
    let mut momentum = 1.0f64;
    while iterations < MAX_ITERS {
        iterations += 1;
        let g = gradient(&x);

        // Gradient mapping at the unit step doubles as the KKT residual.
        for ((t, xi), gi) in trial.iter_mut().zip(&x).zip(&g) {
            *t = xi - base_step * gi;
        }
        project(&mut trial);
        residual = x
            .iter()
            .zip(&trial)
            .fold(0.0f64, |acc, (a, b)| acc.max((a - b).abs()));
        if residual < KKT_TOL {
            converged = true;
            break;
        }

        let next_momentum = (1.0 + (1.0 + 4.0 * momentum * momentum).sqrt()) / 2.0;
        let theta = (momentum - 1.0) / next_momentum;
        let mut step = None;
        momentum = next_momentum;
        if theta > 0.0 {
            let mut z: Vec<f64> = x.iter().zip(&prev).map(|(xi, pi)| xi + theta * (xi - pi)).collect();
            project(&mut z);
            let fz = objective(&z);
            step = backtrack(&z, fz, &gradient(&z), base_step, &objective, &project)
                .filter(|(_, fc)| *fc <= fx);
            if step.is_none() {
                momentum = 1.0;
            }
        }
        // Without momentum, or when it overshoots, take a plain step from x.
        let Some((candidate, fc)) = step.or_else(|| backtrack(&x, fx, &g, base_step, &objective, &project)) else {
            converged = true;
            break;
        };
        prev = std::mem::replace(&mut x, candidate);
        fx = fc;
        observe(iterations, &x);
    }
    if !converged {
        log::warn!("projected gradient hit the {MAX_ITERS}-iteration cap (residual {residual:e})");
    }
    (
        x,
        SolveInfo {
            objective: fx,
            iterations,
            converged,
            residual,
        },
    )
}

/// Projected step from `z` with Armijo backtracking on the step length.
fn backtrack(
    z: &[f64],
    fz: f64,
    g: &[f64],
    base_step: f64,
    objective: &impl Fn(&[f64]) -> f64,
    project: &impl Fn(&mut [f64]),
) -> Option<(Vec<f64>, f64)> {
    let mut step = base_step;
    let mut trial = vec![0.0; z.len()];
    for _ in 0..60 {
        for ((t, zi), gi) in trial.iter_mut().zip(z).zip(g) {
            *t = zi - step * gi;
        }
        project(&mut trial);
        let ft = objective(&trial);
        let (lin, sq) = z.iter().zip(&trial).zip(g).fold((0.0, 0.0), |(lin, sq), ((zi, ti), gi)| {
            (lin + gi * (ti - zi), sq + (ti - zi) * (ti - zi))
        });
        // Near the optimum the decrease is below the rounding error of f.
        let slack = 8.0 * f64::EPSILON * (fz.abs() + ft.abs());
        if ft <= fz + lin + sq / (2.0 * step) + slack {
            return Some((trial, ft));
        }
        step *= 0.5;
    }
    None
}
