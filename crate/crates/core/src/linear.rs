//! Ridge and lasso regression on standardized features.
//!
//! Both fits standardize `X` internally (population standard deviation)
//! and fit the intercept as the mean of `y`, unpenalized. Ridge solves
//!
//! ```text
//! (ZᵀZ + αI) β = Zᵀ(y − ȳ)
//! ```
//!
//! by Cholesky factorization. Lasso minimizes
//!
//! ```text
//! (1/2n)‖y − ȳ − Zβ‖² + α‖β‖₁
//! ```
//!
//! with cyclic coordinate descent in input column order.

use nalgebra::{DMatrix, DVector};
use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Penalty grid searched for both linear families.
pub const ALPHA_GRID: [f64; 12] = [
    0.001, 0.01, 0.1, 1.0, 10.0, 100.0, 1000.0, 2000.0, 3000.0, 4000.0, 5000.0, 10000.0,
];

pub const LASSO_TOLERANCE: f64 = 1e-7;
pub const LASSO_MAX_SWEEPS: usize = 10_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LinearKind {
    Ridge,
    Lasso,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinearHyperparams {
    pub alpha: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearModel {
    pub kind: LinearKind,
    pub alpha: f64,
    /// Coefficients in standardized feature space.
    pub coefficients: Vec<f64>,
    pub intercept: f64,
    pub feature_means: Vec<f64>,
    /// 1.0 for zero-variance columns, which always get a zero coefficient.
    pub feature_sds: Vec<f64>,
    pub converged: bool,
    pub sweeps: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Standardized {
    pub z: Array2<f64>,
    pub means: Vec<f64>,
    pub sds: Vec<f64>,
    /// Zero-variance columns; their `z` is all zeros and `sds` entry 1.
    pub constant: Vec<bool>,
}

/// Centers and scales every column to mean 0, population sd 1.
pub fn standardize(x: ArrayView2<f64>) -> Standardized {
    let n = x.nrows().max(1) as f64;
    let p = x.ncols();
    let mut z = Array2::zeros(x.raw_dim());
    let mut means = Vec::with_capacity(p);
    let mut sds = Vec::with_capacity(p);
    let mut constant = Vec::with_capacity(p);
    for (j, col) in x.axis_iter(Axis(1)).enumerate() {
        let mean = col.sum() / n;
        let var = col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        let sd = var.sqrt();
        let is_const = sd <= 1e-12 * mean.abs().max(1.0);
        let scale = if is_const { 1.0 } else { sd };
        if !is_const {
            z.column_mut(j)
                .iter_mut()
                .zip(col.iter())
                .for_each(|(zv, xv)| *zv = (xv - mean) / scale);
        }
        means.push(mean);
        sds.push(scale);
        constant.push(is_const);
    }
    Standardized {
        z,
        means,
        sds,
        constant,
    }
}

pub fn soft_threshold(z: f64, gamma: f64) -> f64 {
    debug_assert!(gamma >= 0.0);
    if z > gamma {
        z - gamma
    } else if z < -gamma {
        z + gamma
    } else {
        0.0
    }
}

fn check_fit_input(x: ArrayView2<f64>, y: ArrayView1<f64>, alpha: f64) -> Result<()> {
    if x.nrows() != y.len() {
        return Err(Error::Validation(format!(
            "X has {} rows but y has {}",
            x.nrows(),
            y.len()
        )));
    }
    if x.nrows() < 2 {
        return Err(Error::InsufficientData("linear fit needs at least 2 rows".into()));
    }
    if !(alpha >= 0.0 && alpha.is_finite()) {
        return Err(Error::Config(format!("alpha must be finite and >= 0, got {alpha}")));
    }
    Ok(())
}

pub fn fit_ridge(x: ArrayView2<f64>, y: ArrayView1<f64>, hp: LinearHyperparams) -> Result<LinearModel> {
    check_fit_input(x, y, hp.alpha)?;
    let std = standardize(x);
    let y_mean = y.mean().expect("nonempty");
    let yc = y.mapv(|v| v - y_mean);
    let active: Vec<usize> = (0..x.ncols()).filter(|&j| !std.constant[j]).collect();
    let mut beta = vec![0.0; x.ncols()];
    if !active.is_empty() {
        let za = std.z.select(Axis(1), &active);
        let sol = ridge_solve(za.view(), yc.view(), hp.alpha)?;
        for (k, &j) in active.iter().enumerate() {
            beta[j] = sol[k];
        }
    }
    Ok(LinearModel {
        kind: LinearKind::Ridge,
        alpha: hp.alpha,
        coefficients: beta,
        intercept: y_mean,
        feature_means: std.means,
        feature_sds: std.sds,
        converged: true,
        sweeps: 0,
    })
}

/// Solves `(ZᵀZ + αI)β = Zᵀy` by Cholesky.
fn ridge_solve(z: ArrayView2<f64>, y: ArrayView1<f64>, alpha: f64) -> Result<Vec<f64>> {
    let (n, p) = z.dim();
    let zm = DMatrix::from_fn(n, p, |i, j| z[[i, j]]);
    let yv = DVector::from_iterator(n, y.iter().copied());
    let mut gram = zm.transpose() * &zm;
    for j in 0..p {
        gram[(j, j)] += alpha;
    }
    let rhs = zm.transpose() * yv;
    let max_diag = (0..p).map(|j| gram[(j, j)]).fold(0.0, f64::max);
    let chol = gram.clone().cholesky().ok_or_else(singular_error)?;
    // A pivot this small relative to the diagonal means the system is
    // numerically rank deficient.
    let l = chol.l();
    let min_pivot = (0..p).map(|j| l[(j, j)] * l[(j, j)]).fold(f64::INFINITY, f64::min);
    if min_pivot <= 1e-10 * max_diag {
        return Err(singular_error());
    }
    let mut beta = chol.solve(&rhs);
    // One step of iterative refinement.
    let resid = &rhs - &gram * &beta;
    beta += chol.solve(&resid);
    Ok(beta.iter().copied().collect())
}

fn singular_error() -> Error {
    Error::Solver("normal equations are numerically singular; use alpha > 0".into())
}

/// Per-sweep diagnostics from the lasso solver.
#[derive(Debug, Clone, Default)]
pub struct LassoTrace {
    /// Objective value after each completed sweep.
    pub objective: Vec<f64>,
}

pub fn fit_lasso(x: ArrayView2<f64>, y: ArrayView1<f64>, hp: LinearHyperparams) -> Result<LinearModel> {
    fit_lasso_traced(x, y, hp, None)
}

pub fn fit_lasso_traced(
    x: ArrayView2<f64>,
    y: ArrayView1<f64>,
    hp: LinearHyperparams,
    trace: Option<&mut LassoTrace>,
) -> Result<LinearModel> {
    check_fit_input(x, y, hp.alpha)?;
    let std = standardize(x);
    let y_mean = y.mean().expect("nonempty");
    let yc = y.mapv(|v| v - y_mean);
    let (beta, sweeps, converged) = coordinate_descent(std.z.view(), yc.view(), hp.alpha, &std.constant, trace);
    if !converged {
        log::warn!(
            "lasso alpha={} did not converge in {LASSO_MAX_SWEEPS} sweeps",
            hp.alpha
        );
    }
    Ok(LinearModel {
        kind: LinearKind::Lasso,
        alpha: hp.alpha,
        coefficients: beta,
        intercept: y_mean,
        feature_means: std.means,
        feature_sds: std.sds,
        converged,
        sweeps,
    })
}

fn coordinate_descent(
    z: ArrayView2<f64>,
    yc: ArrayView1<f64>,
    alpha: f64,
    skip: &[bool],
    mut trace: Option<&mut LassoTrace>,
) -> (Vec<f64>, usize, bool) {
    let (n, p) = z.dim();
    let nf = n as f64;
    let col_sq: Vec<f64> = (0..p).map(|j| z.column(j).dot(&z.column(j)) / nf).collect();
    let mut beta = vec![0.0; p];
    let mut resid = yc.to_owned();
    for sweep in 1..=LASSO_MAX_SWEEPS {
        let mut max_change: f64 = 0.0;
        for j in 0..p {
            if skip[j] || col_sq[j] == 0.0 {
                continue;
            }
            let col = z.column(j);
            let old = beta[j];
            let rho = col.dot(&resid) / nf + col_sq[j] * old;
            let new = soft_threshold(rho, alpha) / col_sq[j];
            if new != old {
                resid.scaled_add(old - new, &col);
                beta[j] = new;
                max_change = max_change.max((new - old).abs());
            }
        }
        if let Some(t) = trace.as_deref_mut() {
            let l1: f64 = beta.iter().map(|b| b.abs()).sum();
            t.objective.push(resid.dot(&resid) / (2.0 * nf) + alpha * l1);
        }
        if max_change < LASSO_TOLERANCE {
            return (beta, sweep, true);
        }
    }
    (beta, LASSO_MAX_SWEEPS, false)
}

/// Largest violation of the lasso optimality conditions, in the scaled
/// objective: `|Zⱼᵀr|/n ≤ α` when `βⱼ = 0`, `Zⱼᵀr/n = α·sign(βⱼ)` otherwise.
pub fn lasso_kkt_residual(z: ArrayView2<f64>, yc: ArrayView1<f64>, beta: &[f64], alpha: f64) -> f64 {
    let n = z.nrows() as f64;
    let b = ArrayView1::from(beta);
    let resid = &yc - &z.dot(&b);
    (0..z.ncols())
        .map(|j| {
            let g = z.column(j).dot(&resid) / n;
            if beta[j] == 0.0 {
                (g.abs() - alpha).max(0.0)
            } else {
                (g - alpha * beta[j].signum()).abs()
            }
        })
        .fold(0.0, f64::max)
}

impl LinearModel {
    pub fn n_features(&self) -> usize {
        self.coefficients.len()
    }

    /// Standardized features of one row.
    pub fn standardize_row(&self, x: ArrayView1<f64>) -> Vec<f64> {
        x.iter()
            .zip(&self.feature_means)
            .zip(&self.feature_sds)
            .map(|((v, m), s)| (v - m) / s)
            .collect()
    }

    pub fn predict_row(&self, x: ArrayView1<f64>) -> f64 {
        self.intercept
            + self
                .standardize_row(x)
                .iter()
                .zip(&self.coefficients)
                .map(|(z, b)| z * b)
                .sum::<f64>()
    }

    pub fn predict(&self, x: ArrayView2<f64>) -> Result<Array1<f64>> {
        if x.ncols() != self.n_features() {
            return Err(Error::Dimension {
                expected: self.n_features(),
                got: x.ncols(),
            });
        }
        Ok(x.rows().into_iter().map(|r| self.predict_row(r)).collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use ndarray::{array, Array2};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_problem(seed: u64, n: usize, p: usize) -> (Array2<f64>, Array1<f64>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = Array2::from_shape_fn((n, p), |(_, j)| rng.random_range(-1.0..1.0) * (j + 1) as f64 * 10.0);
        let y = Array1::from_shape_fn(n, |i| {
            x.row(i).iter().enumerate().map(|(j, v)| v * (j as f64 - 1.5)).sum::<f64>()
                + rng.random_range(-1.0..1.0)
        });
        (x, y)
    }

    /// Least squares via SVD, an independent route from the Cholesky solve.
    fn ols_oracle(z: ArrayView2<f64>, yc: ArrayView1<f64>) -> Vec<f64> {
        let (n, p) = z.dim();
        let m = DMatrix::from_fn(n, p, |i, j| z[[i, j]]);
        let v = DVector::from_iterator(n, yc.iter().copied());
        m.svd(true, true).solve(&v, 1e-14).unwrap().iter().copied().collect()
    }

    #[test]
    fn standardize_hand_example() {
        let x = array![[1.0, 5.0], [2.0, 5.0], [3.0, 5.0]];
        let s = standardize(x.view());
        assert_eq!(s.means, vec![2.0, 5.0]);
        assert_abs_diff_eq!(s.z[[0, 0]], -1.224744871391589, epsilon = 1e-12);
        assert_abs_diff_eq!(s.z[[1, 0]], 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(s.z[[2, 0]], 1.224744871391589, epsilon = 1e-12);
        assert_eq!(s.constant, vec![false, true]);
        assert!(s.z.column(1).iter().all(|v| *v == 0.0));
    }

    #[test]
    fn standardize_is_idempotent() {
        let (x, _) = random_problem(3, 40, 4);
        let once = standardize(x.view());
        let twice = standardize(once.z.view());
        for (a, b) in once.z.iter().zip(twice.z.iter()) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-12);
        }
    }

    #[test]
    fn soft_threshold_cases() {
        assert_eq!(soft_threshold(3.0, 1.0), 2.0);
        assert_eq!(soft_threshold(-3.0, 1.0), -2.0);
        assert_eq!(soft_threshold(0.5, 1.0), 0.0);
    }

    #[test]
    fn ridge_alpha_zero_is_ols() {
        let (x, y) = random_problem(1, 50, 4);
        let m = fit_ridge(x.view(), y.view(), LinearHyperparams { alpha: 0.0 }).unwrap();
        let s = standardize(x.view());
        let yc = y.mapv(|v| v - y.mean().unwrap());
        for (a, b) in m.coefficients.iter().zip(ols_oracle(s.z.view(), yc.view())) {
            assert_abs_diff_eq!(*a, b, epsilon = 1e-9);
        }
    }

    #[test]
    fn ridge_identity_design_closed_form() {
        // With Z = I, (I + αI)β = y, so βᵢ = yᵢ/(1+α).
        let z = Array2::<f64>::eye(4);
        let y = array![1.0, -2.0, 0.5, 3.0];
        for alpha in [0.0, 0.1, 1.0, 10.0] {
            let b = ridge_solve(z.view(), y.view(), alpha).unwrap();
            for i in 0..4 {
                assert_abs_diff_eq!(b[i], y[i] / (1.0 + alpha), epsilon = 1e-14);
            }
        }
    }

    #[test]
    fn ridge_norm_shrinks_along_grid() {
        let (x, y) = random_problem(2, 60, 5);
        let norms: Vec<f64> = ALPHA_GRID
            .iter()
            .map(|&alpha| {
                let m = fit_ridge(x.view(), y.view(), LinearHyperparams { alpha }).unwrap();
                m.coefficients.iter().map(|b| b * b).sum::<f64>().sqrt()
            })
            .collect();
        for w in norms.windows(2) {
            assert!(w[1] <= w[0] + 1e-12, "{norms:?}");
        }
        assert!(norms[11] < norms[0]);
    }

    #[test]
    fn ridge_singular_without_penalty() {
        let x = array![[1.0, 2.0], [2.0, 4.0], [3.0, 6.0], [4.0, 8.0]];
        let y = array![1.0, 2.0, 3.0, 5.0];
        assert!(matches!(
            fit_ridge(x.view(), y.view(), LinearHyperparams { alpha: 0.0 }),
            Err(Error::Solver(_))
        ));
        assert!(fit_ridge(x.view(), y.view(), LinearHyperparams { alpha: 1.0 }).is_ok());
    }

    #[test]
    fn lasso_null_model_threshold() {
        let (x, y) = random_problem(4, 50, 3);
        let s = standardize(x.view());
        let yc = y.mapv(|v| v - y.mean().unwrap());
        let alpha_max = (0..3)
            .map(|j| s.z.column(j).dot(&yc).abs() / 50.0)
            .fold(0.0, f64::max);
        let m = fit_lasso(x.view(), y.view(), LinearHyperparams { alpha: alpha_max }).unwrap();
        assert!(m.coefficients.iter().all(|b| *b == 0.0));
        let preds = m.predict(x.view()).unwrap();
        assert!(preds.iter().all(|p| (*p - m.intercept).abs() < 1e-12));
    }

    #[test]
    fn lasso_alpha_zero_matches_ols() {
        let (x, y) = random_problem(5, 80, 4);
        let m = fit_lasso(x.view(), y.view(), LinearHyperparams { alpha: 0.0 }).unwrap();
        assert!(m.converged);
        let s = standardize(x.view());
        let yc = y.mapv(|v| v - y.mean().unwrap());
        for (a, b) in m.coefficients.iter().zip(ols_oracle(s.z.view(), yc.view())) {
            assert_abs_diff_eq!(*a, b, epsilon = 1e-6);
        }
    }

    #[test]
    fn lasso_orthonormal_design_is_soft_threshold() {
        // Columns of ±1 Walsh patterns: orthogonal, mean 0, ZᵀZ/n = I.
        let n = 8;
        let z = Array2::from_shape_fn((n, 3), |(i, j)| {
            if (i >> j) & 1 == 0 { 1.0 } else { -1.0 }
        });
        let y = array![3.0, -1.0, 2.0, 0.5, -2.0, 1.0, 4.0, -0.5];
        let yc = y.mapv(|v| v - y.mean().unwrap());
        for alpha in [0.01, 0.1, 0.3, 1.0] {
            let (beta, _, ok) = coordinate_descent(z.view(), yc.view(), alpha, &[false; 3], None);
            assert!(ok);
            for j in 0..3 {
                let expected = soft_threshold(z.column(j).dot(&yc) / n as f64, alpha);
                assert_abs_diff_eq!(beta[j], expected, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn lasso_kkt_and_monotone_objective() {
        let (x, y) = random_problem(6, 70, 6);
        let s = standardize(x.view());
        let yc = y.mapv(|v| v - y.mean().unwrap());
        let mut zeros_prev = 0;
        for &alpha in &ALPHA_GRID {
            let mut trace = LassoTrace::default();
            let m = fit_lasso_traced(x.view(), y.view(), LinearHyperparams { alpha }, Some(&mut trace)).unwrap();
            assert!(m.converged);
            assert!(lasso_kkt_residual(s.z.view(), yc.view(), &m.coefficients, alpha) <= 1e-5);
            for w in trace.objective.windows(2) {
                assert!(w[1] <= w[0] + 1e-12);
            }
            let zeros = m.coefficients.iter().filter(|b| **b == 0.0).count();
            assert!(zeros >= zeros_prev);
            zeros_prev = zeros;
        }
    }

    #[test]
    fn constant_columns_get_zero_coefficients() {
        let (mut x, y) = random_problem(7, 30, 3);
        x.column_mut(1).fill(4.2);
        for m in [
            fit_ridge(x.view(), y.view(), LinearHyperparams { alpha: 1.0 }).unwrap(),
            fit_lasso(x.view(), y.view(), LinearHyperparams { alpha: 0.01 }).unwrap(),
        ] {
            assert_eq!(m.coefficients[1], 0.0);
            assert!(m.feature_sds.iter().all(|s| *s > 0.0));
        }
    }

    #[test]
    fn predict_cases() {
        let m = LinearModel {
            kind: LinearKind::Ridge,
            alpha: 0.0,
            coefficients: vec![1.0, 0.0],
            intercept: 0.0,
            feature_means: vec![0.0, 0.0],
            feature_sds: vec![1.0, 1.0],
            converged: true,
            sweeps: 0,
        };
        assert_eq!(m.predict(array![[2.0, 99.0]].view()).unwrap()[0], 2.0);
        assert!(matches!(
            m.predict(array![[1.0, 2.0, 3.0]].view()),
            Err(Error::Dimension { expected: 2, got: 3 })
        ));

        // Exactly determined system reproduces the training targets.
        let x = array![[1.0, 0.0], [0.0, 2.0], [3.0, 1.0]];
        let y = array![1.0, 5.0, -2.0];
        let fit = fit_ridge(x.view(), y.view(), LinearHyperparams { alpha: 0.0 }).unwrap();
        for (p, t) in fit.predict(x.view()).unwrap().iter().zip(y.iter()) {
            assert_abs_diff_eq!(p, t, epsilon = 1e-10);
        }
    }

    #[test]
    fn model_json_fields() {
        let (x, y) = random_problem(8, 20, 2);
        let m = fit_lasso(x.view(), y.view(), LinearHyperparams { alpha: 0.1 }).unwrap();
        let v: serde_json::Value = serde_json::to_value(&m).unwrap();
        for key in ["kind", "alpha", "coefficients", "feature_means", "feature_sds", "intercept", "converged"] {
            assert!(v.get(key).is_some(), "{key}");
        }
        assert_eq!(v["kind"], "lasso");
    }
}
