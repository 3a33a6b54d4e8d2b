//! L1-penalized least squares by cyclic coordinate descent, with a block of
//! unpenalized columns (intercepts and controls) handled exactly.
//!
//! The unpenalized block is projected out first: minimizing over its
//! coefficients for fixed beta reduces the problem to a pure lasso on the
//! projected responses and regressors, and the block's coefficients are then
//! recovered by least squares on the residual. Penalized columns are
//! standardized to unit variance within the training sample; reported
//! coefficients are on the original scale.

use crate::linalg::{self, LinalgError, Mat};
use thiserror::Error;

/// Coordinate-descent convergence threshold on the max coefficient change.
pub const CD_TOL: f64 = 1e-7;
/// Grid spans lambda_max down to RATIO * lambda_max, log-spaced.
pub const LAMBDA_MIN_RATIO: f64 = 1e-4;
pub const DEFAULT_N_LAMBDA: usize = 100;
const MAX_CD_ITER: usize = 10_000;

#[derive(Debug, Error)]
pub enum LassoError {
    #[error("empty training set")]
    EmptyTrainingSet,
    #[error("unpenalized block is rank deficient (columns {0:?})")]
    DegenerateUnpenalized(Vec<usize>),
    #[error("no usable penalized columns (all zero after projection)")]
    AllColumnsZero,
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

#[derive(Debug, Clone)]
pub struct LassoFit {
    /// Penalized coefficients on the original scale, aligned with the input
    /// columns (dropped columns carry exactly zero).
    pub beta: Vec<f64>,
    /// Coefficients on the unpenalized block.
    pub unpenalized: Vec<f64>,
    pub lambda: f64,
    /// Penalized columns dropped for having no variance after projection.
    pub dropped: Vec<usize>,
}

impl LassoFit {
    pub fn nonzero_count(&self) -> usize {
        self.beta.iter().filter(|b| **b != 0.0).count()
    }

    pub fn predict_row(&self, u_row: &[f64], x_row: &[f64]) -> f64 {
        linalg::dot(u_row, &self.unpenalized) + linalg::dot(x_row, &self.beta)
    }
}

/// Pre-projected problem on which the path is solved.
struct Projected {
    /// standardized projected penalized columns, kept ones only (col-major)
    cols: Vec<Vec<f64>>,
    /// map kept index -> original column
    kept: Vec<usize>,
    dropped: Vec<usize>,
    scale: Vec<f64>,
    y_tilde: Vec<f64>,
    n: usize,
}

fn project(y: &[f64], u: &Mat, x: &Mat) -> Result<Projected, LassoError> {
    let n = y.len();
    if n == 0 {
        return Err(LassoError::EmptyTrainingSet);
    }
    let resid = |target: &[f64]| -> Result<Vec<f64>, LassoError> {
        match linalg::least_squares(u, target) {
            Ok(f) => Ok(f.residuals),
            Err(LinalgError::RankDeficient(cols)) => Err(LassoError::DegenerateUnpenalized(cols)),
            Err(e) => Err(e.into()),
        }
    };
    let y_tilde = resid(y)?;

    let p = x.cols();
    let mut cols = Vec::new();
    let mut kept = Vec::new();
    let mut dropped = Vec::new();
    let mut scale = Vec::new();
    let mut max_var = 0.0f64;
    let mut projected: Vec<(usize, Vec<f64>, f64)> = Vec::with_capacity(p);
    for j in 0..p {
        let xc = x.col(j);
        let xt = resid(&xc)?;
        let var = xt.iter().map(|v| v * v).sum::<f64>() / n as f64;
        max_var = max_var.max(var);
        projected.push((j, xt, var));
    }
    for (j, xt, var) in projected {
        if var <= 1e-12 * max_var.max(1e-300) {
            dropped.push(j);
        } else {
            let s = var.sqrt();
            cols.push(xt.iter().map(|v| v / s).collect());
            scale.push(s);
            kept.push(j);
        }
    }
    if cols.is_empty() {
        return Err(LassoError::AllColumnsZero);
    }
    Ok(Projected { cols, kept, dropped, scale, y_tilde, n })
}

/// Smallest lambda that zeroes every penalized coefficient.
fn lambda_max(p: &Projected) -> f64 {
    let n = p.n as f64;
    p.cols
        .iter()
        .map(|c| linalg::dot(c, &p.y_tilde).abs() / n)
        .fold(0.0f64, f64::max)
}

/// Log-spaced descending grid from lambda_max to LAMBDA_MIN_RATIO*lambda_max.
pub fn lambda_grid(lmax: f64, n_lambda: usize) -> Vec<f64> {
    assert!(n_lambda >= 2);
    let lmin = lmax * LAMBDA_MIN_RATIO;
    let (la, lb) = (lmax.ln(), lmin.ln());
    (0..n_lambda)
        .map(|i| (la + (lb - la) * i as f64 / (n_lambda - 1) as f64).exp())
        .collect()
}

/// Cyclic coordinate descent at one lambda, warm-started from `b`.
/// Columns are standardized, so the coordinate update is a plain soft
/// threshold of c_j - sum_{l != j} G_jl b_l.
fn descend(gram: &Mat, xty: &[f64], b: &mut [f64], lambda: f64) {
    let p = b.len();
    for _ in 0..MAX_CD_ITER {
        let mut max_delta = 0.0f64;
        for j in 0..p {
            let mut partial = xty[j];
            let grow = gram.row(j);
            for l in 0..p {
                if l != j && b[l] != 0.0 {
                    partial -= grow[l] * b[l];
                }
            }
            let new = soft_threshold(partial, lambda);
            let delta = (new - b[j]).abs();
            if delta > max_delta {
                max_delta = delta;
            }
            b[j] = new;
        }
        if max_delta < CD_TOL {
            break;
        }
    }
}

fn soft_threshold(z: f64, lambda: f64) -> f64 {
    if z > lambda {
        z - lambda
    } else if z < -lambda {
        z + lambda
    } else {
        0.0
    }
}

struct PathSolver {
    gram: Mat,
    xty: Vec<f64>,
    b: Vec<f64>,
}

impl PathSolver {
    fn new(p: &Projected) -> PathSolver {
        let k = p.cols.len();
        let n = p.n as f64;
        let mut gram = Mat::zeros(k, k);
        for i in 0..k {
            for j in i..k {
                let g = linalg::dot(&p.cols[i], &p.cols[j]) / n;
                gram[(i, j)] = g;
                gram[(j, i)] = g;
            }
        }
        let xty: Vec<f64> = p.cols.iter().map(|c| linalg::dot(c, &p.y_tilde) / n).collect();
        PathSolver { gram, xty, b: vec![0.0; k] }
    }

    /// Solve at `lambda`, warm-starting from the previous solution.
    fn solve(&mut self, lambda: f64) -> &[f64] {
        descend(&self.gram, &self.xty, &mut self.b, lambda);
        &self.b
    }
}

/// Recover original-scale beta and the exact unpenalized coefficients given
/// the standardized solution.
fn finish(y: &[f64], u: &Mat, x: &Mat, proj: &Projected, b_std: &[f64], lambda: f64) -> Result<LassoFit, LassoError> {
    let mut beta = vec![0.0; x.cols()];
    for (i, &j) in proj.kept.iter().enumerate() {
        beta[j] = b_std[i] / proj.scale[i];
    }
    let mut resid = y.to_vec();
    for (i, r) in resid.iter_mut().enumerate() {
        let row = x.row(i);
        for (j, &bj) in beta.iter().enumerate() {
            if bj != 0.0 {
                *r -= row[j] * bj;
            }
        }
    }
    let unpenalized = match linalg::least_squares(u, &resid) {
        Ok(f) => f.coef,
        Err(LinalgError::RankDeficient(cols)) => {
            return Err(LassoError::DegenerateUnpenalized(cols))
        }
        Err(e) => return Err(e.into()),
    };
    Ok(LassoFit { beta, unpenalized, lambda, dropped: proj.dropped.clone() })
}

/// Solve at a single lambda (used by tests and the shrinkage-limit path).
pub fn solve_at(y: &[f64], u: &Mat, x: &Mat, lambda: f64) -> Result<LassoFit, LassoError> {
    let proj = project(y, u, x)?;
    let mut solver = PathSolver::new(&proj);
    let b = solver.solve(lambda).to_vec();
    finish(y, u, x, &proj, &b, lambda)
}

#[derive(Debug, Clone)]
pub struct CvResult {
    pub fit: LassoFit,
    pub lambda_grid: Vec<f64>,
    pub cv_mse: Vec<f64>,
    pub chosen_index: usize,
}

/// Five-fold (or k-fold) cross-validated lasso: lambda minimizing the CV MSE,
/// then a refit on the full sample at that lambda. `fold_of` assigns each row
/// to a fold; rows of one firm must share a fold, which the caller enforces.
pub fn cv_lasso(
    y: &[f64],
    u: &Mat,
    x: &Mat,
    fold_of: &[usize],
    n_folds: usize,
    n_lambda: usize,
) -> Result<CvResult, LassoError> {
    assert_eq!(fold_of.len(), y.len());
    let full = project(y, u, x)?;
    let grid = lambda_grid(lambda_max(&full), n_lambda);

    let mut sq_err = vec![0.0f64; grid.len()];
    let mut counted = vec![0usize; grid.len()];
    for fold in 0..n_folds {
        let train_idx: Vec<usize> =
            (0..y.len()).filter(|&i| fold_of[i] % n_folds != fold).collect();
        let val_idx: Vec<usize> =
            (0..y.len()).filter(|&i| fold_of[i] % n_folds == fold).collect();
        if train_idx.is_empty() || val_idx.is_empty() {
            continue;
        }
        let yt: Vec<f64> = train_idx.iter().map(|&i| y[i]).collect();
        let ut = take_rows(u, &train_idx);
        let xt = take_rows(x, &train_idx);
        let proj = match project(&yt, &ut, &xt) {
            Ok(p) => p,
            // a fold can lose all variance in some column; skip it
            Err(LassoError::AllColumnsZero) => continue,
            Err(e) => return Err(e),
        };
        let mut solver = PathSolver::new(&proj);
        for (gi, &lambda) in grid.iter().enumerate() {
            let b = solver.solve(lambda).to_vec();
            let fit = match finish(&yt, &ut, &xt, &proj, &b, lambda) {
                Ok(f) => f,
                Err(_) => continue,
            };
            for &i in &val_idx {
                let pred = fit.predict_row(u.row(i), x.row(i));
                sq_err[gi] += (y[i] - pred) * (y[i] - pred);
                counted[gi] += 1;
            }
        }
    }

    let mut chosen = 0usize;
    let mut best = f64::INFINITY;
    let mut cv_mse = vec![f64::NAN; grid.len()];
    for (gi, (&se, &cnt)) in sq_err.iter().zip(&counted).enumerate() {
        if cnt == 0 {
            continue;
        }
        let mse = se / cnt as f64;
        cv_mse[gi] = mse;
        if mse < best {
            best = mse;
            chosen = gi;
        }
    }

    let mut solver = PathSolver::new(&full);
    let mut final_b = vec![0.0; full.cols.len()];
    for (gi, &lambda) in grid.iter().enumerate() {
        let b = solver.solve(lambda);
        if gi == chosen {
            final_b.copy_from_slice(b);
            break;
        }
    }
    let fit = finish(y, u, x, &full, &final_b, grid[chosen])?;
    Ok(CvResult { fit, lambda_grid: grid, cv_mse, chosen_index: chosen })
}

fn take_rows(m: &Mat, idx: &[usize]) -> Mat {
    let mut out = Mat::zeros(idx.len(), m.cols());
    for (r, &i) in idx.iter().enumerate() {
        out.row_mut(r).copy_from_slice(m.row(i));
    }
    out
}

/// Maximum KKT violation of a fit: stationarity of the unpenalized block plus
/// the subgradient conditions of the penalized block on the standardized
/// problem. Near-zero for a converged solution.
pub fn kkt_violation(y: &[f64], u: &Mat, x: &Mat, fit: &LassoFit) -> Result<f64, LassoError> {
    let proj = project(y, u, x)?;
    let n = proj.n as f64;
    // residual of the full model
    let mut resid = y.to_vec();
    for i in 0..y.len() {
        resid[i] -= fit.predict_row(u.row(i), x.row(i));
    }
    let mut worst = 0.0f64;
    // unpenalized stationarity: U'r = 0
    for j in 0..u.cols() {
        let g = linalg::dot(&u.col(j), &resid) / n;
        worst = worst.max(g.abs());
    }
    // penalized subgradient on standardized columns
    for (i, &j) in proj.kept.iter().enumerate() {
        let g = linalg::dot(&proj.cols[i], &resid) / n;
        let b_std = fit.beta[j] * proj.scale[i];
        let v = if b_std != 0.0 {
            (g - fit.lambda * b_std.signum()).abs()
        } else {
            (g.abs() - fit.lambda).max(0.0)
        };
        worst = worst.max(v);
    }
    Ok(worst)
}
