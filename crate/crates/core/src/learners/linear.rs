//! Penalized least squares: ridge (closed form through the SVD) and lasso
//! (cyclic coordinate descent), with the penalty picked by K-fold
//! cross-validation. Importance is the coefficient magnitude.
//!
//! Both use the per-sample scaling
//!
//! ```text
//! lasso: (1/2N)‖y − Xβ‖² + λ‖β‖₁
//! ridge: (1/2N)‖y − Xβ‖² + (λ/2)‖β‖²   ⇒   (XᵀX + NλI) β = Xᵀy
//! ```
//!
//! so one λ grid, `[1e-4·λmax, λmax]` with `λmax = ‖Xᵀy‖∞ / N`, serves both.
//! Classification targets are handled one-vs-rest on 0/1 indicators.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::linalg::center_columns;
use super::Predictor;
use crate::artifact::FeatureRanking;
use crate::dataset::{TabularDataset, Target};
use crate::error::{invalid, Error, Result};

pub const DEFAULT_FOLDS: usize = 5;
pub const GRID_SIZE: usize = 50;
pub const GRID_RATIO: f64 = 1e-4;
const MAX_SWEEPS: usize = 100_000;
const CHANGE_TOL: f64 = 1e-10;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Penalty {
    L1,
    L2,
}

/// One fitted response: coefficients on the original feature scale.
#[derive(Clone, Debug, PartialEq)]
pub struct LinearModelFit {
    pub coefficients: Vec<f64>,
    pub intercept: f64,
    pub lambda: f64,
    pub penalty: Penalty,
}

impl LinearModelFit {
    fn predict_row(&self, x: &DMatrix<f64>, i: usize) -> f64 {
        self.intercept + self.coefficients.iter().enumerate().map(|(j, b)| b * x[(i, j)]).sum::<f64>()
    }
}

/// Regression fit, or one indicator fit per class (a single fit for two classes).
#[derive(Clone, Debug, PartialEq)]
pub struct LinearModel {
    pub fits: Vec<LinearModelFit>,
    pub n_classes: Option<usize>,
}

impl LinearModel {
    /// |β| for regression and binary targets; mean |β| across classes otherwise.
    pub fn importance(&self) -> Vec<f64> {
        let p = self.fits[0].coefficients.len();
        let m = self.fits.len() as f64;
        (0..p).map(|j| self.fits.iter().map(|f| f.coefficients[j].abs()).sum::<f64>() / m).collect()
    }

    pub fn ranking(&self) -> Result<FeatureRanking> {
        FeatureRanking::from_scores(self.importance())
    }
}

impl Predictor for LinearModel {
    fn predict(&self, x: &DMatrix<f64>) -> Vec<f64> {
        (0..x.nrows())
            .map(|i| match self.n_classes {
                None => self.fits[0].predict_row(x, i),
                Some(2) => f64::from(u8::from(self.fits[0].predict_row(x, i) > 0.5)),
                Some(_) => {
                    let mut best = (f64::NEG_INFINITY, 0usize);
                    for (c, f) in self.fits.iter().enumerate() {
                        let s = f.predict_row(x, i);
                        if s > best.0 {
                            best = (s, c);
                        }
                    }
                    best.1 as f64
                }
            })
            .collect()
    }

    fn is_classifier(&self) -> bool {
        self.n_classes.is_some()
    }
}

fn soft_threshold(z: f64, t: f64) -> f64 {
    if z > t {
        z - t
    } else if z < -t {
        z + t
    } else {
        0.0
    }
}

/// `(XᵀX + αI)⁻¹ Xᵀy` without intercept, via the thin SVD of X.
pub fn ridge_coefficients(x: &DMatrix<f64>, y: &[f64], alpha: f64) -> Result<Vec<f64>> {
    if alpha < 0.0 {
        return invalid("ridge penalty must be >= 0");
    }
    let svd = RidgeSolver::new(x, y);
    Ok(svd.solve(alpha))
}

/// Reusable SVD factorization for solving ridge along a penalty path.
struct RidgeSolver {
    v: DMatrix<f64>,
    s: Vec<f64>,
    uty: Vec<f64>,
}

impl RidgeSolver {
    fn new(x: &DMatrix<f64>, y: &[f64]) -> Self {
        let svd = x.clone().svd(true, true);
        let u = svd.u.expect("U requested");
        let v = svd.v_t.expect("Vt requested").transpose();
        let yv = DVector::from_column_slice(y);
        let uty = (u.transpose() * yv).iter().copied().collect();
        Self { v, s: svd.singular_values.iter().copied().collect(), uty }
    }

    fn solve(&self, alpha: f64) -> Vec<f64> {
        let p = self.v.nrows();
        let mut beta = vec![0.0; p];
        let tol = self.s.iter().fold(0.0f64, |m, &s| m.max(s)) * 1e-13;
        for (k, &s) in self.s.iter().enumerate() {
            if s <= tol && alpha == 0.0 {
                continue;
            }
            let w = s / (s * s + alpha) * self.uty[k];
            if w == 0.0 {
                continue;
            }
            for (j, b) in beta.iter_mut().enumerate() {
                *b += self.v[(j, k)] * w;
            }
        }
        beta
    }
}

/// Lasso by cyclic coordinate descent, optionally warm-started.
pub fn lasso_coefficients(x: &DMatrix<f64>, y: &[f64], lambda: f64, warm: Option<&[f64]>) -> Result<Vec<f64>> {
    if lambda < 0.0 {
        return invalid("lasso penalty must be >= 0");
    }
    let (n, p) = x.shape();
    let nf = n as f64;
    let col_sq: Vec<f64> = x.column_iter().map(|c| c.norm_squared() / nf).collect();
    let mut beta = warm.map_or_else(|| vec![0.0; p], <[f64]>::to_vec);
    let mut resid: Vec<f64> = (0..n)
        .map(|i| y[i] - (0..p).map(|j| x[(i, j)] * beta[j]).sum::<f64>())
        .collect();
    let scale = y.iter().map(|v| v.abs()).fold(0.0, f64::max).max(1e-300);
    for _ in 0..MAX_SWEEPS {
        let mut max_change = 0.0f64;
        for j in 0..p {
            if col_sq[j] == 0.0 {
                beta[j] = 0.0;
                continue;
            }
            let col = x.column(j);
            let rho = col.iter().zip(&resid).map(|(a, r)| a * r).sum::<f64>() / nf + col_sq[j] * beta[j];
            let new = soft_threshold(rho, lambda) / col_sq[j];
            let delta = new - beta[j];
            if delta != 0.0 {
                for (r, a) in resid.iter_mut().zip(col.iter()) {
                    *r -= a * delta;
                }
                beta[j] = new;
                max_change = max_change.max(delta.abs() * col_sq[j].sqrt());
            }
        }
        if max_change <= CHANGE_TOL * scale {
            return Ok(beta);
        }
    }
    Err(Error::NonConvergence { sweeps: MAX_SWEEPS, gap: duality_gap(x, y, &beta, &resid, lambda) })
}

fn duality_gap(x: &DMatrix<f64>, y: &[f64], beta: &[f64], resid: &[f64], lambda: f64) -> f64 {
    let nf = x.nrows() as f64;
    let xtr = x.column_iter().map(|c| c.iter().zip(resid).map(|(a, r)| a * r).sum::<f64>().abs()).fold(0.0, f64::max);
    let r2: f64 = resid.iter().map(|r| r * r).sum();
    let l1: f64 = beta.iter().map(|b| b.abs()).sum();
    let cst = if xtr > nf * lambda { nf * lambda / xtr } else { 1.0 };
    let ry: f64 = resid.iter().zip(y).map(|(r, v)| r * v).sum();
    (0.5 * r2 * (1.0 + cst * cst) + nf * lambda * l1 - cst * ry) / nf
}

/// `‖Xᵀy‖∞ / N` on already-centered data.
pub fn lambda_max(x: &DMatrix<f64>, y: &[f64]) -> f64 {
    let nf = x.nrows() as f64;
    x.column_iter()
        .map(|c| c.iter().zip(y).map(|(a, b)| a * b).sum::<f64>().abs())
        .fold(0.0, f64::max)
        / nf
}

/// `size` log-spaced values from `lmax` down to `ratio·lmax`.
pub fn lambda_grid(lmax: f64, size: usize, ratio: f64) -> Vec<f64> {
    if size == 1 {
        return vec![lmax];
    }
    let (hi, lo) = (lmax.ln(), (lmax * ratio).ln());
    (0..size).map(|i| (hi + (lo - hi) * i as f64 / (size - 1) as f64).exp()).collect()
}

/// Contiguous fold boundaries over `n` rows.
fn folds(n: usize, k: usize) -> Vec<std::ops::Range<usize>> {
    let base = n / k;
    let extra = n % k;
    let mut start = 0;
    (0..k)
        .map(|f| {
            let len = base + usize::from(f < extra);
            let r = start..start + len;
            start += len;
            r
        })
        .collect()
}

fn rows_except(x: &DMatrix<f64>, y: &[f64], hold: &std::ops::Range<usize>) -> (DMatrix<f64>, Vec<f64>) {
    let keep: Vec<usize> = (0..x.nrows()).filter(|i| !hold.contains(i)).collect();
    let xs = DMatrix::from_fn(keep.len(), x.ncols(), |i, j| x[(keep[i], j)]);
    (xs, keep.iter().map(|&i| y[i]).collect())
}

struct PathFitter {
    penalty: Penalty,
}

impl PathFitter {
    /// Coefficients (on centered data) for every λ of the grid, warm-started.
    fn path(&self, xc: &DMatrix<f64>, yc: &[f64], grid: &[f64]) -> Result<Vec<Vec<f64>>> {
        let nf = xc.nrows() as f64;
        match self.penalty {
            Penalty::L2 => {
                let solver = RidgeSolver::new(xc, yc);
                Ok(grid.iter().map(|&l| solver.solve(nf * l)).collect())
            }
            Penalty::L1 => {
                let mut out: Vec<Vec<f64>> = Vec::with_capacity(grid.len());
                for &l in grid {
                    let beta = lasso_coefficients(xc, yc, l, out.last().map(Vec::as_slice))?;
                    out.push(beta);
                }
                Ok(out)
            }
        }
    }
}

fn center_vec(y: &[f64]) -> (Vec<f64>, f64) {
    let m = y.iter().sum::<f64>() / y.len() as f64;
    (y.iter().map(|v| v - m).collect(), m)
}

/// Fits one response with intercept, choosing λ by `folds`-fold CV (minimum
/// mean validation MSE, ties to the larger λ).
pub fn fit_penalized_cv(x: &DMatrix<f64>, y: &[f64], penalty: Penalty, n_folds: usize) -> Result<LinearModelFit> {
    let n = x.nrows();
    if n_folds < 2 || n <= n_folds {
        return invalid(format!("need more than {n_folds} training rows for {n_folds}-fold CV (have {n})"));
    }
    let (xc, means) = center_columns(x);
    let (yc, ymean) = center_vec(y);
    let lmax = lambda_max(&xc, &yc);
    let fitter = PathFitter { penalty };
    if lmax == 0.0 {
        return Ok(LinearModelFit { coefficients: vec![0.0; x.ncols()], intercept: ymean, lambda: 0.0, penalty });
    }
    let grid = lambda_grid(lmax, GRID_SIZE, GRID_RATIO);
    if grid.is_empty() {
        return invalid("empty penalty grid");
    }

    let mut loss = vec![0.0; grid.len()];
    for hold in folds(n, n_folds) {
        let (xt, yt) = rows_except(x, y, &hold);
        let (xtc, tmeans) = center_columns(&xt);
        let (ytc, tymean) = center_vec(&yt);
        let path = fitter.path(&xtc, &ytc, &grid)?;
        for (g, beta) in path.iter().enumerate() {
            let intercept = tymean - beta.iter().zip(&tmeans).map(|(b, m)| b * m).sum::<f64>();
            let mse: f64 = hold
                .clone()
                .map(|i| {
                    let pred = intercept + (0..x.ncols()).map(|j| beta[j] * x[(i, j)]).sum::<f64>();
                    (y[i] - pred).powi(2)
                })
                .sum::<f64>()
                / hold.len() as f64;
            loss[g] += mse / n_folds as f64;
        }
    }
    // Grid runs from large to small λ; strict improvement keeps ties at the larger λ.
    let mut best = 0;
    for g in 1..grid.len() {
        if loss[g] < loss[best] {
            best = g;
        }
    }
    let path = fitter.path(&xc, &yc, &grid[..=best])?;
    let beta = path.into_iter().last().expect("non-empty path");
    let intercept = ymean - beta.iter().zip(&means).map(|(b, m)| b * m).sum::<f64>();
    Ok(LinearModelFit { coefficients: beta, intercept, lambda: grid[best], penalty })
}

fn indicator(labels: &[usize], class: usize) -> Vec<f64> {
    labels.iter().map(|&l| f64::from(u8::from(l == class))).collect()
}

/// Cross-validated linear model on a supervised dataset.
pub fn fit_linear(train: &TabularDataset, penalty: Penalty, n_folds: usize) -> Result<LinearModel> {
    let x = train.features();
    match train.target() {
        Some(Target::Real(y)) => Ok(LinearModel { fits: vec![fit_penalized_cv(x, y, penalty, n_folds)?], n_classes: None }),
        Some(Target::Class { labels, classes }) => {
            let c = classes.len();
            let targets: Vec<usize> = if c == 2 { vec![1] } else { (0..c).collect() };
            let fits = targets
                .into_iter()
                .map(|cls| fit_penalized_cv(x, &indicator(labels, cls), penalty, n_folds))
                .collect::<Result<Vec<_>>>()?;
            Ok(LinearModel { fits, n_classes: Some(c) })
        }
        None => invalid("linear importance needs a target"),
    }
}

pub fn fit_ridge(train: &TabularDataset, n_folds: usize) -> Result<(FeatureRanking, LinearModel)> {
    let model = fit_linear(train, Penalty::L2, n_folds)?;
    Ok((model.ranking()?, model))
}

pub fn fit_lasso(train: &TabularDataset, n_folds: usize) -> Result<(FeatureRanking, LinearModel)> {
    let model = fit_linear(train, Penalty::L1, n_folds)?;
    Ok((model.ranking()?, model))
}
