//! Ordinary least squares and lasso.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::predict::learner::{Learner, ModelKind, ModelParams, Regressor};
use crate::predict::Matrix;

/// Ridge added to the standardized normal equations so that collinear
/// columns do not make the system singular.
const OLS_RIDGE: f64 = 1e-8;
const LASSO_TOL: f64 = 1e-7;
const LASSO_MAX_SWEEPS: usize = 10_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearParams {
    pub intercept: f64,
    pub coef: Vec<f64>,
}

impl Regressor for LinearParams {
    fn check_dim(&self, dim: usize) -> Result<()> {
        if self.coef.len() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                got: self.coef.len(),
            });
        }
        Ok(())
    }

    fn predict_row(&self, x: &[f64]) -> f64 {
        self.intercept + self.coef.iter().zip(x).map(|(b, v)| b * v).sum::<f64>()
    }
}

fn column_means(x: &Matrix) -> Vec<f64> {
    let n = x.n_rows() as f64;
    let mut means = vec![0.0; x.n_cols()];
    for row in x.rows() {
        for (m, v) in means.iter_mut().zip(row) {
            *m += v;
        }
    }
    means.iter_mut().for_each(|m| *m /= n);
    means
}

pub struct OlsLearner;

impl Learner for OlsLearner {
    fn kind(&self) -> ModelKind {
        ModelKind::Ols
    }

    fn fit(&self, x: &Matrix, y: &[f64], _seed: u64) -> Result<ModelParams> {
        fit_ols(x, y).map(ModelParams::Linear)
    }
}

/// Least squares with an unpenalized intercept, solved on centered and
/// scaled columns via Cholesky.
pub fn fit_ols(x: &Matrix, y: &[f64]) -> Result<LinearParams> {
    let (n, d) = (x.n_rows(), x.n_cols());
    if n < d || n < 1 {
        return Err(Error::InvalidInput(format!(
            "ols needs at least as many rows as columns (n={n}, d={d})"
        )));
    }
    let x_mean = column_means(x);
    let y_mean = y.iter().sum::<f64>() / n as f64;
    let mut scale = vec![0.0; d];
    for row in x.rows() {
        for ((s, v), m) in scale.iter_mut().zip(row).zip(&x_mean) {
            *s += (v - m) * (v - m);
        }
    }
    for s in &mut scale {
        let sd = (*s / n as f64).sqrt();
        *s = if sd > 0.0 { sd } else { 0.0 };
    }
    let z = DMatrix::from_fn(n, d, |i, j| {
        if scale[j] > 0.0 {
            (x.get(i, j) - x_mean[j]) / scale[j]
        } else {
            0.0
        }
    });
    let yc = DVector::from_iterator(n, y.iter().map(|v| v - y_mean));
    let gram = z.transpose() * &z;
    let mut ridged = gram.clone();
    for j in 0..d {
        ridged[(j, j)] += OLS_RIDGE * n as f64;
    }
    let rhs = z.transpose() * yc;
    let chol = ridged
        .cholesky()
        .ok_or_else(|| Error::Numerical("normal equations are not positive definite".into()))?;
    let mut w = chol.solve(&rhs);
    // refinement against the unregularized system removes the ridge bias
    for _ in 0..3 {
        let r = &rhs - &gram * &w;
        w += chol.solve(&r);
    }
    let coef: Vec<f64> = (0..d)
        .map(|j| if scale[j] > 0.0 { w[j] / scale[j] } else { 0.0 })
        .collect();
    let intercept = y_mean - coef.iter().zip(&x_mean).map(|(b, m)| b * m).sum::<f64>();
    Ok(LinearParams { intercept, coef })
}

pub struct LassoLearner {
    lambda: f64,
}

impl LassoLearner {
    pub fn new(lambda: f64) -> Self {
        Self { lambda }
    }
}

impl Learner for LassoLearner {
    fn kind(&self) -> ModelKind {
        ModelKind::Lasso {
            lambda: self.lambda,
        }
    }

    fn fit(&self, x: &Matrix, y: &[f64], _seed: u64) -> Result<ModelParams> {
        fit_lasso(x, y, self.lambda).map(|(p, _)| ModelParams::Linear(p))
    }
}

/// Smallest penalty at which every lasso coefficient is zero:
/// `max_j |x_jᵀ y| / n` on centered data.
pub fn lasso_lambda_max(x: &Matrix, y: &[f64]) -> f64 {
    let n = x.n_rows() as f64;
    let x_mean = column_means(x);
    let y_mean = y.iter().sum::<f64>() / n;
    (0..x.n_cols())
        .map(|j| {
            let dot: f64 = x
                .rows()
                .zip(y)
                .map(|(row, yi)| (row[j] - x_mean[j]) * (yi - y_mean))
                .sum();
            dot.abs() / n
        })
        .fold(0.0, f64::max)
}

fn soft_threshold(v: f64, t: f64) -> f64 {
    if v > t {
        v - t
    } else if v < -t {
        v + t
    } else {
        0.0
    }
}

/// Cyclic coordinate descent on `(1/2n)‖y − b − Xβ‖² + λ‖β‖₁`.
/// Returns the parameters and the number of sweeps taken.
pub fn fit_lasso(x: &Matrix, y: &[f64], lambda: f64) -> Result<(LinearParams, usize)> {
    let (n, d) = (x.n_rows(), x.n_cols());
    if n < 2 {
        return Err(Error::InvalidInput("lasso needs at least 2 rows".into()));
    }
    if !(lambda.is_finite() && lambda >= 0.0) {
        return Err(Error::InvalidInput(format!(
            "lambda must be >= 0, got {lambda}"
        )));
    }
    let nf = n as f64;
    let x_mean = column_means(x);
    let y_mean = y.iter().sum::<f64>() / nf;
    // column-major centered copy
    let cols: Vec<Vec<f64>> = (0..d)
        .map(|j| x.rows().map(|row| row[j] - x_mean[j]).collect())
        .collect();
    let sq: Vec<f64> = cols
        .iter()
        .map(|c| c.iter().map(|v| v * v).sum::<f64>() / nf)
        .collect();
    let mut beta = vec![0.0; d];
    let mut resid: Vec<f64> = y.iter().map(|v| v - y_mean).collect();
    let mut sweeps = 0;
    while sweeps < LASSO_MAX_SWEEPS {
        sweeps += 1;
        let mut max_step: f64 = 0.0;
        for j in 0..d {
            if sq[j] == 0.0 {
                continue;
            }
            let col = &cols[j];
            let old = beta[j];
            let rho = col.iter().zip(&resid).map(|(a, r)| a * r).sum::<f64>() / nf + sq[j] * old;
            let new = soft_threshold(rho, lambda) / sq[j];
            let step = new - old;
            if step != 0.0 {
                for (r, a) in resid.iter_mut().zip(col) {
                    *r -= a * step;
                }
                beta[j] = new;
                max_step = max_step.max(step.abs());
            }
        }
        if max_step < LASSO_TOL {
            break;
        }
    }
    let intercept = y_mean - beta.iter().zip(&x_mean).map(|(b, m)| b * m).sum::<f64>();
    Ok((
        LinearParams {
            intercept,
            coef: beta,
        },
        sweeps,
    ))
}
