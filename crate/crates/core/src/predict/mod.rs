//! Energy and execution-time regressors.
//!
//! Learners are looked up by name in a [`LearnerRegistry`] and produce
//! [`ModelParams`]; a [`FittedModel`] wraps those parameters with the input
//! schema, normalization and target transform so it can be persisted and
//! served on its own.

mod design;
mod eval;
pub mod gbrt;
mod learner;
pub mod linear;
pub mod lookup;
mod model;

use crate::error::{Error, Result};

pub use design::{
    default_profiles, design_matrix, input_names, model_input, train_model, DesignMatrix,
    TrainOptions, CORE_CLOCK_INPUT, MEM_CLOCK_INPUT,
};
pub use eval::{
    cross_validate, evaluate, evaluate_dataset, evaluate_grouped, fold_assignment, rmse, EvalReport,
};
pub use learner::{Learner, LearnerRegistry, ModelKind, ModelParams, Regressor};
pub use model::{
    fit, load_model, save_model, FitSpec, FittedModel, Target, TargetTransform, TrainingMetadata,
    MODEL_FORMAT_VERSION,
};

/// Dense row-major matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    n_rows: usize,
    n_cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn new(n_rows: usize, n_cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != n_rows * n_cols {
            return Err(Error::DimensionMismatch {
                expected: n_rows * n_cols,
                got: data.len(),
            });
        }
        Ok(Self {
            n_rows,
            n_cols,
            data,
        })
    }

    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let n_cols = rows.first().map_or(0, |r| r.as_ref().len());
        let mut data = Vec::with_capacity(rows.len() * n_cols);
        for r in rows {
            let r = r.as_ref();
            if r.len() != n_cols {
                return Err(Error::DimensionMismatch {
                    expected: n_cols,
                    got: r.len(),
                });
            }
            data.extend_from_slice(r);
        }
        Ok(Self {
            n_rows: rows.len(),
            n_cols,
            data,
        })
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n_cols + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.n_cols..(i + 1) * self.n_cols]
    }

    pub fn rows(&self) -> impl ExactSizeIterator<Item = &[f64]> + '_ {
        (0..self.n_rows).map(move |i| self.row(i))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    /// Keeps the listed rows, in order.
    pub fn select_rows(&self, idx: &[usize]) -> Matrix {
        let mut data = Vec::with_capacity(idx.len() * self.n_cols);
        for &i in idx {
            data.extend_from_slice(self.row(i));
        }
        Matrix {
            n_rows: idx.len(),
            n_cols: self.n_cols,
            data,
        }
    }
}
