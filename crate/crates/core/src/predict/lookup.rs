//! Nearest-neighbour lookup table.
//!
//! Returns the target of the closest stored training row (Euclidean,
//! ties to the earliest row). Exact on any input seen during training,
//! which makes it the reference model for oracle-equivalence checks.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::predict::learner::{Learner, ModelKind, ModelParams, Regressor};
use crate::predict::Matrix;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LookupParams {
    pub inputs: Vec<Vec<f64>>,
    pub targets: Vec<f64>,
}

impl Regressor for LookupParams {
    fn check_dim(&self, dim: usize) -> Result<()> {
        if self.inputs.len() != self.targets.len() || self.inputs.is_empty() {
            return Err(Error::Validation("lookup table is empty or ragged".into()));
        }
        if let Some(r) = self.inputs.iter().find(|r| r.len() != dim) {
            return Err(Error::DimensionMismatch {
                expected: dim,
                got: r.len(),
            });
        }
        Ok(())
    }

    fn predict_row(&self, x: &[f64]) -> f64 {
        let mut best = (f64::INFINITY, 0usize);
        for (i, r) in self.inputs.iter().enumerate() {
            let d: f64 = r.iter().zip(x).map(|(a, b)| (a - b) * (a - b)).sum();
            if d < best.0 {
                best = (d, i);
                if d == 0.0 {
                    break;
                }
            }
        }
        self.targets[best.1]
    }
}

pub struct LookupLearner;

impl Learner for LookupLearner {
    fn kind(&self) -> ModelKind {
        ModelKind::Lookup
    }

    fn fit(&self, x: &Matrix, y: &[f64], _seed: u64) -> Result<ModelParams> {
        if x.n_rows() == 0 {
            return Err(Error::InvalidInput("lookup needs at least one row".into()));
        }
        Ok(ModelParams::Lookup(LookupParams {
            inputs: x.rows().map(<[f64]>::to_vec).collect(),
            targets: y.to_vec(),
        }))
    }
}
