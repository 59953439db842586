use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::predict::gbrt::{GbrtLearner, GbrtParams};
use crate::predict::linear::{LassoLearner, LinearParams, OlsLearner};
use crate::predict::lookup::{LookupLearner, LookupParams};
use crate::predict::Matrix;

/// Learner family plus hyperparameters. Serialized with a `kind` tag.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum ModelKind {
    Ols,
    Lasso {
        #[serde(default = "defaults::lambda")]
        lambda: f64,
    },
    Gbrt {
        #[serde(default = "defaults::n_trees")]
        n_trees: usize,
        #[serde(default = "defaults::max_depth")]
        max_depth: usize,
        #[serde(default = "defaults::shrinkage")]
        shrinkage: f64,
        #[serde(default = "defaults::min_leaf")]
        min_leaf: usize,
    },
    /// Nearest-neighbour table over the training inputs.
    Lookup,
}

mod defaults {
    pub fn n_trees() -> usize {
        200
    }
    pub fn max_depth() -> usize {
        3
    }
    pub fn shrinkage() -> f64 {
        0.1
    }
    pub fn min_leaf() -> usize {
        2
    }
    pub fn lambda() -> f64 {
        1e-3
    }
}

impl ModelKind {
    pub fn gbrt_default() -> Self {
        ModelKind::Gbrt {
            n_trees: defaults::n_trees(),
            max_depth: defaults::max_depth(),
            shrinkage: defaults::shrinkage(),
            min_leaf: defaults::min_leaf(),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            ModelKind::Ols => "ols",
            ModelKind::Lasso { .. } => "lasso",
            ModelKind::Gbrt { .. } => "gbrt",
            ModelKind::Lookup => "lookup",
        }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            ModelKind::Ols | ModelKind::Lookup => Ok(()),
            ModelKind::Lasso { lambda } => {
                if lambda.is_finite() && lambda >= 0.0 {
                    Ok(())
                } else {
                    Err(Error::InvalidInput(format!(
                        "lasso lambda must be >= 0, got {lambda}"
                    )))
                }
            }
            ModelKind::Gbrt {
                n_trees,
                shrinkage,
                min_leaf,
                ..
            } => {
                if n_trees == 0 {
                    return Err(Error::InvalidInput("gbrt n_trees must be >= 1".into()));
                }
                if !(shrinkage > 0.0 && shrinkage <= 1.0) {
                    return Err(Error::InvalidInput(format!(
                        "gbrt shrinkage must lie in (0, 1], got {shrinkage}"
                    )));
                }
                if min_leaf == 0 {
                    return Err(Error::InvalidInput("gbrt min_leaf must be >= 1".into()));
                }
                Ok(())
            }
        }
    }

    /// The learner implementing this kind.
    pub fn learner(&self) -> Result<Box<dyn Learner>> {
        self.validate()?;
        Ok(match *self {
            ModelKind::Ols => Box::new(OlsLearner),
            ModelKind::Lasso { lambda } => Box::new(LassoLearner::new(lambda)),
            ModelKind::Gbrt {
                n_trees,
                max_depth,
                shrinkage,
                min_leaf,
            } => Box::new(GbrtLearner {
                n_trees,
                max_depth,
                shrinkage,
                min_leaf,
            }),
            ModelKind::Lookup => Box::new(LookupLearner),
        })
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ModelKind::Ols | ModelKind::Lookup => f.write_str(self.name()),
            ModelKind::Lasso { lambda } => write!(f, "lasso(lambda={lambda})"),
            ModelKind::Gbrt {
                n_trees,
                max_depth,
                shrinkage,
                min_leaf,
            } => write!(
                f,
                "gbrt(n_trees={n_trees}, max_depth={max_depth}, shrinkage={shrinkage}, min_leaf={min_leaf})"
            ),
        }
    }
}

/// Fitted parameters of any learner.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "lowercase")]
pub enum ModelParams {
    Linear(LinearParams),
    Gbrt(GbrtParams),
    Lookup(LookupParams),
}

impl ModelParams {
    pub fn as_regressor(&self) -> &dyn Regressor {
        match self {
            ModelParams::Linear(p) => p,
            ModelParams::Gbrt(p) => p,
            ModelParams::Lookup(p) => p,
        }
    }
}

/// Something that can be trained on a design matrix.
pub trait Learner: Send + Sync {
    fn kind(&self) -> ModelKind;

    fn fit(&self, x: &Matrix, y: &[f64], seed: u64) -> Result<ModelParams>;
}

/// A fitted function of one input row.
pub trait Regressor {
    /// Checks internal consistency against the expected input width.
    fn check_dim(&self, dim: usize) -> Result<()>;

    fn predict_row(&self, x: &[f64]) -> f64;
}

type Builder = Box<dyn Fn(&serde_json::Value) -> Result<Box<dyn Learner>> + Send + Sync>;

/// Learners by name. Hyperparameters come in as a JSON object.
pub struct LearnerRegistry {
    builders: BTreeMap<String, Builder>,
}

impl Default for LearnerRegistry {
    fn default() -> Self {
        let mut r = Self {
            builders: BTreeMap::new(),
        };
        for name in ["ols", "lasso", "gbrt", "lookup"] {
            r.register(name, move |params| {
                let mut obj = match params {
                    serde_json::Value::Null => serde_json::Map::new(),
                    serde_json::Value::Object(m) => m.clone(),
                    other => {
                        return Err(Error::InvalidInput(format!(
                            "hyperparameters for `{name}` must be an object, got {other}"
                        )))
                    }
                };
                obj.insert("kind".into(), name.into());
                let kind: ModelKind = serde_json::from_value(serde_json::Value::Object(obj))
                    .map_err(|e| Error::InvalidInput(format!("`{name}` hyperparameters: {e}")))?;
                kind.learner()
            });
        }
        r
    }
}

impl LearnerRegistry {
    pub fn register<F>(&mut self, name: &str, build: F)
    where
        F: Fn(&serde_json::Value) -> Result<Box<dyn Learner>> + Send + Sync + 'static,
    {
        self.builders.insert(name.to_string(), Box::new(build));
    }

    pub fn build(&self, name: &str, params: &serde_json::Value) -> Result<Box<dyn Learner>> {
        let b = self.builders.get(name).ok_or_else(|| Error::Unknown {
            what: "model kind",
            name: name.to_string(),
        })?;
        b(params)
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.builders.keys().map(String::as_str)
    }
}
