use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::predict::learner::{ModelKind, ModelParams};
use crate::predict::Matrix;
use crate::trace::types::fingerprint_names;
use crate::trace::NormStats;

/// Bumped whenever the persisted layout changes incompatibly.
pub const MODEL_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Target {
    Energy,
    Time,
    /// A plain regression target with no domain meaning.
    Raw,
}

impl Target {
    pub fn parse(s: &str) -> Option<Target> {
        match s {
            "energy" => Some(Target::Energy),
            "time" => Some(Target::Time),
            "raw" => Some(Target::Raw),
            _ => None,
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            Target::Energy => "energy",
            Target::Time => "time",
            Target::Raw => "raw",
        }
    }
}

impl fmt::Display for Target {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// How the regressor's raw output maps back to the target.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum TargetTransform {
    Identity,
    /// The regressor learns `y / Π x[features]` over the raw (unnormalized)
    /// inputs; predictions are multiplied back by the same product.
    RelativeTo {
        features: Vec<usize>,
    },
}

impl TargetTransform {
    fn scale(&self, x: &[f64]) -> Result<f64> {
        match self {
            TargetTransform::Identity => Ok(1.0),
            TargetTransform::RelativeTo { features } => {
                let s: f64 = features.iter().map(|&j| x[j]).product();
                if s.is_finite() && s > 0.0 {
                    Ok(s)
                } else {
                    Err(Error::Numerical(format!(
                        "target baseline must be finite and > 0, got {s}"
                    )))
                }
            }
        }
    }

    fn max_index(&self) -> Option<usize> {
        match self {
            TargetTransform::Identity => None,
            TargetTransform::RelativeTo { features } => features.iter().copied().max(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingMetadata {
    pub seed: u64,
    pub n_samples: usize,
    pub train_rmse: f64,
    /// Unix seconds; only recorded when explicitly requested so that model
    /// files are reproducible by default.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trained_at: Option<u64>,
}

/// A fitted regressor together with everything needed to apply it to a raw
/// input row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FittedModel {
    pub format_version: u32,
    pub kind: ModelKind,
    pub target: Target,
    pub input_names: Vec<String>,
    /// Hex SHA-256 of `input_names`.
    pub fingerprint: String,
    /// Applied to the whole input row before the regressor.
    pub input_norm: Option<NormStats>,
    pub target_transform: TargetTransform,
    pub params: ModelParams,
    pub metadata: TrainingMetadata,
}

/// Everything besides the data that goes into a fit.
#[derive(Debug, Clone)]
pub struct FitSpec {
    pub kind: ModelKind,
    pub target: Target,
    pub input_names: Vec<String>,
    pub normalize_inputs: bool,
    pub target_transform: TargetTransform,
    pub seed: u64,
}

/// Fits `kind` on a raw design matrix with generic input names
/// (`x0`, `x1`, ...), no input normalization and an identity target.
pub fn fit(kind: &ModelKind, x: &Matrix, y: &[f64], seed: u64) -> Result<FittedModel> {
    FittedModel::fit(
        x,
        y,
        FitSpec {
            kind: kind.clone(),
            target: Target::Raw,
            input_names: (0..x.n_cols()).map(|j| format!("x{j}")).collect(),
            normalize_inputs: false,
            target_transform: TargetTransform::Identity,
            seed,
        },
    )
}

impl FittedModel {
    pub fn fit(x: &Matrix, y: &[f64], spec: FitSpec) -> Result<Self> {
        let (n, d) = (x.n_rows(), x.n_cols());
        if y.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: y.len(),
            });
        }
        if spec.input_names.len() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                got: spec.input_names.len(),
            });
        }
        if n < 1 {
            return Err(Error::InvalidInput("cannot fit on an empty matrix".into()));
        }
        if x.as_slice().iter().chain(y).any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput(
                "training data contains non-finite values".into(),
            ));
        }
        if spec.target_transform.max_index().is_some_and(|j| j >= d) {
            return Err(Error::InvalidInput(
                "target transform references a missing column".into(),
            ));
        }
        let learner = spec.kind.learner()?;

        let scaled_y = x
            .rows()
            .zip(y)
            .map(|(row, v)| spec.target_transform.scale(row).map(|s| v / s))
            .collect::<Result<Vec<f64>>>()?;
        let input_norm = if spec.normalize_inputs {
            Some(NormStats::fit(&x.rows().collect::<Vec<_>>())?)
        } else {
            None
        };
        let fit_x = match &input_norm {
            Some(st) => Matrix::from_rows(&x.rows().map(|r| st.apply(r)).collect::<Vec<_>>())?,
            None => x.clone(),
        };
        let params = learner.fit(&fit_x, &scaled_y, spec.seed)?;

        let mut model = FittedModel {
            format_version: MODEL_FORMAT_VERSION,
            kind: spec.kind,
            target: spec.target,
            fingerprint: fingerprint_names(spec.input_names.iter().map(String::as_str)),
            input_names: spec.input_names,
            input_norm,
            target_transform: spec.target_transform,
            params,
            metadata: TrainingMetadata {
                seed: spec.seed,
                n_samples: n,
                train_rmse: 0.0,
                trained_at: None,
            },
        };
        let preds = model.predict_matrix(x)?;
        model.metadata.train_rmse = crate::predict::rmse(&preds, y);
        Ok(model)
    }

    pub fn input_dim(&self) -> usize {
        self.input_names.len()
    }

    /// Prediction for one raw input row.
    pub fn predict(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.input_dim() {
            return Err(Error::DimensionMismatch {
                expected: self.input_dim(),
                got: x.len(),
            });
        }
        let scale = self.target_transform.scale(x)?;
        let reg = self.params.as_regressor();
        let raw = match &self.input_norm {
            Some(st) => reg.predict_row(&st.apply(x)),
            None => reg.predict_row(x),
        };
        Ok(raw * scale)
    }

    pub fn predict_matrix(&self, x: &Matrix) -> Result<Vec<f64>> {
        x.rows().map(|r| self.predict(r)).collect()
    }

    /// Fails unless `fingerprint` matches this model's inputs.
    pub fn check_fingerprint(&self, fingerprint: &str) -> Result<()> {
        if self.fingerprint != fingerprint {
            return Err(Error::FingerprintMismatch {
                expected: self.fingerprint.clone(),
                got: fingerprint.to_string(),
            });
        }
        Ok(())
    }

    fn validate(&self) -> Result<()> {
        if self.format_version != MODEL_FORMAT_VERSION {
            return Err(Error::Version {
                found: self.format_version,
                expected: MODEL_FORMAT_VERSION,
            });
        }
        let expected = fingerprint_names(self.input_names.iter().map(String::as_str));
        if expected != self.fingerprint {
            return Err(Error::FingerprintMismatch {
                expected,
                got: self.fingerprint.clone(),
            });
        }
        let d = self.input_dim();
        if let Some(st) = &self.input_norm {
            if st.dim() != d || st.std.len() != d {
                return Err(Error::DimensionMismatch {
                    expected: d,
                    got: st.dim(),
                });
            }
        }
        if self.target_transform.max_index().is_some_and(|j| j >= d) {
            return Err(Error::Validation(
                "target transform references a missing input".into(),
            ));
        }
        self.params.as_regressor().check_dim(d)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let m: FittedModel = serde_json::from_str(text)?;
        m.validate()?;
        Ok(m)
    }
}

pub fn save_model(m: &FittedModel, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, m.to_json()?).map_err(|e| Error::io(path, e))
}

pub fn load_model(path: impl AsRef<Path>) -> Result<FittedModel> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    FittedModel::from_json(&text)
}
