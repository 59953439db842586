//! Run configuration: a JSON file, then flags, then `--set` overrides.

use std::fmt;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};

use freqsched::predict::{LearnerRegistry, ModelKind};
use freqsched::scheduler::{DATA_DRIVEN, DEFAULT_CLOCK, MAX_CLOCK};
use freqsched::simulator::{QueueDiscipline, WorkloadParams};
use freqsched::trace::{DeviceSpec, OracleRanges};
use serde::{Deserialize, Serialize};
use serde_json::Value;

/// Bad configuration or input; exits with code 2.
#[derive(Debug)]
pub struct ConfigError(pub String);

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for ConfigError {}

pub fn config_err(msg: impl Into<String>) -> anyhow::Error {
    ConfigError(msg.into()).into()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Required; every random stream derives from it.
    pub seed: Option<u64>,
    pub out_dir: PathBuf,
    /// Device spec JSON. The built-in `p100-desk` preset when absent.
    pub device: Option<PathBuf>,
    /// Defaults to `<out_dir>/dataset.csv`.
    pub dataset: Option<PathBuf>,
    /// Defaults to `<out_dir>/models`.
    pub models_dir: Option<PathBuf>,
    pub synth: SynthConfig,
    pub train: TrainConfig,
    pub workload: WorkloadParams,
    pub simulate: SimulateConfig,
    pub serve: ServeConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: None,
            out_dir: PathBuf::from("out"),
            device: None,
            dataset: None,
            models_dir: None,
            synth: SynthConfig::default(),
            train: TrainConfig::default(),
            workload: WorkloadParams::default(),
            simulate: SimulateConfig::default(),
            serve: ServeConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub n_apps: usize,
    pub ranges: OracleRanges,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            n_apps: 12,
            ranges: OracleRanges::default(),
        }
    }
}

/// A model kind by registry name, optionally with hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum KindSpec {
    Name(String),
    WithParams {
        name: String,
        #[serde(default)]
        params: Value,
    },
}

impl KindSpec {
    pub fn resolve(&self, registry: &LearnerRegistry) -> anyhow::Result<ModelKind> {
        let (name, params) = match self {
            KindSpec::Name(n) => (n.as_str(), Value::Null),
            KindSpec::WithParams { name, params } => (name.as_str(), params.clone()),
        };
        registry
            .build(name, &params)
            .map(|l| l.kind())
            .map_err(|e| {
                config_err(format!(
                    "{e} (known: {})",
                    registry.names().collect::<Vec<_>>().join(", ")
                ))
            })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub kinds: Vec<KindSpec>,
    /// Share of applications held out for the evaluation report.
    pub test_fraction: f64,
    /// Grouped folds for `evaluate`; 0 skips cross-validation.
    pub cv_folds: usize,
    /// Knowledge-base clusters; picked from the app count when absent.
    pub clusters: Option<usize>,
    pub normalize_inputs: bool,
    pub relative_target: bool,
    pub record_timestamp: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            kinds: ["ols", "lasso", "gbrt"]
                .map(|k| KindSpec::Name(k.into()))
                .to_vec(),
            test_fraction: 0.25,
            cv_folds: 4,
            clusters: None,
            normalize_inputs: true,
            relative_target: true,
            record_timestamp: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PredictorChoice {
    Learned,
    Oracle,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulateConfig {
    pub policies: Vec<String>,
    /// Which trained models drive the data-driven policy.
    pub model_kind: String,
    pub predictor: PredictorChoice,
    pub n_devices: usize,
    pub queue: QueueDiscipline,
    pub switch_overhead_ms: f64,
    /// Padding on predicted time in the data-driven feasibility test.
    pub time_margin: f64,
}

impl Default for SimulateConfig {
    fn default() -> Self {
        Self {
            policies: [DATA_DRIVEN, DEFAULT_CLOCK, MAX_CLOCK]
                .map(String::from)
                .to_vec(),
            model_kind: "gbrt".into(),
            predictor: PredictorChoice::Learned,
            n_devices: 1,
            queue: QueueDiscipline::Edf,
            switch_overhead_ms: 0.0,
            time_margin: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ServeConfig {
    pub addr: SocketAddr,
    pub model_kind: String,
}

impl Default for ServeConfig {
    fn default() -> Self {
        Self {
            addr: SocketAddr::from(([127, 0, 0, 1], 8080)),
            model_kind: "gbrt".into(),
        }
    }
}

/// Applies `a.b.c=value` to a JSON tree. The value is parsed as JSON and
/// falls back to a plain string.
pub fn apply_override(root: &mut Value, assignment: &str) -> anyhow::Result<()> {
    let (path, raw) = assignment
        .split_once('=')
        .ok_or_else(|| config_err(format!("override `{assignment}` is not key=value")))?;
    let value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
    let mut node = root;
    let keys: Vec<&str> = path.split('.').collect();
    for (i, key) in keys.iter().enumerate() {
        let obj = node.as_object_mut().ok_or_else(|| {
            config_err(format!(
                "override `{path}`: `{key}` is not inside an object"
            ))
        })?;
        if i + 1 == keys.len() {
            obj.insert(key.to_string(), value);
            return Ok(());
        }
        node = obj
            .entry(key.to_string())
            .or_insert_with(|| Value::Object(Default::default()));
        if node.is_null() {
            *node = Value::Object(Default::default());
        }
    }
    unreachable!("split always yields at least one key")
}

impl RunConfig {
    /// Reads `path` (or starts from defaults) and applies the overrides in order.
    pub fn load(path: Option<&Path>, overrides: &[String]) -> anyhow::Result<Self> {
        let mut tree = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .map_err(|e| config_err(format!("cannot read config {}: {e}", p.display())))?;
                serde_json::from_str(&text)
                    .map_err(|e| config_err(format!("config {}: {e}", p.display())))?
            }
            None => serde_json::to_value(RunConfig::default())?,
        };
        for o in overrides {
            apply_override(&mut tree, o)?;
        }
        let cfg: RunConfig =
            serde_json::from_value(tree).map_err(|e| config_err(format!("config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> anyhow::Result<()> {
        if !(0.0..1.0).contains(&self.train.test_fraction) || self.train.test_fraction == 0.0 {
            return Err(config_err("train.test_fraction must lie in (0, 1)"));
        }
        if self.train.kinds.is_empty() {
            return Err(config_err("train.kinds is empty"));
        }
        if self.simulate.n_devices == 0 {
            return Err(config_err("simulate.n_devices must be >= 1"));
        }
        if self.simulate.policies.is_empty() {
            return Err(config_err("simulate.policies is empty"));
        }
        Ok(())
    }

    pub fn seed(&self) -> anyhow::Result<u64> {
        self.seed
            .ok_or_else(|| config_err("no seed: set `seed` in the config or pass --seed"))
    }

    pub fn dataset_path(&self) -> PathBuf {
        self.dataset
            .clone()
            .unwrap_or_else(|| self.out_dir.join("dataset.csv"))
    }

    pub fn models_path(&self) -> PathBuf {
        self.models_dir
            .clone()
            .unwrap_or_else(|| self.out_dir.join("models"))
    }

    pub fn device_spec(&self) -> anyhow::Result<DeviceSpec> {
        match &self.device {
            None => Ok(DeviceSpec::p100_desk()),
            Some(p) => {
                if !p.exists() {
                    return Err(config_err(format!(
                        "device spec {} does not exist",
                        p.display()
                    )));
                }
                DeviceSpec::load(p)
                    .map_err(|e| config_err(format!("device spec {}: {e}", p.display())))
            }
        }
    }
}

/// Fails with a configuration error naming `what` when `path` is missing.
pub fn require(path: &Path, what: &str) -> anyhow::Result<()> {
    if path.exists() {
        Ok(())
    } else {
        Err(config_err(format!("missing {what}: {}", path.display())))
    }
}

pub fn model_file(dir: &Path, target: &str, kind: &str) -> PathBuf {
    dir.join(format!("{target}-{kind}.json"))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn overrides_win_over_file_values() {
        let mut tree = serde_json::to_value(RunConfig::default()).unwrap();
        apply_override(&mut tree, "seed=7").unwrap();
        apply_override(&mut tree, "workload.n_jobs=10").unwrap();
        apply_override(&mut tree, "simulate.model_kind=ols").unwrap();
        apply_override(&mut tree, "device=dev.json").unwrap();
        let cfg: RunConfig = serde_json::from_value(tree).unwrap();
        assert_eq!(cfg.seed, Some(7));
        assert_eq!(cfg.workload.n_jobs, 10);
        assert_eq!(cfg.simulate.model_kind, "ols");
        assert_eq!(cfg.device, Some(PathBuf::from("dev.json")));
    }

    #[test]
    fn kinds_resolve_through_registry() {
        let reg = LearnerRegistry::default();
        let k: KindSpec =
            serde_json::from_str(r#"{"name": "gbrt", "params": {"n_trees": 5}}"#).unwrap();
        assert_eq!(
            k.resolve(&reg).unwrap(),
            ModelKind::Gbrt {
                n_trees: 5,
                max_depth: 3,
                shrinkage: 0.1,
                min_leaf: 2
            }
        );
        assert!(KindSpec::Name("svr".into()).resolve(&reg).is_err());
    }

    #[test]
    fn bad_override() {
        let mut tree = serde_json::to_value(RunConfig::default()).unwrap();
        assert!(apply_override(&mut tree, "seed").is_err());
        assert!(apply_override(&mut tree, "out_dir.x=1").is_err());
    }
}
