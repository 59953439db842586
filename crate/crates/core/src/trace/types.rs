use std::cmp::Ordering;
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// Relative tolerance allowed between `energy` and `avg_power * exec_time`.
pub const ENERGY_CONSISTENCY_TOL: f64 = 0.05;

/// One (memory clock, core clock) operating point, both in MHz.
///
/// Ordering is by core clock first, then memory clock; this is the order
/// used for tie-breaking ("lowest clocks win") across the crate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct FrequencyConfig {
    pub mem_clock: u32,
    pub core_clock: u32,
}

impl FrequencyConfig {
    pub fn new(mem_clock: u32, core_clock: u32) -> Result<Self> {
        let c = Self {
            mem_clock,
            core_clock,
        };
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        if self.mem_clock == 0 || self.core_clock == 0 {
            return Err(Error::Validation(format!(
                "frequency config {self} has a zero clock"
            )));
        }
        Ok(())
    }
}

impl Ord for FrequencyConfig {
    fn cmp(&self, other: &Self) -> Ordering {
        (self.core_clock, self.mem_clock).cmp(&(other.core_clock, other.mem_clock))
    }
}

impl PartialOrd for FrequencyConfig {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl fmt::Display for FrequencyConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "core {} / mem {} MHz", self.core_clock, self.mem_clock)
    }
}

/// A GPU model with its supported clock table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeviceSpec {
    pub name: String,
    pub supported_configs: Vec<FrequencyConfig>,
    pub default_config: FrequencyConfig,
    pub max_config: FrequencyConfig,
    /// Watts drawn when no job is running.
    pub idle_power: f64,
}

impl DeviceSpec {
    /// Builds and validates a device; the supported set is sorted and must not
    /// contain duplicates.
    pub fn new(
        name: impl Into<String>,
        mut supported_configs: Vec<FrequencyConfig>,
        default_config: FrequencyConfig,
        max_config: FrequencyConfig,
        idle_power: f64,
    ) -> Result<Self> {
        supported_configs.sort();
        let d = Self {
            name: name.into(),
            supported_configs,
            default_config,
            max_config,
            idle_power,
        };
        d.validate()?;
        Ok(d)
    }

    /// A P100-like desk device: ten core clocks across two memory clocks.
    pub fn p100_desk() -> Self {
        const CORE: [u32; 10] = [544, 632, 734, 835, 936, 1037, 1139, 1189, 1240, 1328];
        const MEM: [u32; 2] = [600, 715];
        let configs = MEM
            .iter()
            .flat_map(|&m| {
                CORE.iter()
                    .map(move |&c| FrequencyConfig::new(m, c).unwrap())
            })
            .collect();
        Self::new(
            "p100-desk",
            configs,
            FrequencyConfig::new(715, 1189).unwrap(),
            FrequencyConfig::new(715, 1328).unwrap(),
            35.0,
        )
        .expect("builtin device is valid")
    }

    pub fn validate(&self) -> Result<()> {
        if self.supported_configs.is_empty() {
            return Err(Error::Validation(format!(
                "device `{}` has no supported configs",
                self.name
            )));
        }
        for c in &self.supported_configs {
            c.validate()?;
        }
        if self.supported_configs.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Validation(format!(
                "device `{}`: supported configs must be strictly ordered and unique",
                self.name
            )));
        }
        if !self.supports(&self.default_config) {
            return Err(Error::Validation(format!(
                "device `{}`: default config {} is not supported",
                self.name, self.default_config
            )));
        }
        if !self.supports(&self.max_config) {
            return Err(Error::Validation(format!(
                "device `{}`: max config {} is not supported",
                self.name, self.max_config
            )));
        }
        // configs are sorted by (core, mem), so the last one is the maximum
        let top = *self.supported_configs.last().unwrap();
        if top != self.max_config {
            return Err(Error::Validation(format!(
                "device `{}`: max config {} is not the highest supported config {}",
                self.name, self.max_config, top
            )));
        }
        if !(self.idle_power.is_finite() && self.idle_power >= 0.0) {
            return Err(Error::Validation(format!(
                "device `{}`: idle power must be finite and >= 0",
                self.name
            )));
        }
        Ok(())
    }

    pub fn supports(&self, c: &FrequencyConfig) -> bool {
        self.supported_configs.binary_search(c).is_ok()
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut d: DeviceSpec = serde_json::from_str(&text)?;
        d.supported_configs.sort();
        d.validate()?;
        Ok(d)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let text = serde_json::to_string_pretty(self)?;
        std::fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Feature {
    pub name: String,
    pub unit: String,
}

/// Ordered feature names of a trace. Order is fixed for the lifetime of a
/// dataset and is part of every model's input fingerprint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureSchema {
    features: Vec<Feature>,
}

impl FeatureSchema {
    pub fn new(features: Vec<Feature>) -> Result<Self> {
        let mut seen = std::collections::HashSet::new();
        for f in &features {
            if f.name.is_empty() {
                return Err(Error::Validation("empty feature name".into()));
            }
            if !seen.insert(f.name.as_str()) {
                return Err(Error::Validation(format!(
                    "duplicate feature name `{}`",
                    f.name
                )));
            }
        }
        Ok(Self { features })
    }

    /// Builds a schema from bare names; units are filled in for the names the
    /// synthetic generator knows about and left empty otherwise.
    pub fn from_names<S: AsRef<str>>(names: &[S]) -> Result<Self> {
        Self::new(
            names
                .iter()
                .map(|n| Feature {
                    name: n.as_ref().to_string(),
                    unit: crate::trace::synth::unit_of(n.as_ref()).to_string(),
                })
                .collect(),
        )
    }

    pub fn len(&self) -> usize {
        self.features.len()
    }

    pub fn is_empty(&self) -> bool {
        self.features.is_empty()
    }

    pub fn features(&self) -> &[Feature] {
        &self.features
    }

    pub fn names(&self) -> Vec<String> {
        self.features.iter().map(|f| f.name.clone()).collect()
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.features.iter().position(|f| f.name == name)
    }

    /// Hex SHA-256 over the ordered feature names.
    pub fn fingerprint(&self) -> String {
        fingerprint_names(self.features.iter().map(|f| f.name.as_str()))
    }
}

pub fn fingerprint_names<'a>(names: impl Iterator<Item = &'a str>) -> String {
    let mut h = Sha256::new();
    for n in names {
        h.update(n.as_bytes());
        h.update([0u8]);
    }
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Measurement {
    /// W
    pub avg_power: f64,
    /// s
    pub exec_time: f64,
    /// J
    pub energy: f64,
}

impl Measurement {
    pub fn new(avg_power: f64, exec_time: f64, energy: f64) -> Result<Self> {
        let m = Self {
            avg_power,
            exec_time,
            energy,
        };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("avg_power", self.avg_power),
            ("exec_time", self.exec_time),
            ("energy", self.energy),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::Validation(format!(
                    "{name} must be finite and > 0, got {v}"
                )));
            }
        }
        let expected = self.avg_power * self.exec_time;
        if (self.energy - expected).abs() > ENERGY_CONSISTENCY_TOL * self.energy {
            return Err(Error::Validation(format!(
                "energy {} J inconsistent with power x time = {} J",
                self.energy, expected
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingRecord {
    pub app_id: String,
    pub config: FrequencyConfig,
    pub features: Vec<f64>,
    pub measurement: Measurement,
}

/// Per-feature z-score statistics (population standard deviation).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormStats {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl NormStats {
    /// Column statistics over `rows`. Columns whose spread is zero at machine
    /// precision get `std = 1`, so they pass through shifted to zero.
    pub fn fit<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let n = rows.len();
        if n < 2 {
            return Err(Error::InvalidInput(format!(
                "normalization needs at least 2 rows, got {n}"
            )));
        }
        let d = rows[0].as_ref().len();
        let mut mean = vec![0.0; d];
        for r in rows {
            let r = r.as_ref();
            if r.len() != d {
                return Err(Error::DimensionMismatch {
                    expected: d,
                    got: r.len(),
                });
            }
            for (m, v) in mean.iter_mut().zip(r) {
                *m += v;
            }
        }
        for m in &mut mean {
            *m /= n as f64;
        }
        let mut std = vec![0.0; d];
        for r in rows {
            for ((s, v), m) in std.iter_mut().zip(r.as_ref()).zip(&mean) {
                *s += (v - m) * (v - m);
            }
        }
        for (s, m) in std.iter_mut().zip(&mean) {
            let sd = (*s / n as f64).sqrt();
            *s = if sd <= 1e-12 * m.abs().max(1.0) {
                1.0
            } else {
                sd
            };
        }
        Ok(Self { mean, std })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .zip(self.mean.iter().zip(&self.std))
            .map(|(v, (m, s))| (v - m) / s)
            .collect()
    }

    pub fn invert(&self, z: &[f64]) -> Vec<f64> {
        z.iter()
            .zip(self.mean.iter().zip(&self.std))
            .map(|(v, (m, s))| v * s + m)
            .collect()
    }
}

/// A validated trace: schema, device and records.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub schema: FeatureSchema,
    pub device: DeviceSpec,
    pub records: Vec<TrainingRecord>,
    /// Present when `records` hold z-scored features.
    pub norm_stats: Option<NormStats>,
}

impl Dataset {
    pub fn new(
        schema: FeatureSchema,
        device: DeviceSpec,
        records: Vec<TrainingRecord>,
    ) -> Result<Self> {
        let d = Self {
            schema,
            device,
            records,
            norm_stats: None,
        };
        d.validate()?;
        Ok(d)
    }

    pub fn validate(&self) -> Result<()> {
        self.device.validate()?;
        for (i, r) in self.records.iter().enumerate() {
            validate_record(r, &self.schema, &self.device)
                .map_err(|e| Error::Validation(format!("record {i}: {e}")))?;
        }
        Ok(())
    }

    /// Distinct application ids in first-seen order.
    pub fn app_ids(&self) -> Vec<String> {
        let mut seen = std::collections::HashSet::new();
        self.records
            .iter()
            .filter(|r| seen.insert(r.app_id.as_str()))
            .map(|r| r.app_id.clone())
            .collect()
    }

    /// The record of `app_id` measured at the device's default config.
    pub fn default_record(&self, app_id: &str) -> Option<&TrainingRecord> {
        self.records
            .iter()
            .find(|r| r.app_id == app_id && r.config == self.device.default_config)
    }

    pub fn feature_rows(&self) -> Vec<&[f64]> {
        self.records.iter().map(|r| r.features.as_slice()).collect()
    }

    /// Keeps only the records whose app is in `apps`.
    pub fn subset(&self, apps: &std::collections::HashSet<String>) -> Dataset {
        Dataset {
            schema: self.schema.clone(),
            device: self.device.clone(),
            records: self
                .records
                .iter()
                .filter(|r| apps.contains(&r.app_id))
                .cloned()
                .collect(),
            norm_stats: self.norm_stats.clone(),
        }
    }
}

fn validate_record(r: &TrainingRecord, schema: &FeatureSchema, device: &DeviceSpec) -> Result<()> {
    if r.app_id.is_empty() {
        return Err(Error::Validation("empty app_id".into()));
    }
    r.config.validate()?;
    if !device.supports(&r.config) {
        return Err(Error::Validation(format!(
            "config {} is not supported by device `{}`",
            r.config, device.name
        )));
    }
    if r.features.len() != schema.len() {
        return Err(Error::DimensionMismatch {
            expected: schema.len(),
            got: r.features.len(),
        });
    }
    if let Some(i) = r.features.iter().position(|v| !v.is_finite()) {
        return Err(Error::Validation(format!(
            "feature `{}` is not finite",
            schema.features()[i].name
        )));
    }
    r.measurement.validate()
}
