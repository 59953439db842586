//! Synthetic traces drawn from a ground-truth oracle.
//!
//! Each application is described by a handful of latent coefficients
//! ([`OracleSpec`]). Execution time follows a two-term roofline-style
//! hyperbola in the core and memory clocks; power is idle + a cubic core
//! term + a linear memory term.

use std::path::Path;

use rand::Rng as _;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;
use crate::trace::types::{
    Dataset, DeviceSpec, FeatureSchema, FrequencyConfig, Measurement, TrainingRecord,
};

/// Names and units of the desk-scale counter set, in column order.
pub const FEATURES: [(&str, &str); 16] = [
    ("compute_intensity", "fraction"),
    ("memory_intensity", "fraction"),
    ("fixed_fraction", "fraction"),
    ("achieved_occupancy", "fraction"),
    ("fp_inst_ratio", "fraction"),
    ("int_inst_ratio", "fraction"),
    ("ldst_inst_ratio", "fraction"),
    ("branch_inst_ratio", "fraction"),
    ("dram_throughput", "Mtransactions/s"),
    ("ipc", "inst/cycle"),
    ("dyn_power_share", "fraction"),
    ("mem_power_share", "fraction"),
    ("profiled_time", "s"),
    ("profiled_power", "W"),
    ("profiled_core_clock", "MHz"),
    ("profiled_mem_clock", "MHz"),
];

pub const PROFILED_TIME: &str = "profiled_time";
pub const PROFILED_POWER: &str = "profiled_power";

pub(crate) fn unit_of(name: &str) -> &'static str {
    FEATURES
        .iter()
        .find(|(n, _)| *n == name)
        .map(|(_, u)| *u)
        .unwrap_or("")
}

pub fn default_schema() -> FeatureSchema {
    FeatureSchema::from_names(&FEATURES.map(|(n, _)| n)).expect("static schema is valid")
}

/// Latent description of one synthetic application.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleSpec {
    pub app_id: String,
    /// Mcycles of core-bound work.
    pub compute_work: f64,
    /// Mcycles of memory-bound work.
    pub mem_work: f64,
    /// Clock-independent time, s.
    pub fixed_time: f64,
    /// W / MHz^3.
    pub dyn_power_coeff: f64,
    /// W / MHz.
    pub mem_power_coeff: f64,
    /// Relative std-dev of the multiplicative lognormal measurement noise.
    pub noise_sigma: f64,
    pub seed: u64,
    /// Nuisance counters that do not influence energy or time.
    pub occupancy: f64,
    pub inst_mix: [f64; 4],
}

impl OracleSpec {
    pub fn validate(&self) -> Result<()> {
        let coeffs = [
            ("compute_work", self.compute_work),
            ("mem_work", self.mem_work),
            ("fixed_time", self.fixed_time),
            ("dyn_power_coeff", self.dyn_power_coeff),
            ("mem_power_coeff", self.mem_power_coeff),
        ];
        for (name, v) in coeffs {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::Validation(format!(
                    "oracle `{}`: {name} must be finite and >= 0",
                    self.app_id
                )));
            }
        }
        if self.compute_work + self.mem_work + self.fixed_time <= 0.0 {
            return Err(Error::Validation(format!(
                "oracle `{}`: no work at all",
                self.app_id
            )));
        }
        if !(0.0..=0.5).contains(&self.noise_sigma) {
            return Err(Error::Validation(format!(
                "oracle `{}`: noise_sigma must lie in [0, 0.5]",
                self.app_id
            )));
        }
        Ok(())
    }

    pub fn exec_time(&self, c: FrequencyConfig) -> f64 {
        self.compute_work / c.core_clock as f64
            + self.mem_work / c.mem_clock as f64
            + self.fixed_time
    }

    pub fn avg_power(&self, c: FrequencyConfig, idle_power: f64) -> f64 {
        let core = c.core_clock as f64;
        idle_power
            + self.dyn_power_coeff * core * core * core
            + self.mem_power_coeff * c.mem_clock as f64
    }
}

/// Noiseless ground truth of `spec` running at `config` on `device`.
pub fn oracle_eval(spec: &OracleSpec, device: &DeviceSpec, config: FrequencyConfig) -> Measurement {
    let exec_time = spec.exec_time(config);
    let avg_power = spec.avg_power(config, device.idle_power);
    Measurement {
        avg_power,
        exec_time,
        energy: avg_power * exec_time,
    }
}

/// Noiseless counter vector of `spec` profiled at `config`, aligned to [`FEATURES`].
pub fn profile_features(
    spec: &OracleSpec,
    device: &DeviceSpec,
    config: FrequencyConfig,
) -> Vec<f64> {
    let m = oracle_eval(spec, device, config);
    let core = config.core_clock as f64;
    let mem = config.mem_clock as f64;
    let t = m.exec_time;
    let compute_t = spec.compute_work / core;
    let mem_t = spec.mem_work / mem;
    let dyn_p = spec.dyn_power_coeff * core * core * core;
    let mem_p = spec.mem_power_coeff * mem;
    vec![
        compute_t / t,
        mem_t / t,
        spec.fixed_time / t,
        spec.occupancy,
        spec.inst_mix[0],
        spec.inst_mix[1],
        spec.inst_mix[2],
        spec.inst_mix[3],
        spec.mem_work / t,
        4.0 * spec.occupancy * compute_t / t,
        dyn_p / m.avg_power,
        mem_p / m.avg_power,
        t,
        m.avg_power,
        core,
        mem,
    ]
}

/// Uniform sampling ranges for the latent coefficients.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OracleRanges {
    pub compute_work: (f64, f64),
    pub mem_work: (f64, f64),
    pub fixed_time: (f64, f64),
    pub dyn_power_coeff: (f64, f64),
    pub mem_power_coeff: (f64, f64),
    pub noise_sigma: f64,
}

impl Default for OracleRanges {
    fn default() -> Self {
        Self {
            compute_work: (500.0, 12_000.0),
            mem_work: (200.0, 5_000.0),
            fixed_time: (0.05, 0.5),
            dyn_power_coeff: (3e-8, 8e-8),
            mem_power_coeff: (0.02, 0.06),
            noise_sigma: 0.05,
        }
    }
}

impl OracleRanges {
    fn validate(&self) -> Result<()> {
        for (name, (lo, hi)) in [
            ("compute_work", self.compute_work),
            ("mem_work", self.mem_work),
            ("fixed_time", self.fixed_time),
            ("dyn_power_coeff", self.dyn_power_coeff),
            ("mem_power_coeff", self.mem_power_coeff),
        ] {
            if !(lo.is_finite() && hi.is_finite() && 0.0 <= lo && lo <= hi) {
                return Err(Error::InvalidInput(format!(
                    "range {name} must satisfy 0 <= lo <= hi"
                )));
            }
        }
        if !(0.0..=0.5).contains(&self.noise_sigma) {
            return Err(Error::InvalidInput(
                "noise_sigma must lie in [0, 0.5]".into(),
            ));
        }
        Ok(())
    }
}

fn uniform(rng: &mut rng::Rng, (lo, hi): (f64, f64)) -> f64 {
    if lo == hi {
        lo
    } else {
        rng.random_range(lo..hi)
    }
}

/// Lognormal multiplier `exp(N(0, sigma))`; exactly 1 when `sigma == 0`.
pub fn lognormal_factor(rng: &mut rng::Rng, sigma: f64) -> f64 {
    if sigma == 0.0 {
        return 1.0;
    }
    let n = Normal::new(0.0, sigma).expect("sigma is finite and positive");
    n.sample(rng).exp()
}

/// Samples `n_apps` applications and measures each at every supported config.
///
/// Records are ordered app-major, config-minor (device order). Time and power
/// get independent lognormal noise; energy is their product, so the
/// power-time-energy consistency invariant always holds.
pub fn generate_synthetic(
    n_apps: usize,
    device: &DeviceSpec,
    ranges: &OracleRanges,
    seed: u64,
) -> Result<(Dataset, Vec<OracleSpec>)> {
    if n_apps == 0 {
        return Err(Error::InvalidInput("n_apps must be >= 1".into()));
    }
    device.validate()?;
    if device.supported_configs.len() < 2 {
        return Err(Error::InvalidInput(
            "device needs at least 2 supported configs".into(),
        ));
    }
    ranges.validate()?;

    let mut latent_rng = rng::stream(seed, "oracle-latent");
    let width = n_apps.to_string().len().max(2);
    let mut specs = Vec::with_capacity(n_apps);
    for i in 0..n_apps {
        let mut mix = [0.0; 4];
        for m in &mut mix {
            *m = latent_rng.random_range(0.05..1.0);
        }
        let total: f64 = mix.iter().sum();
        mix.iter_mut().for_each(|m| *m /= total);
        specs.push(OracleSpec {
            app_id: format!("app{:0width$}", i, width = width),
            compute_work: uniform(&mut latent_rng, ranges.compute_work),
            mem_work: uniform(&mut latent_rng, ranges.mem_work),
            fixed_time: uniform(&mut latent_rng, ranges.fixed_time),
            dyn_power_coeff: uniform(&mut latent_rng, ranges.dyn_power_coeff),
            mem_power_coeff: uniform(&mut latent_rng, ranges.mem_power_coeff),
            noise_sigma: ranges.noise_sigma,
            seed: rng::derive_seed(seed, &format!("app-noise-{i}")),
            occupancy: latent_rng.random_range(0.2..1.0),
            inst_mix: mix,
        });
    }
    for s in &specs {
        s.validate()?;
    }

    let mut records = Vec::with_capacity(n_apps * device.supported_configs.len());
    for s in &specs {
        let mut noise = rng::rng_from(s.seed);
        for &c in &device.supported_configs {
            let truth = oracle_eval(s, device, c);
            let exec_time = truth.exec_time * lognormal_factor(&mut noise, s.noise_sigma);
            let avg_power = truth.avg_power * lognormal_factor(&mut noise, s.noise_sigma);
            records.push(TrainingRecord {
                app_id: s.app_id.clone(),
                config: c,
                features: profile_features(s, device, c),
                measurement: Measurement {
                    avg_power,
                    exec_time,
                    energy: avg_power * exec_time,
                },
            });
        }
    }
    let dataset = Dataset::new(default_schema(), device.clone(), records)?;
    Ok((dataset, specs))
}

pub fn save_oracle(specs: &[OracleSpec], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let text = serde_json::to_string_pretty(specs)?;
    std::fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
}

pub fn load_oracle(path: impl AsRef<Path>) -> Result<Vec<OracleSpec>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let specs: Vec<OracleSpec> = serde_json::from_str(&text)?;
    for s in &specs {
        s.validate()?;
    }
    Ok(specs)
}

/// `<dataset stem>.oracle.json` next to the dataset file.
pub fn oracle_path_for(dataset: &Path) -> std::path::PathBuf {
    let stem = dataset
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "dataset".into());
    dataset.with_file_name(format!("{stem}.oracle.json"))
}
