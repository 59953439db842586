use std::collections::HashSet;
use std::path::Path;

use rand::Rng as _;
use rand_distr::{Distribution, Exp};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;
use crate::scheduler::{ExecNoise, Job};
use crate::trace::synth::lognormal_factor;
use crate::trace::{profile_features, DeviceSpec, OracleSpec};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct WorkloadParams {
    pub n_jobs: usize,
    /// Poisson arrival rate, jobs/s.
    pub arrival_rate: f64,
    /// Deadline = arrival + slack x default-clock execution time, with the
    /// slack factor drawn uniformly from this range.
    pub slack_factor: (f64, f64),
    /// Std-dev of the lognormal execution noise frozen into each job.
    pub exec_noise_sigma: f64,
}

impl Default for WorkloadParams {
    fn default() -> Self {
        Self {
            n_jobs: 200,
            arrival_rate: 0.05,
            slack_factor: (1.2, 3.0),
            exec_noise_sigma: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Workload {
    pub seed: u64,
    pub params: WorkloadParams,
    /// Sorted by arrival time.
    pub jobs: Vec<Job>,
}

impl Workload {
    pub fn validate(&self) -> Result<()> {
        let mut ids = HashSet::new();
        for j in &self.jobs {
            j.validate()?;
            if !ids.insert(j.job_id.as_str()) {
                return Err(Error::Validation(format!(
                    "duplicate job id `{}`",
                    j.job_id
                )));
            }
        }
        if self
            .jobs
            .windows(2)
            .any(|w| w[1].arrival_time < w[0].arrival_time)
        {
            return Err(Error::Validation(
                "jobs are not sorted by arrival time".into(),
            ));
        }
        Ok(())
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let text = serde_json::to_string_pretty(self)? + "\n";
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }
}

/// Poisson job stream over the given applications. Each job carries the
/// app's noiseless default-clock profile from `device`.
pub fn generate_workload(
    apps: &[OracleSpec],
    device: &DeviceSpec,
    params: &WorkloadParams,
    seed: u64,
) -> Result<Workload> {
    let (lo, hi) = params.slack_factor;
    if params.n_jobs == 0 {
        return Err(Error::InvalidInput("n_jobs must be >= 1".into()));
    }
    if apps.is_empty() {
        return Err(Error::InvalidInput(
            "workload needs at least one application".into(),
        ));
    }
    if !(lo > 0.0 && lo <= hi && hi.is_finite()) {
        return Err(Error::InvalidInput(format!(
            "slack factor range must satisfy 0 < lo <= hi, got ({lo}, {hi})"
        )));
    }
    if !(params.arrival_rate.is_finite() && params.arrival_rate > 0.0) {
        return Err(Error::InvalidInput("arrival_rate must be > 0".into()));
    }
    if !(0.0..=0.5).contains(&params.exec_noise_sigma) {
        return Err(Error::InvalidInput(
            "exec_noise_sigma must lie in [0, 0.5]".into(),
        ));
    }
    let mut rng = rng::rng_from(seed);
    let gaps = Exp::new(params.arrival_rate).expect("rate is positive");
    let width = params.n_jobs.to_string().len().max(4);
    let mut t = 0.0;
    let mut jobs = Vec::with_capacity(params.n_jobs);
    for i in 0..params.n_jobs {
        t += gaps.sample(&mut rng);
        let app = &apps[rng.random_range(0..apps.len())];
        let slack = if lo == hi {
            lo
        } else {
            rng.random_range(lo..hi)
        };
        let base = app.exec_time(device.default_config);
        let noise = ExecNoise {
            time: lognormal_factor(&mut rng, params.exec_noise_sigma),
            power: lognormal_factor(&mut rng, params.exec_noise_sigma),
        };
        jobs.push(Job {
            job_id: format!("job{:0width$}", i, width = width),
            app_id: app.app_id.clone(),
            arrival_time: t,
            deadline: t + slack * base,
            default_profile: profile_features(app, device, device.default_config),
            noise,
        });
    }
    let w = Workload {
        seed,
        params: params.clone(),
        jobs,
    };
    w.validate()?;
    Ok(w)
}
