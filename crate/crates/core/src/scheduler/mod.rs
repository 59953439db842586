//! Frequency selection.
//!
//! A [`CandidatePredictor`] turns a job into a table of predicted
//! (time, energy) per supported config; a [`FrequencyPolicy`] picks one row.

mod policy;
mod predictor;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::trace::FrequencyConfig;

pub use policy::{
    select_frequency, DataDriven, DefaultClock, FrequencyPolicy, MaxClock, PolicyRegistry,
    DATA_DRIVEN, DEFAULT_CLOCK, MAX_CLOCK,
};
pub use predictor::{predict_all_configs, CandidatePredictor, LearnedPredictor, OraclePredictor};

/// Multiplicative execution noise frozen into a job at workload generation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExecNoise {
    pub time: f64,
    pub power: f64,
}

impl Default for ExecNoise {
    fn default() -> Self {
        Self {
            time: 1.0,
            power: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Job {
    pub job_id: String,
    pub app_id: String,
    /// s
    pub arrival_time: f64,
    /// Absolute simulation time, s.
    pub deadline: f64,
    /// Raw counters from one run at the device's default config.
    pub default_profile: Vec<f64>,
    #[serde(default)]
    pub noise: ExecNoise,
}

impl Job {
    pub fn validate(&self) -> Result<()> {
        if !(self.arrival_time.is_finite() && self.deadline.is_finite()) {
            return Err(Error::Validation(format!(
                "job `{}`: non-finite times",
                self.job_id
            )));
        }
        if self.deadline <= self.arrival_time {
            return Err(Error::Validation(format!(
                "job `{}`: deadline {} is not after arrival {}",
                self.job_id, self.deadline, self.arrival_time
            )));
        }
        if self.default_profile.iter().any(|v| !v.is_finite()) {
            return Err(Error::Validation(format!(
                "job `{}`: profile has non-finite values",
                self.job_id
            )));
        }
        if !(self.noise.time > 0.0 && self.noise.power > 0.0) {
            return Err(Error::Validation(format!(
                "job `{}`: noise multipliers must be > 0",
                self.job_id
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub config: FrequencyConfig,
    pub predicted_time: f64,
    pub predicted_energy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateTable {
    pub job_id: String,
    pub rows: Vec<Candidate>,
}

impl CandidateTable {
    pub fn row(&self, config: FrequencyConfig) -> Option<&Candidate> {
        self.rows.iter().find(|r| r.config == config)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScheduleDecision {
    pub job_id: String,
    pub policy: String,
    pub chosen_config: FrequencyConfig,
    pub predicted_time: f64,
    pub predicted_energy: f64,
    /// `start + predicted_time <= deadline` for the chosen row.
    pub feasible: bool,
    pub candidates: Vec<Candidate>,
}
