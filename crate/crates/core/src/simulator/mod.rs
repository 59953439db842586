//! Workload generation, discrete-event replay and reporting.

mod engine;
mod report;
mod workload;

use std::collections::BTreeMap;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::scheduler::{CandidatePredictor, FrequencyPolicy};
use crate::trace::{DeviceSpec, OracleSpec};

pub use engine::{
    simulate, Aggregates, DeviceUsage, JobRecord, QueueDiscipline, SimOptions, SimulationResult,
};
pub use report::{write_csv, write_csv_to, write_json, CSV_HEADER};
pub use workload::{generate_workload, Workload, WorkloadParams};

/// Several policies replayed over the same workload.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    /// Common accounting horizon: the latest makespan over all runs.
    pub horizon: f64,
    pub results: Vec<SimulationResult>,
    /// `savings_pct[a][b] = (E_b - E_a) / E_b * 100` on total energy.
    pub savings_pct: BTreeMap<String, BTreeMap<String, f64>>,
    /// Same, on job energy only (idle excluded).
    pub job_savings_pct: BTreeMap<String, BTreeMap<String, f64>>,
}

impl Comparison {
    pub fn result(&self, policy: &str) -> Option<&SimulationResult> {
        self.results.iter().find(|r| r.policy == policy)
    }

    /// Percent total-energy saving of `a` relative to `b`.
    pub fn savings(&self, a: &str, b: &str) -> Option<f64> {
        self.savings_pct.get(a)?.get(b).copied()
    }

    pub fn job_savings(&self, a: &str, b: &str) -> Option<f64> {
        self.job_savings_pct.get(a)?.get(b).copied()
    }
}

pub fn savings_pct(energy_a: f64, energy_b: f64) -> f64 {
    (energy_b - energy_a) / energy_b * 100.0
}

/// Runs every policy concurrently and reports all of them on a common
/// horizon, so idle energy is charged over the same span.
pub fn compare_policies(
    w: &Workload,
    devices: &[DeviceSpec],
    policies: &[Arc<dyn FrequencyPolicy>],
    predictor: &dyn CandidatePredictor,
    ground_truth: &[OracleSpec],
    opts: SimOptions,
) -> Result<Comparison> {
    let runs: Vec<Result<SimulationResult>> = std::thread::scope(|s| {
        let handles: Vec<_> = policies
            .iter()
            .map(|p| {
                s.spawn(move || simulate(w, devices, p.as_ref(), predictor, ground_truth, opts))
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("simulation thread panicked"))
            .collect()
    });
    let mut results = runs.into_iter().collect::<Result<Vec<_>>>()?;
    let horizon = results
        .iter()
        .map(|r| r.aggregates.horizon)
        .fold(0.0, f64::max);
    for r in &mut results {
        r.extend_horizon(horizon);
    }
    let matrix = |energy: fn(&Aggregates) -> f64| {
        results
            .iter()
            .map(|a| {
                let row = results
                    .iter()
                    .map(|b| {
                        (
                            b.policy.clone(),
                            savings_pct(energy(&a.aggregates), energy(&b.aggregates)),
                        )
                    })
                    .collect();
                (a.policy.clone(), row)
            })
            .collect()
    };
    Ok(Comparison {
        horizon,
        savings_pct: matrix(|a| a.total_energy),
        job_savings_pct: matrix(|a| a.job_energy),
        results,
    })
}
