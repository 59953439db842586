use std::collections::BTreeMap;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::scheduler::{Candidate, CandidateTable, ScheduleDecision};
use crate::trace::DeviceSpec;

pub const DATA_DRIVEN: &str = "data-driven";
pub const DEFAULT_CLOCK: &str = "default-clock";
pub const MAX_CLOCK: &str = "max-clock";

pub trait FrequencyPolicy: Send + Sync {
    fn name(&self) -> &str;

    /// Picks one row of `table` for a job that starts at `start`.
    fn select(
        &self,
        table: &CandidateTable,
        start: f64,
        deadline: f64,
        device: &DeviceSpec,
    ) -> Result<ScheduleDecision>;
}

fn fits(row: &Candidate, start: f64, deadline: f64) -> bool {
    start + row.predicted_time <= deadline
}

fn fits_with_margin(row: &Candidate, start: f64, deadline: f64, margin: f64) -> bool {
    start + row.predicted_time * (1.0 + margin) <= deadline
}

fn decision(
    policy: &str,
    table: &CandidateTable,
    row: &Candidate,
    feasible: bool,
) -> ScheduleDecision {
    ScheduleDecision {
        job_id: table.job_id.clone(),
        policy: policy.to_string(),
        chosen_config: row.config,
        predicted_time: row.predicted_time,
        predicted_energy: row.predicted_energy,
        feasible,
        candidates: table.rows.clone(),
    }
}

fn non_empty(table: &CandidateTable) -> Result<()> {
    if table.rows.is_empty() {
        return Err(Error::InvalidInput(format!(
            "job `{}`: empty candidate table",
            table.job_id
        )));
    }
    Ok(())
}

/// Minimum predicted energy among the configs predicted to meet the
/// deadline; ties go to the lower core clock, then lower memory clock. With
/// no feasible config, the fastest one is chosen and flagged infeasible.
///
/// `time_margin` inflates predicted times during the feasibility test
/// (0.05 means a config must fit with 5% to spare). The reported `feasible`
/// flag always uses the unpadded prediction.
#[derive(Debug, Default, Clone, Copy, PartialEq)]
pub struct DataDriven {
    pub time_margin: f64,
}

impl DataDriven {
    pub fn with_margin(time_margin: f64) -> Result<Self> {
        if !(time_margin.is_finite() && time_margin >= 0.0) {
            return Err(Error::InvalidInput(format!(
                "time margin must be a finite value >= 0, got {time_margin}"
            )));
        }
        Ok(Self { time_margin })
    }
}

impl FrequencyPolicy for DataDriven {
    fn name(&self) -> &str {
        DATA_DRIVEN
    }

    fn select(
        &self,
        table: &CandidateTable,
        start: f64,
        deadline: f64,
        _device: &DeviceSpec,
    ) -> Result<ScheduleDecision> {
        non_empty(table)?;
        let feasible = table
            .rows
            .iter()
            .filter(|r| fits_with_margin(r, start, deadline, self.time_margin))
            .min_by(|a, b| {
                a.predicted_energy
                    .total_cmp(&b.predicted_energy)
                    .then(a.config.cmp(&b.config))
            });
        if let Some(row) = feasible {
            return Ok(decision(
                self.name(),
                table,
                row,
                fits(row, start, deadline),
            ));
        }
        let fastest = table
            .rows
            .iter()
            .min_by(|a, b| {
                a.predicted_time
                    .total_cmp(&b.predicted_time)
                    .then(a.config.cmp(&b.config))
            })
            .expect("table is non-empty");
        Ok(decision(
            self.name(),
            table,
            fastest,
            fits(fastest, start, deadline),
        ))
    }
}

fn fixed(
    name: &str,
    table: &CandidateTable,
    start: f64,
    deadline: f64,
    config: crate::trace::FrequencyConfig,
) -> Result<ScheduleDecision> {
    non_empty(table)?;
    let row = table.row(config).ok_or_else(|| {
        Error::InvalidInput(format!(
            "job `{}`: candidate table has no row for {config}",
            table.job_id
        ))
    })?;
    Ok(decision(name, table, row, fits(row, start, deadline)))
}

/// Always the device's shipped default config.
#[derive(Debug, Default, Clone, Copy)]
pub struct DefaultClock;

impl FrequencyPolicy for DefaultClock {
    fn name(&self) -> &str {
        DEFAULT_CLOCK
    }

    fn select(
        &self,
        table: &CandidateTable,
        start: f64,
        deadline: f64,
        device: &DeviceSpec,
    ) -> Result<ScheduleDecision> {
        fixed(self.name(), table, start, deadline, device.default_config)
    }
}

/// Always the device's maximum config.
#[derive(Debug, Default, Clone, Copy)]
pub struct MaxClock;

impl FrequencyPolicy for MaxClock {
    fn name(&self) -> &str {
        MAX_CLOCK
    }

    fn select(
        &self,
        table: &CandidateTable,
        start: f64,
        deadline: f64,
        device: &DeviceSpec,
    ) -> Result<ScheduleDecision> {
        fixed(self.name(), table, start, deadline, device.max_config)
    }
}

/// Policies by name.
pub struct PolicyRegistry {
    policies: BTreeMap<String, Arc<dyn FrequencyPolicy>>,
}

impl Default for PolicyRegistry {
    fn default() -> Self {
        let mut r = Self {
            policies: BTreeMap::new(),
        };
        r.register(Arc::new(DataDriven::default()));
        r.register(Arc::new(DefaultClock));
        r.register(Arc::new(MaxClock));
        r
    }
}

impl PolicyRegistry {
    pub fn register(&mut self, policy: Arc<dyn FrequencyPolicy>) {
        self.policies.insert(policy.name().to_string(), policy);
    }

    pub fn get(&self, name: &str) -> Result<Arc<dyn FrequencyPolicy>> {
        self.policies
            .get(name)
            .cloned()
            .ok_or_else(|| Error::Unknown {
                what: "policy",
                name: name.to_string(),
            })
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.policies.keys().map(String::as_str)
    }
}

pub fn select_frequency(
    table: &CandidateTable,
    start: f64,
    deadline: f64,
    policy: &dyn FrequencyPolicy,
    device: &DeviceSpec,
) -> Result<ScheduleDecision> {
    policy.select(table, start, deadline, device)
}
