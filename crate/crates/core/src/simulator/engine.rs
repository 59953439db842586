//! Discrete-event replay of a workload on one or more devices.
//!
//! Jobs are assigned to devices round-robin in arrival order, wait in a
//! per-device queue (EDF by default) and run non-preemptively. The policy is
//! consulted when a job starts, so time spent queueing shrinks its slack.
//! Actual time and energy come from the oracle at the chosen config times
//! the job's frozen noise.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BinaryHeap, HashMap};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scheduler::{CandidatePredictor, FrequencyPolicy, Job, ScheduleDecision};
use crate::simulator::workload::Workload;
use crate::trace::{oracle_eval, DeviceSpec, FrequencyConfig, OracleSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum QueueDiscipline {
    #[default]
    Edf,
    Fifo,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimOptions {
    pub queue: QueueDiscipline,
    /// Dead time when a device changes config between jobs, in ms. The
    /// device draws idle power meanwhile.
    pub switch_overhead_ms: f64,
}

impl Default for SimOptions {
    fn default() -> Self {
        Self {
            queue: QueueDiscipline::Edf,
            switch_overhead_ms: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JobRecord {
    pub job_id: String,
    pub app_id: String,
    pub device: usize,
    pub arrival: f64,
    pub deadline: f64,
    pub start: f64,
    pub finish: f64,
    pub decision: ScheduleDecision,
    pub actual_time: f64,
    pub actual_energy: f64,
    pub deadline_met: bool,
    /// `(finish - arrival) / (deadline - arrival)`.
    pub normalized_completion: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeviceUsage {
    pub name: String,
    pub idle_power: f64,
    /// Sum of job execution times on this device.
    pub busy_time: f64,
    pub jobs: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregates {
    pub n_jobs: usize,
    /// Energy accounting ends here, s.
    pub horizon: f64,
    /// Σ per-job actual energy.
    pub job_energy: f64,
    /// Idle power integrated over the time each device is not running a job.
    pub idle_energy: f64,
    pub total_energy: f64,
    pub mean_job_energy: f64,
    /// Mean over applications of each app's mean job energy.
    pub mean_app_energy: f64,
    pub app_energy: BTreeMap<String, f64>,
    pub violations: usize,
    pub violation_rate: f64,
    pub infeasible_decisions: usize,
    pub mean_normalized_completion: f64,
    pub max_normalized_completion: f64,
    /// Jobs per chosen config, keyed `core/mem`.
    pub config_usage: BTreeMap<String, usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationResult {
    pub policy: String,
    pub predictor: String,
    pub options: SimOptions,
    pub devices: Vec<DeviceUsage>,
    pub jobs: Vec<JobRecord>,
    pub aggregates: Aggregates,
}

impl SimulationResult {
    /// Recomputes aggregates with energy accounting up to `horizon`
    /// (never earlier than the current one).
    pub fn extend_horizon(&mut self, horizon: f64) {
        let h = horizon.max(self.aggregates.horizon);
        self.aggregates = aggregate(&self.jobs, &self.devices, h);
    }
}

fn aggregate(jobs: &[JobRecord], devices: &[DeviceUsage], horizon: f64) -> Aggregates {
    let n = jobs.len();
    let job_energy: f64 = jobs.iter().map(|j| j.actual_energy).sum();
    let idle_energy: f64 = devices
        .iter()
        .map(|d| d.idle_power * (horizon - d.busy_time).max(0.0))
        .sum();
    let mut per_app: BTreeMap<String, (f64, usize)> = BTreeMap::new();
    let mut config_usage = BTreeMap::new();
    for j in jobs {
        let e = per_app.entry(j.app_id.clone()).or_default();
        e.0 += j.actual_energy;
        e.1 += 1;
        let c = j.decision.chosen_config;
        *config_usage
            .entry(format!("{}/{}", c.core_clock, c.mem_clock))
            .or_insert(0) += 1;
    }
    let app_energy: BTreeMap<String, f64> = per_app
        .into_iter()
        .map(|(a, (s, k))| (a, s / k as f64))
        .collect();
    let mean = |s: f64, k: usize| if k == 0 { 0.0 } else { s / k as f64 };
    let violations = jobs.iter().filter(|j| !j.deadline_met).count();
    Aggregates {
        n_jobs: n,
        horizon,
        job_energy,
        idle_energy,
        total_energy: job_energy + idle_energy,
        mean_job_energy: mean(job_energy, n),
        mean_app_energy: mean(app_energy.values().sum(), app_energy.len()),
        app_energy,
        violations,
        violation_rate: mean(violations as f64, n),
        infeasible_decisions: jobs.iter().filter(|j| !j.decision.feasible).count(),
        mean_normalized_completion: mean(jobs.iter().map(|j| j.normalized_completion).sum(), n),
        max_normalized_completion: jobs
            .iter()
            .map(|j| j.normalized_completion)
            .fold(0.0, f64::max),
        config_usage,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum EventKind {
    Completion { device: usize },
    Arrival { job: usize },
}

#[derive(Debug, Clone, Copy)]
struct Event {
    time: f64,
    seq: usize,
    kind: EventKind,
}

impl Event {
    fn rank(&self) -> u8 {
        match self.kind {
            EventKind::Completion { .. } => 0,
            EventKind::Arrival { .. } => 1,
        }
    }
}

impl PartialEq for Event {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Event {}

impl Ord for Event {
    // reversed: BinaryHeap is a max-heap and we want the earliest event
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .time
            .total_cmp(&self.time)
            .then(other.rank().cmp(&self.rank()))
            .then(other.seq.cmp(&self.seq))
    }
}

impl PartialOrd for Event {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

struct DeviceState {
    queue: Vec<usize>,
    running: Option<usize>,
    config: FrequencyConfig,
    busy_time: f64,
    jobs: usize,
}

fn pick_next(queue: &[usize], jobs: &[Job], discipline: QueueDiscipline) -> usize {
    let key = |&&i: &&usize| {
        let j = &jobs[i];
        match discipline {
            QueueDiscipline::Edf => (j.deadline, j.arrival_time, i),
            QueueDiscipline::Fifo => (j.arrival_time, j.deadline, i),
        }
    };
    let best = queue
        .iter()
        .min_by(|a, b| {
            let (ka, kb) = (key(a), key(b));
            ka.0.total_cmp(&kb.0)
                .then(ka.1.total_cmp(&kb.1))
                .then(ka.2.cmp(&kb.2))
        })
        .expect("queue is non-empty");
    queue.iter().position(|q| q == best).unwrap()
}

pub fn simulate(
    w: &Workload,
    devices: &[DeviceSpec],
    policy: &dyn FrequencyPolicy,
    predictor: &dyn CandidatePredictor,
    ground_truth: &[OracleSpec],
    opts: SimOptions,
) -> Result<SimulationResult> {
    if devices.is_empty() {
        return Err(Error::InvalidInput(
            "simulation needs at least one device".into(),
        ));
    }
    for d in devices {
        d.validate()?;
    }
    if !(opts.switch_overhead_ms.is_finite() && opts.switch_overhead_ms >= 0.0) {
        return Err(Error::InvalidInput("switch overhead must be >= 0".into()));
    }
    w.validate()?;
    let truth: HashMap<&str, &OracleSpec> = ground_truth
        .iter()
        .map(|s| (s.app_id.as_str(), s))
        .collect();
    if let Some(j) = w
        .jobs
        .iter()
        .find(|j| !truth.contains_key(j.app_id.as_str()))
    {
        return Err(Error::Unknown {
            what: "application",
            name: format!("{} (job {})", j.app_id, j.job_id),
        });
    }

    let jobs = &w.jobs;
    let overhead = opts.switch_overhead_ms / 1000.0;
    let mut state: Vec<DeviceState> = devices
        .iter()
        .map(|d| DeviceState {
            queue: Vec::new(),
            running: None,
            config: d.default_config,
            busy_time: 0.0,
            jobs: 0,
        })
        .collect();
    let mut records: Vec<Option<JobRecord>> = vec![None; jobs.len()];
    let mut heap = BinaryHeap::with_capacity(jobs.len() * 2);
    let mut seq = 0;
    for (i, j) in jobs.iter().enumerate() {
        heap.push(Event {
            time: j.arrival_time,
            seq,
            kind: EventKind::Arrival { job: i },
        });
        seq += 1;
    }

    while let Some(first) = heap.pop() {
        let now = first.time;
        let mut batch = vec![first];
        while heap.peek().is_some_and(|e| e.time == now) {
            batch.push(heap.pop().unwrap());
        }
        for ev in batch {
            match ev.kind {
                EventKind::Arrival { job } => state[job % devices.len()].queue.push(job),
                EventKind::Completion { device } => state[device].running = None,
            }
        }
        for (di, dev) in devices.iter().enumerate() {
            let st = &mut state[di];
            if st.running.is_some() || st.queue.is_empty() {
                continue;
            }
            let pos = pick_next(&st.queue, jobs, opts.queue);
            let ji = st.queue.remove(pos);
            let job = &jobs[ji];
            let table = predictor.predict_all_configs(job, dev)?;
            let decision = policy.select(&table, now, job.deadline, dev)?;
            if !dev.supports(&decision.chosen_config) {
                return Err(Error::Validation(format!(
                    "policy `{}` chose unsupported config {}",
                    policy.name(),
                    decision.chosen_config
                )));
            }
            let start = if decision.chosen_config != st.config {
                now + overhead
            } else {
                now
            };
            let truth_m = oracle_eval(truth[job.app_id.as_str()], dev, decision.chosen_config);
            let actual_time = truth_m.exec_time * job.noise.time;
            let actual_energy = truth_m.avg_power * job.noise.power * actual_time;
            let finish = start + actual_time;
            st.config = decision.chosen_config;
            st.running = Some(ji);
            st.busy_time += actual_time;
            st.jobs += 1;
            heap.push(Event {
                time: finish,
                seq,
                kind: EventKind::Completion { device: di },
            });
            seq += 1;
            records[ji] = Some(JobRecord {
                job_id: job.job_id.clone(),
                app_id: job.app_id.clone(),
                device: di,
                arrival: job.arrival_time,
                deadline: job.deadline,
                start,
                finish,
                decision,
                actual_time,
                actual_energy,
                deadline_met: finish <= job.deadline,
                normalized_completion: (finish - job.arrival_time)
                    / (job.deadline - job.arrival_time),
            });
        }
    }

    let records: Vec<JobRecord> = records
        .into_iter()
        .map(|r| r.expect("every job is dispatched once the event queue drains"))
        .collect();
    let horizon = records
        .iter()
        .map(|r| r.finish)
        .chain(jobs.iter().map(|j| j.arrival_time))
        .fold(0.0, f64::max);
    let usage: Vec<DeviceUsage> = devices
        .iter()
        .zip(&state)
        .map(|(d, s)| DeviceUsage {
            name: d.name.clone(),
            idle_power: d.idle_power,
            busy_time: s.busy_time,
            jobs: s.jobs,
        })
        .collect();
    Ok(SimulationResult {
        policy: policy.name().to_string(),
        predictor: predictor.name().to_string(),
        options: opts,
        aggregates: aggregate(&records, &usage, horizon),
        devices: usage,
        jobs: records,
    })
}
