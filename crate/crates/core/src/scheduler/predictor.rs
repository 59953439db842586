use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::matcher::{match_application, KnowledgeBase};
use crate::predict::{model_input, FittedModel, Target, CORE_CLOCK_INPUT, MEM_CLOCK_INPUT};
use crate::scheduler::{Candidate, CandidateTable, Job};
use crate::trace::{oracle_eval, DeviceSpec, OracleSpec};

/// Produces the per-config prediction table for a job.
pub trait CandidatePredictor: Send + Sync {
    fn name(&self) -> &str;

    fn predict_all_configs(&self, job: &Job, device: &DeviceSpec) -> Result<CandidateTable>;
}

fn check_models(kb: &KnowledgeBase, energy: &FittedModel, time: &FittedModel) -> Result<()> {
    if energy.target != Target::Energy || time.target != Target::Time {
        return Err(Error::InvalidInput(format!(
            "expected an energy and a time model, got {} and {}",
            energy.target, time.target
        )));
    }
    energy.check_fingerprint(&time.fingerprint)?;
    let mut expected = kb.feature_names.clone();
    expected.push(CORE_CLOCK_INPUT.into());
    expected.push(MEM_CLOCK_INPUT.into());
    let expected = crate::trace::fingerprint_names(expected.iter().map(String::as_str));
    energy.check_fingerprint(&expected)
}

/// Matches `job` against the knowledge base and queries both models with the
/// matched app's default-clock profile and every supported config.
pub fn predict_all_configs(
    job: &Job,
    kb: &KnowledgeBase,
    energy: &FittedModel,
    time: &FittedModel,
    device: &DeviceSpec,
) -> Result<CandidateTable> {
    check_models(kb, energy, time)?;
    let m = match_application(&job.default_profile, kb)?;
    let profile = &kb
        .app(&m.app_id)
        .expect("matched app is in the knowledge base")
        .profile;
    let rows = device
        .supported_configs
        .iter()
        .map(|&config| {
            let x = model_input(profile, config);
            Ok(Candidate {
                config,
                predicted_time: time.predict(&x)?,
                predicted_energy: energy.predict(&x)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(CandidateTable {
        job_id: job.job_id.clone(),
        rows,
    })
}

/// Knowledge base plus fitted energy and time models.
#[derive(Debug, Clone)]
pub struct LearnedPredictor {
    pub kb: KnowledgeBase,
    pub energy: FittedModel,
    pub time: FittedModel,
}

impl LearnedPredictor {
    pub fn new(kb: KnowledgeBase, energy: FittedModel, time: FittedModel) -> Result<Self> {
        check_models(&kb, &energy, &time)?;
        Ok(Self { kb, energy, time })
    }

    pub fn input_names(&self) -> Vec<String> {
        self.energy.input_names.clone()
    }
}

impl CandidatePredictor for LearnedPredictor {
    fn name(&self) -> &str {
        "learned"
    }

    fn predict_all_configs(&self, job: &Job, device: &DeviceSpec) -> Result<CandidateTable> {
        predict_all_configs(job, &self.kb, &self.energy, &self.time, device)
    }
}

/// Ground-truth tables straight from the oracle, keyed by the job's app id.
#[derive(Debug, Clone)]
pub struct OraclePredictor {
    specs: HashMap<String, OracleSpec>,
}

impl OraclePredictor {
    pub fn new(specs: &[OracleSpec]) -> Self {
        Self {
            specs: specs
                .iter()
                .map(|s| (s.app_id.clone(), s.clone()))
                .collect(),
        }
    }
}

impl CandidatePredictor for OraclePredictor {
    fn name(&self) -> &str {
        "oracle"
    }

    fn predict_all_configs(&self, job: &Job, device: &DeviceSpec) -> Result<CandidateTable> {
        let spec = self.specs.get(&job.app_id).ok_or_else(|| Error::Unknown {
            what: "application",
            name: job.app_id.clone(),
        })?;
        Ok(CandidateTable {
            job_id: job.job_id.clone(),
            rows: device
                .supported_configs
                .iter()
                .map(|&config| {
                    let m = oracle_eval(spec, device, config);
                    Candidate {
                        config,
                        predicted_time: m.exec_time,
                        predicted_energy: m.energy,
                    }
                })
                .collect(),
        })
    }
}
