//! Builds model inputs from traces.
//!
//! One model serves every frequency configuration: its input row is the
//! application's default-clock profile followed by the candidate config's
//! `(core_clock, mem_clock)`. The default-clock profile is what an unseen
//! job brings with it, so training rows use the same profile for every
//! config of an app and only the candidate clocks vary.

use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::predict::model::{FitSpec, FittedModel, Target, TargetTransform};
use crate::predict::{Matrix, ModelKind};
use crate::trace::synth::{PROFILED_POWER, PROFILED_TIME};
use crate::trace::{denormalize, Dataset, FeatureSchema, FrequencyConfig};

pub const CORE_CLOCK_INPUT: &str = "core_clock";
pub const MEM_CLOCK_INPUT: &str = "mem_clock";

pub fn input_names(schema: &FeatureSchema) -> Vec<String> {
    let mut names = schema.names();
    names.push(CORE_CLOCK_INPUT.into());
    names.push(MEM_CLOCK_INPUT.into());
    names
}

pub fn model_input(profile: &[f64], config: FrequencyConfig) -> Vec<f64> {
    let mut x = Vec::with_capacity(profile.len() + 2);
    x.extend_from_slice(profile);
    x.push(config.core_clock as f64);
    x.push(config.mem_clock as f64);
    x
}

#[derive(Debug, Clone)]
pub struct DesignMatrix {
    pub x: Matrix,
    pub y: Vec<f64>,
    pub app_ids: Vec<String>,
    pub input_names: Vec<String>,
}

/// Raw default-clock profile of every app in `d`, in first-seen order.
pub fn default_profiles(d: &Dataset) -> Result<Vec<(String, Vec<f64>)>> {
    let raw;
    let d = if d.norm_stats.is_some() {
        raw = denormalize(d)?;
        &raw
    } else {
        d
    };
    d.app_ids()
        .into_iter()
        .map(|app| {
            let rec = d.default_record(&app).ok_or_else(|| {
                Error::Validation(format!(
                    "app `{app}` has no record at the default config {}",
                    d.device.default_config
                ))
            })?;
            Ok((app, rec.features.clone()))
        })
        .collect()
}

pub fn design_matrix(d: &Dataset, target: Target) -> Result<DesignMatrix> {
    if target == Target::Raw {
        return Err(Error::InvalidInput(
            "trace models predict energy or time".into(),
        ));
    }
    let profiles: HashMap<String, Vec<f64>> = default_profiles(d)?.into_iter().collect();
    let mut rows = Vec::with_capacity(d.records.len());
    let mut y = Vec::with_capacity(d.records.len());
    let mut app_ids = Vec::with_capacity(d.records.len());
    for r in &d.records {
        rows.push(model_input(&profiles[&r.app_id], r.config));
        y.push(match target {
            Target::Energy => r.measurement.energy,
            _ => r.measurement.exec_time,
        });
        app_ids.push(r.app_id.clone());
    }
    Ok(DesignMatrix {
        x: Matrix::from_rows(&rows)?,
        y,
        app_ids,
        input_names: input_names(&d.schema),
    })
}

/// How trace models are fitted beyond the learner itself.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TrainOptions {
    /// Z-score the input row (profile and clocks) inside the model.
    pub normalize_inputs: bool,
    /// Learn the ratio of the target to the profiled default-clock time
    /// (time) or time x power (energy) when the schema has those columns.
    pub relative_target: bool,
    pub record_timestamp: bool,
}

impl Default for TrainOptions {
    fn default() -> Self {
        Self {
            normalize_inputs: true,
            relative_target: true,
            record_timestamp: false,
        }
    }
}

fn transform_for(schema: &FeatureSchema, target: Target, relative: bool) -> TargetTransform {
    if !relative {
        return TargetTransform::Identity;
    }
    let t = schema.index_of(PROFILED_TIME);
    let p = schema.index_of(PROFILED_POWER);
    match (target, t, p) {
        (Target::Time, Some(t), _) => TargetTransform::RelativeTo { features: vec![t] },
        (Target::Energy, Some(t), Some(p)) => TargetTransform::RelativeTo {
            features: vec![t, p],
        },
        _ => TargetTransform::Identity,
    }
}

/// Fits a model of `target` over all records of `d`.
pub fn train_model(
    kind: &ModelKind,
    d: &Dataset,
    target: Target,
    seed: u64,
    opts: TrainOptions,
) -> Result<FittedModel> {
    let dm = design_matrix(d, target)?;
    let mut m = FittedModel::fit(
        &dm.x,
        &dm.y,
        FitSpec {
            kind: kind.clone(),
            target,
            input_names: dm.input_names,
            normalize_inputs: opts.normalize_inputs,
            target_transform: transform_for(&d.schema, target, opts.relative_target),
            seed,
        },
    )?;
    if opts.record_timestamp {
        m.metadata.trained_at = std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)
            .ok()
            .map(|d| d.as_secs());
    }
    Ok(m)
}
