//! Trace schema, loading, normalization, grouped splitting and synthesis.

mod io;
pub mod synth;
pub(crate) mod types;

use std::collections::HashSet;

use rand::seq::SliceRandom;

use crate::error::{Error, Result};
use crate::rng;

pub use io::{load_dataset, read_dataset, write_dataset, write_dataset_to};
pub use synth::{
    default_schema, generate_synthetic, load_oracle, oracle_eval, oracle_path_for,
    profile_features, save_oracle, OracleRanges, OracleSpec,
};
pub use types::{
    fingerprint_names, Dataset, DeviceSpec, Feature, FeatureSchema, FrequencyConfig, Measurement,
    NormStats, TrainingRecord, ENERGY_CONSISTENCY_TOL,
};

/// Z-scores every feature column with statistics computed from `d`.
/// The input is left untouched; the returned dataset carries the stats.
pub fn normalize(d: &Dataset) -> Result<Dataset> {
    let stats = NormStats::fit(&d.feature_rows())?;
    let mut out = d.clone();
    for r in &mut out.records {
        r.features = stats.apply(&r.features);
    }
    out.norm_stats = Some(stats);
    Ok(out)
}

/// Inverse of [`normalize`] using the stored statistics.
pub fn denormalize(d: &Dataset) -> Result<Dataset> {
    let stats = d
        .norm_stats
        .as_ref()
        .ok_or_else(|| Error::InvalidInput("dataset is not normalized".into()))?;
    let mut out = d.clone();
    for r in &mut out.records {
        r.features = stats.invert(&r.features);
    }
    out.norm_stats = None;
    Ok(out)
}

/// Splits by application id: every record of an app lands on the same side.
///
/// The number of test apps is `round(test_fraction * n_apps)`, clamped so that
/// both sides keep at least one app.
pub fn split(d: &Dataset, test_fraction: f64, seed: u64) -> Result<(Dataset, Dataset)> {
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return Err(Error::InvalidInput(format!(
            "test_fraction must lie in (0, 1), got {test_fraction}"
        )));
    }
    if d.records.is_empty() {
        return Err(Error::InvalidInput("cannot split an empty dataset".into()));
    }
    let mut apps = d.app_ids();
    if apps.len() < 2 {
        return Err(Error::InvalidInput(format!(
            "split needs at least 2 distinct apps, found {}",
            apps.len()
        )));
    }
    apps.sort();
    apps.shuffle(&mut rng::rng_from(seed));
    let n_test = ((test_fraction * apps.len() as f64).round() as usize).clamp(1, apps.len() - 1);
    let test: HashSet<String> = apps[..n_test].iter().cloned().collect();
    let train: HashSet<String> = apps[n_test..].iter().cloned().collect();
    Ok((d.subset(&train), d.subset(&test)))
}
