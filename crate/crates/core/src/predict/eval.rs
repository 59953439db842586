use std::collections::{BTreeMap, HashSet};

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::predict::design::{design_matrix, train_model, TrainOptions};
use crate::predict::model::{FittedModel, Target};
use crate::predict::{Matrix, ModelKind};
use crate::rng;
use crate::trace::Dataset;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub rmse: f64,
    pub mae: f64,
    pub n_samples: usize,
    pub mean_target: f64,
    /// `rmse / mean_target`.
    pub relative_rmse: f64,
    /// RMSE per application id, when groups are known.
    pub per_app: BTreeMap<String, f64>,
}

pub fn rmse(pred: &[f64], target: &[f64]) -> f64 {
    let n = pred.len() as f64;
    (pred
        .iter()
        .zip(target)
        .map(|(p, t)| (p - t) * (p - t))
        .sum::<f64>()
        / n)
        .sqrt()
}

pub fn evaluate(m: &FittedModel, x: &Matrix, y: &[f64]) -> Result<EvalReport> {
    evaluate_grouped(m, x, y, None)
}

pub fn evaluate_grouped(
    m: &FittedModel,
    x: &Matrix,
    y: &[f64],
    groups: Option<&[String]>,
) -> Result<EvalReport> {
    let n = x.n_rows();
    if n == 0 {
        return Err(Error::InvalidInput(
            "cannot evaluate on an empty test set".into(),
        ));
    }
    if y.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: y.len(),
        });
    }
    let pred = m.predict_matrix(x)?;
    let mae = pred.iter().zip(y).map(|(p, t)| (p - t).abs()).sum::<f64>() / n as f64;
    let mean_target = y.iter().sum::<f64>() / n as f64;
    let r = rmse(&pred, y);

    let mut per_app = BTreeMap::new();
    if let Some(groups) = groups {
        if groups.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: groups.len(),
            });
        }
        let mut acc: BTreeMap<&str, (f64, usize)> = BTreeMap::new();
        for ((g, p), t) in groups.iter().zip(&pred).zip(y) {
            let e = acc.entry(g.as_str()).or_default();
            e.0 += (p - t) * (p - t);
            e.1 += 1;
        }
        per_app = acc
            .into_iter()
            .map(|(g, (s, k))| (g.to_string(), (s / k as f64).sqrt()))
            .collect();
    }
    Ok(EvalReport {
        rmse: r,
        mae,
        n_samples: n,
        mean_target,
        relative_rmse: r / mean_target,
        per_app,
    })
}

/// Evaluates a trace model on every record of `d`, broken down by app.
pub fn evaluate_dataset(m: &FittedModel, d: &Dataset) -> Result<EvalReport> {
    let dm = design_matrix(d, m.target)?;
    m.check_fingerprint(&crate::trace::types::fingerprint_names(
        dm.input_names.iter().map(String::as_str),
    ))?;
    evaluate_grouped(m, &dm.x, &dm.y, Some(&dm.app_ids))
}

/// Assigns apps to `k` folds: sorted ids are shuffled by `seed` and dealt
/// round-robin.
pub fn fold_assignment(d: &Dataset, k: usize, seed: u64) -> Result<Vec<Vec<String>>> {
    if k < 2 {
        return Err(Error::InvalidInput(format!(
            "k_folds must be >= 2, got {k}"
        )));
    }
    let mut apps = d.app_ids();
    if apps.len() < k {
        return Err(Error::InvalidInput(format!(
            "{} distinct apps cannot fill {k} folds",
            apps.len()
        )));
    }
    apps.sort();
    apps.shuffle(&mut rng::rng_from(seed));
    let mut folds = vec![Vec::new(); k];
    for (i, a) in apps.into_iter().enumerate() {
        folds[i % k].push(a);
    }
    Ok(folds)
}

/// Grouped k-fold cross-validation; folds run on separate threads.
pub fn cross_validate(
    kind: &ModelKind,
    d: &Dataset,
    target: Target,
    k_folds: usize,
    seed: u64,
    opts: TrainOptions,
) -> Result<Vec<EvalReport>> {
    let folds = fold_assignment(d, k_folds, seed)?;
    std::thread::scope(|s| {
        let handles: Vec<_> = folds
            .iter()
            .map(|held_out| {
                s.spawn(move || {
                    let test_apps: HashSet<String> = held_out.iter().cloned().collect();
                    let train_apps: HashSet<String> = d
                        .app_ids()
                        .into_iter()
                        .filter(|a| !test_apps.contains(a))
                        .collect();
                    let m = train_model(kind, &d.subset(&train_apps), target, seed, opts)?;
                    evaluate_dataset(&m, &d.subset(&test_apps))
                })
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("fold thread panicked"))
            .collect()
    })
}
