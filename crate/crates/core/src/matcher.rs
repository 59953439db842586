//! Knowledge base of profiled applications and nearest-application matching.
//!
//! Known apps are clustered on their z-scored default-clock profiles with
//! k-means (k-means++ seeding, Lloyd iterations). An unseen job is matched
//! to the nearest centroid, then to the nearest member of that cluster.

use std::path::Path;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::predict::default_profiles;
use crate::rng;
use crate::trace::{Dataset, NormStats};

pub const DEFAULT_MAX_ITER: usize = 300;

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Index of the closest centroid; ties go to the lowest index.
fn nearest(centroids: &[Vec<f64>], p: &[f64]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (i, c) in centroids.iter().enumerate() {
        let d = sq_dist(c, p);
        if d < best.1 {
            best = (i, d);
        }
    }
    best
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterModel {
    pub centroids: Vec<Vec<f64>>,
    /// Cluster index per input point.
    pub assignment: Vec<usize>,
    /// Sum of squared distances to assigned centroids.
    pub inertia: f64,
    /// Inertia after seeding and after every Lloyd iteration.
    pub inertia_trace: Vec<f64>,
    pub iterations: usize,
}

pub fn inertia(points: &[Vec<f64>], centroids: &[Vec<f64>], assignment: &[usize]) -> f64 {
    points
        .iter()
        .zip(assignment)
        .map(|(p, &a)| sq_dist(p, &centroids[a]))
        .sum()
}

/// k-means with k-means++ seeding. Lloyd iterations stop at an assignment
/// fixpoint or after `max_iter`. An emptied cluster keeps its old centroid.
pub fn kmeans(points: &[Vec<f64>], k: usize, seed: u64, max_iter: usize) -> Result<ClusterModel> {
    if points.is_empty() {
        return Err(Error::InvalidInput(
            "k-means needs at least one point".into(),
        ));
    }
    if k == 0 || k > points.len() {
        return Err(Error::InvalidInput(format!(
            "k must lie in [1, {}], got {k}",
            points.len()
        )));
    }
    let dim = points[0].len();
    if points.iter().any(|p| p.len() != dim) {
        return Err(Error::InvalidInput("points have mixed dimensions".into()));
    }

    let mut rng = rng::rng_from(seed);
    let mut centroids = Vec::with_capacity(k);
    centroids.push(points[rng.random_range(0..points.len())].clone());
    let mut d2: Vec<f64> = points.iter().map(|p| sq_dist(p, &centroids[0])).collect();
    while centroids.len() < k {
        let total: f64 = d2.iter().sum();
        let pick = if total > 0.0 {
            let mut r = rng.random::<f64>() * total;
            let mut chosen = None;
            for (i, w) in d2.iter().enumerate() {
                if *w > 0.0 {
                    chosen = Some(i);
                    if r < *w {
                        break;
                    }
                    r -= w;
                }
            }
            chosen.expect("some point has positive weight")
        } else {
            // every remaining point coincides with a centroid
            rng.random_range(0..points.len())
        };
        centroids.push(points[pick].clone());
        for (w, p) in d2.iter_mut().zip(points) {
            *w = w.min(sq_dist(p, &centroids[centroids.len() - 1]));
        }
    }

    let mut assignment: Vec<usize> = points.iter().map(|p| nearest(&centroids, p).0).collect();
    let mut trace = vec![inertia(points, &centroids, &assignment)];
    let mut iterations = 0;
    while iterations < max_iter {
        iterations += 1;
        let mut sums = vec![vec![0.0; dim]; k];
        let mut counts = vec![0usize; k];
        for (p, &a) in points.iter().zip(&assignment) {
            counts[a] += 1;
            for (s, v) in sums[a].iter_mut().zip(p) {
                *s += v;
            }
        }
        for c in 0..k {
            if counts[c] > 0 {
                centroids[c] = sums[c].iter().map(|s| s / counts[c] as f64).collect();
            }
        }
        let next: Vec<usize> = points.iter().map(|p| nearest(&centroids, p).0).collect();
        let changed = next != assignment;
        assignment = next;
        trace.push(inertia(points, &centroids, &assignment));
        if !changed {
            break;
        }
    }
    Ok(ClusterModel {
        inertia: *trace.last().unwrap(),
        centroids,
        assignment,
        inertia_trace: trace,
        iterations,
    })
}

/// `max(1, round(sqrt(n_apps / 2)))`.
pub fn default_k(n_apps: usize) -> usize {
    ((n_apps as f64 / 2.0).sqrt().round() as usize).max(1)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KnownApp {
    pub app_id: String,
    /// Raw default-clock profile, used as model input downstream.
    pub profile: Vec<f64>,
    pub normalized: Vec<f64>,
    pub cluster: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KnowledgeBase {
    pub feature_names: Vec<String>,
    pub schema_fingerprint: String,
    pub norm_stats: NormStats,
    /// Sorted by app id.
    pub apps: Vec<KnownApp>,
    pub clusters: ClusterModel,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchResult {
    pub cluster: usize,
    pub app_id: String,
    pub distance: f64,
}

/// Clusters the default-clock profiles of every app in `d`.
///
/// Normalization statistics come from `d.norm_stats` when present, otherwise
/// they are computed over all records of `d`.
pub fn build_knowledge_base(d: &Dataset, k: usize, seed: u64) -> Result<KnowledgeBase> {
    let norm_stats = match &d.norm_stats {
        Some(s) => s.clone(),
        None => NormStats::fit(&d.feature_rows())?,
    };
    let mut profiles = default_profiles(d)?;
    profiles.sort_by(|a, b| a.0.cmp(&b.0));
    let normalized: Vec<Vec<f64>> = profiles.iter().map(|(_, p)| norm_stats.apply(p)).collect();
    let clusters = kmeans(&normalized, k, seed, DEFAULT_MAX_ITER)?;
    let apps = profiles
        .into_iter()
        .zip(normalized)
        .zip(&clusters.assignment)
        .map(|(((app_id, profile), normalized), &cluster)| KnownApp {
            app_id,
            profile,
            normalized,
            cluster,
        })
        .collect();
    Ok(KnowledgeBase {
        feature_names: d.schema.names(),
        schema_fingerprint: d.schema.fingerprint(),
        norm_stats,
        apps,
        clusters,
    })
}

impl KnowledgeBase {
    pub fn dim(&self) -> usize {
        self.feature_names.len()
    }

    pub fn app(&self, app_id: &str) -> Option<&KnownApp> {
        self.apps
            .binary_search_by(|a| a.app_id.as_str().cmp(app_id))
            .ok()
            .map(|i| &self.apps[i])
    }

    pub fn cluster_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.clusters.centroids.len()];
        for a in &self.apps {
            sizes[a.cluster] += 1;
        }
        sizes
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let text = serde_json::to_string_pretty(self)? + "\n";
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let kb: KnowledgeBase = serde_json::from_str(&text)?;
        if kb
            .apps
            .iter()
            .any(|a| a.cluster >= kb.clusters.centroids.len())
        {
            return Err(Error::Validation(
                "knowledge base assigns an app to a missing cluster".into(),
            ));
        }
        Ok(kb)
    }
}

/// Matches a raw default-clock profile against the knowledge base.
///
/// Nearest centroid (lowest index on ties), then nearest member of that
/// cluster (lexicographically smallest app id on ties). `distance` is the
/// Euclidean distance in normalized space to the matched app.
pub fn match_application(profile: &[f64], kb: &KnowledgeBase) -> Result<MatchResult> {
    if profile.len() != kb.dim() {
        return Err(Error::DimensionMismatch {
            expected: kb.dim(),
            got: profile.len(),
        });
    }
    let z = kb.norm_stats.apply(profile);
    let (cluster, _) = nearest(&kb.clusters.centroids, &z);
    let mut best: Option<(&KnownApp, f64)> = None;
    // apps are sorted by id, so strict < keeps the smallest id on ties
    for a in kb.apps.iter().filter(|a| a.cluster == cluster) {
        let d = sq_dist(&a.normalized, &z);
        if best.is_none_or(|(_, bd)| d < bd) {
            best = Some((a, d));
        }
    }
    let (app, d) =
        best.ok_or_else(|| Error::Validation(format!("cluster {cluster} has no member apps")))?;
    Ok(MatchResult {
        cluster,
        app_id: app.app_id.clone(),
        distance: d.sqrt(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trace::{generate_synthetic, DeviceSpec, OracleRanges};

    fn pts(v: &[(f64, f64)]) -> Vec<Vec<f64>> {
        v.iter().map(|&(a, b)| vec![a, b]).collect()
    }

    #[test]
    fn single_cluster_is_the_mean() {
        let m = kmeans(&pts(&[(0.0, 0.0), (2.0, 0.0), (4.0, 0.0)]), 1, 3, 100).unwrap();
        assert_eq!(m.centroids[0], vec![2.0, 0.0]);
    }

    #[test]
    fn one_point_per_cluster_has_zero_inertia() {
        let p = pts(&[(0.0, 0.0), (2.0, 1.0), (4.0, 7.0), (-1.0, 3.0)]);
        let m = kmeans(&p, 4, 11, 100).unwrap();
        assert_eq!(m.inertia, 0.0);
    }

    #[test]
    fn duplicate_points_with_full_k() {
        let p = pts(&[(1.0, 1.0), (1.0, 1.0), (1.0, 1.0)]);
        let m = kmeans(&p, 3, 0, 10).unwrap();
        assert_eq!(m.inertia, 0.0);
    }

    #[test]
    fn k_out_of_range() {
        let p = pts(&[(0.0, 0.0)]);
        assert!(kmeans(&p, 0, 1, 10).is_err());
        assert!(kmeans(&p, 2, 1, 10).is_err());
        assert!(kmeans(&[], 1, 1, 10).is_err());
    }

    #[test]
    fn default_k_rule() {
        assert_eq!(default_k(1), 1);
        assert_eq!(default_k(12), 2);
        assert_eq!(default_k(32), 4);
    }

    #[test]
    fn knowledge_base_partition() {
        let (ds, _) =
            generate_synthetic(12, &DeviceSpec::p100_desk(), &OracleRanges::default(), 2).unwrap();
        let kb = build_knowledge_base(&ds, 4, 1).unwrap();
        assert_eq!(kb.apps.len(), 12);
        assert_eq!(kb.cluster_sizes().iter().sum::<usize>(), 12);
        let kb1 = build_knowledge_base(&ds, 1, 1).unwrap();
        assert!(kb1.apps.iter().all(|a| a.cluster == 0));
        assert_eq!(build_knowledge_base(&ds, 4, 1).unwrap(), kb);
    }

    #[test]
    fn missing_default_record_names_app() {
        let (mut ds, _) =
            generate_synthetic(3, &DeviceSpec::p100_desk(), &OracleRanges::default(), 2).unwrap();
        let def = ds.device.default_config;
        ds.records
            .retain(|r| !(r.app_id == "app01" && r.config == def));
        let err = build_knowledge_base(&ds, 1, 0).unwrap_err();
        assert!(err.to_string().contains("app01"), "{err}");
    }

    #[test]
    fn midpoint_goes_to_lower_cluster() {
        let kb = KnowledgeBase {
            feature_names: vec!["a".into()],
            schema_fingerprint: String::new(),
            norm_stats: NormStats {
                mean: vec![0.0],
                std: vec![1.0],
            },
            apps: vec![
                KnownApp {
                    app_id: "a".into(),
                    profile: vec![-1.0],
                    normalized: vec![-1.0],
                    cluster: 0,
                },
                KnownApp {
                    app_id: "b".into(),
                    profile: vec![1.0],
                    normalized: vec![1.0],
                    cluster: 1,
                },
            ],
            clusters: ClusterModel {
                centroids: vec![vec![-1.0], vec![1.0]],
                assignment: vec![0, 1],
                inertia: 0.0,
                inertia_trace: vec![0.0],
                iterations: 1,
            },
        };
        let m = match_application(&[0.0], &kb).unwrap();
        assert_eq!(m.cluster, 0);
        assert_eq!(m.app_id, "a");
        assert_eq!(m.distance, 1.0);
        assert!(match_application(&[0.0, 1.0], &kb).is_err());
    }
}
