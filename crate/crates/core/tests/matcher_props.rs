use freqsched::matcher::{build_knowledge_base, inertia, kmeans, match_application, KnowledgeBase};
use freqsched::trace::{generate_synthetic, DeviceSpec, OracleRanges};
use proptest::prelude::*;
use rand::Rng;

fn points() -> impl Strategy<Value = Vec<Vec<f64>>> {
    (2usize..4)
        .prop_flat_map(|d| prop::collection::vec(prop::collection::vec(-10.0f64..10.0, d), 6..30))
}

fn sq(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn lloyd_never_increases_inertia(p in points(), k in 1usize..5, seed in 0u64..500) {
        let m = kmeans(&p, k, seed, 300).unwrap();
        for w in m.inertia_trace.windows(2) {
            prop_assert!(w[1] <= w[0] * (1.0 + 1e-12) + 1e-12, "{} -> {}", w[0], w[1]);
        }
        prop_assert!((inertia(&p, &m.centroids, &m.assignment) - m.inertia).abs() <= 1e-9 * (1.0 + m.inertia));
        // every point sits with its nearest centroid at the fixpoint
        for (i, x) in p.iter().enumerate() {
            let own = sq(x, &m.centroids[m.assignment[i]]);
            prop_assert!(m.centroids.iter().all(|c| own <= sq(x, c) + 1e-9));
        }
    }
}

/// Global k-means optimum by enumerating every assignment of points to k
/// labels (k^n of them).
fn brute_force_inertia(p: &[Vec<f64>], k: usize) -> f64 {
    let n = p.len();
    let d = p[0].len();
    let mut best = f64::INFINITY;
    let mut labels = vec![0usize; n];
    loop {
        let mut sums = vec![vec![0.0; d]; k];
        let mut counts = vec![0usize; k];
        for (x, &l) in p.iter().zip(&labels) {
            counts[l] += 1;
            for (s, v) in sums[l].iter_mut().zip(x) {
                *s += v;
            }
        }
        let mut total = 0.0;
        for (x, &l) in p.iter().zip(&labels) {
            for (j, v) in x.iter().enumerate() {
                let c = sums[l][j] / counts[l] as f64;
                total += (v - c) * (v - c);
            }
        }
        best = best.min(total);
        let mut i = 0;
        while i < n {
            labels[i] += 1;
            if labels[i] < k {
                break;
            }
            labels[i] = 0;
            i += 1;
        }
        if i == n {
            return best;
        }
    }
}

#[test]
fn restarts_reach_brute_force_optimum() {
    let mut rng = freqsched::rng::rng_from(4);
    for _ in 0..10 {
        let p: Vec<Vec<f64>> = (0..8)
            .map(|_| vec![rng.random_range(0.0..10.0), rng.random_range(0.0..10.0)])
            .collect();
        for k in [2, 3] {
            let opt = brute_force_inertia(&p, k);
            let runs: Vec<f64> = (0..50)
                .map(|s| kmeans(&p, k, s, 300).unwrap().inertia)
                .collect();
            assert!(
                runs.iter().all(|r| *r >= opt * (1.0 - 1e-9)),
                "a run beat the enumerated optimum"
            );
            let best = runs.iter().cloned().fold(f64::INFINITY, f64::min);
            assert!(
                best <= opt * (1.0 + 1e-9) + 1e-12,
                "best restart {best} vs optimum {opt}"
            );
        }
    }
}

fn kb(seed: u64) -> (KnowledgeBase, freqsched::trace::Dataset) {
    let dev = DeviceSpec::p100_desk();
    let (ds, _) = generate_synthetic(15, &dev, &OracleRanges::default(), seed).unwrap();
    (build_knowledge_base(&ds, 4, seed).unwrap(), ds)
}

#[test]
fn match_agrees_with_brute_force() {
    let (kb, _) = kb(3);
    let mut rng = freqsched::rng::rng_from(8);
    for _ in 0..100 {
        let base = &kb.apps[rng.random_range(0..kb.apps.len())].profile;
        let probe: Vec<f64> = base
            .iter()
            .map(|v| v * rng.random_range(0.8..1.2))
            .collect();
        let m = match_application(&probe, &kb).unwrap();
        let z = kb.norm_stats.apply(&probe);
        let cluster = (0..kb.clusters.centroids.len())
            .min_by(|&a, &b| {
                sq(&kb.clusters.centroids[a], &z)
                    .total_cmp(&sq(&kb.clusters.centroids[b], &z))
                    .then(a.cmp(&b))
            })
            .unwrap();
        let want = kb
            .apps
            .iter()
            .filter(|a| a.cluster == cluster)
            .min_by(|a, b| {
                sq(&a.normalized, &z)
                    .total_cmp(&sq(&b.normalized, &z))
                    .then(a.app_id.cmp(&b.app_id))
            })
            .unwrap();
        assert_eq!(m.cluster, cluster);
        assert_eq!(m.app_id, want.app_id);
    }
}

#[test]
fn known_apps_match_themselves() {
    let (kb, _) = kb(6);
    for a in &kb.apps {
        let m = match_application(&a.profile, &kb).unwrap();
        assert_eq!(m.app_id, a.app_id);
        assert!(m.distance < 1e-9);
    }
}

#[test]
fn matching_is_invariant_to_feature_units() {
    // rescaling a feature column (e.g. ms instead of s) rescales its z-score
    // statistics too, so matches do not change
    let (kb, ds) = kb(11);
    let scales: Vec<f64> = (0..ds.schema.len())
        .map(|j| 10f64.powi((j % 5) as i32 - 2))
        .collect();
    let mut scaled = ds.clone();
    for r in &mut scaled.records {
        for (v, s) in r.features.iter_mut().zip(&scales) {
            *v *= s;
        }
    }
    let kb2 = build_knowledge_base(&scaled, 4, 11).unwrap();
    let mut rng = freqsched::rng::rng_from(1);
    for _ in 0..50 {
        let base = &kb.apps[rng.random_range(0..kb.apps.len())].profile;
        let probe: Vec<f64> = base
            .iter()
            .map(|v| v * rng.random_range(0.9..1.1))
            .collect();
        let probe2: Vec<f64> = probe.iter().zip(&scales).map(|(v, s)| v * s).collect();
        assert_eq!(
            match_application(&probe, &kb).unwrap().app_id,
            match_application(&probe2, &kb2).unwrap().app_id
        );
    }
}

#[test]
fn profile_length_is_checked() {
    let (kb, _) = kb(2);
    assert!(match_application(&[1.0, 2.0], &kb).is_err());
}
